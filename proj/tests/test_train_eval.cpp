#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "rashvit/checkpoint.hpp"
#include "rashvit/config_json.hpp"
#include "rashvit/datasets.hpp"
#include "rashvit/train.hpp"

using namespace rashvit;
using namespace rashvit::train_eval;
namespace fs = std::filesystem;

namespace {

datasets::LabeledDataset small_dataset(int classes = 3, int per_class = 8, uint64_t seed = 31) {
    auto ds = datasets::synth_generate(datasets::default_synth_spec(classes, per_class, seed));
    datasets::split(ds, {0.7, 0.1, 0.2}, 1);
    return ds;
}

model::ModelConfig small_model(int classes = 3) {
    auto cfg = model::tiny_config(classes);
    cfg.dropout_p = 0.0;  // keep the RNG out of determinism comparisons
    return cfg;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("derive_seed is deterministic and index-sensitive") {
    CHECK(derive_seed(1, 2) == derive_seed(1, 2));
    CHECK(derive_seed(1, 2) != derive_seed(1, 3));
    CHECK(derive_seed(1, 2) != derive_seed(2, 2));
}

TEST_CASE("parallel_for covers every index and propagates exceptions") {
    setenv("RA_SHVIT_THREADS", "3", 1);
    std::vector<std::atomic<int>> hits(64);
    parallel_for(64, [&](size_t i) { hits[i].fetch_add(1); });
    for (auto& h : hits) CHECK(h.load() == 1);
    CHECK_THROWS_AS(parallel_for(8,
                                 [](size_t i) {
                                     if (i == 5) throw DataError("boom");
                                 }),
                    DataError);
    unsetenv("RA_SHVIT_THREADS");
}

TEST_CASE("build_features: no-injection setting equals the clean pipeline") {
    auto ds = small_dataset();
    std::vector<size_t> idx{0, 5, 11};
    auto clean = build_features(ds, idx, "fft", NoiseSetting{std::nullopt, 99});
    for (size_t k = 0; k < idx.size(); ++k) {
        auto expect = sigproc::featurize(sigproc::normalize(ds.segments[idx[k]]));
        CHECK(clean[k].data.data == expect.data.data);
        CHECK(clean[k].label == ds.labels[idx[k]]);
    }
    auto noisy = build_features(ds, idx, "fft", NoiseSetting{0.0, 99});
    CHECK(noisy[0].data.data != clean[0].data.data);
}

TEST_CASE("metrics: confusion rows sum to per-class counts") {
    std::vector<int> truth{0, 0, 1, 1, 2, 2, 2};
    std::vector<int> pred{0, 1, 1, 1, 2, 0, 2};
    auto m = metrics_from_predictions(truth, pred, 3, 0.5);
    CHECK(m.total() == 7);
    CHECK(m.accuracy == doctest::Approx(5.0 / 7.0));
    CHECK(m.confusion[0][0] + m.confusion[0][1] + m.confusion[0][2] == 2);
    CHECK(m.confusion[2][0] == 1);
    CHECK(m.recall[1] == doctest::Approx(1.0));
    CHECK(m.precision[1] == doctest::Approx(2.0 / 3.0));
    CHECK(m.loss == 0.5);
}

TEST_CASE("training with lr=0 leaves parameters exactly unchanged") {
    auto ds = small_dataset();
    auto mcfg = small_model();
    TrainConfig tcfg;
    tcfg.lr = 0.0;
    tcfg.weight_decay = 0.0;
    tcfg.epochs = 1;
    tcfg.batch_size = 8;
    model::RaShvitNet<float> net(mcfg, 7);
    std::vector<Tensor<float>> before;
    for (const auto& [_, p] : net.store().params) before.push_back(p->value);
    train(ds, mcfg, tcfg, net, "");
    for (size_t i = 0; i < before.size(); ++i)
        CHECK(net.store().params[i].second->value.data == before[i].data);
}

TEST_CASE("identical seeds produce bit-identical runs and checkpoints") {
    auto ds = small_dataset();
    auto mcfg = small_model();
    TrainConfig tcfg;
    tcfg.epochs = 2;
    tcfg.batch_size = 8;
    tcfg.seed = 5;

    auto dir = fs::temp_directory_path() / "rashvit_test_runs";
    fs::create_directories(dir);
    auto run_once = [&](const std::string& name) {
        model::RaShvitNet<float> net(mcfg, derive_seed(tcfg.seed, 0x4d4f44));
        auto rec = train(ds, mcfg, tcfg, net, (dir / name).string());
        auto j = rec.to_json();
        j.erase("checkpoint");  // the only path-dependent field
        return j.dump();
    };
    auto a = run_once("a.bin");
    auto b = run_once("b.bin");
    CHECK(a == b);
    CHECK(slurp((dir / "a.bin").string()) == slurp((dir / "b.bin").string()));
    fs::remove_all(dir);
}

TEST_CASE("checkpoint save/load/save is byte-identical and restores behavior") {
    auto dir = fs::temp_directory_path() / "rashvit_test_ckpt";
    fs::create_directories(dir);
    auto mcfg = small_model(4);
    model::RaShvitNet<float> net(mcfg, 9);
    auto p1 = (dir / "one.bin").string();
    auto p2 = (dir / "two.bin").string();
    checkpoint::save(p1, net);
    auto restored = checkpoint::restore(p1);
    checkpoint::save(p2, restored);
    CHECK(slurp(p1) == slurp(p2));
    CHECK(restored.config().num_classes == 4);

    Tensor<float> images({2, 2, 64, 32});
    std::mt19937_64 rng(1);
    std::normal_distribution<double> d(0.0, 1.0);
    for (auto& v : images.data) v = static_cast<float>(d(rng));
    Tape<float> t1, t2;
    std::mt19937_64 r1(0), r2(0);
    model::Fwd<float> f1{t1, false, r1}, f2{t2, false, r2};
    auto y1 = net.forward(f1, images);
    auto y2 = restored.forward(f2, images);
    CHECK(y1->value.data == y2->value.data);
    fs::remove_all(dir);
}

TEST_CASE("checkpoint apply rejects mismatched architectures") {
    auto dir = fs::temp_directory_path() / "rashvit_test_ckpt_bad";
    fs::create_directories(dir);
    model::RaShvitNet<float> net(small_model(3), 9);
    auto path = (dir / "c.bin").string();
    checkpoint::save(path, net);
    auto loaded = checkpoint::load(path);
    model::RaShvitNet<float> other(small_model(5), 9);
    CHECK_THROWS_AS(checkpoint::apply(other, loaded), DataError);
    fs::remove_all(dir);
}

TEST_CASE("evaluate checks class-count compatibility and fills the confusion matrix") {
    auto ds = small_dataset();
    auto mcfg = small_model();
    model::RaShvitNet<float> net(mcfg, 11);
    auto m = evaluate(net, ds, datasets::Split::test, NoiseSetting{});
    auto hist = datasets::class_histogram(ds);
    for (int c = 0; c < 3; ++c) {
        int64_t row = 0;
        for (int64_t v : m.confusion[static_cast<size_t>(c)]) row += v;
        CHECK(row == hist[static_cast<size_t>(c)][2]);
    }
    CHECK(m.total() > 0);

    model::RaShvitNet<float> wrong(small_model(5), 11);
    CHECK_THROWS_AS(evaluate(wrong, ds, datasets::Split::test, NoiseSetting{}), DataError);
}

TEST_CASE("snr_sweep yields one cell per (snr, seed) pair") {
    auto ds = small_dataset();
    model::RaShvitNet<float> net(small_model(), 13);
    std::vector<std::optional<double>> snrs{std::nullopt, 10.0, 0.0};
    auto cells = snr_sweep(net, ds, datasets::Split::test, snrs, {1, 2});
    REQUIRE(cells.size() == 6);
    for (const auto& c : cells) {
        CHECK(c.accuracy >= 0.0);
        CHECK(c.accuracy <= 1.0);
    }
    // clean cells ignore the noise seed entirely
    CHECK(cells[0].accuracy == cells[1].accuracy);
}

TEST_CASE("ablate enforces the one-axis rule") {
    auto ds = small_dataset();
    TrainConfig tcfg;
    tcfg.epochs = 1;
    AblationVariant two_axes{"bad", false, false, std::nullopt};
    CHECK_THROWS_AS(ablate(ds, small_model(), tcfg, {two_axes}, {std::nullopt}), UsageError);
    AblationVariant none{"bad2", std::nullopt, std::nullopt, std::nullopt};
    CHECK_THROWS_AS(ablate(ds, small_model(), tcfg, {none}, {std::nullopt}), UsageError);
}

TEST_CASE("export_features writes one row per segment with the feature width") {
    auto ds = small_dataset();
    model::RaShvitNet<float> net(small_model(), 17);
    auto path = (fs::temp_directory_path() / "rashvit_feats.csv").string();
    export_features(net, ds, datasets::Split::test, NoiseSetting{}, path);
    std::ifstream f(path);
    std::string line;
    REQUIRE(std::getline(f, line));
    CHECK(line.rfind("f0,f1,", 0) == 0);
    CHECK(line.find("label") != std::string::npos);
    size_t rows = 0;
    while (std::getline(f, line))
        if (!line.empty()) ++rows;
    CHECK(rows == ds.indices_of(datasets::Split::test).size());
    fs::remove(path);
}

TEST_CASE("train config json round trip rejects unknown keys") {
    TrainConfig c;
    c.lr = 0.01;
    c.train_noise = {-6.0, 42};
    auto j = c.to_json();
    auto back = TrainConfig::from_json(j);
    CHECK(back.lr == 0.01);
    REQUIRE(back.train_noise.snr_db.has_value());
    CHECK(*back.train_noise.snr_db == -6.0);
    CHECK(back.train_noise.seed == 42);

    j["learning_rate"] = 0.1;
    CHECK_THROWS_AS(TrainConfig::from_json(j), UsageError);
    j = c.to_json();
    j["batch_size"] = 1;
    CHECK_THROWS_AS(TrainConfig::from_json(j), UsageError);
}

TEST_CASE("early stopping truncates the epoch history") {
    auto ds = small_dataset(3, 16);
    auto mcfg = small_model();
    TrainConfig tcfg;
    tcfg.epochs = 50;
    tcfg.batch_size = 8;
    tcfg.early_stop_train_acc = 0.9;
    model::RaShvitNet<float> net(mcfg, 19);
    auto rec = train(ds, mcfg, tcfg, net, "");
    CHECK(rec.history.size() < 50);
    CHECK(rec.history.back().train_acc >= 0.9);
}

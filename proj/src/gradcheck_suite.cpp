#include "rashvit/gradcheck_suite.hpp"

#include <cmath>
#include <functional>
#include <random>

#include "rashvit/gradcheck.hpp"
#include "rashvit/model.hpp"
#include "rashvit/ops.hpp"

namespace rashvit {
namespace {

using Builder = std::function<NodePtr<double>(Tape<double>&)>;

// Compares the analytic gradient of build()'s scalar output against central
// differences, perturbing the value tensors of `wrt` in place. build() must be
// a pure function of those values (it may be called many times).
double check_nodes(const Builder& build, const std::vector<NodePtr<double>>& wrt, double h = 1e-5) {
    for (const auto& n : wrt) {
        n->ensure_grad();
        n->zero_grad();
    }
    Tape<double> tape;
    auto loss = build(tape);
    tape.backward(loss);
    std::vector<Tensor<double>> analytic;
    analytic.reserve(wrt.size());
    for (const auto& n : wrt) analytic.push_back(n->grad);

    auto eval = [&build] {
        Tape<double> t;
        return build(t)->value[0];
    };
    double worst = 0.0;
    for (size_t k = 0; k < wrt.size(); ++k) {
        for (int64_t i = 0; i < wrt[k]->value.numel(); ++i) {
            double orig = wrt[k]->value[i];
            wrt[k]->value[i] = orig + h;
            double fp = eval();
            wrt[k]->value[i] = orig - h;
            double fm = eval();
            wrt[k]->value[i] = orig;
            double fd = (fp - fm) / (2.0 * h);
            double an = analytic[k][i];
            worst = std::max(worst, std::abs(an - fd) / std::max(1.0, std::abs(an)));
        }
    }
    return worst;
}

std::vector<NodePtr<double>> store_nodes(ParamStore<double>& s) {
    std::vector<NodePtr<double>> out;
    for (auto& [_, p] : s.params) out.push_back(p);
    return out;
}

Tensor<double> away_from_zero(Tensor<double> t, double margin) {
    for (auto& v : t.data)
        if (std::abs(v) < margin) v = v < 0 ? -5 * margin : 5 * margin;
    return t;
}

// ReLU with a corrupted backward rule (slope 1.05 instead of 1). Exists only
// so the suite can demonstrate that a wrong gradient is reported, not hidden.
NodePtr<double> broken_relu(Tape<double>& tape, const NodePtr<double>& x) {
    Tensor<double> v = x->value;
    for (auto& e : v.data) e = e > 0.0 ? e : 0.0;
    auto out = tape.emit(std::move(v), x->requires_grad);
    if (x->requires_grad) {
        tape.record([x, out] {
            for (int64_t i = 0; i < out->grad.numel(); ++i)
                if (x->value[i] > 0.0) x->grad[i] += 1.05 * out->grad[i];
        });
    }
    return out;
}

}  // namespace

std::vector<GradCheckResult> run_grad_checks(bool include_broken_fixture) {
    std::vector<GradCheckResult> results;
    std::mt19937_64 rng(20240901);
    auto add = [&results](const std::string& name, double err, double tol) {
        results.push_back({name, err, tol, err < tol});
    };
    const double kTol = 1e-6;

    {
        auto x = make_leaf<double>(away_from_zero(random_tensor({2, 3, 4, 4}, rng), 0.05), true);
        Tensor<double> r = random_tensor({2, 3, 4, 4}, rng);
        add("relu", check_nodes([&](Tape<double>& t) { return nn::inner(t, nn::relu(t, x), r); }, {x}), kTol);
    }
    {
        auto x = make_leaf<double>(random_tensor({3, 7}, rng), true);
        Tensor<double> r = random_tensor({3, 7}, rng);
        add("sigmoid", check_nodes([&](Tape<double>& t) { return nn::inner(t, nn::sigmoid(t, x), r); }, {x}), kTol);
    }
    {
        auto x = make_leaf<double>(random_tensor({2, 5, 3}, rng), true);
        Tensor<double> r = random_tensor({2, 5, 3}, rng);
        add("softmax(axis=2)",
            check_nodes([&](Tape<double>& t) { return nn::inner(t, nn::softmax(t, x, 2), r); }, {x}), kTol);
        add("softmax(axis=1)",
            check_nodes([&](Tape<double>& t) { return nn::inner(t, nn::softmax(t, x, 1), r); }, {x}), kTol);
    }
    {
        auto x = make_leaf<double>(random_tensor({2, 4, 6, 5}, rng), true);
        auto w = make_leaf<double>(random_tensor({6, 2, 3, 3}, rng, 0.3), true);
        auto b = make_leaf<double>(random_tensor({6}, rng, 0.3), true);
        Tensor<double> r = random_tensor({2, 6, 3, 3}, rng);
        add("conv2d(stride=2,pad=1,groups=2)",
            check_nodes([&](Tape<double>& t) { return nn::inner(t, nn::conv2d(t, x, w, b, 2, 1, 2), r); },
                        {x, w, b}),
            kTol);
    }
    {
        auto x = make_leaf<double>(random_tensor({2, 4, 5, 5}, rng), true);
        auto w = make_leaf<double>(random_tensor({4, 1, 3, 3}, rng, 0.3), true);
        Tensor<double> r = random_tensor({2, 4, 5, 5}, rng);
        add("conv2d(depthwise)",
            check_nodes(
                [&](Tape<double>& t) { return nn::inner(t, nn::conv2d<double>(t, x, w, nullptr, 1, 1, 4), r); },
                {x, w}),
            kTol);
    }
    {
        auto x = make_leaf<double>(random_tensor({3, 4, 5, 5}, rng), true);
        auto gamma = make_leaf<double>(away_from_zero(random_tensor({4}, rng, 0.5), 0.05), true);
        auto beta = make_leaf<double>(random_tensor({4}, rng, 0.5), true);
        Tensor<double> r = random_tensor({3, 4, 5, 5}, rng);
        auto rmean = Tensor<double>::zeros({4});
        auto rvar = Tensor<double>::full({4}, 1.0);
        add("batch_norm(train)",
            check_nodes(
                [&](Tape<double>& t) {
                    return nn::inner(t, nn::batch_norm(t, x, gamma, beta, rmean, rvar, true), r);
                },
                {x, gamma, beta}),
            kTol);
        add("batch_norm(eval)",
            check_nodes(
                [&](Tape<double>& t) {
                    return nn::inner(t, nn::batch_norm(t, x, gamma, beta, rmean, rvar, false), r);
                },
                {x, gamma, beta}),
            kTol);
    }
    {
        auto x = make_leaf<double>(random_tensor({3, 4}, rng), true);
        auto w = make_leaf<double>(random_tensor({4, 5}, rng, 0.5), true);
        auto b = make_leaf<double>(random_tensor({5}, rng, 0.5), true);
        Tensor<double> r = random_tensor({3, 5}, rng);
        add("linear", check_nodes([&](Tape<double>& t) { return nn::inner(t, nn::linear(t, x, w, b), r); },
                                  {x, w, b}),
            kTol);
    }
    {
        // QK^T / sqrt(d) -> softmax -> AV, the attention core as raw matmuls.
        auto tok = make_leaf<double>(random_tensor({2, 6, 4}, rng), true);
        auto wq = make_leaf<double>(random_tensor({4, 3}, rng, 0.5), true);
        auto wk = make_leaf<double>(random_tensor({4, 3}, rng, 0.5), true);
        auto wv = make_leaf<double>(random_tensor({4, 4}, rng, 0.5), true);
        Tensor<double> r = random_tensor({2, 6, 4}, rng);
        add("attention-core(matmul,bmm,transpose,softmax)",
            check_nodes(
                [&](Tape<double>& t) {
                    auto q = nn::matmul_param(t, tok, wq);
                    auto k = nn::matmul_param(t, tok, wk);
                    auto v = nn::matmul_param(t, tok, wv);
                    auto s = nn::scale(t, nn::bmm(t, q, nn::transpose12(t, k)), 1.0 / std::sqrt(3.0));
                    return nn::inner(t, nn::bmm(t, nn::softmax(t, s, 2), v), r);
                },
                {tok, wq, wk, wv}),
            kTol);
    }
    {
        auto x = make_leaf<double>(random_tensor({2, 3, 4, 4}, rng), true);
        using PK = nn::PoolKind;
        for (auto [kind, name] : {std::pair{PK::spatial_avg, "pool(spatial_avg)"},
                                  std::pair{PK::spatial_max, "pool(spatial_max)"},
                                  std::pair{PK::channel_avg, "pool(channel_avg)"},
                                  std::pair{PK::channel_max, "pool(channel_max)"},
                                  std::pair{PK::global_avg, "pool(global_avg)"}}) {
            Tape<double> probe;
            Tensor<double> r = random_tensor(nn::pool(probe, x, kind)->value.shape, rng);
            add(name, check_nodes([&, kind](Tape<double>& t) { return nn::inner(t, nn::pool(t, x, kind), r); }, {x}),
                kTol);
        }
    }
    {
        auto x = make_leaf<double>(random_tensor({2, 3, 4, 4}, rng), true);
        Tensor<double> r = random_tensor({2, 3, 4, 4}, rng);
        add("min_max_norm",
            check_nodes([&](Tape<double>& t) { return nn::inner(t, nn::min_max_norm(t, x, 1e-6), r); }, {x}), kTol);
    }
    {
        auto logits = make_leaf<double>(random_tensor({4, 6}, rng), true);
        std::vector<int> labels{2, 0, 5, 3};
        add("cross_entropy",
            check_nodes([&](Tape<double>& t) { return nn::cross_entropy(t, logits, labels); }, {logits}), kTol);
    }
    {
        auto a = make_leaf<double>(random_tensor({2, 3, 4, 4}, rng), true);
        auto g1 = make_leaf<double>(random_tensor({2, 3, 1, 1}, rng), true);
        auto g2 = make_leaf<double>(random_tensor({2, 1, 4, 4}, rng), true);
        auto s = make_leaf<double>(random_tensor({1}, rng), true);
        Tensor<double> r = random_tensor({2, 3, 4, 4}, rng);
        add("mul(broadcast)+scale_by",
            check_nodes(
                [&](Tape<double>& t) {
                    return nn::inner(t, nn::scale_by(t, nn::mul(t, nn::mul(t, a, g1), g2), s), r);
                },
                {a, g1, g2, s}),
            kTol);
    }
    {
        ParamStore<double> store;
        std::mt19937_64 init_rng(7);
        model::Shsa<double> shsa(store, "shsa", 8, 3, 4, init_rng);
        auto x = make_leaf<double>(random_tensor({2, 8, 3, 2}, rng), true);
        Tensor<double> r = random_tensor({2, 8, 3, 2}, rng);
        auto wrt = store_nodes(store);
        wrt.push_back(x);
        std::mt19937_64 drop_rng(0);
        add("shsa",
            check_nodes(
                [&](Tape<double>& t) {
                    model::Fwd<double> f{t, false, drop_rng};
                    return nn::inner(t, shsa(f, x), r);
                },
                wrt),
            kTol);
    }
    {
        ParamStore<double> store;
        std::mt19937_64 init_rng(11);
        model::Ahab<double> ahab(store, "ahab", 8, 4, init_rng);
        auto x = make_leaf<double>(random_tensor({2, 8, 4, 3}, rng), true);
        Tensor<double> r = random_tensor({2, 8, 4, 3}, rng);
        auto wrt = store_nodes(store);
        wrt.push_back(x);
        std::mt19937_64 drop_rng(0);
        add("ahab",
            check_nodes(
                [&](Tape<double>& t) {
                    model::Fwd<double> f{t, false, drop_rng};
                    return nn::inner(t, ahab(f, x), r);
                },
                wrt),
            kTol);
    }
    {
        ParamStore<double> store;
        std::mt19937_64 init_rng(13);
        model::ResFfn<double> ffn(store, "ffn", 6, 2, 0.1, true, init_rng);
        auto x = make_leaf<double>(random_tensor({2, 6, 3, 3}, rng), true);
        Tensor<double> r = random_tensor({2, 6, 3, 3}, rng);
        auto wrt = store_nodes(store);
        wrt.push_back(x);
        std::mt19937_64 drop_rng(0);
        add("res_ffn",
            check_nodes(
                [&](Tape<double>& t) {
                    model::Fwd<double> f{t, false, drop_rng};
                    return nn::inner(t, ffn(f, x), r);
                },
                wrt),
            kTol);
    }
    {
        model::ModelConfig cfg;
        cfg.embed_dims = {8, 12, 16};
        cfg.depths = {1, 1, 1};
        cfg.num_classes = 4;
        cfg.image_height = 8;
        cfg.image_width = 8;
        model::RaShvitNet<double> net(cfg, 17);
        Tensor<double> images = random_tensor({2, 2, 8, 8}, rng);
        Tensor<double> r = random_tensor({2, 4}, rng);
        std::mt19937_64 drop_rng(0);
        add("full-model(tiny)",
            check_nodes(
                [&](Tape<double>& t) {
                    model::Fwd<double> f{t, false, drop_rng};
                    return nn::inner(t, net.forward(f, images), r);
                },
                store_nodes(net.store())),
            1e-5);
    }
    if (include_broken_fixture) {
        auto x = make_leaf<double>(away_from_zero(random_tensor({3, 5}, rng), 0.05), true);
        Tensor<double> r = random_tensor({3, 5}, rng);
        add("relu(broken-backward-fixture)",
            check_nodes([&](Tape<double>& t) { return nn::inner(t, broken_relu(t, x), r); }, {x}), kTol);
    }
    return results;
}

bool all_pass(const std::vector<GradCheckResult>& results) {
    for (const auto& r : results)
        if (!r.pass) return false;
    return !results.empty();
}

}  // namespace rashvit

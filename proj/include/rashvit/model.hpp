#pragma once

#include <array>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "rashvit/errors.hpp"
#include "rashvit/ops.hpp"
#include "rashvit/params.hpp"

namespace rashvit::model {

struct ModelConfig {
    std::array<int, 3> embed_dims{128, 224, 320};
    std::array<int, 3> depths{1, 2, 3};
    double partial_ratio = 1.0 / 4.67;
    int qk_dim = 16;
    int ffn_expansion = 2;
    int num_classes = 10;
    double dropout_p = 0.1;
    bool use_ahab = true;
    bool use_res_ffn = true;
    bool ahab_every_block = true;  // false: AHAB only on the last block of each stage
    int ca_reduction = 8;
    std::array<int, 4> stem_strides{2, 2, 2, 2};
    int head_depth = 1;
    int image_height = 64;
    int image_width = 32;
    int in_channels = 2;
    std::string norm_kind = "batch";

    std::array<int, 4> stem_channels() const {
        int d = embed_dims[0];
        return {std::max(2, d / 8), std::max(2, d / 4), std::max(2, d / 2), d};
    }

    int partial_channels(int c) const {
        int cp = static_cast<int>(std::floor(partial_ratio * c));
        if (cp < 1) throw UsageError("partial_channels: floor(r*C) < 1 for C=" + std::to_string(c));
        if (cp >= c) throw UsageError("partial_channels: no residual channels left for C=" + std::to_string(c));
        return cp;
    }

    void validate() const {
        if (num_classes < 2) throw UsageError("config: num_classes must be >= 2");
        if (qk_dim < 1 || ffn_expansion < 1) throw UsageError("config: qk_dim and ffn_expansion must be >= 1");
        if (dropout_p < 0.0 || dropout_p >= 1.0) throw UsageError("config: dropout_p must be in [0,1)");
        if (norm_kind != "batch") throw UsageError("config: unsupported norm_kind '" + norm_kind + "'");
        for (int d : depths)
            if (d < 1) throw UsageError("config: stage depths must be >= 1");
        for (int s : stem_strides)
            if (s < 1 || s > 2) throw UsageError("config: stem strides must be 1 or 2");
        partial_channels(embed_dims[1]);
        partial_channels(embed_dims[2]);
    }
};

// Tiny profile used by desk-scale experiments and the full-model gradient check.
inline ModelConfig tiny_config(int num_classes = 10) {
    ModelConfig cfg;
    cfg.embed_dims = {32, 48, 64};
    cfg.depths = {1, 1, 1};
    cfg.num_classes = num_classes;
    return cfg;
}

namespace init {

template <class T>
Tensor<T> trunc_normal(std::vector<int64_t> shape, std::mt19937_64& rng, double sd = 0.02) {
    std::normal_distribution<double> d(0.0, sd);
    Tensor<T> t(std::move(shape));
    for (auto& v : t.data) {
        double x;
        do {
            x = d(rng);
        } while (std::abs(x) > 2.0 * sd);
        v = static_cast<T>(x);
    }
    return t;
}

template <class T>
Tensor<T> conv_normal(std::vector<int64_t> shape, std::mt19937_64& rng, int groups) {
    // shape = (Cout, Cin/g, kH, kW); fan_out-scaled normal
    double fan_out = static_cast<double>(shape[2] * shape[3] * shape[0]) / static_cast<double>(groups);
    std::normal_distribution<double> d(0.0, std::sqrt(2.0 / fan_out));
    Tensor<T> t(std::move(shape));
    for (auto& v : t.data) v = static_cast<T>(d(rng));
    return t;
}

}  // namespace init

template <class T>
struct Fwd {
    Tape<T>& tape;
    bool train = false;
    std::mt19937_64& rng;  // dropout source
};

template <class T>
struct ConvBn {
    NodePtr<T> w, gamma, beta;
    std::shared_ptr<Tensor<T>> rmean, rvar;
    int stride = 1, padding = 0, groups = 1;
    bool act_relu = false;

    ConvBn() = default;
    ConvBn(ParamStore<T>& s, const std::string& prefix, int cin, int cout, int k, int stride_, int padding_,
           int groups_, bool relu_, std::mt19937_64& rng)
        : stride(stride_), padding(padding_), groups(groups_), act_relu(relu_) {
        w = s.add_param(prefix + ".w", init::conv_normal<T>({cout, cin / groups_, k, k}, rng, groups_));
        gamma = s.add_param(prefix + ".bn.gamma", Tensor<T>::full({cout}, T(1)));
        beta = s.add_param(prefix + ".bn.beta", Tensor<T>::zeros({cout}));
        rmean = s.add_buffer(prefix + ".bn.running_mean", Tensor<T>::zeros({cout}));
        rvar = s.add_buffer(prefix + ".bn.running_var", Tensor<T>::full({cout}, T(1)));
    }

    NodePtr<T> operator()(Fwd<T>& f, const NodePtr<T>& x) const {
        auto y = nn::conv2d<T>(f.tape, x, w, nullptr, stride, padding, groups);
        y = nn::batch_norm<T>(f.tape, y, gamma, beta, *rmean, *rvar, f.train);
        if (act_relu) y = nn::relu(f.tape, y);
        return y;
    }
};

template <class T>
struct Conv {
    NodePtr<T> w, b;
    int stride = 1, padding = 0, groups = 1;

    Conv() = default;
    Conv(ParamStore<T>& s, const std::string& prefix, int cin, int cout, int k, int stride_, int padding_,
         std::mt19937_64& rng, bool mlp_init = false)
        : stride(stride_), padding(padding_) {
        w = mlp_init ? s.add_param(prefix + ".w", init::trunc_normal<T>({cout, cin, k, k}, rng))
                     : s.add_param(prefix + ".w", init::conv_normal<T>({cout, cin, k, k}, rng, 1));
        b = s.add_param(prefix + ".b", Tensor<T>::zeros({cout}));
    }

    NodePtr<T> operator()(Fwd<T>& f, const NodePtr<T>& x) const {
        return nn::conv2d<T>(f.tape, x, w, b, stride, padding, groups);
    }
};

// Shared two-layer MLP on pooled descriptors: sigmoid(MLP(avg) + MLP(max)).
template <class T>
struct ChannelAttention {
    Conv<T> fc1, fc2;

    ChannelAttention() = default;
    ChannelAttention(ParamStore<T>& s, const std::string& prefix, int c, int reduction, std::mt19937_64& rng) {
        int cr = std::max(1, c / reduction);
        fc1 = Conv<T>(s, prefix + ".fc1", c, cr, 1, 1, 0, rng, true);
        fc2 = Conv<T>(s, prefix + ".fc2", cr, c, 1, 1, 0, rng, true);
    }

    NodePtr<T> operator()(Fwd<T>& f, const NodePtr<T>& x) const {
        auto mlp = [&](const NodePtr<T>& p) { return fc2(f, nn::relu(f.tape, fc1(f, p))); };
        auto a = mlp(nn::pool(f.tape, x, nn::PoolKind::spatial_avg));
        auto m = mlp(nn::pool(f.tape, x, nn::PoolKind::spatial_max));
        return nn::sigmoid(f.tape, nn::add(f.tape, a, m));
    }
};

// sigmoid(conv7x7([channel_avg ; channel_max]))
template <class T>
struct SpatialAttention {
    Conv<T> conv;

    SpatialAttention() = default;
    SpatialAttention(ParamStore<T>& s, const std::string& prefix, std::mt19937_64& rng) {
        conv = Conv<T>(s, prefix + ".conv", 2, 1, 7, 1, 3, rng);
    }

    NodePtr<T> operator()(Fwd<T>& f, const NodePtr<T>& x) const {
        auto avg = nn::pool(f.tape, x, nn::PoolKind::channel_avg);
        auto mx = nn::pool(f.tape, x, nn::PoolKind::channel_max);
        return nn::sigmoid(f.tape, conv(f, nn::concat_channels(f.tape, avg, mx)));
    }
};

// Parallel channel/spatial gates on the same input, each branch min-max
// normalized and scaled by a learnable scalar before the sum.
template <class T>
struct Ahab {
    ChannelAttention<T> ca;
    SpatialAttention<T> sa;
    NodePtr<T> alpha, beta;
    T mmn_eps = T(1e-6);

    Ahab() = default;
    Ahab(ParamStore<T>& s, const std::string& prefix, int c, int reduction, std::mt19937_64& rng)
        : ca(s, prefix + ".ca", c, reduction, rng), sa(s, prefix + ".sa", rng) {
        alpha = s.add_param(prefix + ".alpha", Tensor<T>::full({1}, T(1)));
        beta = s.add_param(prefix + ".beta", Tensor<T>::full({1}, T(1)));
    }

    NodePtr<T> operator()(Fwd<T>& f, const NodePtr<T>& x) const {
        auto fc = nn::mul(f.tape, x, ca(f, x));
        auto fs = nn::mul(f.tape, x, sa(f, x));
        auto nc = nn::scale_by(f.tape, nn::min_max_norm(f.tape, fc, mmn_eps), alpha);
        auto ns = nn::scale_by(f.tape, nn::min_max_norm(f.tape, fs, mmn_eps), beta);
        return nn::add(f.tape, nc, ns);
    }
};

// Single-head attention on the first C_p channels; the rest pass through and
// are re-fused by a 1x1 projection.
template <class T>
struct Shsa {
    NodePtr<T> wq, wk, wv;
    Conv<T> wo;
    int cp = 0, qk_dim = 0, channels = 0;

    Shsa() = default;
    Shsa(ParamStore<T>& s, const std::string& prefix, int c, int cp_, int qk, std::mt19937_64& rng)
        : cp(cp_), qk_dim(qk), channels(c) {
        wq = s.add_param(prefix + ".wq", init::trunc_normal<T>({cp_, qk}, rng));
        wk = s.add_param(prefix + ".wk", init::trunc_normal<T>({cp_, qk}, rng));
        wv = s.add_param(prefix + ".wv", init::trunc_normal<T>({cp_, cp_}, rng));
        wo = Conv<T>(s, prefix + ".wo", c, c, 1, 1, 0, rng, true);
    }

    NodePtr<T> operator()(Fwd<T>& f, const NodePtr<T>& x) const {
        int64_t H = x->value.dim(2), W = x->value.dim(3);
        auto x_att = nn::slice_channels(f.tape, x, 0, cp);
        auto x_res = nn::slice_channels(f.tape, x, cp, channels);
        auto tok = nn::map_to_tokens(f.tape, x_att);
        auto q = nn::matmul_param(f.tape, tok, wq);
        auto k = nn::matmul_param(f.tape, tok, wk);
        auto v = nn::matmul_param(f.tape, tok, wv);
        auto scores = nn::scale(f.tape, nn::bmm(f.tape, q, nn::transpose12(f.tape, k)),
                                T(1.0 / std::sqrt(static_cast<double>(qk_dim))));
        auto attn = nn::softmax(f.tape, scores, 2);
        auto attended = nn::tokens_to_map(f.tape, nn::bmm(f.tape, attn, v), H, W);
        auto cat = nn::concat_channels(f.tape, attended, x_res);
        return wo(f, cat);
    }

    // Pre-projection concat, exposed for the split/concat fidelity check.
    NodePtr<T> concat_pre_projection(Fwd<T>& f, const NodePtr<T>& x) const {
        int64_t H = x->value.dim(2), W = x->value.dim(3);
        auto x_att = nn::slice_channels(f.tape, x, 0, cp);
        auto x_res = nn::slice_channels(f.tape, x, cp, channels);
        auto tok = nn::map_to_tokens(f.tape, x_att);
        auto q = nn::matmul_param(f.tape, tok, wq);
        auto k = nn::matmul_param(f.tape, tok, wk);
        auto v = nn::matmul_param(f.tape, tok, wv);
        auto scores = nn::scale(f.tape, nn::bmm(f.tape, q, nn::transpose12(f.tape, k)),
                                T(1.0 / std::sqrt(static_cast<double>(qk_dim))));
        auto attn = nn::softmax(f.tape, scores, 2);
        auto attended = nn::tokens_to_map(f.tape, nn::bmm(f.tape, attn, v), H, W);
        return nn::concat_channels(f.tape, attended, x_res);
    }
};

// Y = X + Drop(W2 * act(norm(W1 * X))); the plain-FFN ablation drops the outer residual.
template <class T>
struct ResFfn {
    ConvBn<T> expand;
    Conv<T> project;
    double dropout_p = 0.1;
    bool residual = true;

    ResFfn() = default;
    ResFfn(ParamStore<T>& s, const std::string& prefix, int c, int expansion, double dropout, bool residual_,
           std::mt19937_64& rng)
        : dropout_p(dropout), residual(residual_) {
        expand = ConvBn<T>(s, prefix + ".fc1", c, c * expansion, 1, 1, 0, 1, true, rng);
        project = Conv<T>(s, prefix + ".fc2", c * expansion, c, 1, 1, 0, rng);
    }

    NodePtr<T> operator()(Fwd<T>& f, const NodePtr<T>& x) const {
        auto h = nn::dropout(f.tape, expand(f, x), dropout_p, f.train, f.rng);
        auto y = nn::dropout(f.tape, project(f, h), dropout_p, f.train, f.rng);
        return residual ? nn::add(f.tape, x, y) : y;
    }
};

// One RA-SHViT block. SHSA is present only in stages 2 and 3.
template <class T>
struct Block {
    ConvBn<T> dwconv;
    bool has_shsa = false;
    Shsa<T> shsa;
    ResFfn<T> ffn;
    bool has_ahab = false;
    Ahab<T> ahab;

    Block() = default;
    Block(ParamStore<T>& s, const std::string& prefix, int stage, int c, const ModelConfig& cfg, bool with_ahab,
          std::mt19937_64& rng) {
        if (stage < 1 || stage > 3) throw UsageError("block: stage out of range");
        dwconv = ConvBn<T>(s, prefix + ".dwconv", c, c, 3, 1, 1, c, false, rng);
        has_shsa = stage >= 2;
        if (has_shsa) shsa = Shsa<T>(s, prefix + ".shsa", c, cfg.partial_channels(c), cfg.qk_dim, rng);
        ffn = ResFfn<T>(s, prefix + ".ffn", c, cfg.ffn_expansion, cfg.dropout_p, cfg.use_res_ffn, rng);
        has_ahab = cfg.use_ahab && with_ahab;
        if (has_ahab) ahab = Ahab<T>(s, prefix + ".ahab", c, cfg.ca_reduction, rng);
    }

    // dwconv, shsa and the ffn each keep their own identity path; the
    // block-level skip guards the AHAB gate, which is multiplicative and
    // would otherwise sever it.
    NodePtr<T> operator()(Fwd<T>& f, const NodePtr<T>& x) const {
        auto x1 = nn::add(f.tape, x, dwconv(f, x));
        auto x2 = has_shsa ? nn::add(f.tape, x1, shsa(f, x1)) : x1;
        auto x3 = ffn(f, x2);
        return has_ahab ? nn::add(f.tape, ahab(f, x3), x) : x3;
    }
};

// stage-1 block -> inverted residual (1x1 expand, 3x3 depthwise stride 2, 1x1 project) -> stage-1 block
template <class T>
struct Downsample {
    Block<T> pre, post;
    ConvBn<T> expand, dw, project;

    Downsample() = default;
    Downsample(ParamStore<T>& s, const std::string& prefix, int cin, int cout, const ModelConfig& cfg,
               std::mt19937_64& rng) {
        bool with_ahab = cfg.ahab_every_block;
        pre = Block<T>(s, prefix + ".pre", 1, cin, cfg, with_ahab, rng);
        expand = ConvBn<T>(s, prefix + ".expand", cin, 2 * cin, 1, 1, 0, 1, true, rng);
        dw = ConvBn<T>(s, prefix + ".dw", 2 * cin, 2 * cin, 3, 2, 1, 2 * cin, false, rng);
        project = ConvBn<T>(s, prefix + ".project", 2 * cin, cout, 1, 1, 0, 1, false, rng);
        post = Block<T>(s, prefix + ".post", 1, cout, cfg, with_ahab, rng);
    }

    NodePtr<T> operator()(Fwd<T>& f, const NodePtr<T>& x) const {
        return post(f, project(f, dw(f, expand(f, pre(f, x)))));
    }
};

template <class T>
struct Linear {
    NodePtr<T> w, b;

    Linear() = default;
    Linear(ParamStore<T>& s, const std::string& prefix, int in, int out, std::mt19937_64& rng) {
        w = s.add_param(prefix + ".w", init::trunc_normal<T>({in, out}, rng));
        b = s.add_param(prefix + ".b", Tensor<T>::zeros({out}));
    }

    NodePtr<T> operator()(Fwd<T>& f, const NodePtr<T>& x) const { return nn::linear(f.tape, x, w, b); }
};

template <class T>
class RaShvitNet {
  public:
    explicit RaShvitNet(const ModelConfig& cfg, uint64_t init_seed = 1) : cfg_(cfg) {
        cfg_.validate();
        std::mt19937_64 rng(init_seed);
        auto sc = cfg_.stem_channels();
        int prev = cfg_.in_channels;
        for (int i = 0; i < 4; ++i) {
            stem_.push_back(ConvBn<T>(store_, "stem.conv" + std::to_string(i), prev, sc[static_cast<size_t>(i)], 3,
                                      cfg_.stem_strides[static_cast<size_t>(i)], 1, 1, true, rng));
            prev = sc[static_cast<size_t>(i)];
        }
        for (int stage = 0; stage < 3; ++stage) {
            std::vector<Block<T>> blocks;
            int c = cfg_.embed_dims[static_cast<size_t>(stage)];
            for (int i = 0; i < cfg_.depths[static_cast<size_t>(stage)]; ++i) {
                bool with_ahab = cfg_.ahab_every_block || i == cfg_.depths[static_cast<size_t>(stage)] - 1;
                blocks.push_back(Block<T>(store_,
                                          "stage" + std::to_string(stage + 1) + ".block" + std::to_string(i),
                                          stage + 1, c, cfg_, with_ahab, rng));
            }
            stages_.push_back(std::move(blocks));
            if (stage < 2)
                downs_.push_back(Downsample<T>(store_, "down" + std::to_string(stage + 1), c,
                                               cfg_.embed_dims[static_cast<size_t>(stage) + 1], cfg_, rng));
        }
        skip_proj_ = Conv<T>(store_, "skip.proj", cfg_.embed_dims[0], cfg_.embed_dims[2], 1, 1, 0, rng);
        int d = cfg_.embed_dims[2];
        for (int i = 0; i < cfg_.head_depth - 1; ++i)
            head_hidden_.push_back(Linear<T>(store_, "head.hidden" + std::to_string(i), d, d, rng));
        head_fc_ = Linear<T>(store_, "head.fc", d, cfg_.num_classes, rng);
    }

    // Post-pooling, pre-classifier feature: pooled stage-3 plus the projected,
    // pooled stem feature (the long skip).
    NodePtr<T> forward_features(Fwd<T>& f, const Tensor<T>& images,
                                std::vector<std::vector<int64_t>>* trace = nullptr) const {
        if (images.rank() != 4 || images.dim(1) != cfg_.in_channels)
            throw UsageError("forward: expected (B," + std::to_string(cfg_.in_channels) + ",H,W) input, got " +
                             shape_str(images.shape));
        auto x = nn::constant(f.tape, images);
        if (trace) trace->push_back(x->value.shape);
        for (const auto& conv : stem_) x = conv(f, x);
        auto stem_out = x;
        for (int stage = 0; stage < 3; ++stage) {
            for (const auto& blk : stages_[static_cast<size_t>(stage)]) x = blk(f, x);
            if (trace) trace->push_back(x->value.shape);
            if (stage < 2) x = downs_[static_cast<size_t>(stage)](f, x);
        }
        auto pooled = nn::pool(f.tape, x, nn::PoolKind::global_avg);
        auto skip = nn::pool(f.tape, skip_proj_(f, stem_out), nn::PoolKind::global_avg);
        return nn::add(f.tape, pooled, skip);
    }

    NodePtr<T> forward(Fwd<T>& f, const Tensor<T>& images,
                       std::vector<std::vector<int64_t>>* trace = nullptr) const {
        auto h = forward_features(f, images, trace);
        for (const auto& hidden : head_hidden_) h = nn::relu(f.tape, hidden(f, h));
        auto logits = head_fc_(f, h);
        if (trace) trace->push_back(logits->value.shape);
        return logits;
    }

    ParamStore<T>& store() { return store_; }
    const ParamStore<T>& store() const { return store_; }
    const ModelConfig& config() const { return cfg_; }
    int feature_width() const { return cfg_.embed_dims[2]; }

    std::vector<std::string> param_names() const {
        std::vector<std::string> out;
        for (const auto& [n, _] : store_.params) out.push_back(n);
        return out;
    }

    const std::vector<std::vector<Block<T>>>& stages() const { return stages_; }

  private:
    ModelConfig cfg_;
    ParamStore<T> store_;
    std::vector<ConvBn<T>> stem_;
    std::vector<std::vector<Block<T>>> stages_;
    std::vector<Downsample<T>> downs_;
    Conv<T> skip_proj_;
    std::vector<Linear<T>> head_hidden_;
    Linear<T> head_fc_;
};

}  // namespace rashvit::model

#include "rashvit/model_info.hpp"

namespace rashvit::model {

int64_t conv_macs(int k, int cin, int cout, int groups, int out_h, int out_w) {
    return static_cast<int64_t>(k) * k * (cin / groups) * cout * out_h * out_w;
}

int64_t conv_params(int k, int cin, int cout, int groups, bool bias) {
    return static_cast<int64_t>(cout) * (cin / groups) * k * k + (bias ? cout : 0);
}

namespace {

struct Walker {
    std::vector<LayerStat> layers;

    void conv_bn(const std::string& name, int k, int cin, int cout, int groups, int h, int w) {
        layers.push_back({name, conv_params(k, cin, cout, groups, false) + 2 * cout,
                          conv_macs(k, cin, cout, groups, h, w)});
    }
    void conv_bias(const std::string& name, int k, int cin, int cout, int h, int w) {
        layers.push_back({name, conv_params(k, cin, cout, 1, true), conv_macs(k, cin, cout, 1, h, w)});
    }

    void shsa(const std::string& name, int c, int cp, int d, int h, int w) {
        int64_t n = static_cast<int64_t>(h) * w;
        int64_t params = static_cast<int64_t>(cp) * d * 2 + static_cast<int64_t>(cp) * cp;
        int64_t macs = n * cp * d * 2 + n * cp * cp  // Q, K, V projections
                       + n * n * d + n * n * cp;     // QK^T and AV
        layers.push_back({name + ".qkv", params, macs});
        conv_bias(name + ".wo", 1, c, c, h, w);
    }

    void ffn(const std::string& name, int c, int expansion, int h, int w) {
        conv_bn(name + ".fc1", 1, c, c * expansion, 1, h, w);
        conv_bias(name + ".fc2", 1, c * expansion, c, h, w);
    }

    void ahab(const std::string& name, int c, int reduction, int h, int w) {
        int cr = std::max(1, c / reduction);
        // shared MLP applied to both pooled descriptors (spatial size 1)
        layers.push_back({name + ".ca",
                          conv_params(1, c, cr, 1, true) + conv_params(1, cr, c, 1, true),
                          2 * (conv_macs(1, c, cr, 1, 1, 1) + conv_macs(1, cr, c, 1, 1, 1))});
        layers.push_back({name + ".sa", conv_params(7, 2, 1, 1, true), conv_macs(7, 2, 1, 1, h, w)});
        layers.push_back({name + ".scalars", 2, 0});
    }

    void block(const std::string& name, int stage, int c, const ModelConfig& cfg, bool with_ahab, int h, int w) {
        conv_bn(name + ".dwconv", 3, c, c, c, h, w);
        if (stage >= 2) shsa(name + ".shsa", c, cfg.partial_channels(c), cfg.qk_dim, h, w);
        ffn(name + ".ffn", c, cfg.ffn_expansion, h, w);
        if (cfg.use_ahab && with_ahab) ahab(name + ".ahab", c, cfg.ca_reduction, h, w);
    }
};

int down2(int x) { return (x - 1) / 2 + 1; }  // 3x3 pad-1 stride-2 output size

}  // namespace

std::vector<LayerStat> model_accounting(const ModelConfig& cfg) {
    cfg.validate();
    Walker wk;
    auto sc = cfg.stem_channels();
    int h = cfg.image_height, w = cfg.image_width;
    int prev = cfg.in_channels;
    for (int i = 0; i < 4; ++i) {
        if (cfg.stem_strides[static_cast<size_t>(i)] == 2) {
            h = down2(h);
            w = down2(w);
        }
        wk.conv_bn("stem.conv" + std::to_string(i), 3, prev, sc[static_cast<size_t>(i)], 1, h, w);
        prev = sc[static_cast<size_t>(i)];
    }
    int stem_h = h, stem_w = w;
    for (int stage = 0; stage < 3; ++stage) {
        int c = cfg.embed_dims[static_cast<size_t>(stage)];
        for (int i = 0; i < cfg.depths[static_cast<size_t>(stage)]; ++i) {
            bool with_ahab = cfg.ahab_every_block || i == cfg.depths[static_cast<size_t>(stage)] - 1;
            wk.block("stage" + std::to_string(stage + 1) + ".block" + std::to_string(i), stage + 1, c, cfg,
                     with_ahab, h, w);
        }
        if (stage < 2) {
            int cnext = cfg.embed_dims[static_cast<size_t>(stage) + 1];
            std::string dn = "down" + std::to_string(stage + 1);
            wk.block(dn + ".pre", 1, c, cfg, cfg.ahab_every_block, h, w);
            wk.conv_bn(dn + ".expand", 1, c, 2 * c, 1, h, w);
            h = down2(h);
            w = down2(w);
            wk.conv_bn(dn + ".dw", 3, 2 * c, 2 * c, 2 * c, h, w);
            wk.conv_bn(dn + ".project", 1, 2 * c, cnext, 1, h, w);
            wk.block(dn + ".post", 1, cnext, cfg, cfg.ahab_every_block, h, w);
        }
    }
    wk.conv_bias("skip.proj", 1, cfg.embed_dims[0], cfg.embed_dims[2], stem_h, stem_w);
    int d = cfg.embed_dims[2];
    for (int i = 0; i < cfg.head_depth - 1; ++i)
        wk.layers.push_back({"head.hidden" + std::to_string(i), static_cast<int64_t>(d) * d + d,
                             static_cast<int64_t>(d) * d});
    wk.layers.push_back({"head.fc", static_cast<int64_t>(d) * cfg.num_classes + cfg.num_classes,
                         static_cast<int64_t>(d) * cfg.num_classes});
    return wk.layers;
}

int64_t count_params(const ModelConfig& cfg) {
    int64_t n = 0;
    for (const auto& l : model_accounting(cfg)) n += l.params;
    return n;
}

int64_t estimate_flops(const ModelConfig& cfg) {
    int64_t n = 0;
    for (const auto& l : model_accounting(cfg)) n += l.macs;
    return n;
}

}  // namespace rashvit::model

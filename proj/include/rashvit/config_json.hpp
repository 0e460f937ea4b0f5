#pragma once

#include <set>
#include <string>

#include <json.hpp>

#include "rashvit/errors.hpp"
#include "rashvit/model.hpp"

namespace rashvit {

// Unknown keys are configuration bugs; reject them up front.
inline void require_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                         const std::string& context) {
    if (!j.is_object()) throw UsageError(context + ": expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.contains(it.key())) throw UsageError(context + ": unknown key '" + it.key() + "'");
}

namespace model {

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"embed_dims", c.embed_dims},
                       {"depths", c.depths},
                       {"partial_ratio", c.partial_ratio},
                       {"qk_dim", c.qk_dim},
                       {"ffn_expansion", c.ffn_expansion},
                       {"num_classes", c.num_classes},
                       {"dropout_p", c.dropout_p},
                       {"use_ahab", c.use_ahab},
                       {"use_res_ffn", c.use_res_ffn},
                       {"ahab_every_block", c.ahab_every_block},
                       {"ca_reduction", c.ca_reduction},
                       {"stem_strides", c.stem_strides},
                       {"head_depth", c.head_depth},
                       {"image_height", c.image_height},
                       {"image_width", c.image_width},
                       {"in_channels", c.in_channels},
                       {"norm_kind", c.norm_kind}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    require_keys(j,
                 {"embed_dims", "depths", "partial_ratio", "qk_dim", "ffn_expansion", "num_classes", "dropout_p",
                  "use_ahab", "use_res_ffn", "ahab_every_block", "ca_reduction", "stem_strides", "head_depth",
                  "image_height", "image_width", "in_channels", "norm_kind"},
                 "model config");
    ModelConfig d;
    c.embed_dims = j.value("embed_dims", d.embed_dims);
    c.depths = j.value("depths", d.depths);
    c.partial_ratio = j.value("partial_ratio", d.partial_ratio);
    c.qk_dim = j.value("qk_dim", d.qk_dim);
    c.ffn_expansion = j.value("ffn_expansion", d.ffn_expansion);
    c.num_classes = j.value("num_classes", d.num_classes);
    c.dropout_p = j.value("dropout_p", d.dropout_p);
    c.use_ahab = j.value("use_ahab", d.use_ahab);
    c.use_res_ffn = j.value("use_res_ffn", d.use_res_ffn);
    c.ahab_every_block = j.value("ahab_every_block", d.ahab_every_block);
    c.ca_reduction = j.value("ca_reduction", d.ca_reduction);
    c.stem_strides = j.value("stem_strides", d.stem_strides);
    c.head_depth = j.value("head_depth", d.head_depth);
    c.image_height = j.value("image_height", d.image_height);
    c.image_width = j.value("image_width", d.image_width);
    c.in_channels = j.value("in_channels", d.in_channels);
    c.norm_kind = j.value("norm_kind", d.norm_kind);
}

}  // namespace model
}  // namespace rashvit

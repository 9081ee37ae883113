#pragma once

#include <initializer_list>
#include <string>

#include <json.hpp>

#include "vmct/errors.hpp"
#include "vmct/network.hpp"

namespace vmct {

using Json = nlohmann::ordered_json;

// Strict-schema guard: every key in `j` must be in `allowed`.
inline void check_keys(const Json& j, const std::string& ctx,
                       std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(ctx + ": expected a JSON object");
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (item.key() == a) {
                ok = true;
                break;
            }
        if (!ok) throw ConfigError(ctx + ": unknown key '" + item.key() + "'");
    }
}

template <typename V>
void read_field(const Json& j, const std::string& ctx, const char* key, V& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<V>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(ctx + "." + key + ": " + e.what());
    }
}

inline Json arch_to_json(const ArchConfig& a) {
    Json j;
    j["base_channels"] = a.base_channels;
    j["depth"] = a.depth;
    j["bottleneck_channels"] = a.bottleneck_channels;
    j["pcm_hidden"] = a.pcm_hidden;
    j["prior_dim"] = a.prior_dim;
    j["embed_dim"] = a.embed_dim;
    j["in_channels"] = a.in_channels;
    j["out_channels"] = a.out_channels;
    j["residual"] = a.residual;
    return j;
}

inline ArchConfig arch_from_json(const Json& j, const std::string& ctx = "arch") {
    check_keys(j, ctx,
               {"base_channels", "depth", "bottleneck_channels", "pcm_hidden", "prior_dim",
                "embed_dim", "in_channels", "out_channels", "residual"});
    ArchConfig a;
    read_field(j, ctx, "base_channels", a.base_channels);
    read_field(j, ctx, "depth", a.depth);
    read_field(j, ctx, "bottleneck_channels", a.bottleneck_channels);
    read_field(j, ctx, "pcm_hidden", a.pcm_hidden);
    read_field(j, ctx, "prior_dim", a.prior_dim);
    read_field(j, ctx, "embed_dim", a.embed_dim);
    read_field(j, ctx, "in_channels", a.in_channels);
    read_field(j, ctx, "out_channels", a.out_channels);
    read_field(j, ctx, "residual", a.residual);
    return a;
}

}  // namespace vmct

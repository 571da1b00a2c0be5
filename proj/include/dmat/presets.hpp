#pragma once

#include "dmat/error.hpp"

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace dmat {

// Published per-dataset hyper-parameters. Field names follow the keys of the
// flat config format.
struct Preset {
    std::string_view name;
    double learning_rate;
    std::array<std::size_t, 2> architecture;
    double tau;
    std::size_t n_epochs;
    double mask_fraction;
    std::size_t view_num;
    double weight_decay;
    std::size_t batch_size;
    double alpha;
    double r_max;
    double rrz;
};

inline constexpr std::array<Preset, 8> presets{{
    {"acm", 1e-3, {256, 128}, 2.0, 400, 0.6, 4, 0.02, 512, 0.4, 1e-5, 0.4},
    {"dblp", 1e-3, {256, 256}, 2.0, 300, 0.2, 4, 0.05, 512, 0.6, 1e-4, 0.5},
    {"cora", 1e-4, {256, 128}, 1.0, 300, 0.08, 3, 0.02, 512, 0.1, 1e-6, 0.4},
    {"citeseer", 1e-4, {256, 512}, 4.0, 400, 0.2, 4, 0.05, 512, 0.4, 1e-5, 0.4},
    {"pubmed", 1e-5, {256, 256}, 0.8, 200, 0.2, 2, 0.05, 512, 0.01, 1e-5, 0.4},
    {"amazon_photo", 8e-5, {512, 512}, 2.0, 500, 0.1, 4, 0.1, 256, 0.03, 1e-6, 0.5},
    {"coauthor_cs", 1e-5, {256, 512}, 1.2, 400, 0.4, 5, 0.05, 512, 0.1, 1e-5, 0.4},
    {"coauthor_phy", 2e-5, {256, 512}, 0.5, 400, 0.1, 5, 0.05, 512, 0.08, 1e-5, 0.4},
}};

inline const Preset& find_preset(std::string_view name) {
    for (const auto& p : presets)
        if (p.name == name) return p;
    std::string known;
    for (const auto& p : presets) known += (known.empty() ? "" : ", ") + std::string(p.name);
    throw ConfigError("unknown preset '" + std::string(name) + "' (known: " + known + ")");
}

}  // namespace dmat

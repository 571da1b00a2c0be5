#pragma once

#include "dmat/error.hpp"
#include "dmat/rng.hpp"
#include "dmat/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace dmat {

struct AugmentConfig {
    double mask_fraction = 0.0;
    std::size_t n_view = 1;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(mask_fraction >= 0.0 && mask_fraction <= 1.0)) throw ConfigError("mask_fraction must lie in [0, 1]");
        if (n_view < 1) throw ConfigError("n_view must be >= 1");
    }
};

inline std::size_t masked_column_count(double fraction, std::size_t d) {
    // The small slack keeps e.g. 0.3 * 10 from flooring to 2.
    return std::min(d, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(d) + 1e-9)));
}

// Sorted column indices to zero for one (view, nonce) key.
inline std::vector<std::size_t> mask_indices(std::size_t d, const AugmentConfig& cfg, std::uint64_t view_index,
                                             std::uint64_t step_nonce) {
    const std::size_t k = masked_column_count(cfg.mask_fraction, d);
    std::vector<std::size_t> cols(d);
    std::iota(cols.begin(), cols.end(), std::size_t{0});
    auto rng = keyed_engine(cfg.seed, Stream::mask, {view_index, step_nonce});
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, d - 1);
        std::swap(cols[i], cols[pick(rng)]);
    }
    cols.resize(k);
    std::sort(cols.begin(), cols.end());
    return cols;
}

inline Matrix mask_columns(const Matrix& batch, const AugmentConfig& cfg, std::uint64_t view_index,
                           std::uint64_t step_nonce) {
    cfg.validate();
    Matrix out = batch;
    for (std::size_t c : mask_indices(static_cast<std::size_t>(batch.cols()), cfg, view_index, step_nonce))
        out.col(static_cast<Eigen::Index>(c)).setZero();
    return out;
}

}  // namespace dmat

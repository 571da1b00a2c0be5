#pragma once

#include "dmat/error.hpp"
#include "dmat/graph.hpp"
#include "dmat/io.hpp"
#include "dmat/parallel.hpp"
#include "dmat/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace dmat {

// Generalized PageRank filter P = sum_l w_l T^l X with hop operator
// T = D^{r-1} (A + I) D^{-r} and PPR weights w_l = alpha (1 - alpha)^l.
struct FilterConfig {
    double alpha = 0.1;
    double rrz = 0.5;
    std::optional<std::size_t> max_hops;
    // Picks L as the smallest value with (1 - alpha)^{L+1} < eps. Defaults to
    // 1e-7 when neither this nor max_hops is set.
    std::optional<double> residual_mass_eps;
    // Residual threshold for the push evaluator.
    std::optional<double> r_max;
    // Only used by the stacked Laplacian smoothing reference filter.
    double laplacian_gamma = 1.0;
    bool row_normalize = false;

    static constexpr double default_residual_mass_eps = 1e-7;

    void validate() const {
        if (!(alpha > 0.0 && alpha <= 1.0)) throw DomainError("alpha must lie in (0, 1]");
        if (!(rrz >= 0.0 && rrz <= 1.0)) throw DomainError("rrz must lie in [0, 1]");
        if (max_hops && residual_mass_eps) throw ConfigError("set either max_hops or residual_mass_eps, not both");
        if (residual_mass_eps && !(*residual_mass_eps > 0.0 && *residual_mass_eps < 1.0))
            throw DomainError("residual_mass_eps must lie in (0, 1)");
        if (r_max && !(*r_max > 0.0)) throw DomainError("r_max must be > 0");
        if (!(laplacian_gamma > 0.0 && laplacian_gamma <= 1.0)) throw DomainError("laplacian_gamma must lie in (0, 1]");
    }

    std::size_t hops() const {
        if (max_hops) return *max_hops;
        const double eps = residual_mass_eps.value_or(default_residual_mass_eps);
        if (alpha >= 1.0) return 0;
        std::size_t l = 0;
        double mass = 1.0 - alpha;
        while (!(mass < eps)) {
            mass *= 1.0 - alpha;
            ++l;
        }
        return l;
    }
};

struct SmoothedFeatures {
    Matrix matrix;
    FilterConfig config;
};

inline std::vector<double> gpr_weights(double alpha, std::size_t hops) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw DomainError("gpr_weights: alpha must lie in (0, 1]");
    std::vector<double> w(hops + 1);
    double decay = 1.0;
    for (std::size_t l = 0; l <= hops; ++l) {
        w[l] = alpha * decay;
        decay *= 1.0 - alpha;
    }
    return w;
}

// Binomial weights that make a GPR with r = 0.5 equal to L stacked
// smoothing filters (gamma S + (1 - gamma) I).
inline std::vector<double> laplacian_gpr_weights(double gamma, std::size_t hops) {
    std::vector<double> w(hops + 1);
    double binom = 1.0;
    for (std::size_t l = 0; l <= hops; ++l) {
        w[l] = binom * std::pow(gamma, static_cast<double>(l)) * std::pow(1.0 - gamma, static_cast<double>(hops - l));
        binom = binom * static_cast<double>(hops - l) / static_cast<double>(l + 1);
    }
    return w;
}

namespace filter_detail {

struct DegreePowers {
    std::vector<double> neg_r;       // d^{-r}
    std::vector<double> r_minus_one; // d^{r-1}
};

inline DegreePowers degree_powers(const AttributedGraph& g, double r) {
    DegreePowers p;
    p.neg_r.resize(g.n_nodes);
    p.r_minus_one.resize(g.n_nodes);
    for (std::size_t u = 0; u < g.n_nodes; ++u) {
        const double d = static_cast<double>(g.degree(u) + 1);
        p.neg_r[u] = std::pow(d, -r);
        p.r_minus_one[u] = std::pow(d, r - 1.0);
    }
    return p;
}

inline Matrix row_l1_normalized(const Matrix& x) {
    Matrix out = x;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const double s = out.row(i).lpNorm<1>();
        if (s > 0.0) out.row(i) /= s;
    }
    return out;
}

constexpr std::size_t block_width = 32;

}  // namespace filter_detail

// Exact evaluation by the hop recurrence Y_{l+1} = T Y_l. Columns are handled
// in independent blocks, so the result does not depend on the worker count.
inline Matrix propagate_exact(const AttributedGraph& g, const Matrix& x, double rrz, const std::vector<double>& weights) {
    if (static_cast<std::size_t>(x.rows()) != g.n_nodes)
        throw DimensionError("propagate_exact: feature rows != node count");
    const std::size_t n = g.n_nodes;
    const std::size_t d = static_cast<std::size_t>(x.cols());
    const auto pw = filter_detail::degree_powers(g, rrz);
    Matrix out(x.rows(), x.cols());
    const std::size_t bw = filter_detail::block_width;
    const std::size_t n_blocks = (d + bw - 1) / bw;

    parallel_for(n_blocks, [&](std::size_t blk) {
        const std::size_t c0 = blk * bw;
        const std::size_t w = std::min(bw, d - c0);
        std::vector<double> cur(n * w), next(n * w), acc(n * w);
        for (std::size_t v = 0; v < n; ++v)
            for (std::size_t j = 0; j < w; ++j) {
                cur[v * w + j] = x(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(c0 + j));
                acc[v * w + j] = weights[0] * cur[v * w + j];
            }
        for (std::size_t l = 1; l < weights.size(); ++l) {
            for (std::size_t v = 0; v < n; ++v) {
                const double s = pw.neg_r[v];
                for (std::size_t j = 0; j < w; ++j) cur[v * w + j] *= s;
            }
            for (std::size_t v = 0; v < n; ++v) {
                double* dst = next.data() + v * w;
                const double* self = cur.data() + v * w;
                for (std::size_t j = 0; j < w; ++j) dst[j] = self[j];
                for (NodeId u : g.neighbors(v)) {
                    const double* src = cur.data() + static_cast<std::size_t>(u) * w;
                    for (std::size_t j = 0; j < w; ++j) dst[j] += src[j];
                }
                const double s = pw.r_minus_one[v];
                const double wl = weights[l];
                double* a = acc.data() + v * w;
                for (std::size_t j = 0; j < w; ++j) {
                    dst[j] *= s;
                    a[j] += wl * dst[j];
                }
            }
            std::swap(cur, next);
        }
        for (std::size_t v = 0; v < n; ++v)
            for (std::size_t j = 0; j < w; ++j)
                out(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(c0 + j)) = acc[v * w + j];
    });
    return out;
}

inline SmoothedFeatures propagate_exact(const AttributedGraph& g, const FilterConfig& cfg) {
    cfg.validate();
    const Matrix& raw = g.features;
    Matrix normalized;
    if (cfg.row_normalize) normalized = filter_detail::row_l1_normalized(raw);
    const Matrix& x = cfg.row_normalize ? normalized : raw;
    return {propagate_exact(g, x, cfg.rrz, gpr_weights(cfg.alpha, cfg.hops())), cfg};
}

// Deterministic residual push. Per column and per hop, every node keeps its
// residual as reserve (weighted by w_l) but forwards it through T only when
// |residual| exceeds r_max times its augmented degree. With r_max -> 0 this
// is the exact recurrence; for non-negative inputs the error shrinks
// monotonically as r_max decreases.
inline Matrix propagate_push(const AttributedGraph& g, const Matrix& x, double rrz, const std::vector<double>& weights,
                             double r_max) {
    if (!(r_max > 0.0)) throw DomainError("propagate_push: r_max must be > 0");
    if (static_cast<std::size_t>(x.rows()) != g.n_nodes)
        throw DimensionError("propagate_push: feature rows != node count");
    const std::size_t n = g.n_nodes;
    const std::size_t d = static_cast<std::size_t>(x.cols());
    const auto pw = filter_detail::degree_powers(g, rrz);
    std::vector<double> threshold(n);
    for (std::size_t u = 0; u < n; ++u) threshold[u] = r_max * static_cast<double>(g.degree(u) + 1);
    Matrix out = Matrix::Zero(x.rows(), x.cols());

    parallel_for(d, [&](std::size_t c) {
        std::vector<double> cur(n, 0.0), next(n, 0.0), col(n, 0.0);
        std::vector<char> in_next(n, 0);
        std::vector<NodeId> cur_list, next_list;
        for (std::size_t v = 0; v < n; ++v) {
            const double val = x(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(c));
            if (val != 0.0) {
                cur[v] = val;
                cur_list.push_back(static_cast<NodeId>(v));
                col[v] = weights[0] * val;
            }
        }
        for (std::size_t l = 1; l < weights.size() && !cur_list.empty(); ++l) {
            for (NodeId u : cur_list) {
                const double res = cur[u];
                cur[u] = 0.0;
                if (!(std::abs(res) > threshold[u])) continue;
                const double s = res * pw.neg_r[u];
                auto touch = [&](NodeId v) {
                    if (!in_next[v]) {
                        in_next[v] = 1;
                        next_list.push_back(v);
                    }
                    next[v] += s;
                };
                touch(u);
                for (NodeId v : g.neighbors(u)) touch(v);
            }
            const double wl = weights[l];
            for (NodeId v : next_list) {
                next[v] *= pw.r_minus_one[v];
                col[v] += wl * next[v];
                in_next[v] = 0;
            }
            std::swap(cur, next);
            std::swap(cur_list, next_list);
            next_list.clear();
        }
        for (std::size_t v = 0; v < n; ++v) out(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(c)) = col[v];
    });
    return out;
}

inline SmoothedFeatures propagate_push(const AttributedGraph& g, const FilterConfig& cfg) {
    cfg.validate();
    if (!cfg.r_max) throw DomainError("propagate_push: r_max not set");
    const Matrix& raw = g.features;
    Matrix normalized;
    if (cfg.row_normalize) normalized = filter_detail::row_l1_normalized(raw);
    const Matrix& x = cfg.row_normalize ? normalized : raw;
    return {propagate_push(g, x, cfg.rrz, gpr_weights(cfg.alpha, cfg.hops()), *cfg.r_max), cfg};
}

// Push when r_max is configured, exact otherwise.
inline SmoothedFeatures propagate(const AttributedGraph& g, const FilterConfig& cfg) {
    return cfg.r_max ? propagate_push(g, cfg) : propagate_exact(g, cfg);
}

// Reference filter: L stacked (gamma D^{-1/2} (A+I) D^{-1/2} + (1 - gamma) I).
inline Matrix stacked_laplacian_smoothing(const AttributedGraph& g, const Matrix& x, double gamma, std::size_t hops) {
    const auto pw = filter_detail::degree_powers(g, 0.5);
    Matrix y = x;
    Matrix s(x.rows(), x.cols());
    for (std::size_t l = 0; l < hops; ++l) {
        for (std::size_t v = 0; v < g.n_nodes; ++v) {
            const auto vi = static_cast<Eigen::Index>(v);
            RowVector acc = y.row(vi) * pw.neg_r[v];
            for (NodeId u : g.neighbors(v)) acc += y.row(static_cast<Eigen::Index>(u)) * pw.neg_r[u];
            s.row(vi) = gamma * pw.neg_r[v] * acc + (1.0 - gamma) * y.row(vi);
        }
        std::swap(y, s);
    }
    return y;
}

inline void save_smoothed(const std::string& path, const SmoothedFeatures& sf) {
    write_matrix_binary(path, sf.matrix, MatrixFormat::gfm8);
}

inline SmoothedFeatures load_smoothed(const std::string& path, const FilterConfig& cfg = {}) {
    return {read_matrix_binary(path), cfg};
}

}  // namespace dmat

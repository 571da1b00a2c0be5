#pragma once

#include "dmat/error.hpp"
#include "dmat/graph.hpp"
#include "dmat/rng.hpp"
#include "dmat/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <vector>

namespace dmat {

struct KMeansResult {
    std::vector<int> assignments;
    Matrix centroids;
    double inertia = 0.0;
};

namespace kmeans_detail {

inline double sq_dist(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j) {
    return (a.row(i) - b.row(j)).squaredNorm();
}

// Nearest centroid, lowest index on ties.
inline void assign(const Matrix& z, const Matrix& c, std::vector<int>& out, std::vector<double>& dist) {
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        int best = 0;
        double bd = sq_dist(z, i, c, 0);
        for (Eigen::Index k = 1; k < c.rows(); ++k) {
            const double d = sq_dist(z, i, c, k);
            if (d < bd) {
                bd = d;
                best = static_cast<int>(k);
            }
        }
        out[static_cast<std::size_t>(i)] = best;
        dist[static_cast<std::size_t>(i)] = bd;
    }
}

inline Matrix plus_plus_seeds(const Matrix& z, int k, std::mt19937_64& rng) {
    const Eigen::Index n = z.rows();
    Matrix c(k, z.cols());
    std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
    c.row(0) = z.row(first(rng));
    std::vector<double> d2(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) d2[static_cast<std::size_t>(i)] = sq_dist(z, i, c, 0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int j = 1; j < k; ++j) {
        double total = 0;
        for (double v : d2) total += v;
        Eigen::Index pick = 0;
        if (total > 0) {
            double r = unit(rng) * total;
            pick = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                r -= d2[static_cast<std::size_t>(i)];
                if (r < 0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = first(rng);
        }
        c.row(j) = z.row(pick);
        for (Eigen::Index i = 0; i < n; ++i)
            d2[static_cast<std::size_t>(i)] = std::min(d2[static_cast<std::size_t>(i)], sq_dist(z, i, c, j));
    }
    return c;
}

}  // namespace kmeans_detail

// Lloyd iterations from k-means++ seeds; the restart with the lowest inertia
// wins (earliest on ties). An emptied cluster is re-seeded at the point
// farthest from its current centroid.
inline KMeansResult kmeans(const Matrix& z, int k, std::size_t n_restarts = 10, std::size_t max_iter = 300,
                           std::uint64_t seed = 0) {
    if (k < 1) throw ConfigError("kmeans: K must be >= 1");
    if (static_cast<Eigen::Index>(k) > z.rows())
        throw ConfigError("kmeans: K=" + std::to_string(k) + " exceeds point count " + std::to_string(z.rows()));
    if (n_restarts < 1) throw ConfigError("kmeans: n_restarts must be >= 1");
    const auto n = static_cast<std::size_t>(z.rows());
    KMeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < n_restarts; ++r) {
        auto rng = keyed_engine(seed, Stream::kmeans, {r});
        Matrix c = kmeans_detail::plus_plus_seeds(z, k, rng);
        std::vector<int> a(n, -1), next(n);
        std::vector<double> dist(n);
        kmeans_detail::assign(z, c, a, dist);
        for (std::size_t it = 0; it < max_iter; ++it) {
            Matrix sum = Matrix::Zero(k, z.cols());
            std::vector<std::size_t> count(static_cast<std::size_t>(k), 0);
            for (std::size_t i = 0; i < n; ++i) {
                sum.row(a[i]) += z.row(static_cast<Eigen::Index>(i));
                ++count[static_cast<std::size_t>(a[i])];
            }
            for (int j = 0; j < k; ++j) {
                if (count[static_cast<std::size_t>(j)] > 0) {
                    c.row(j) = sum.row(j) / static_cast<double>(count[static_cast<std::size_t>(j)]);
                } else {
                    std::size_t far = 0;
                    for (std::size_t i = 1; i < n; ++i)
                        if (dist[i] > dist[far]) far = i;
                    c.row(j) = z.row(static_cast<Eigen::Index>(far));
                    dist[far] = 0;
                }
            }
            kmeans_detail::assign(z, c, next, dist);
            if (next == a) break;
            a.swap(next);
        }
        double inertia = 0;
        for (double d : dist) inertia += d;
        if (inertia < best.inertia) {
            best.assignments = a;
            best.centroids = c;
            best.inertia = inertia;
        }
    }
    return best;
}

// Maximum-weight perfect matching on a square matrix; returns col[row].
inline std::vector<int> hungarian_max(const Matrix& w) {
    const auto n = static_cast<std::size_t>(w.rows());
    if (w.cols() != w.rows()) throw DimensionError("hungarian_max: matrix must be square");
    const double inf = std::numeric_limits<double>::infinity();
    // Shortest augmenting path form on costs -w, 1-based with a virtual column 0.
    std::vector<double> u(n + 1, 0), v(n + 1, 0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = -w(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> col(n, -1);
    for (std::size_t j = 1; j <= n; ++j)
        if (p[j]) col[p[j] - 1] = static_cast<int>(j - 1);
    return col;
}

struct ClusterMetrics {
    double accuracy = 0, nmi = 0, ari = 0, macro_f1 = 0;  // need labels
    double modularity = 0, conductance = 0;              // need the graph
};

// Contingency table rows = clusters, cols = classes.
struct Contingency {
    Matrix table;
    std::vector<double> cluster_sizes, class_sizes;
    double n = 0;
};

inline Contingency contingency(const std::vector<int>& assignments, const Labels& labels) {
    if (assignments.size() != labels.size()) throw DimensionError("contingency: assignment and label counts differ");
    int kc = 0, kl = 0;
    for (int a : assignments) {
        if (a < 0) throw ValidationError("negative cluster id");
        kc = std::max(kc, a + 1);
    }
    for (int y : labels) {
        if (y < 0) throw ValidationError("negative class id");
        kl = std::max(kl, y + 1);
    }
    Contingency c;
    c.table = Matrix::Zero(kc, kl);
    for (std::size_t i = 0; i < labels.size(); ++i) c.table(assignments[i], labels[i]) += 1.0;
    c.cluster_sizes.resize(static_cast<std::size_t>(kc));
    c.class_sizes.resize(static_cast<std::size_t>(kl));
    for (int i = 0; i < kc; ++i) c.cluster_sizes[static_cast<std::size_t>(i)] = c.table.row(i).sum();
    for (int j = 0; j < kl; ++j) c.class_sizes[static_cast<std::size_t>(j)] = c.table.col(j).sum();
    c.n = static_cast<double>(labels.size());
    return c;
}

struct MatchedScores {
    double accuracy = 0, macro_f1 = 0;
    std::vector<int> class_of_cluster;  // -1 when a cluster is unmatched
};

// One-to-one cluster/class mapping maximizing matched count, ties broken toward
// higher macro-F1. Padded to square with zero weights.
inline MatchedScores matched_scores(const Contingency& c) {
    const auto kc = static_cast<std::size_t>(c.table.rows()), kl = static_cast<std::size_t>(c.table.cols());
    const std::size_t k = std::max(kc, kl);
    auto f1 = [&](std::size_t i, std::size_t j) {
        const double hit = c.table(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        return hit > 0 ? 2.0 * hit / (c.cluster_sizes[i] + c.class_sizes[j]) : 0.0;
    };
    // F1 sums stay below k, so an epsilon under 1/k never outweighs one count.
    const double eps = 1.0 / (2.0 * static_cast<double>(k + 1));
    Matrix w = Matrix::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < kc; ++i)
        for (std::size_t j = 0; j < kl; ++j)
            w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                c.table(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) + eps * f1(i, j);
    auto col = hungarian_max(w);
    MatchedScores s;
    s.class_of_cluster.assign(kc, -1);
    double hits = 0, f1_sum = 0;
    for (std::size_t i = 0; i < kc; ++i) {
        const auto j = static_cast<std::size_t>(col[i]);
        if (j >= kl) continue;
        s.class_of_cluster[i] = static_cast<int>(j);
        hits += c.table(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        f1_sum += f1(i, j);
    }
    s.accuracy = c.n > 0 ? hits / c.n : 0.0;
    s.macro_f1 = kl > 0 ? f1_sum / static_cast<double>(kl) : 0.0;
    return s;
}

// Arithmetic-mean normalization; 0 when either side has zero entropy.
inline double nmi(const Contingency& c) {
    auto entropy = [&](const std::vector<double>& sizes) {
        double h = 0;
        for (double s : sizes)
            if (s > 0) h -= (s / c.n) * std::log(s / c.n);
        return h;
    };
    const double hu = entropy(c.cluster_sizes), hv = entropy(c.class_sizes);
    if (hu <= 0 || hv <= 0) return 0.0;
    double mi = 0;
    for (Eigen::Index i = 0; i < c.table.rows(); ++i)
        for (Eigen::Index j = 0; j < c.table.cols(); ++j) {
            const double nij = c.table(i, j);
            if (nij > 0)
                mi += (nij / c.n) * std::log(c.n * nij /
                                              (c.cluster_sizes[static_cast<std::size_t>(i)] *
                                               c.class_sizes[static_cast<std::size_t>(j)]));
        }
    return std::clamp(mi / (0.5 * (hu + hv)), 0.0, 1.0);
}

// Adjusted Rand index; 1 when the chance-adjusted denominator vanishes (both
// partitions trivial in the same way).
inline double ari(const Contingency& c) {
    auto pairs = [](double x) { return x * (x - 1) / 2; };
    double sum_ij = 0, sum_a = 0, sum_b = 0;
    for (Eigen::Index i = 0; i < c.table.size(); ++i) sum_ij += pairs(c.table.data()[i]);
    for (double s : c.cluster_sizes) sum_a += pairs(s);
    for (double s : c.class_sizes) sum_b += pairs(s);
    const double total = pairs(c.n);
    if (total <= 0) return 1.0;
    const double expected = sum_a * sum_b / total;
    const double max_index = 0.5 * (sum_a + sum_b);
    if (max_index - expected == 0) return 1.0;
    return (sum_ij - expected) / (max_index - expected);
}

// Q = sum_c (e_cc - a_c^2) with e_cc the fraction of edge endpoints inside c
// and a_c the fraction of endpoints attached to c. 0 on an edgeless graph.
inline double modularity(const AttributedGraph& g, const std::vector<int>& assignments) {
    if (assignments.size() != g.n_nodes) throw DimensionError("modularity: assignment count != node count");
    const double two_m = static_cast<double>(g.csr_targets.size());
    if (two_m == 0) return 0.0;
    int k = 0;
    for (int a : assignments) k = std::max(k, a + 1);
    std::vector<double> inside(static_cast<std::size_t>(k), 0), degree(static_cast<std::size_t>(k), 0);
    for (std::size_t u = 0; u < g.n_nodes; ++u) {
        const auto cu = static_cast<std::size_t>(assignments[u]);
        degree[cu] += static_cast<double>(g.degree(u));
        for (NodeId v : g.neighbors(u))
            if (assignments[v] == assignments[u]) inside[cu] += 1;
    }
    double q = 0;
    for (std::size_t c = 0; c < inside.size(); ++c) q += inside[c] / two_m - (degree[c] / two_m) * (degree[c] / two_m);
    return q;
}

// Unweighted mean over non-empty clusters of cut(S) / min(vol S, vol V\S);
// a cluster whose smaller side has zero volume contributes 0.
inline double conductance(const AttributedGraph& g, const std::vector<int>& assignments) {
    if (assignments.size() != g.n_nodes) throw DimensionError("conductance: assignment count != node count");
    int k = 0;
    for (int a : assignments) k = std::max(k, a + 1);
    std::vector<double> cut(static_cast<std::size_t>(k), 0), vol(static_cast<std::size_t>(k), 0);
    std::vector<char> used(static_cast<std::size_t>(k), 0);
    for (std::size_t u = 0; u < g.n_nodes; ++u) {
        const auto cu = static_cast<std::size_t>(assignments[u]);
        used[cu] = 1;
        vol[cu] += static_cast<double>(g.degree(u));
        for (NodeId v : g.neighbors(u))
            if (assignments[v] != assignments[u]) cut[cu] += 1;
    }
    const double total = static_cast<double>(g.csr_targets.size());
    double sum = 0;
    std::size_t count = 0;
    for (std::size_t c = 0; c < cut.size(); ++c) {
        if (!used[c]) continue;
        ++count;
        const double denom = std::min(vol[c], total - vol[c]);
        if (denom > 0) sum += cut[c] / denom;
    }
    return count ? sum / static_cast<double>(count) : 0.0;
}

inline ClusterMetrics clustering_metrics(const std::vector<int>& assignments, const std::optional<Labels>& labels,
                                         const AttributedGraph* g) {
    ClusterMetrics m;
    if (labels) {
        const auto c = contingency(assignments, *labels);
        const auto s = matched_scores(c);
        m.accuracy = s.accuracy;
        m.macro_f1 = s.macro_f1;
        m.nmi = nmi(c);
        m.ari = ari(c);
    }
    if (g) {
        m.modularity = modularity(*g, assignments);
        m.conductance = conductance(*g, assignments);
    }
    return m;
}

}  // namespace dmat

#pragma once

#include "dmat/error.hpp"
#include "dmat/io.hpp"
#include "dmat/rng.hpp"
#include "dmat/types.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <iostream>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace dmat {

using Edge = std::pair<NodeId, NodeId>;

// Undirected simple graph in CSR form plus node attributes. Each edge is
// stored in both directions; rows are sorted; no self-loops or duplicates.
struct AttributedGraph {
    std::size_t n_nodes = 0;
    std::vector<std::size_t> csr_offsets{0};
    std::vector<NodeId> csr_targets;
    Matrix features;
    std::optional<Labels> labels;
    int n_classes = 0;

    std::size_t n_edges() const { return csr_targets.size() / 2; }
    std::size_t degree(std::size_t u) const { return csr_offsets[u + 1] - csr_offsets[u]; }
    std::span<const NodeId> neighbors(std::size_t u) const {
        return {csr_targets.data() + csr_offsets[u], degree(u)};
    }
    std::size_t feature_dim() const { return static_cast<std::size_t>(features.cols()); }

    bool has_edge(NodeId u, NodeId v) const {
        auto row = neighbors(u);
        return std::binary_search(row.begin(), row.end(), v);
    }

    // Each undirected edge once, as (u, v) with u < v, in CSR order.
    std::vector<Edge> edge_list() const {
        std::vector<Edge> out;
        out.reserve(n_edges());
        for (std::size_t u = 0; u < n_nodes; ++u)
            for (NodeId v : neighbors(u))
                if (u < v) out.emplace_back(static_cast<NodeId>(u), v);
        return out;
    }
};

// Degrees of A + I.
struct DegreeView {
    std::vector<std::size_t> aug_degrees;
};

inline DegreeView augmented_degrees(const AttributedGraph& g) {
    DegreeView dv;
    dv.aug_degrees.resize(g.n_nodes);
    for (std::size_t u = 0; u < g.n_nodes; ++u) dv.aug_degrees[u] = g.degree(u) + 1;
    return dv;
}

struct IngestStats {
    std::size_t self_loops = 0;
    std::size_t duplicates = 0;
};

// Builds the symmetric CSR from an edge list in either orientation. Self-loops
// and repeated pairs are dropped and counted.
inline void build_csr(AttributedGraph& g, std::size_t n_nodes, std::vector<Edge> edges, IngestStats* stats = nullptr) {
    IngestStats local;
    std::vector<Edge> canon;
    canon.reserve(edges.size());
    for (auto [u, v] : edges) {
        if (u >= n_nodes || v >= n_nodes)
            throw ValidationError("edge (" + std::to_string(u) + ", " + std::to_string(v) +
                                  ") out of range for " + std::to_string(n_nodes) + " nodes");
        if (u == v) {
            ++local.self_loops;
            continue;
        }
        canon.emplace_back(std::min(u, v), std::max(u, v));
    }
    std::sort(canon.begin(), canon.end());
    auto last = std::unique(canon.begin(), canon.end());
    local.duplicates = static_cast<std::size_t>(canon.end() - last);
    canon.erase(last, canon.end());

    g.n_nodes = n_nodes;
    g.csr_offsets.assign(n_nodes + 1, 0);
    for (auto [u, v] : canon) {
        ++g.csr_offsets[u + 1];
        ++g.csr_offsets[v + 1];
    }
    for (std::size_t i = 0; i < n_nodes; ++i) g.csr_offsets[i + 1] += g.csr_offsets[i];
    g.csr_targets.assign(canon.size() * 2, 0);
    std::vector<std::size_t> cursor(g.csr_offsets.begin(), g.csr_offsets.end() - 1);
    for (auto [u, v] : canon) {
        g.csr_targets[cursor[u]++] = v;
        g.csr_targets[cursor[v]++] = u;
    }
    for (std::size_t u = 0; u < n_nodes; ++u)
        std::sort(g.csr_targets.begin() + static_cast<std::ptrdiff_t>(g.csr_offsets[u]),
                  g.csr_targets.begin() + static_cast<std::ptrdiff_t>(g.csr_offsets[u + 1]));
    if (stats) *stats = local;
}

inline void validate_labels(const Labels& labels, std::size_t n_nodes, int* n_classes_out = nullptr) {
    if (labels.size() != n_nodes)
        throw DimensionError("label count " + std::to_string(labels.size()) + " != node count " +
                             std::to_string(n_nodes));
    int k = 0;
    for (int y : labels) {
        if (y < 0) throw ValidationError("negative class id " + std::to_string(y));
        k = std::max(k, y + 1);
    }
    std::vector<char> seen(static_cast<std::size_t>(k), 0);
    for (int y : labels) seen[static_cast<std::size_t>(y)] = 1;
    for (int c = 0; c < k; ++c)
        if (!seen[static_cast<std::size_t>(c)])
            throw ValidationError("class " + std::to_string(c) + " has no members; class ids must be dense in [0, K)");
    if (n_classes_out) *n_classes_out = k;
}

inline AttributedGraph make_graph(Matrix features, std::vector<Edge> edges, std::optional<Labels> labels = std::nullopt,
                                  IngestStats* stats = nullptr) {
    AttributedGraph g;
    const auto n = static_cast<std::size_t>(features.rows());
    build_csr(g, n, std::move(edges), stats);
    g.features = std::move(features);
    if (labels) {
        validate_labels(*labels, n, &g.n_classes);
        g.labels = std::move(labels);
    }
    return g;
}

inline std::vector<Edge> read_edge_list(const std::string& path) {
    const std::string content = read_text_file(path);
    std::string_view rest(content);
    std::vector<Edge> edges;
    std::size_t line_no = 0;
    while (!rest.empty()) {
        auto nl = rest.find('\n');
        std::string_view line = rest.substr(0, nl);
        rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
        ++line_no;
        if (io_detail::blank_or_comment(line)) continue;
        auto toks = io_detail::tokens(line);
        if (toks.size() != 2) throw ParseError(path, line_no, "expected 'u v'");
        auto u = io_detail::parse_number<std::uint64_t>(toks[0], path, line_no);
        auto v = io_detail::parse_number<std::uint64_t>(toks[1], path, line_no);
        if (u > 0xffffffffULL || v > 0xffffffffULL) throw ValidationError(path + ": node index exceeds 32 bits");
        edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
    }
    return edges;
}

inline void write_edge_list(const std::string& path, const AttributedGraph& g) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    for (auto [u, v] : g.edge_list()) out << u << ' ' << v << '\n';
}

inline AttributedGraph load_graph(const std::string& features_path, const std::string& edges_path,
                                  const std::optional<std::string>& labels_path = std::nullopt,
                                  IngestStats* stats = nullptr) {
    Matrix x = read_matrix(features_path);
    auto edges = read_edge_list(edges_path);
    std::optional<Labels> labels;
    if (labels_path) labels = read_labels(*labels_path);
    IngestStats local;
    auto g = make_graph(std::move(x), std::move(edges), std::move(labels), &local);
    if (local.self_loops || local.duplicates)
        std::clog << "warning: " << edges_path << ": dropped self_loops=" << local.self_loops
                  << " duplicates=" << local.duplicates << '\n';
    if (stats) *stats = local;
    return g;
}

inline void write_graph(const AttributedGraph& g, const std::string& features_path, const std::string& edges_path,
                        const std::optional<std::string>& labels_path = std::nullopt) {
    write_matrix_text(features_path, g.features);
    write_edge_list(edges_path, g);
    if (labels_path && g.labels) write_labels(*labels_path, *g.labels);
}

// R-MAT quadrant probabilities (a, b, c, d).
struct RmatProbabilities {
    double a = 0.57, b = 0.19, c = 0.19, d = 0.05;
};

// Skewed recursive-partition edge sampler. Destinations outside [0, n),
// self-loops and repeats are rejected and redrawn; after 64 * target draws the
// generator stops with whatever it has, so dense corners of tiny graphs cannot
// loop forever.
inline AttributedGraph gen_synthetic(std::size_t n_nodes, std::size_t edge_factor = 20, std::size_t d_in = 1000,
                                     std::uint64_t seed = 0, RmatProbabilities probs = {}) {
    if (n_nodes == 0) throw ConfigError("gen_synthetic: n_nodes must be >= 1");
    const double sum = probs.a + probs.b + probs.c + probs.d;
    if (probs.a < 0 || probs.b < 0 || probs.c < 0 || probs.d < 0 || sum <= 0)
        throw ConfigError("gen_synthetic: quadrant probabilities must be non-negative with positive sum");
    const std::size_t capacity = n_nodes * (n_nodes - 1) / 2;
    std::size_t target = edge_factor * n_nodes;
    if (capacity == 0) target = 0;
    else if (target > capacity)
        throw ConfigError("gen_synthetic: " + std::to_string(target) + " edges exceed simple-graph capacity " +
                          std::to_string(capacity));

    int scale = 0;
    while ((std::size_t{1} << scale) < n_nodes) ++scale;

    auto rng = keyed_engine(seed, Stream::synthetic, {0});
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double pa = probs.a / sum, pab = (probs.a + probs.b) / sum, pabc = (probs.a + probs.b + probs.c) / sum;

    std::unordered_set<std::uint64_t> seen;
    seen.reserve(target * 2);
    std::vector<Edge> edges;
    edges.reserve(target);
    const std::size_t max_draws = 64 * target;
    for (std::size_t draws = 0; edges.size() < target && draws < max_draws; ++draws) {
        std::uint64_t u = 0, v = 0;
        for (int level = 0; level < scale; ++level) {
            const double p = unit(rng);
            const std::uint64_t bit = std::uint64_t{1} << (scale - 1 - level);
            if (p < pa) {
            } else if (p < pab) {
                v |= bit;
            } else if (p < pabc) {
                u |= bit;
            } else {
                u |= bit;
                v |= bit;
            }
        }
        if (u >= n_nodes || v >= n_nodes || u == v) continue;
        if (u > v) std::swap(u, v);
        if (!seen.insert((u << 32) | v).second) continue;
        edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
    }

    auto frng = keyed_engine(seed, Stream::synthetic, {1});
    Matrix x(static_cast<Eigen::Index>(n_nodes), static_cast<Eigen::Index>(d_in));
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = unit(frng);
    return make_graph(std::move(x), std::move(edges));
}

// Exhaustive symmetry check for small graphs, sampled otherwise.
inline bool is_symmetric(const AttributedGraph& g, std::size_t exhaustive_limit = 10000, std::size_t samples = 100000,
                         std::uint64_t seed = 0) {
    auto check_row = [&](std::size_t u) {
        for (NodeId v : g.neighbors(u))
            if (v == u || !g.has_edge(v, static_cast<NodeId>(u))) return false;
        return true;
    };
    if (g.n_nodes <= exhaustive_limit) {
        for (std::size_t u = 0; u < g.n_nodes; ++u)
            if (!check_row(u)) return false;
        return true;
    }
    auto rng = keyed_engine(seed, Stream::synthetic, {2});
    std::uniform_int_distribution<std::size_t> pick(0, g.n_nodes - 1);
    for (std::size_t s = 0; s < samples; ++s)
        if (!check_row(pick(rng))) return false;
    return true;
}

}  // namespace dmat

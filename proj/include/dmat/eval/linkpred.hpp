#pragma once

#include "dmat/error.hpp"
#include "dmat/graph.hpp"
#include "dmat/rng.hpp"
#include "dmat/types.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_set>
#include <vector>

namespace dmat {

struct EdgeSplit {
    AttributedGraph train;
    std::vector<Edge> val_pairs, test_pairs;
    std::vector<int> val_labels, test_labels;  // 1 = held-out edge, 0 = sampled non-edge
};

inline std::size_t split_count(double frac, std::size_t total) {
    return static_cast<std::size_t>(std::floor(frac * static_cast<double>(total) + 1e-9));
}

// Holds out floor(val_frac |E|) and floor(test_frac |E|) edges uniformly at
// random and pairs each set with as many uniformly sampled non-edges. The
// train graph keeps every node and its attributes.
inline EdgeSplit split_edges(const AttributedGraph& g, double val_frac = 0.05, double test_frac = 0.10,
                             std::uint64_t seed = 0) {
    if (val_frac < 0 || test_frac < 0 || val_frac + test_frac >= 1)
        throw ConfigError("split_edges: fractions must be >= 0 with sum < 1");
    auto edges = g.edge_list();
    const std::size_t n_val = split_count(val_frac, edges.size()), n_test = split_count(test_frac, edges.size());
    if (!edges.empty() && n_val + n_test >= edges.size()) throw ConfigError("split_edges: no train edges would remain");
    auto rng = keyed_engine(seed, Stream::split, {0});
    std::shuffle(edges.begin(), edges.end(), rng);

    EdgeSplit s;
    s.val_pairs.assign(edges.begin(), edges.begin() + static_cast<std::ptrdiff_t>(n_val));
    s.test_pairs.assign(edges.begin() + static_cast<std::ptrdiff_t>(n_val),
                        edges.begin() + static_cast<std::ptrdiff_t>(n_val + n_test));
    std::vector<Edge> kept(edges.begin() + static_cast<std::ptrdiff_t>(n_val + n_test), edges.end());
    s.train.features = g.features;
    s.train.labels = g.labels;
    s.train.n_classes = g.n_classes;
    build_csr(s.train, g.n_nodes, std::move(kept));
    s.val_labels.assign(n_val, 1);
    s.test_labels.assign(n_test, 1);

    const std::size_t n = g.n_nodes;
    const std::size_t n_neg = n_val + n_test;
    const std::size_t capacity = n < 2 ? 0 : n * (n - 1) / 2 - g.n_edges();
    if (n_neg > capacity) throw ConfigError("split_edges: not enough non-edges for negative sampling");
    std::unordered_set<std::uint64_t> taken;
    std::vector<Edge> neg;
    if (n_neg > 0) {
        auto nrng = keyed_engine(seed, Stream::split, {1});
        std::uniform_int_distribution<NodeId> pick(0, static_cast<NodeId>(n - 1));
        while (neg.size() < n_neg) {
            NodeId u = pick(nrng), v = pick(nrng);
            if (u == v) continue;
            if (u > v) std::swap(u, v);
            if (g.has_edge(u, v)) continue;
            if (!taken.insert((static_cast<std::uint64_t>(u) << 32) | v).second) continue;
            neg.emplace_back(u, v);
        }
    }
    s.val_pairs.insert(s.val_pairs.end(), neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(n_val));
    s.test_pairs.insert(s.test_pairs.end(), neg.begin() + static_cast<std::ptrdiff_t>(n_val), neg.end());
    s.val_labels.resize(2 * n_val, 0);
    s.test_labels.resize(2 * n_test, 0);
    return s;
}

// Mann-Whitney statistic with tied scores counted as half.
inline double auc_score(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw DimensionError("auc: score/label counts differ");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double n_pos = 0, n_neg = 0, rank_sum = 0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
        for (std::size_t k = i; k < j; ++k) {
            if (labels[idx[k]]) {
                rank_sum += avg_rank;
                ++n_pos;
            } else {
                ++n_neg;
            }
        }
        i = j;
    }
    if (n_pos == 0 || n_neg == 0) throw UsageError("auc: need both positive and negative pairs");
    return (rank_sum - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg);
}

// Step-interpolated area under precision-recall: sum over distinct score
// thresholds (descending) of (R_k - R_{k-1}) * P_k.
inline double average_precision(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw DimensionError("average_precision: score/label counts differ");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double total_pos = 0;
    for (int l : labels) total_pos += l != 0;
    if (total_pos == 0) throw UsageError("average_precision: no positive pairs");
    double tp = 0, seen = 0, prev_recall = 0, ap = 0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
            tp += labels[idx[j]] != 0;
            ++seen;
            ++j;
        }
        const double recall = tp / total_pos;
        ap += (recall - prev_recall) * (tp / seen);
        prev_recall = recall;
        i = j;
    }
    return ap;
}

struct LinkScores {
    double auc = 0, ap = 0;
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline std::vector<double> pair_scores(const Matrix& z, const std::vector<Edge>& pairs) {
    std::vector<double> s(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i)
        s[i] = sigmoid(z.row(pairs[i].first).dot(z.row(pairs[i].second)));
    return s;
}

// Scores sigmoid(z_u . z_v) on the test pairs (or the validation pairs).
inline LinkScores link_prediction_eval(const Matrix& z, const EdgeSplit& split, bool use_validation = false) {
    const auto& pairs = use_validation ? split.val_pairs : split.test_pairs;
    const auto& labels = use_validation ? split.val_labels : split.test_labels;
    if (pairs.empty()) throw UsageError("link_prediction_eval: empty evaluation set");
    const auto s = pair_scores(z, pairs);
    return {auc_score(s, labels), average_precision(s, labels)};
}

}  // namespace dmat

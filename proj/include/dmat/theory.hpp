#pragma once

#include "dmat/error.hpp"
#include "dmat/io.hpp"
#include "dmat/losses.hpp"
#include "dmat/rng.hpp"
#include "dmat/types.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace dmat {

// K classes on the unit sphere: class c draws normalize(mu_c + sigma * g) with
// g standard normal and mu_c the c-th coordinate axis scaled by `separation`.
// Classes have equal prior 1/K.
struct SyntheticTupletSource {
    int n_classes = 2;
    std::size_t dim = 8;
    double separation = 1.0;
    double sigma = 0.6;
    // Noise of the augmented counterpart around its anchor.
    double view_sigma = 0.1;
    std::uint64_t seed = 0;

    double tau_plus() const { return 1.0 / static_cast<double>(n_classes); }
    double tau_minus() const { return 1.0 - tau_plus(); }

    void validate() const {
        if (n_classes < 2) throw ConfigError("synthetic source: need at least 2 classes");
        if (dim < static_cast<std::size_t>(n_classes)) throw ConfigError("synthetic source: dim must be >= n_classes");
    }

    template <typename Rng>
    RowVector sample(int c, Rng& rng) const {
        std::normal_distribution<double> g(0.0, sigma);
        RowVector x(static_cast<Eigen::Index>(dim));
        for (Eigen::Index j = 0; j < x.size(); ++j) x[j] = g(rng);
        x[c] += separation;
        const double n = x.norm();
        return n > 0 ? RowVector(x / n) : x;
    }

    template <typename Rng>
    RowVector view_of(const RowVector& x, Rng& rng) const {
        std::normal_distribution<double> g(0.0, view_sigma);
        RowVector v = x;
        for (Eigen::Index j = 0; j < v.size(); ++j) v[j] += g(rng);
        return v / v.norm();
    }

    template <typename Rng>
    int other_class(int c, Rng& rng) const {
        std::uniform_int_distribution<int> pick(0, n_classes - 2);
        const int o = pick(rng);
        return o >= c ? o + 1 : o;
    }

    template <typename Rng>
    Matrix sample_many(int c, std::size_t count, Rng& rng, bool other = false) const {
        Matrix out(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
        for (std::size_t i = 0; i < count; ++i)
            out.row(static_cast<Eigen::Index>(i)) = sample(other ? other_class(c, rng) : c, rng);
        return out;
    }
};

// Single-anchor DMT loss: the anchor itself also counts as a positive.
inline double dmt_tuplet_loss(const RowVector& anchor, const RowVector& positive0, const Matrix& positives,
                              const Matrix& negatives, double t) {
    Matrix with_self(positives.rows() + 1, anchor.size());
    with_self.topRows(positives.rows()) = positives;
    with_self.row(positives.rows()) = anchor;
    return dmat_tuplet_loss(anchor, positive0, with_self, negatives, t);
}

struct Lemma1Report {
    std::size_t trials = 0;
    std::size_t violations = 0;
    double max_violation = -std::numeric_limits<double>::infinity();  // max of L_DM(A)T - L_unbiased
};

struct Lemma1Options {
    std::size_t m_min = 1, m_max = 32, q_min = 1, q_max = 32;
    // Every point coincides with the anchor, so every h equals e^{1/t}.
    bool adversarial = false;
    double tolerance = 1e-12;
};

// Per trial: anchor x, shared positive x0+, m positives and q negatives; the
// reference loss sees the same x0+ and uses m + q times the negatives' mean.
// Both the DMAT and DMT forms are compared.
inline Lemma1Report check_lemma1(const SyntheticTupletSource& src, std::size_t n_trials, double t,
                                 const Lemma1Options& opt = {}) {
    src.validate();
    if (n_trials < 1) throw ConfigError("check_lemma1: n_trials must be >= 1");
    if (opt.q_min < 1) throw ConfigError("check_lemma1: need at least one negative");
    Lemma1Report r;
    for (std::size_t trial = 0; trial < n_trials; ++trial) {
        auto rng = keyed_engine(src.seed, Stream::theory, {1, trial});
        std::uniform_int_distribution<std::size_t> pm(opt.m_min, opt.m_max), pq(opt.q_min, opt.q_max);
        std::uniform_int_distribution<int> pc(0, src.n_classes - 1);
        const std::size_t m = pm(rng), q = pq(rng);
        const int c = pc(rng);
        const RowVector x = src.sample(c, rng);
        RowVector x0;
        Matrix pos, neg;
        if (opt.adversarial) {
            x0 = x;
            pos = x.replicate(static_cast<Eigen::Index>(m), 1);
            neg = x.replicate(static_cast<Eigen::Index>(q), 1);
        } else {
            x0 = src.sample(c, rng);
            pos = src.sample_many(c, m, rng);
            neg = src.sample_many(c, q, rng, true);
        }
        const double ref = unbiased_reference_loss(x, x0, neg, t, static_cast<double>(m + q));
        for (double l : {dmat_tuplet_loss(x, x0, pos, neg, t), dmt_tuplet_loss(x, x0, pos, neg, t)}) {
            const double gap = l - ref;
            r.max_violation = std::max(r.max_violation, gap);
            if (gap > opt.tolerance) ++r.violations;
        }
        ++r.trials;
    }
    return r;
}

inline double theorem1_bound(std::size_t m, std::size_t q, double tau0, double tau_minus) {
    if (m == 0 || q == 0) throw DomainError("theorem1_bound: m and q must be >= 1");
    const double c = 2.0 * (std::exp(3.0) - std::exp(1.0)) * std::numbers::pi;
    return std::sqrt(c * tau0 * tau0 / static_cast<double>(m)) + std::sqrt(c * tau_minus * tau_minus / static_cast<double>(q));
}

struct Theorem2Constants {
    double lambda = 0, gamma = 0;
};

inline Theorem2Constants theorem2_constants(std::size_t m, std::size_t q) {
    const double s = static_cast<double>(m + q);
    if (s < 1) throw DomainError("theorem2_constants: m + q must be >= 1");
    return {s * std::numbers::e / (s + std::numbers::e), std::log(s)};
}

// Linear-interpolated quantile of sorted data (p in [0, 1]).
inline double quantile_sorted(const std::vector<double>& v, double p) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    const double pos = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct Quantiles {
    double q1 = 0, median = 0, q3 = 0;
};

inline Quantiles quantiles(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return {quantile_sorted(v, 0.25), quantile_sorted(v, 0.5), quantile_sorted(v, 0.75)};
}

struct Tau0Report {
    std::vector<double> values;  // NaN where unstable
    std::size_t n_unstable = 0;
    Quantiles q;
};

struct Tau0Options {
    std::size_t batch_size = 512;
    double temperature = 1.0;
    std::uint64_t seed = 0;
    double unstable_below = 1e-15;
    // Above this many sample x reference pairs the class-conditional means use
    // a random subset of reference rows.
    std::size_t pair_cap = 20'000'000;
};

// tau0(x) = tau+ |peer_mean - E_neg| / |peer_mean - E_pos| with peer_mean the
// mean similarity to x's same-class members of its batch and E_pos, E_neg the
// dataset-wide class-conditional means. tau+ is x's class prior.
inline Tau0Report tau0_for_batches(const Matrix& z, const Labels& labels,
                                   const std::vector<std::vector<std::size_t>>& batches, const Tau0Options& opt = {}) {
    const auto n = static_cast<std::size_t>(z.rows());
    if (labels.size() != n) throw DimensionError("tau0_estimate: label count != rows");
    const double t = opt.temperature;
    int k = 0;
    for (int y : labels) k = std::max(k, y + 1);
    std::vector<double> class_size(static_cast<std::size_t>(k), 0);
    for (int y : labels) class_size[static_cast<std::size_t>(y)] += 1;

    std::vector<std::size_t> ref(n);
    std::iota(ref.begin(), ref.end(), std::size_t{0});
    if (n * n > opt.pair_cap) {
        auto rng = keyed_engine(opt.seed, Stream::theory, {2});
        std::shuffle(ref.begin(), ref.end(), rng);
        ref.resize(std::max<std::size_t>(1, opt.pair_cap / n));
        std::sort(ref.begin(), ref.end());
    }
    auto h = [&](std::size_t i, std::size_t j) {
        return std::exp(z.row(static_cast<Eigen::Index>(i)).dot(z.row(static_cast<Eigen::Index>(j))) / t);
    };

    Tau0Report r;
    r.values.assign(n, std::numeric_limits<double>::quiet_NaN());
    std::vector<double> stable;
    for (const auto& batch : batches) {
        for (std::size_t i : batch) {
            double pos_sum = 0, neg_sum = 0, pos_n = 0, neg_n = 0;
            for (std::size_t j : ref) {
                if (j == i) continue;
                if (labels[j] == labels[i]) {
                    pos_sum += h(i, j);
                    ++pos_n;
                } else {
                    neg_sum += h(i, j);
                    ++neg_n;
                }
            }
            double peer_sum = 0, peer_n = 0;
            for (std::size_t j : batch) {
                if (j == i || labels[j] != labels[i]) continue;
                peer_sum += h(i, j);
                ++peer_n;
            }
            if (peer_n == 0 || pos_n == 0 || neg_n == 0) {
                ++r.n_unstable;
                continue;
            }
            const double peer = peer_sum / peer_n;
            const double denom = std::abs(peer - pos_sum / pos_n);
            if (denom < opt.unstable_below) {
                ++r.n_unstable;
                continue;
            }
            const double tau_plus = class_size[static_cast<std::size_t>(labels[i])] / static_cast<double>(n);
            r.values[i] = tau_plus * std::abs(peer - neg_sum / neg_n) / denom;
            stable.push_back(r.values[i]);
        }
    }
    r.q = quantiles(std::move(stable));
    return r;
}

// Batches come from one seeded shuffle partitioned into batch_size chunks, as
// in a training epoch.
inline Tau0Report tau0_estimate(const Matrix& z, const Labels& labels, const Tau0Options& opt = {}) {
    if (opt.batch_size < 1) throw ConfigError("tau0_estimate: batch_size must be >= 1");
    const auto n = static_cast<std::size_t>(z.rows());
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto rng = keyed_engine(opt.seed, Stream::theory, {3});
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t lo = 0; lo < n; lo += opt.batch_size)
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(lo),
                             order.begin() + static_cast<std::ptrdiff_t>(std::min(n, lo + opt.batch_size)));
    return tau0_for_batches(z, labels, batches, opt);
}

struct BoundReport {
    std::size_t m = 0, q = 0;
    Quantiles tau0;
    std::size_t n_unstable = 0;
    double tau_minus = 0;
    double bound = 0;
    double observed_mean_diff = 0;
    // Informational: share of individual samples whose |difference| exceeds
    // the bound.
    double per_sample_exceed_fraction = 0;
    Theorem2Constants constants;
};

struct BoundCheckOptions {
    std::size_t n_samples = 2000;
    // Monte-Carlo draws per class for the class-conditional expectations.
    std::size_t reference_draws = 4000;
    double temperature = 1.0;
};

// Compares the DMAT-i loss with the unbiased reference (exact-in-the-limit
// expectations from a large reference sample) over a synthetic population.
inline BoundReport theorem1_synthetic_check(const SyntheticTupletSource& src, std::size_t m, std::size_t q,
                                            const BoundCheckOptions& opt = {}) {
    src.validate();
    const double t = opt.temperature;
    auto ref_rng = keyed_engine(src.seed, Stream::theory, {4});
    std::vector<Matrix> reference;
    for (int c = 0; c < src.n_classes; ++c) reference.push_back(src.sample_many(c, opt.reference_draws, ref_rng));
    auto class_mean_h = [&](const RowVector& x, int c) {
        const Vector s = reference[static_cast<std::size_t>(c)] * x.transpose();
        return (s.array() / t).exp().mean();
    };

    BoundReport r;
    r.m = m;
    r.q = q;
    r.tau_minus = src.tau_minus();
    r.constants = theorem2_constants(m, q);
    std::vector<double> diffs, tau0s;
    for (std::size_t s = 0; s < opt.n_samples; ++s) {
        auto rng = keyed_engine(src.seed, Stream::theory, {5, m, q, s});
        std::uniform_int_distribution<int> pc(0, src.n_classes - 1);
        const int c = pc(rng);
        const RowVector x = src.sample(c, rng);
        const RowVector xbar = src.view_of(x, rng);
        const Matrix pos = src.sample_many(c, m, rng);
        const Matrix neg = src.sample_many(c, q, rng, true);

        double e_neg = 0;
        for (int o = 0; o < src.n_classes; ++o)
            if (o != c) e_neg += class_mean_h(x, o);
        e_neg /= static_cast<double>(src.n_classes - 1);
        const double e_pos = class_mean_h(x, c);

        const double l_dmat_i = dmat_i_tuplet_loss(x, xbar, pos, neg, t);
        const double h_bar = std::exp(x.dot(xbar) / t);
        const double l_unbiased = std::log1p(static_cast<double>(m + q) * e_neg / h_bar);
        diffs.push_back(std::abs(l_unbiased - l_dmat_i));

        const double peer = (pos * x.transpose()).array().unaryExpr([t](double v) { return std::exp(v / t); }).mean();
        const double denom = std::abs(peer - e_pos);
        if (denom < 1e-15) {
            ++r.n_unstable;
            continue;
        }
        tau0s.push_back(src.tau_plus() * std::abs(peer - e_neg) / denom);
    }
    r.tau0 = quantiles(tau0s);
    r.bound = theorem1_bound(m, q, r.tau0.median, r.tau_minus);
    double sum = 0;
    std::size_t exceed = 0;
    for (double d : diffs) {
        sum += d;
        exceed += d > r.bound;
    }
    r.observed_mean_diff = sum / static_cast<double>(diffs.size());
    r.per_sample_exceed_fraction = static_cast<double>(exceed) / static_cast<double>(diffs.size());
    return r;
}

struct Histogram {
    std::vector<double> edges;      // n_bins + 1 edges over [-1, 1]
    std::vector<double> fractions;  // sums to 1 when any pair was counted
    std::size_t n_pairs = 0;
    bool sampled = false;

    // Mass of the bins lying inside [lo, hi].
    double mass_between(double lo, double hi) const {
        double m = 0;
        for (std::size_t b = 0; b < fractions.size(); ++b)
            if (edges[b] >= lo - 1e-9 && edges[b + 1] <= hi + 1e-9) m += fractions[b];
        return m;
    }
};

struct HistogramOptions {
    std::size_t n_bins = 40;
    std::size_t pair_cap = 20'000'000;
    std::uint64_t seed = 0;
};

// Cosine similarity of every different-label pair (or pair_cap uniformly
// sampled ones), binned on [-1, 1]. Zero rows have similarity 0.
inline Histogram hardness_histogram(const Matrix& m, const Labels& labels, const HistogramOptions& opt = {}) {
    const auto n = static_cast<std::size_t>(m.rows());
    if (labels.size() != n) throw DimensionError("hardness_histogram: label count != rows");
    if (opt.n_bins < 1) throw ConfigError("hardness_histogram: n_bins must be >= 1");
    Matrix unit = m;
    for (Eigen::Index i = 0; i < unit.rows(); ++i) {
        const double nrm = unit.row(i).norm();
        if (nrm > 0) unit.row(i) /= nrm;
    }
    Histogram h;
    h.edges.resize(opt.n_bins + 1);
    for (std::size_t b = 0; b <= opt.n_bins; ++b)
        h.edges[b] = -1.0 + 2.0 * static_cast<double>(b) / static_cast<double>(opt.n_bins);
    std::vector<double> counts(opt.n_bins, 0);
    auto add = [&](double s) {
        s = std::clamp(s, -1.0, 1.0);
        auto b = static_cast<std::size_t>(std::floor((s + 1.0) / 2.0 * static_cast<double>(opt.n_bins)));
        counts[std::min(b, opt.n_bins - 1)] += 1;
        ++h.n_pairs;
    };

    std::size_t diff_pairs = 0;
    {
        std::vector<std::size_t> per_class;
        for (int y : labels) {
            if (static_cast<std::size_t>(y) >= per_class.size()) per_class.resize(static_cast<std::size_t>(y) + 1, 0);
            ++per_class[static_cast<std::size_t>(y)];
        }
        std::size_t same = 0;
        for (auto c : per_class) same += c * (c - (c > 0 ? 1 : 0)) / 2;
        diff_pairs = n * (n - (n > 0 ? 1 : 0)) / 2 - same;
    }
    if (diff_pairs <= opt.pair_cap) {
        const Eigen::Index block = 256;
        for (Eigen::Index lo = 0; lo < unit.rows(); lo += block) {
            const Eigen::Index len = std::min(block, unit.rows() - lo);
            Matrix sims = unit.middleRows(lo, len) * unit.transpose();
            for (Eigen::Index i = 0; i < len; ++i)
                for (Eigen::Index j = lo + i + 1; j < unit.rows(); ++j)
                    if (labels[static_cast<std::size_t>(lo + i)] != labels[static_cast<std::size_t>(j)]) add(sims(i, j));
        }
    } else if (diff_pairs > 0) {
        h.sampled = true;
        auto rng = keyed_engine(opt.seed, Stream::theory, {6});
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        while (h.n_pairs < opt.pair_cap) {
            const std::size_t i = pick(rng), j = pick(rng);
            if (labels[i] == labels[j]) continue;
            add(unit.row(static_cast<Eigen::Index>(i)).dot(unit.row(static_cast<Eigen::Index>(j))));
        }
    }
    h.fractions.resize(opt.n_bins);
    for (std::size_t b = 0; b < opt.n_bins; ++b)
        h.fractions[b] = h.n_pairs ? counts[b] / static_cast<double>(h.n_pairs) : 0.0;
    return h;
}

inline void write_histogram_csv(const std::string& path, const Histogram& h) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << "bin_left,bin_right,fraction\n";
    for (std::size_t b = 0; b < h.fractions.size(); ++b)
        out << io_detail::format_double(h.edges[b]) << ',' << io_detail::format_double(h.edges[b + 1]) << ','
            << io_detail::format_double(h.fractions[b]) << '\n';
}

}  // namespace dmat

#pragma once

#include "dmat/error.hpp"
#include "dmat/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace dmat {

// h(u, v) = exp(u^T v / t) on unit vectors.
inline double pair_similarity(const RowVector& u, const RowVector& v, double t) {
    if (!(t > 0.0)) throw DomainError("temperature must be > 0");
    return std::exp(u.dot(v) / t);
}

struct LossResult {
    double value = 0.0;
    Matrix grad_u;  // dL/dU
    Matrix grad_v;  // dL/dV, empty for single-view losses
};

namespace loss_detail {

enum class Role : unsigned char { excluded, positive, negative };

// Mean over anchors (rows) of log(1 + S_neg / S_pos), where for anchor a the
// sums run over exp(logits(a, j)) with j split by role(a, j). Returns the loss and
// dLoss/dlogits. S_pos > 0 is required (every anchor has a positive).
template <typename RoleFn>
double tuplet_objective(const Matrix& logits, RoleFn&& role, Matrix& dlogits) {
    const Eigen::Index n = logits.rows(), cols = logits.cols();
    dlogits = Matrix::Zero(n, cols);
    std::vector<Role> roles(static_cast<std::size_t>(cols));
    double total = 0.0;
    for (Eigen::Index a = 0; a < n; ++a) {
        double row_max = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < cols; ++j) {
            roles[static_cast<std::size_t>(j)] = role(a, j);
            if (roles[static_cast<std::size_t>(j)] != Role::excluded) row_max = std::max(row_max, logits(a, j));
        }
        double s_pos = 0.0, s_neg = 0.0;
        for (Eigen::Index j = 0; j < cols; ++j) {
            const Role r = roles[static_cast<std::size_t>(j)];
            if (r == Role::excluded) continue;
            const double e = std::exp(logits(a, j) - row_max);
            (r == Role::positive ? s_pos : s_neg) += e;
        }
        total += std::log1p(s_neg / s_pos);
        const double s_all = s_pos + s_neg;
        for (Eigen::Index j = 0; j < cols; ++j) {
            const Role r = roles[static_cast<std::size_t>(j)];
            if (r == Role::excluded) continue;
            const double e = std::exp(logits(a, j) - row_max);
            dlogits(a, j) = e / s_all - (r == Role::positive ? e / s_pos : 0.0);
        }
    }
    const double scale = 1.0 / static_cast<double>(n);
    dlogits *= scale;
    return total * scale;
}

// logits = W W^T / t, so dL/dW = (G + G^T) W / t.
inline Matrix logits_backward(const Matrix& w, const Matrix& dlogits, double t) {
    Matrix sym = dlogits + dlogits.transpose();
    Matrix out = sym * w;
    return out / t;
}

inline void check_temperature(double t) {
    if (!(t > 0.0)) throw DomainError("temperature must be > 0");
}

inline Matrix stacked(const Matrix& u, const Matrix& v) {
    Matrix w(u.rows() + v.rows(), u.cols());
    w.topRows(u.rows()) = u;
    w.bottomRows(v.rows()) = v;
    return w;
}

}  // namespace loss_detail

// Multi-class tuplet loss over one batch: every anchor counts itself and all
// same-label batch members as positives, the rest as negatives.
inline LossResult dmt_loss(const Matrix& u, const Labels& labels, double t) {
    loss_detail::check_temperature(t);
    if (u.rows() == 0) throw UsageError("dmt_loss: empty batch");
    if (static_cast<Eigen::Index>(labels.size()) != u.rows()) throw UsageError("dmt_loss: labels must match batch size");
    Matrix logits = (u * u.transpose()) / t;
    Matrix dlogits;
    using loss_detail::Role;
    const double value = loss_detail::tuplet_objective(logits, [&](Eigen::Index a, Eigen::Index j) {
        return labels[static_cast<std::size_t>(a)] == labels[static_cast<std::size_t>(j)] ? Role::positive
                                                                                         : Role::negative;
    }, dlogits);
    return {value, loss_detail::logits_backward(u, dlogits, t), {}};
}

// DMAT loss on the 2B-tuplet U ∪ V: anchor x's counterpart and its same-label
// members are positives; x itself is excluded. Averaged over both roles.
inline LossResult dmat_loss(const Matrix& u, const std::optional<Matrix>& v, const std::optional<Labels>& labels,
                            double t) {
    loss_detail::check_temperature(t);
    if (!v) throw UsageError("dmat_loss: counterpart view V is required");
    if (!labels) throw UsageError("dmat_loss: labels are required");
    if (v->rows() != u.rows() || v->cols() != u.cols()) throw DimensionError("dmat_loss: U and V shapes differ");
    if (static_cast<Eigen::Index>(labels->size()) != u.rows()) throw UsageError("dmat_loss: labels must match batch size");
    if (u.rows() == 0) throw UsageError("dmat_loss: empty batch");
    const Eigen::Index b = u.rows();
    Matrix w = loss_detail::stacked(u, *v);
    Matrix logits = (w * w.transpose()) / t;
    Matrix dlogits;
    using loss_detail::Role;
    const auto& y = *labels;
    const double value = loss_detail::tuplet_objective(logits, [&](Eigen::Index a, Eigen::Index j) {
        if (a == j) return Role::excluded;
        if (j == (a + b) % (2 * b)) return Role::positive;
        return y[static_cast<std::size_t>(a % b)] == y[static_cast<std::size_t>(j % b)] ? Role::positive
                                                                                       : Role::negative;
    }, dlogits);
    Matrix gw = loss_detail::logits_backward(w, dlogits, t);
    return {value, gw.topRows(b), gw.bottomRows(b)};
}

// Label-free objective J. Anchor x contrasts its counterpart against every
// other member of U ∪ V (2B - 1 terms); J averages both view directions.
inline LossResult dmat_i_objective(const Matrix& u, const Matrix& v, double t) {
    loss_detail::check_temperature(t);
    if (v.rows() != u.rows() || v.cols() != u.cols()) throw DimensionError("dmat_i_objective: U and V shapes differ");
    if (u.rows() == 0) throw UsageError("dmat_i_objective: empty batch");
    const Eigen::Index b = u.rows();
    Matrix w = loss_detail::stacked(u, v);
    Matrix logits = (w * w.transpose()) / t;
    Matrix dlogits;
    using loss_detail::Role;
    const double value = loss_detail::tuplet_objective(logits, [&](Eigen::Index a, Eigen::Index j) {
        if (a == j) return Role::excluded;
        return j == (a + b) % (2 * b) ? Role::positive : Role::negative;
    }, dlogits);
    Matrix gw = loss_detail::logits_backward(w, dlogits, t);
    return {value, gw.topRows(b), gw.bottomRows(b)};
}

// Reference losses on a single tuplet. Sample sets are given as matrix rows.

// -log[h(x,x+) / (h(x,x+) + n_neg * mean_{x-} h(x,x-))]. The expectation over
// p_x^- is replaced by the mean over the supplied negatives; n_neg (the
// tuplet's N - 1) defaults to their count.
inline double unbiased_reference_loss(const RowVector& anchor, const RowVector& positive, const Matrix& negatives,
                                      double t, std::optional<double> n_neg = std::nullopt) {
    loss_detail::check_temperature(t);
    if (negatives.rows() == 0) throw UsageError("unbiased_reference_loss: empty negative set");
    const double s_pos = anchor.dot(positive) / t;
    double mean_ratio = 0.0;
    for (Eigen::Index i = 0; i < negatives.rows(); ++i) mean_ratio += std::exp(anchor.dot(negatives.row(i)) / t - s_pos);
    mean_ratio /= static_cast<double>(negatives.rows());
    return std::log1p(n_neg.value_or(static_cast<double>(negatives.rows())) * mean_ratio);
}

// log(1 + sum_i exp((s_i^- - s^+) / t)).
inline double n_plus_one_tuplet_loss(const RowVector& anchor, const RowVector& positive, const Matrix& negatives,
                                     double t = 1.0) {
    loss_detail::check_temperature(t);
    const double s_pos = anchor.dot(positive);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < negatives.rows(); ++i) acc += std::exp((anchor.dot(negatives.row(i)) - s_pos) / t);
    return std::log1p(acc);
}

// DMAT loss of a single anchor with explicit counterpart, positives, negatives.
inline double dmat_tuplet_loss(const RowVector& anchor, const RowVector& counterpart, const Matrix& positives,
                               const Matrix& negatives, double t) {
    loss_detail::check_temperature(t);
    const double ref = anchor.dot(counterpart) / t;
    double s_pos = 1.0, s_neg = 0.0;
    for (Eigen::Index i = 0; i < positives.rows(); ++i) s_pos += std::exp(anchor.dot(positives.row(i)) / t - ref);
    for (Eigen::Index i = 0; i < negatives.rows(); ++i) s_neg += std::exp(anchor.dot(negatives.row(i)) / t - ref);
    return std::log1p(s_neg / s_pos);
}

// DMAT-i loss of a single anchor: counterpart is the only positive.
inline double dmat_i_tuplet_loss(const RowVector& anchor, const RowVector& counterpart, const Matrix& positives,
                                 const Matrix& negatives, double t) {
    loss_detail::check_temperature(t);
    const double ref = anchor.dot(counterpart) / t;
    double others = 0.0;
    for (Eigen::Index i = 0; i < positives.rows(); ++i) others += std::exp(anchor.dot(positives.row(i)) / t - ref);
    for (Eigen::Index i = 0; i < negatives.rows(); ++i) others += std::exp(anchor.dot(negatives.row(i)) / t - ref);
    return std::log1p(others);
}

}  // namespace dmat

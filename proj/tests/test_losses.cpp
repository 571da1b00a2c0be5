#include "dmat/losses.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

using namespace dmat;

namespace {

double h(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j, double t) {
    return std::exp(a.row(i).dot(b.row(j)) / t);
}

// Term-by-term multi-class tuplet loss.
double brute_dmt(const Matrix& u, const Labels& y, double t) {
    double total = 0;
    for (Eigen::Index a = 0; a < u.rows(); ++a) {
        double num = h(u, a, u, a, t), neg = 0;
        for (Eigen::Index j = 0; j < u.rows(); ++j) {
            if (j == a) continue;
            (y[static_cast<std::size_t>(j)] == y[static_cast<std::size_t>(a)] ? num : neg) += h(u, a, u, j, t);
        }
        total += -std::log(num / (num + neg));
    }
    return total / static_cast<double>(u.rows());
}

// Anchor from one view, counterpart at the same row of the other view.
double brute_dmat(const Matrix& u, const Matrix& v, const Labels& y, double t) {
    const Eigen::Index b = u.rows();
    double total = 0;
    for (int side = 0; side < 2; ++side) {
        const Matrix& self = side == 0 ? u : v;
        const Matrix& other = side == 0 ? v : u;
        for (Eigen::Index a = 0; a < b; ++a) {
            double num = h(self, a, other, a, t), neg = 0;
            for (Eigen::Index j = 0; j < b; ++j) {
                const bool same = y[static_cast<std::size_t>(j)] == y[static_cast<std::size_t>(a)];
                if (j != a) (same ? num : neg) += h(self, a, self, j, t);
                if (j != a) (same ? num : neg) += h(self, a, other, j, t);
            }
            total += -std::log(num / (num + neg));
        }
    }
    return total / static_cast<double>(2 * b);
}

// Contrast set of each anchor: every member of U and V except itself.
double brute_dmat_i(const Matrix& u, const Matrix& v, double t) {
    const Eigen::Index b = u.rows();
    double total = 0;
    for (Eigen::Index a = 0; a < b; ++a) {
        double cu = 0, cv = 0;
        for (Eigen::Index j = 0; j < b; ++j) {
            if (j != a) cu += h(u, a, u, j, t);
            cu += h(u, a, v, j, t);
            if (j != a) cv += h(v, a, v, j, t);
            cv += h(v, a, u, j, t);
        }
        total += std::log(cu / h(u, a, v, a, t)) + std::log(cv / h(v, a, u, a, t));
    }
    return total / static_cast<double>(2 * b);
}

Labels random_labels(std::size_t n, int k, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick(0, k - 1);
    Labels y(n);
    for (auto& v : y) v = pick(rng);
    return y;
}

// Max relative error of dL/dM against central differences on the raw matrix.
double fd_check(const std::function<double(const Matrix&)>& f, Matrix m, const Matrix& analytic) {
    const double step = 1e-6;
    Matrix numeric(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        const double keep = m.data()[i];
        m.data()[i] = keep + step;
        const double up = f(m);
        m.data()[i] = keep - step;
        const double down = f(m);
        m.data()[i] = keep;
        numeric.data()[i] = (up - down) / (2 * step);
    }
    const double scale = numeric.cwiseAbs().maxCoeff();
    double worst = 0;
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        const double a = analytic.data()[i], n = numeric.data()[i];
        worst = std::max(worst, std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-3 * scale}));
    }
    return worst;
}

}  // namespace

TEST(PairSimilarity, Examples) {
    RowVector u(2), v(2);
    u << 1, 0;
    v << 0, 1;
    EXPECT_NEAR(pair_similarity(u, u, 1.0), 2.718281828, 1e-9);
    EXPECT_EQ(pair_similarity(u, v, 0.3), 1.0);
    EXPECT_NEAR(pair_similarity(u, -u, 0.5), 0.135335, 1e-6);
    EXPECT_THROW(pair_similarity(u, v, 0.0), DomainError);
}

TEST(DmtLoss, SingleLabelIsExactlyZero) {
    Matrix u = testutil::random_unit_rows(9, 4, 1);
    auto r = dmt_loss(u, Labels(9, 3), 0.5);
    EXPECT_EQ(r.value, 0.0);
    EXPECT_EQ(r.grad_u.cwiseAbs().maxCoeff(), 0.0);
}

TEST(DmtLoss, IdenticalEmbeddingsClosedForm) {
    Matrix u = Matrix::Constant(7, 3, 1.0 / std::sqrt(3.0));
    Labels y{0, 0, 0, 1, 1, 2, 0};
    // class sizes 4, 2, 1 in a batch of 7: m = size - 1, q = 7 - size
    double expect = 0;
    for (int c : y) {
        const double sz = static_cast<double>(std::count(y.begin(), y.end(), c));
        expect += std::log(7.0 / sz);
    }
    EXPECT_NEAR(dmt_loss(u, y, 1.0).value, expect / 7.0, 1e-12);
}

TEST(DmtLoss, MatchesBruteForce) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Matrix u = testutil::random_unit_rows(8, 5, seed);
        Labels y = random_labels(8, 3, seed);
        EXPECT_NEAR(dmt_loss(u, y, 0.7).value, brute_dmt(u, y, 0.7), 1e-12);
    }
    EXPECT_THROW(dmt_loss(Matrix::Identity(2, 2), {0, 1}, -1.0), DomainError);
}

TEST(DmatLoss, SingleAnchorIsZero) {
    Matrix u = testutil::random_unit_rows(1, 4, 1), v = testutil::random_unit_rows(1, 4, 2);
    EXPECT_EQ(dmat_loss(u, v, Labels{0}, 1.0).value, 0.0);
}

TEST(DmatLoss, IdenticalEmbeddingsClosedForm) {
    Matrix u = Matrix::Constant(5, 2, 1.0 / std::sqrt(2.0));
    Labels y{0, 1, 0, 0, 1};
    // Among the other 2B - 2 = 8 members, same-label ones count 2*(size-1).
    double expect = 0;
    for (int c : y) {
        const double m = 2.0 * (static_cast<double>(std::count(y.begin(), y.end(), c)) - 1);
        const double q = 8.0 - m;
        expect += 2 * std::log((1 + m + q) / (1 + m));
    }
    EXPECT_NEAR(dmat_loss(u, u, y, 1.0).value, expect / 10.0, 1e-12);
}

TEST(DmatLoss, MatchesBruteForceAndRequiresInputs) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Matrix u = testutil::random_unit_rows(6, 4, seed), v = testutil::random_unit_rows(6, 4, seed + 100);
        Labels y = random_labels(6, 2, seed);
        EXPECT_NEAR(dmat_loss(u, v, y, 0.5).value, brute_dmat(u, v, y, 0.5), 1e-12);
    }
    Matrix u = testutil::random_unit_rows(3, 2, 0);
    EXPECT_THROW(dmat_loss(u, std::nullopt, Labels{0, 1, 0}, 1.0), UsageError);
    EXPECT_THROW(dmat_loss(u, u, std::nullopt, 1.0), UsageError);
}

TEST(DmatI, IdenticalEmbeddingsGiveLogContrastSize) {
    for (Eigen::Index b : {2, 8, 512}) {
        Matrix u = Matrix::Zero(b, 16);
        u.col(3).setOnes();
        EXPECT_NEAR(dmat_i_objective(u, u, 1.0).value, std::log(2.0 * static_cast<double>(b) - 1), 1e-9);
    }
    Matrix one = testutil::random_unit_rows(1, 3, 4), other = testutil::random_unit_rows(1, 3, 5);
    EXPECT_EQ(dmat_i_objective(one, other, 0.5).value, 0.0);
    EXPECT_THROW(dmat_i_objective(one, other, 0.0), DomainError);
    EXPECT_THROW(dmat_i_objective(one, Matrix::Zero(2, 3), 1.0), DimensionError);
}

TEST(DmatI, MatchesBruteForce) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Matrix u = testutil::random_unit_rows(8, 6, seed), v = testutil::random_unit_rows(8, 6, seed + 7);
        EXPECT_NEAR(dmat_i_objective(u, v, 0.6).value, brute_dmat_i(u, v, 0.6), 1e-12);
    }
}

TEST(Gradients, AllLossesMatchFiniteDifferences) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const double t = 0.5 + 0.1 * static_cast<double>(seed);
        Matrix u = testutil::random_unit_rows(8, 5, seed), v = testutil::random_unit_rows(8, 5, seed + 30);
        Labels y = random_labels(8, 3, seed);

        EXPECT_LT(fd_check([&](const Matrix& m) { return dmt_loss(m, y, t).value; }, u, dmt_loss(u, y, t).grad_u), 1e-5);

        auto dmat = dmat_loss(u, v, y, t);
        EXPECT_LT(fd_check([&](const Matrix& m) { return dmat_loss(m, v, y, t).value; }, u, dmat.grad_u), 1e-5);
        EXPECT_LT(fd_check([&](const Matrix& m) { return dmat_loss(u, m, y, t).value; }, v, dmat.grad_v), 1e-5);

        auto j = dmat_i_objective(u, v, t);
        EXPECT_LT(fd_check([&](const Matrix& m) { return dmat_i_objective(m, v, t).value; }, u, j.grad_u), 1e-5);
        EXPECT_LT(fd_check([&](const Matrix& m) { return dmat_i_objective(u, m, t).value; }, v, j.grad_v), 1e-5);
    }
}

TEST(Properties, NonNegativeAndPermutationInvariant) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Matrix u = testutil::random_unit_rows(7, 3, seed), v = testutil::random_unit_rows(7, 3, seed + 1);
        Labels y = random_labels(7, 3, seed);
        const double a = dmt_loss(u, y, 0.4).value, b = dmat_loss(u, v, y, 0.4).value, c = dmat_i_objective(u, v, 0.4).value;
        EXPECT_GE(a, 0.0);
        EXPECT_GE(b, 0.0);
        EXPECT_GE(c, 0.0);
        std::vector<Eigen::Index> perm(7);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), std::mt19937_64(seed));
        Matrix up(7, 3), vp(7, 3);
        Labels yp(7);
        for (std::size_t i = 0; i < 7; ++i) {
            up.row(static_cast<Eigen::Index>(i)) = u.row(perm[i]);
            vp.row(static_cast<Eigen::Index>(i)) = v.row(perm[i]);
            yp[i] = y[static_cast<std::size_t>(perm[i])];
        }
        EXPECT_NEAR(dmt_loss(up, yp, 0.4).value, a, 1e-12);
        EXPECT_NEAR(dmat_loss(up, vp, yp, 0.4).value, b, 1e-12);
        EXPECT_NEAR(dmat_i_objective(up, vp, 0.4).value, c, 1e-12);
    }
}

TEST(Properties, NegativeSimilarityMonotoneAndHardnessAware) {
    using loss_detail::Role;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> unit(-2.0, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
        Matrix logits(1, 9);
        for (Eigen::Index j = 0; j < 9; ++j) logits(0, j) = unit(rng);
        auto role = [](Eigen::Index, Eigen::Index j) { return j < 3 ? Role::positive : Role::negative; };
        Matrix g;
        const double base = loss_detail::tuplet_objective(logits, role, g);
        for (Eigen::Index j = 3; j < 9; ++j) {
            Matrix lower = logits;
            lower(0, j) -= 0.05;
            Matrix unused;
            EXPECT_LT(loss_detail::tuplet_objective(lower, role, unused), base);
            EXPECT_GT(g(0, j), 0.0);
            for (Eigen::Index k = 3; k < 9; ++k)
                if (logits(0, k) > logits(0, j)) {
                    EXPECT_GT(g(0, k), g(0, j));
                }
        }
    }
}

TEST(UnbiasedReference, Examples) {
    RowVector x(2), pos(2);
    x << 1, 0;
    pos << 1, 0;
    Matrix neg(1, 2);
    neg << -1, 0;
    EXPECT_NEAR(unbiased_reference_loss(x, pos, neg, 1.0), 0.126928, 1e-6);
    EXPECT_NEAR(unbiased_reference_loss(x, pos, neg, 1.0), -std::log(std::exp(1.0) / (std::exp(1.0) + std::exp(-1.0))), 1e-15);

    Matrix same(5, 2);
    same.rowwise() = pos;
    EXPECT_NEAR(unbiased_reference_loss(x, pos, same, 0.7), std::log(6.0), 1e-12);

    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Matrix pts = testutil::random_unit_rows(3, 4, seed);
        RowVector a = pts.row(0), p = pts.row(1);
        Matrix n1 = pts.row(2);
        EXPECT_NEAR(unbiased_reference_loss(a, p, n1, 1.0), n_plus_one_tuplet_loss(a, p, n1), 1e-12);
        EXPECT_NEAR(unbiased_reference_loss(a, p, n1, 1.0), std::log1p(std::exp(a.dot(n1.row(0)) - a.dot(p))), 1e-12);
    }
    EXPECT_THROW(unbiased_reference_loss(x, pos, Matrix(0, 2), 1.0), UsageError);
}

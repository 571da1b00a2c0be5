#include "dmat/theory.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

using namespace dmat;

namespace {

SyntheticTupletSource four_class(std::uint64_t seed) {
    SyntheticTupletSource s;
    s.n_classes = 4;
    s.dim = 16;
    s.sigma = 0.7;
    s.seed = seed;
    return s;
}

Matrix rows(std::initializer_list<std::initializer_list<double>> r) {
    Matrix m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
    Eigen::Index i = 0;
    for (auto& row : r) {
        Eigen::Index j = 0;
        for (double v : row) m(i, j++) = v;
        ++i;
    }
    return m;
}

}  // namespace

TEST(Source, PriorsSumToOne) {
    for (int k : {2, 3, 7}) {
        SyntheticTupletSource s;
        s.n_classes = k;
        EXPECT_DOUBLE_EQ(s.tau_plus(), 1.0 / k);
        EXPECT_NEAR(s.tau_plus() + s.tau_minus(), 1.0, 1e-15);
    }
    SyntheticTupletSource bad;
    bad.n_classes = 1;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Source, SamplesAreUnitRows) {
    auto s = four_class(3);
    auto rng = keyed_engine(0, Stream::theory, {99});
    const Matrix m = s.sample_many(2, 50, rng, true);
    for (Eigen::Index i = 0; i < m.rows(); ++i) EXPECT_NEAR(m.row(i).norm(), 1.0, 1e-12);
}

TEST(Lemma1, RandomSuiteHasNoViolations) {
    const auto r = check_lemma1(four_class(11), 1000, 1.0);
    EXPECT_EQ(r.trials, 1000u);
    EXPECT_EQ(r.violations, 0u);
    EXPECT_LE(r.max_violation, 1e-12);
}

TEST(Lemma1, HoldsAcrossTemperatures) {
    for (double t : {0.2, 0.5, 2.0}) {
        const auto r = check_lemma1(four_class(12), 300, t);
        EXPECT_EQ(r.violations, 0u) << "t=" << t;
    }
}

TEST(Lemma1, AdversarialNegatives) {
    Lemma1Options opt;
    opt.adversarial = true;
    const auto r = check_lemma1(four_class(13), 200, 0.5, opt);
    EXPECT_EQ(r.violations, 0u);
    EXPECT_LE(r.max_violation, 1e-12);
}

TEST(Lemma1, NoPositivesCoincides) {
    auto s = four_class(14);
    for (std::uint64_t trial = 0; trial < 50; ++trial) {
        auto rng = keyed_engine(trial, Stream::theory, {7});
        const RowVector x = s.sample(0, rng), x0 = s.sample(0, rng);
        const Matrix neg = s.sample_many(0, 1 + trial % 9, rng, true);
        const Matrix none(0, x.size());
        const double a = dmat_tuplet_loss(x, x0, none, neg, 1.0);
        const double b = unbiased_reference_loss(x, x0, neg, 1.0, static_cast<double>(neg.rows()));
        EXPECT_NEAR(a, b, 1e-12);
    }
}

TEST(Lemma1, TupletLossMatchesDirectFormula) {
    auto s = four_class(15);
    for (std::uint64_t trial = 0; trial < 30; ++trial) {
        auto rng = keyed_engine(trial, Stream::theory, {8});
        const RowVector x = s.sample(1, rng), x0 = s.sample(1, rng);
        const Matrix pos = s.sample_many(1, 5, rng), neg = s.sample_many(1, 7, rng, true);
        const double t = 0.7;
        double h0 = std::exp(x.dot(x0) / t), sp = 0, sn = 0;
        for (Eigen::Index i = 0; i < pos.rows(); ++i) sp += std::exp(x.dot(pos.row(i)) / t);
        for (Eigen::Index i = 0; i < neg.rows(); ++i) sn += std::exp(x.dot(neg.row(i)) / t);
        EXPECT_NEAR(dmat_tuplet_loss(x, x0, pos, neg, t), -std::log((h0 + sp) / (h0 + sp + sn)), 1e-12);
        EXPECT_NEAR(dmat_i_tuplet_loss(x, x0, pos, neg, t), -std::log(h0 / (h0 + sp + sn)), 1e-12);
    }
}

TEST(Theorem1Bound, Examples) {
    const double c = 2 * (std::exp(3.0) - std::exp(1.0)) * std::numbers::pi;
    EXPECT_NEAR(std::exp(3.0) - std::exp(1.0), 17.367, 1e-3);
    EXPECT_NEAR(theorem1_bound(1, 1, 1, 1), 2 * std::sqrt(c), 1e-12);
    EXPECT_NEAR(theorem1_bound(1, 1, 1, 1), 20.89, 5e-3);
    // tau0 = 0 leaves only the negative term.
    EXPECT_NEAR(theorem1_bound(5, 3, 0.0, 0.5), std::sqrt(c * 0.25 / 3), 1e-12);
    const double first4 = theorem1_bound(4 * 6, 3, 1.3, 0.0), first1 = theorem1_bound(6, 3, 1.3, 0.0);
    EXPECT_NEAR(first4 / first1, 0.5, 1e-12);
    EXPECT_THROW(theorem1_bound(0, 3, 1, 1), DomainError);
    EXPECT_THROW(theorem1_bound(3, 0, 1, 1), DomainError);
}

TEST(Theorem2Constants, Examples) {
    auto c1 = theorem2_constants(1, 0);
    EXPECT_NEAR(c1.lambda, std::numbers::e / (1 + std::numbers::e), 1e-15);
    EXPECT_NEAR(c1.lambda, 0.7311, 1e-4);
    EXPECT_EQ(c1.gamma, 0.0);
    EXPECT_NEAR(theorem2_constants(500000, 500000).lambda, std::numbers::e, 1e-5);
    EXPECT_NEAR(theorem2_constants(511, 511).gamma, 6.9295, 1e-4);
    EXPECT_THROW(theorem2_constants(0, 0), DomainError);
}

TEST(Quantiles, LinearInterpolation) {
    const auto q = quantiles({4, 1, 3, 2, 5});
    EXPECT_DOUBLE_EQ(q.q1, 2);
    EXPECT_DOUBLE_EQ(q.median, 3);
    EXPECT_DOUBLE_EQ(q.q3, 4);
    const auto q2 = quantiles({1, 2, 3, 4});
    EXPECT_DOUBLE_EQ(q2.q1, 1.75);
    EXPECT_DOUBLE_EQ(q2.median, 2.5);
}

TEST(Tau0, ManualSixPointOracle) {
    const Matrix z = rows({{1, 0}, {0.8, 0.6}, {0.6, 0.8}, {0, 1}, {-0.6, 0.8}, {-1, 0}});
    const Labels y{0, 0, 0, 1, 1, 1};
    const std::vector<std::vector<std::size_t>> batches{{0, 1, 3}, {2, 4, 5}};
    const double t = 0.5;
    Tau0Options opt;
    opt.temperature = t;
    const auto r = tau0_for_batches(z, y, batches, opt);

    auto h = [&](int i, int j) { return std::exp(z.row(i).dot(z.row(j)) / t); };
    // Node 0: batch peer 1; other positives 1, 2; negatives 3, 4, 5.
    const double e0 = 0.5 * std::abs(h(0, 1) - (h(0, 3) + h(0, 4) + h(0, 5)) / 3) / std::abs(h(0, 1) - (h(0, 1) + h(0, 2)) / 2);
    const double e1 = 0.5 * std::abs(h(1, 0) - (h(1, 3) + h(1, 4) + h(1, 5)) / 3) / std::abs(h(1, 0) - (h(1, 0) + h(1, 2)) / 2);
    const double e4 = 0.5 * std::abs(h(4, 5) - (h(4, 0) + h(4, 1) + h(4, 2)) / 3) / std::abs(h(4, 5) - (h(4, 3) + h(4, 5)) / 2);
    const double e5 = 0.5 * std::abs(h(5, 4) - (h(5, 0) + h(5, 1) + h(5, 2)) / 3) / std::abs(h(5, 4) - (h(5, 3) + h(5, 4)) / 2);
    EXPECT_NEAR(r.values[0], e0, 1e-12);
    EXPECT_NEAR(r.values[1], e1, 1e-12);
    EXPECT_NEAR(r.values[4], e4, 1e-12);
    EXPECT_NEAR(r.values[5], e5, 1e-12);
    // Nodes 2 and 3 have no same-class peer in their batch.
    EXPECT_TRUE(std::isnan(r.values[2]));
    EXPECT_TRUE(std::isnan(r.values[3]));
    EXPECT_EQ(r.n_unstable, 2u);
}

TEST(Tau0, ZeroNumerator) {
    const Matrix z = rows({{1, 0, 0}, {0, 1, 0}, {0.6, 0.8, 0}, {0, 0, 1}, {0, -1, 0}});
    const Labels y{0, 0, 0, 1, 1};
    const auto r = tau0_for_batches(z, y, {{0, 1, 3}, {2, 4}});
    EXPECT_NEAR(r.values[0], 0.0, 1e-15);
}

TEST(Tau0, FullBatchIsUnstable) {
    // With every positive in the batch the peer mean equals the class mean.
    const Matrix z = testutil::random_unit_rows(12, 4, 5);
    Labels y(12);
    for (std::size_t i = 0; i < 12; ++i) y[i] = static_cast<int>(i % 3);
    Tau0Options opt;
    opt.batch_size = 64;
    const auto r = tau0_estimate(z, y, opt);
    EXPECT_EQ(r.n_unstable, 12u);
}

TEST(Tau0, DeterministicAndConsistentWithExplicitBatches) {
    const Matrix z = testutil::random_unit_rows(200, 6, 6);
    Labels y(200);
    for (std::size_t i = 0; i < 200; ++i) y[i] = static_cast<int>(i % 4);
    Tau0Options opt;
    opt.batch_size = 32;
    opt.seed = 4;
    const auto a = tau0_estimate(z, y, opt), b = tau0_estimate(z, y, opt);
    EXPECT_EQ(a.q.median, b.q.median);
    EXPECT_LT(a.n_unstable, 200u);
    EXPECT_GT(a.q.median, 0.0);
    EXPECT_LE(a.q.q1, a.q.median);
    EXPECT_LE(a.q.median, a.q.q3);
}

TEST(Theorem1Synthetic, MeanDifferenceWithinBound) {
    SyntheticTupletSource s;
    s.n_classes = 2;
    s.dim = 8;
    s.seed = 21;
    BoundCheckOptions opt;
    opt.n_samples = 400;
    opt.reference_draws = 2000;
    const auto r = theorem1_synthetic_check(s, 8, 8, opt);
    EXPECT_EQ(r.m, 8u);
    EXPECT_DOUBLE_EQ(r.tau_minus, 0.5);
    EXPECT_GT(r.observed_mean_diff, 0.0);
    EXPECT_LE(r.observed_mean_diff, r.bound);
    EXPECT_NEAR(r.constants.gamma, std::log(16.0), 1e-15);
}

TEST(Hardness, IdenticalRowsFillTopBin) {
    Matrix m = Matrix::Ones(10, 5);
    Labels y{0, 1, 0, 1, 0, 1, 0, 1, 2, 2};
    const auto h = hardness_histogram(m, y);
    ASSERT_EQ(h.fractions.size(), 40u);
    EXPECT_NEAR(h.fractions.back(), 1.0, 1e-15);
    EXPECT_EQ(h.n_pairs, 45u - 4 * 3 / 2 * 2 - 1);
}

TEST(Hardness, OrthonormalRowsAtZero) {
    const Matrix m = Matrix::Identity(6, 6);
    const Labels y{0, 1, 2, 0, 1, 2};
    const auto h = hardness_histogram(m, y);
    EXPECT_NEAR(h.fractions[20], 1.0, 1e-15);
    EXPECT_LE(h.edges[20], 0.0);
    EXPECT_GT(h.edges[21], 0.0);
    EXPECT_NEAR(h.mass_between(0.0, 0.05), 1.0, 1e-15);
    EXPECT_NEAR(h.mass_between(0.25, 0.5), 0.0, 1e-15);
}

TEST(Hardness, SampledPathNormalizes) {
    const Matrix m = testutil::random_matrix(300, 5, 9);
    Labels y(300);
    for (std::size_t i = 0; i < 300; ++i) y[i] = static_cast<int>(i % 3);
    HistogramOptions opt;
    opt.pair_cap = 5000;
    opt.n_bins = 20;
    const auto h = hardness_histogram(m, y, opt);
    EXPECT_TRUE(h.sampled);
    EXPECT_EQ(h.n_pairs, 5000u);
    double sum = 0;
    for (double f : h.fractions) sum += f;
    EXPECT_NEAR(sum, 1.0, 1e-12);

    opt.pair_cap = 1'000'000;
    const auto full = hardness_histogram(m, y, opt);
    EXPECT_FALSE(full.sampled);
    EXPECT_EQ(full.n_pairs, 300u * 299 / 2 - 3 * (100 * 99 / 2));
    // Sampled and exhaustive histograms agree up to sampling noise.
    for (std::size_t b = 0; b < 20; ++b) EXPECT_NEAR(h.fractions[b], full.fractions[b], 0.03);
}

TEST(Hardness, CsvLayout) {
    const auto dir = testutil::temp_dir("hist");
    const auto h = hardness_histogram(Matrix::Identity(4, 4), {0, 1, 0, 1}, {.n_bins = 4});
    write_histogram_csv((dir / "h.csv").string(), h);
    std::ifstream in(dir / "h.csv");
    std::stringstream ss;
    ss << in.rdbuf();
    EXPECT_EQ(ss.str(), "bin_left,bin_right,fraction\n-1,-0.5,0\n-0.5,0,0\n0,0.5,1\n0.5,1,0\n");
}

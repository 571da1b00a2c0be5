#include "dmat/eval/cluster.hpp"
#include "dmat/filter.hpp"
#include "dmat/trainer.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace dmat;

namespace {

TrainConfig small_config(Mode mode) {
    TrainConfig cfg;
    cfg.mode = mode;
    cfg.learning_rate = 1e-3;
    cfg.batch_size = 32;
    cfg.architecture = {16, 8};
    cfg.mask_fraction = 0.2;
    cfg.n_view = 2;
    cfg.seed = 3;
    return cfg;
}

Labels cyclic_labels(std::size_t n, int k) {
    Labels y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % static_cast<std::size_t>(k));
    return y;
}

}  // namespace

TEST(TrainConfig, Validation) {
    auto cfg = small_config(Mode::dmat_i);
    cfg.n_epochs = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = small_config(Mode::dmat_i);
    cfg.batch_size = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = small_config(Mode::dmat_i);
    cfg.n_view = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    EXPECT_EQ(parse_mode("dmat-i"), Mode::dmat_i);
    EXPECT_EQ(parse_mode("dmt"), Mode::dmt);
    EXPECT_THROW(parse_mode("simclr"), ConfigError);
}

TEST(Train, SingleBatchTakesOneStep) {
    const Matrix x = testutil::random_matrix(20, 6, 1, 0, 1);
    for (Mode m : {Mode::dmt, Mode::dmat, Mode::dmat_i}) {
        auto cfg = small_config(m);
        cfg.batch_size = 64;
        const auto r = train(x, cyclic_labels(20, 3), cfg);
        EXPECT_EQ(r.n_steps, 1u) << mode_name(m);
        EXPECT_EQ(r.loss_trace.size(), 1u);
        EXPECT_EQ(r.step_seconds.size(), 1u);
    }
}

TEST(Train, ShortFinalBatchIsTrained) {
    const Matrix x = testutil::random_matrix(70, 6, 2, 0, 1);
    auto cfg = small_config(Mode::dmat_i);
    cfg.n_epochs = 3;
    const auto r = train(x, std::nullopt, cfg);
    EXPECT_EQ(r.n_steps, 9u);  // ceil(70 / 32) per epoch
}

TEST(Train, Deterministic) {
    const Matrix x = testutil::random_matrix(50, 8, 3, 0, 1);
    for (Mode m : {Mode::dmt, Mode::dmat, Mode::dmat_i}) {
        auto cfg = small_config(m);
        cfg.n_epochs = 2;
        const auto a = train(x, cyclic_labels(50, 4), cfg), b = train(x, cyclic_labels(50, 4), cfg);
        EXPECT_EQ(testutil::max_abs_diff(a.embedding, b.embedding), 0.0) << mode_name(m);
        EXPECT_EQ(a.loss_trace, b.loss_trace);
        cfg.seed = 4;
        const auto c = train(x, cyclic_labels(50, 4), cfg);
        EXPECT_GT(testutil::max_abs_diff(a.embedding, c.embedding), 0.0);
    }
}

TEST(Train, SupervisedNeedsLabels) {
    const Matrix x = testutil::random_matrix(10, 4, 4);
    EXPECT_THROW(train(x, std::nullopt, small_config(Mode::dmt)), ConfigError);
    auto cfg = small_config(Mode::dmat);
    cfg.label_mask = std::vector<bool>(10, false);
    EXPECT_THROW(train(x, cyclic_labels(10, 2), cfg), ConfigError);
    cfg.label_mask = std::vector<bool>(9, true);
    EXPECT_THROW(train(x, cyclic_labels(10, 2), cfg), DimensionError);
}

TEST(Train, LabelMaskLimitsRows) {
    const Matrix x = testutil::random_matrix(40, 4, 5, 0, 1);
    auto cfg = small_config(Mode::dmt);
    cfg.batch_size = 8;
    std::vector<bool> mask(40, false);
    for (std::size_t i = 0; i < 12; ++i) mask[i] = true;
    cfg.label_mask = mask;
    const auto r = train(x, cyclic_labels(40, 3), cfg);
    EXPECT_EQ(r.n_steps, 2u);
    EXPECT_EQ(r.embedding.rows(), 40);
}

TEST(Train, NonFiniteInputAborts) {
    Matrix x = testutil::random_matrix(10, 4, 6);
    x(3, 1) = std::nan("");
    try {
        train(x, std::nullopt, small_config(Mode::dmat_i));
        FAIL() << "expected TrainingError";
    } catch (const TrainingError& e) {
        EXPECT_NE(std::string(e.what()).find("epoch 0, batch 0"), std::string::npos);
    }
}

TEST(EmbedAll, BatchInvarianceAndShape) {
    const Matrix x = testutil::random_matrix(300, 12, 7);
    const auto p = init_encoder({12, 16, 8}, 1);
    const Matrix a = embed_all(p, x, 1), b = embed_all(p, x, 4096), c = embed_all(p, x, 7);
    EXPECT_EQ(a.rows(), 300);
    EXPECT_EQ(testutil::max_abs_diff(a, b), 0.0);
    EXPECT_EQ(testutil::max_abs_diff(a, c), 0.0);
    for (Eigen::Index i = 0; i < a.rows(); ++i) EXPECT_NEAR(a.row(i).norm(), 1.0, 1e-12);
    EXPECT_THROW(embed_all(p, x, 0), ConfigError);
}

TEST(StepMemory, IndependentOfNodes) {
    auto cfg = small_config(Mode::dmat_i);
    cfg.batch_size = 512;
    cfg.architecture = {256, 128};
    cfg.n_view = 3;
    const auto m = step_memory(cfg, 1000);
    EXPECT_EQ(m.similarity, 2u * 1024 * 1024);
    EXPECT_GT(m.activations, 0u);
    cfg.batch_size = 1024;
    EXPECT_GT(step_memory(cfg, 1000).total(), m.total());
}

TEST(Train, DmatIFirstEpochNearChanceOrBetter) {
    const auto g = testutil::planted_partition(60, 3, 0.15, 0.01, 30, 0.6, 8);
    FilterConfig fc;
    fc.alpha = 0.1;
    fc.rrz = 0.4;
    const Matrix xs = propagate_exact(g, fc).matrix;
    auto cfg = small_config(Mode::dmat_i);
    cfg.batch_size = 64;
    const auto r = train(xs, std::nullopt, cfg);
    EXPECT_LT(r.loss_trace[0], std::log(2.0 * 64 - 1) + 0.5);
    EXPECT_TRUE(std::isfinite(r.loss_trace[0]));
}

TEST(Train, DmatILearnsPlantedPartition) {
    const auto g = testutil::planted_partition(60, 3, 0.15, 0.01, 30, 0.6, 9);
    FilterConfig fc;
    fc.alpha = 0.1;
    fc.rrz = 0.4;
    const Matrix xs = propagate_exact(g, fc).matrix;
    auto cfg = small_config(Mode::dmat_i);
    cfg.batch_size = 64;
    cfg.n_epochs = 40;
    cfg.learning_rate = 5e-3;
    cfg.architecture = {32, 16};
    cfg.mask_fraction = 0.1;
    const auto r = train(xs, std::nullopt, cfg);
    ASSERT_EQ(r.loss_trace.size(), 40u);
    // Trend: late epochs average below early epochs.
    double early = 0, late = 0;
    for (int i = 0; i < 5; ++i) {
        early += r.loss_trace[static_cast<std::size_t>(i)];
        late += r.loss_trace[35 + static_cast<std::size_t>(i)];
    }
    EXPECT_LT(late, early);
    const auto km = kmeans(r.embedding, 3, 5, 300, 1);
    const auto m = clustering_metrics(km.assignments, g.labels, &g);
    EXPECT_GT(m.accuracy, 0.8);
}

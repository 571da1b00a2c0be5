#pragma once

#include "dmat/augment.hpp"
#include "dmat/encoder.hpp"
#include "dmat/error.hpp"
#include "dmat/losses.hpp"
#include "dmat/parallel.hpp"
#include "dmat/rng.hpp"
#include "dmat/types.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace dmat {

enum class Mode { dmt, dmat, dmat_i };

inline const char* mode_name(Mode m) {
    switch (m) {
        case Mode::dmt: return "dmt";
        case Mode::dmat: return "dmat";
        case Mode::dmat_i: return "dmat-i";
    }
    return "?";
}

inline Mode parse_mode(const std::string& s) {
    if (s == "dmt") return Mode::dmt;
    if (s == "dmat") return Mode::dmat;
    if (s == "dmat-i" || s == "dmat_i") return Mode::dmat_i;
    throw ConfigError("unknown mode '" + s + "' (expected dmt, dmat or dmat-i)");
}

struct TrainConfig {
    Mode mode = Mode::dmat_i;
    double learning_rate = 1e-4;
    double weight_decay = 0.0;
    std::size_t batch_size = 512;
    std::size_t n_epochs = 1;
    double temperature = 1.0;
    double mask_fraction = 0.0;
    std::size_t n_view = 1;
    // Hidden sizes followed by the embedding size; d_in comes from the data.
    std::vector<std::size_t> architecture{256, 128};
    std::uint64_t seed = 0;
    // Rows usable as labeled data in the supervised modes; all labeled rows
    // when absent.
    std::optional<std::vector<bool>> label_mask;
    // Benchmark knobs: stop after this many optimizer steps, and skip the
    // final full-dataset embedding.
    std::optional<std::size_t> max_steps;
    bool emit_embedding = true;

    void validate() const {
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (n_epochs < 1) throw ConfigError("n_epochs must be >= 1");
        if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
        if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
        if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
        if (architecture.empty()) throw ConfigError("architecture must list at least the embedding size");
        if (max_steps && *max_steps < 1) throw ConfigError("max_steps must be >= 1");
        AugmentConfig{mask_fraction, n_view, seed}.validate();
    }

    std::vector<std::size_t> layer_dims(std::size_t d_in) const {
        std::vector<std::size_t> dims{d_in};
        dims.insert(dims.end(), architecture.begin(), architecture.end());
        return dims;
    }
};

struct TrainResult {
    EncoderParams params;
    OptimState optim;
    Matrix embedding;
    std::vector<double> loss_trace;    // mean batch loss per epoch
    std::vector<double> step_seconds;  // wall time of every optimizer step
    std::size_t n_steps = 0;
};

// Row i of Z is encode(params, x.row(i)); the forward kernel makes this
// independent of batch_size.
inline Matrix embed_all(const EncoderParams& params, const Matrix& x, std::size_t batch_size = 4096) {
    if (batch_size < 1) throw ConfigError("embed_all: batch_size must be >= 1");
    const auto n = static_cast<std::size_t>(x.rows());
    Matrix z(x.rows(), static_cast<Eigen::Index>(params.output_dim()));
    const std::size_t n_batches = (n + batch_size - 1) / batch_size;
    parallel_for(n_batches, [&](std::size_t b) {
        const auto lo = static_cast<Eigen::Index>(b * batch_size);
        const auto len = static_cast<Eigen::Index>(std::min(batch_size, n - b * batch_size));
        z.middleRows(lo, len) = encode(params, x.middleRows(lo, len));
    });
    return z;
}

// Doubles held live by one training step, for a given batch size and layer
// chain. n_nodes does not enter.
struct StepMemory {
    std::size_t parameters = 0;     // params + grads + two moments
    std::size_t activations = 0;    // forward caches of the anchor and every view
    std::size_t similarity = 0;     // 2B x 2B logits and their gradient
    std::size_t total() const { return parameters + activations + similarity; }
};

inline StepMemory step_memory(const TrainConfig& cfg, std::size_t d_in) {
    const auto dims = cfg.layer_dims(d_in);
    std::size_t param = 0, act_per_row = 0;
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
        param += dims[k] * dims[k + 1] + dims[k + 1];
        act_per_row += dims[k] + dims[k + 1];  // layer input + pre-activation
    }
    act_per_row += dims.back();  // normalized output
    const std::size_t views = cfg.mode == Mode::dmt ? 0 : (cfg.mode == Mode::dmat ? 1 : cfg.n_view);
    const std::size_t b = cfg.batch_size;
    const std::size_t tuplet = cfg.mode == Mode::dmt ? b : 2 * b;
    StepMemory m;
    m.parameters = 4 * param;
    m.activations = (1 + views) * b * (act_per_row + dims.back());  // + upstream gradient
    m.similarity = 2 * tuplet * tuplet;
    return m;
}

namespace trainer_detail {

inline Matrix gather_rows(const Matrix& x, const std::vector<std::size_t>& rows, std::size_t lo, std::size_t hi) {
    Matrix out(static_cast<Eigen::Index>(hi - lo), x.cols());
    for (std::size_t i = lo; i < hi; ++i) out.row(static_cast<Eigen::Index>(i - lo)) = x.row(static_cast<Eigen::Index>(rows[i]));
    return out;
}

}  // namespace trainer_detail

using EpochCallback = std::function<void(std::size_t epoch, double mean_loss)>;

// Mini-batch training of f on the smoothed features x.
inline TrainResult train(const Matrix& x, const std::optional<Labels>& labels, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {}) {
    cfg.validate();
    const auto n = static_cast<std::size_t>(x.rows());
    if (n == 0) throw ConfigError("train: no rows");
    const bool supervised = cfg.mode != Mode::dmat_i;

    std::vector<std::size_t> rows;
    if (supervised) {
        if (!labels) throw ConfigError(std::string("train: mode ") + mode_name(cfg.mode) + " requires labels");
        if (labels->size() != n) throw DimensionError("train: label count != row count");
        if (cfg.label_mask && cfg.label_mask->size() != n) throw DimensionError("train: label_mask length != row count");
        for (std::size_t i = 0; i < n; ++i)
            if (!cfg.label_mask || (*cfg.label_mask)[i]) rows.push_back(i);
        if (rows.empty()) throw ConfigError("train: labeled training set is empty");
    } else {
        rows.resize(n);
        std::iota(rows.begin(), rows.end(), std::size_t{0});
    }

    TrainResult res;
    res.params = init_encoder(cfg.layer_dims(static_cast<std::size_t>(x.cols())), cfg.seed);
    res.optim = OptimState::for_params(res.params, cfg.learning_rate, cfg.weight_decay);
    const AugmentConfig aug{cfg.mask_fraction, cfg.n_view, cfg.seed};
    const std::size_t b = cfg.batch_size;
    const std::size_t n_rows = rows.size();
    const std::size_t n_batches = (n_rows + b - 1) / b;
    std::uint64_t nonce = 0;

    for (std::size_t epoch = 0; epoch < cfg.n_epochs; ++epoch) {
        auto rng = keyed_engine(cfg.seed, Stream::shuffle, {epoch});
        std::shuffle(rows.begin(), rows.end(), rng);
        double epoch_loss = 0.0;
        std::size_t batches_run = 0;
        for (std::size_t bi = 0; bi < n_batches; ++bi, ++nonce) {
            if (cfg.max_steps && res.n_steps >= *cfg.max_steps) break;
            const auto t0 = std::chrono::steady_clock::now();
            const std::size_t lo = bi * b, hi = std::min(n_rows, lo + b);
            const Matrix xb = trainer_detail::gather_rows(x, rows, lo, hi);
            EncoderGrads grads = res.params.zeros_like();
            ForwardCache anchor_cache;
            const Matrix u = encode(res.params, xb, &anchor_cache);
            double loss = 0.0;

            if (cfg.mode == Mode::dmt) {
                Labels yb(hi - lo);
                for (std::size_t i = lo; i < hi; ++i) yb[i - lo] = (*labels)[rows[i]];
                LossResult lr = dmt_loss(u, yb, cfg.temperature);
                loss = lr.value;
                encode_backward(res.params, anchor_cache, lr.grad_u, grads);
            } else if (cfg.mode == Mode::dmat) {
                Labels yb(hi - lo);
                for (std::size_t i = lo; i < hi; ++i) yb[i - lo] = (*labels)[rows[i]];
                ForwardCache view_cache;
                const Matrix v = encode(res.params, mask_columns(xb, aug, 0, nonce), &view_cache);
                LossResult lr = dmat_loss(u, v, yb, cfg.temperature);
                loss = lr.value;
                encode_backward(res.params, anchor_cache, lr.grad_u, grads);
                encode_backward(res.params, view_cache, lr.grad_v, grads);
            } else {
                const double inv_views = 1.0 / static_cast<double>(cfg.n_view);
                Matrix grad_u = Matrix::Zero(u.rows(), u.cols());
                for (std::size_t view = 0; view < cfg.n_view; ++view) {
                    ForwardCache view_cache;
                    const Matrix v = encode(res.params, mask_columns(xb, aug, view, nonce), &view_cache);
                    LossResult lr = dmat_i_objective(u, v, cfg.temperature);
                    loss += lr.value * inv_views;
                    grad_u += lr.grad_u * inv_views;
                    Matrix gv = lr.grad_v * inv_views;
                    encode_backward(res.params, view_cache, gv, grads);
                }
                encode_backward(res.params, anchor_cache, grad_u, grads);
            }

            if (!std::isfinite(loss)) {
                std::ostringstream msg;
                msg << "non-finite loss at epoch " << epoch << ", batch " << bi << ": loss=" << loss;
                throw TrainingError(msg.str());
            }
            adamw_step(res.params, grads, res.optim);
            epoch_loss += loss;
            ++res.n_steps;
            ++batches_run;
            res.step_seconds.push_back(
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        }
        if (batches_run == 0) break;
        res.loss_trace.push_back(epoch_loss / static_cast<double>(batches_run));
        if (on_epoch) on_epoch(epoch, res.loss_trace.back());
    }
    if (cfg.emit_embedding) res.embedding = embed_all(res.params, x);
    return res;
}

}  // namespace dmat

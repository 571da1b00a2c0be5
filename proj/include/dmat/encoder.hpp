#pragma once

#include "dmat/error.hpp"
#include "dmat/io.hpp"
#include "dmat/rng.hpp"
#include "dmat/types.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace dmat {

// Encoder f: affine layers with ReLU between them, identity on the last
// layer, then row-wise L2 normalization.
struct EncoderParams {
    std::vector<std::size_t> layer_dims;  // [d_in, h_1, ..., d_out]
    std::vector<Matrix> weights;          // layer k: dims[k] x dims[k+1]
    std::vector<RowVector> biases;        // layer k: 1 x dims[k+1]

    std::size_t n_layers() const { return weights.size(); }
    std::size_t input_dim() const { return layer_dims.front(); }
    std::size_t output_dim() const { return layer_dims.back(); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (std::size_t k = 0; k < n_layers(); ++k)
            n += static_cast<std::size_t>(weights[k].size() + biases[k].size());
        return n;
    }

    EncoderParams zeros_like() const {
        EncoderParams z;
        z.layer_dims = layer_dims;
        for (std::size_t k = 0; k < n_layers(); ++k) {
            z.weights.push_back(Matrix::Zero(weights[k].rows(), weights[k].cols()));
            z.biases.push_back(RowVector::Zero(biases[k].size()));
        }
        return z;
    }

    // Visits every tensor in a fixed order: W_0, b_0, W_1, b_1, ...
    template <typename Fn>
    void for_each_tensor(Fn&& fn) {
        for (std::size_t k = 0; k < n_layers(); ++k) {
            fn(weights[k].data(), static_cast<std::size_t>(weights[k].size()));
            fn(biases[k].data(), static_cast<std::size_t>(biases[k].size()));
        }
    }
    template <typename Fn>
    void for_each_tensor(Fn&& fn) const {
        for (std::size_t k = 0; k < n_layers(); ++k) {
            fn(weights[k].data(), static_cast<std::size_t>(weights[k].size()));
            fn(biases[k].data(), static_cast<std::size_t>(biases[k].size()));
        }
    }
};

using EncoderGrads = EncoderParams;

inline constexpr double norm_epsilon = 1e-12;

inline EncoderParams init_encoder(const std::vector<std::size_t>& layer_dims, std::uint64_t seed) {
    if (layer_dims.size() < 2) throw ConfigError("init_encoder: need at least one layer (two dimensions)");
    for (auto d : layer_dims)
        if (d == 0) throw ConfigError("init_encoder: zero layer dimension");
    EncoderParams p;
    p.layer_dims = layer_dims;
    for (std::size_t k = 0; k + 1 < layer_dims.size(); ++k) {
        const auto fan_in = layer_dims[k], fan_out = layer_dims[k + 1];
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        auto rng = keyed_engine(seed, Stream::init, {k});
        std::uniform_real_distribution<double> dist(-bound, bound);
        Matrix w(static_cast<Eigen::Index>(fan_in), static_cast<Eigen::Index>(fan_out));
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
        p.weights.push_back(std::move(w));
        p.biases.push_back(RowVector::Zero(static_cast<Eigen::Index>(fan_out)));
    }
    return p;
}

namespace encoder_detail {

// out = in * w + b, each output row accumulated over the inner dimension in
// ascending order. Rows are processed four at a time so w streams once per
// block; the per-element summation order never depends on the batch size.
inline void affine_rows(const Matrix& in, const Matrix& w, const RowVector& b, Matrix& out) {
    const Eigen::Index rows = in.rows(), k_dim = in.cols(), n = w.cols();
    out.resize(rows, n);
    const double* wp = w.data();
    Eigen::Index r = 0;
    for (; r + 4 <= rows; r += 4) {
        double* o0 = out.row(r).data();
        double* o1 = out.row(r + 1).data();
        double* o2 = out.row(r + 2).data();
        double* o3 = out.row(r + 3).data();
        for (Eigen::Index j = 0; j < n; ++j) o0[j] = o1[j] = o2[j] = o3[j] = 0.0;
        const double* i0 = in.row(r).data();
        const double* i1 = in.row(r + 1).data();
        const double* i2 = in.row(r + 2).data();
        const double* i3 = in.row(r + 3).data();
        for (Eigen::Index k = 0; k < k_dim; ++k) {
            const double a0 = i0[k], a1 = i1[k], a2 = i2[k], a3 = i3[k];
            const double* wk = wp + k * n;
            for (Eigen::Index j = 0; j < n; ++j) {
                o0[j] += a0 * wk[j];
                o1[j] += a1 * wk[j];
                o2[j] += a2 * wk[j];
                o3[j] += a3 * wk[j];
            }
        }
        for (Eigen::Index j = 0; j < n; ++j) {
            o0[j] += b[j];
            o1[j] += b[j];
            o2[j] += b[j];
            o3[j] += b[j];
        }
    }
    for (; r < rows; ++r) {
        double* o = out.row(r).data();
        for (Eigen::Index j = 0; j < n; ++j) o[j] = 0.0;
        const double* ir = in.row(r).data();
        for (Eigen::Index k = 0; k < k_dim; ++k) {
            const double a = ir[k];
            const double* wk = wp + k * n;
            for (Eigen::Index j = 0; j < n; ++j) o[j] += a * wk[j];
        }
        for (Eigen::Index j = 0; j < n; ++j) o[j] += b[j];
    }
}

}  // namespace encoder_detail

// Activations kept from the forward pass for the backward pass.
struct ForwardCache {
    std::vector<Matrix> layer_inputs;  // input to layer k (post-activation of k-1)
    std::vector<Matrix> pre_activations;
    Vector norms;                      // max(||y_i||, eps) of the final pre-normalization rows
    Matrix output;                     // normalized rows
};

inline Matrix encode(const EncoderParams& p, const Matrix& x, ForwardCache* cache = nullptr) {
    if (static_cast<std::size_t>(x.cols()) != p.input_dim())
        throw DimensionError("encode: input has " + std::to_string(x.cols()) + " columns, encoder expects " +
                             std::to_string(p.input_dim()));
    Matrix h = x;
    if (cache) {
        cache->layer_inputs.clear();
        cache->pre_activations.clear();
    }
    for (std::size_t k = 0; k < p.n_layers(); ++k) {
        Matrix z;
        encoder_detail::affine_rows(h, p.weights[k], p.biases[k], z);
        if (cache) {
            cache->layer_inputs.push_back(std::move(h));
            cache->pre_activations.push_back(z);
        }
        if (k + 1 < p.n_layers()) z = z.cwiseMax(0.0);
        h = std::move(z);
    }
    Vector norms(h.rows());
    for (Eigen::Index i = 0; i < h.rows(); ++i) {
        norms[i] = std::max(h.row(i).norm(), norm_epsilon);
        h.row(i) /= norms[i];
    }
    if (cache) {
        cache->norms = norms;
        cache->output = h;
    }
    return h;
}

// Accumulates dLoss/dparams into grads (which must be shaped like p) given
// dLoss/d(normalized output).
inline void encode_backward(const EncoderParams& p, const ForwardCache& cache, const Matrix& grad_output,
                            EncoderGrads& grads) {
    if (grad_output.rows() != cache.output.rows() || grad_output.cols() != cache.output.cols())
        throw DimensionError("encode_backward: upstream gradient shape does not match forward output");
    if (grads.n_layers() != p.n_layers()) throw DimensionError("encode_backward: gradient buffer has wrong layer count");
    const Matrix& z = cache.output;
    // Through y -> y / max(|y|, eps): the Jacobian is (I - z z^T) / |y| above eps
    // and I / eps below it.
    Matrix delta(grad_output.rows(), grad_output.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const double n = cache.norms[i];
        const double raw_norm = cache.pre_activations.back().row(i).norm();
        if (raw_norm > norm_epsilon)
            delta.row(i) = (grad_output.row(i) - z.row(i) * z.row(i).dot(grad_output.row(i))) / n;
        else
            delta.row(i) = grad_output.row(i) / n;
    }
    for (std::size_t kk = p.n_layers(); kk-- > 0;) {
        if (kk + 1 < p.n_layers()) {
            const Matrix& pre = cache.pre_activations[kk];
            delta = delta.cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
        }
        const Matrix& in = cache.layer_inputs[kk];
        grads.weights[kk].noalias() += in.transpose() * delta;
        grads.biases[kk] += delta.colwise().sum();
        if (kk > 0) {
            Matrix next = delta * p.weights[kk].transpose();
            delta = std::move(next);
        }
    }
}

struct OptimState {
    double lr = 1e-3;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t step = 0;
    EncoderParams first_moment;
    EncoderParams second_moment;

    static OptimState for_params(const EncoderParams& p, double lr, double weight_decay) {
        OptimState s;
        s.lr = lr;
        s.weight_decay = weight_decay;
        s.first_moment = p.zeros_like();
        s.second_moment = p.zeros_like();
        return s;
    }
};

// AdamW with bias correction; decay is decoupled from the moment update.
inline void adamw_step(EncoderParams& p, const EncoderGrads& g, OptimState& s) {
    std::vector<std::pair<const double*, std::size_t>> gt;
    g.for_each_tensor([&](const double* d, std::size_t n) { gt.emplace_back(d, n); });
    for (auto [d, n] : gt)
        for (std::size_t i = 0; i < n; ++i)
            if (!std::isfinite(d[i])) throw TrainingError("adamw_step: non-finite gradient");

    ++s.step;
    const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
    const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
    std::vector<double*> pt, mt, vt;
    p.for_each_tensor([&](double* d, std::size_t) { pt.push_back(d); });
    s.first_moment.for_each_tensor([&](double* d, std::size_t) { mt.push_back(d); });
    s.second_moment.for_each_tensor([&](double* d, std::size_t) { vt.push_back(d); });
    for (std::size_t t = 0; t < gt.size(); ++t) {
        const auto [gd, n] = gt[t];
        double *theta = pt[t], *m = mt[t], *v = vt[t];
        for (std::size_t i = 0; i < n; ++i) {
            theta[i] -= s.lr * s.weight_decay * theta[i];
            m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * gd[i];
            v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * gd[i] * gd[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            theta[i] -= s.lr * m_hat / (std::sqrt(v_hat) + s.eps);
        }
    }
}

// Checkpoint: "DMTC", u32 version, u64 n_dims, u64 dims[], then per layer the
// weight and bias tensors as row-major f64, then the optimizer block
// (u64 step, f64 lr, wd, beta1, beta2, eps, and both moment sets in tensor order).
inline constexpr std::uint32_t checkpoint_version = 1;

inline void save_checkpoint(const std::string& path, const EncoderParams& p, const OptimState& s) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out.write("DMTC", 4);
    io_detail::write_pod(out, checkpoint_version);
    io_detail::write_pod<std::uint64_t>(out, p.layer_dims.size());
    for (auto d : p.layer_dims) io_detail::write_pod<std::uint64_t>(out, d);
    auto dump = [&](const EncoderParams& t) {
        t.for_each_tensor([&](const double* d, std::size_t n) {
            out.write(reinterpret_cast<const char*>(d), static_cast<std::streamsize>(n * sizeof(double)));
        });
    };
    dump(p);
    io_detail::write_pod(out, s.step);
    for (double v : {s.lr, s.weight_decay, s.beta1, s.beta2, s.eps}) io_detail::write_pod(out, v);
    const bool has_moments = s.first_moment.n_layers() == p.n_layers();
    io_detail::write_pod<std::uint8_t>(out, has_moments ? 1 : 0);
    if (has_moments) {
        dump(s.first_moment);
        dump(s.second_moment);
    }
    if (!out) throw IoError("write failed: " + path);
}

inline void load_checkpoint(const std::string& path, EncoderParams& p, OptimState& s) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char magic[4] = {};
    in.read(magic, 4);
    if (std::memcmp(magic, "DMTC", 4) != 0) throw IoError(path + ": bad magic, expected DMTC");
    const auto version = io_detail::read_pod<std::uint32_t>(in, path);
    if (version != checkpoint_version) throw IoError(path + ": unsupported checkpoint version " + std::to_string(version));
    const auto n_dims = io_detail::read_pod<std::uint64_t>(in, path);
    if (n_dims < 2 || n_dims > 1024) throw IoError(path + ": implausible layer count");
    std::vector<std::size_t> dims(n_dims);
    for (auto& d : dims) d = io_detail::read_pod<std::uint64_t>(in, path);
    p = init_encoder(dims, 0);
    auto fill = [&](EncoderParams& t) {
        t.for_each_tensor([&](double* d, std::size_t n) {
            in.read(reinterpret_cast<char*>(d), static_cast<std::streamsize>(n * sizeof(double)));
            if (!in) throw IoError(path + ": truncated checkpoint");
        });
    };
    fill(p);
    s = OptimState{};
    s.step = io_detail::read_pod<std::uint64_t>(in, path);
    s.lr = io_detail::read_pod<double>(in, path);
    s.weight_decay = io_detail::read_pod<double>(in, path);
    s.beta1 = io_detail::read_pod<double>(in, path);
    s.beta2 = io_detail::read_pod<double>(in, path);
    s.eps = io_detail::read_pod<double>(in, path);
    if (io_detail::read_pod<std::uint8_t>(in, path)) {
        s.first_moment = p.zeros_like();
        s.second_moment = p.zeros_like();
        fill(s.first_moment);
        fill(s.second_moment);
    }
}

}  // namespace dmat

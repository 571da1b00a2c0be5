#pragma once

#include "dmat/error.hpp"
#include "dmat/rng.hpp"
#include "dmat/types.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace dmat {

struct LinearClassifier {
    Matrix weight;   // K x d
    RowVector bias;  // K

    std::vector<int> predict(const Matrix& z) const {
        Matrix logits = z * weight.transpose();
        logits.rowwise() += bias;
        std::vector<int> out(static_cast<std::size_t>(z.rows()));
        for (Eigen::Index i = 0; i < logits.rows(); ++i) {
            Eigen::Index arg = 0;
            logits.row(i).maxCoeff(&arg);
            out[static_cast<std::size_t>(i)] = static_cast<int>(arg);
        }
        return out;
    }
};

struct NodeSplit {
    std::vector<std::size_t> train, val, test;
};

struct ClassifierProtocol {
    double train_frac = 0.1;
    double val_frac = 0.1;
    std::size_t epochs = 500;
    double learning_rate = 0.05;
    double weight_decay = 1e-4;
};

// Per class: shuffle members, take round(frac * n_c) for train and val, the
// rest for test.
inline NodeSplit stratified_split(const Labels& labels, double train_frac, double val_frac, std::uint64_t seed) {
    if (!(train_frac > 0 && val_frac >= 0 && train_frac + val_frac < 1))
        throw ConfigError("stratified_split: fractions must satisfy 0 < train, 0 <= val, train + val < 1");
    int k = 0;
    for (int y : labels) k = std::max(k, y + 1);
    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < labels.size(); ++i) members[static_cast<std::size_t>(labels[i])].push_back(i);
    NodeSplit s;
    for (int c = 0; c < k; ++c) {
        auto& m = members[static_cast<std::size_t>(c)];
        auto rng = keyed_engine(seed, Stream::classify, {static_cast<std::uint64_t>(c)});
        std::shuffle(m.begin(), m.end(), rng);
        const auto n_c = static_cast<double>(m.size());
        const auto n_train = static_cast<std::size_t>(std::llround(train_frac * n_c));
        const auto n_val = static_cast<std::size_t>(std::llround(val_frac * n_c));
        if (n_train == 0)
            throw StratificationError("class " + std::to_string(c) + " (" + std::to_string(m.size()) +
                                      " members) has no training rows");
        for (std::size_t i = 0; i < m.size(); ++i)
            (i < n_train ? s.train : i < n_train + n_val ? s.val : s.test).push_back(m[i]);
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.val.begin(), s.val.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

struct ClassifierResult {
    LinearClassifier model;
    double test_accuracy = 0;
    double val_accuracy = 0;
    std::size_t best_epoch = 0;
};

inline double accuracy_on(const LinearClassifier& m, const Matrix& z, const Labels& y, const std::vector<std::size_t>& rows) {
    if (rows.empty()) return 0.0;
    Matrix sub(static_cast<Eigen::Index>(rows.size()), z.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) sub.row(static_cast<Eigen::Index>(i)) = z.row(static_cast<Eigen::Index>(rows[i]));
    auto pred = m.predict(sub);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) hit += pred[i] == y[rows[i]];
    return static_cast<double>(hit) / static_cast<double>(rows.size());
}

// Softmax regression by full-batch gradient descent from zero weights, with an
// L2 penalty (wd/2)|W|^2. The epoch with the best validation accuracy (first on
// ties) is kept; without a validation split the last epoch is kept.
inline ClassifierResult fit_linear_classifier(const Matrix& z, const Labels& labels, std::uint64_t seed,
                                              const ClassifierProtocol& proto = {}) {
    if (static_cast<Eigen::Index>(labels.size()) != z.rows()) throw DimensionError("fit_linear_classifier: label count != rows");
    const NodeSplit split = stratified_split(labels, proto.train_frac, proto.val_frac, seed);
    int k = 0;
    for (int y : labels) k = std::max(k, y + 1);
    const auto nt = static_cast<Eigen::Index>(split.train.size());
    Matrix x(nt, z.cols());
    Matrix onehot = Matrix::Zero(nt, k);
    for (Eigen::Index i = 0; i < nt; ++i) {
        x.row(i) = z.row(static_cast<Eigen::Index>(split.train[static_cast<std::size_t>(i)]));
        onehot(i, labels[split.train[static_cast<std::size_t>(i)]]) = 1.0;
    }
    LinearClassifier m{Matrix::Zero(k, z.cols()), RowVector::Zero(k)};
    ClassifierResult best{m, 0.0, -1.0, 0};
    for (std::size_t epoch = 1; epoch <= proto.epochs; ++epoch) {
        Matrix logits = x * m.weight.transpose();
        logits.rowwise() += m.bias;
        for (Eigen::Index i = 0; i < nt; ++i) {
            const double mx = logits.row(i).maxCoeff();
            logits.row(i) = (logits.row(i).array() - mx).exp().matrix();
            logits.row(i) /= logits.row(i).sum();
        }
        Matrix d = (logits - onehot) / static_cast<double>(nt);
        Matrix gw = d.transpose() * x + proto.weight_decay * m.weight;
        RowVector gb = d.colwise().sum();
        m.weight -= proto.learning_rate * gw;
        m.bias -= proto.learning_rate * gb;
        const double val = split.val.empty() ? 0.0 : accuracy_on(m, z, labels, split.val);
        if (split.val.empty() || val > best.val_accuracy) {
            best.model = m;
            best.val_accuracy = val;
            best.best_epoch = epoch;
        }
    }
    best.test_accuracy = accuracy_on(best.model, z, labels, split.test);
    return best;
}

}  // namespace dmat

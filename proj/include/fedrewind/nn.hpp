#pragma once

// Desk-scale differentiable models: softmax regression and a one-hidden-layer
// ReLU MLP over a flat parameter vector, trained with plain mini-batch SGD on
// mean softmax cross-entropy.

#include "fedrewind/dataset.hpp"
#include "fedrewind/random.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedrewind {

enum class Activation { relu };

struct ArchSpec {
    Index input_dim = 0;
    Index hidden_dim = 0;  // 0 selects softmax regression
    int num_classes = 2;
    Activation activation = Activation::relu;

    void validate() const {
        if (input_dim == 0) throw std::invalid_argument("ArchSpec: input_dim must be positive");
        if (num_classes < 2) throw std::invalid_argument("ArchSpec: num_classes must be >= 2");
    }

    Index classes() const noexcept { return static_cast<Index>(num_classes); }

    Index parameter_count() const noexcept {
        if (hidden_dim == 0) return input_dim * classes() + classes();
        return input_dim * hidden_dim + hidden_dim + hidden_dim * classes() + classes();
    }

    friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

struct ModelParams {
    ArchSpec arch;
    Eigen::VectorXd theta;

    friend bool operator==(const ModelParams& a, const ModelParams& b) {
        return a.arch == b.arch && a.theta.size() == b.theta.size() && a.theta == b.theta;
    }
};

struct Batch {
    FeatureMatrix features;
    std::vector<int> labels;
};

struct TrainConfig {
    double learning_rate = 0.001;
    Index batch_size = 32;
    /// Epoch k of a train() call shuffles with key shuffle_seed + k, so
    /// train(e1, s) followed by train(e2, s + e1) equals train(e1 + e2, s).
    Seed shuffle_seed = 0;

    void validate() const {
        if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
            throw std::invalid_argument("TrainConfig: learning_rate must be positive");
        if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be positive");
    }
};

/// Counters filled in by train(); used by the federation engine to prove
/// per-node compute budgets.
struct TrainStats {
    std::size_t epochs = 0;
    std::size_t steps = 0;
    std::size_t samples = 0;
};

struct LossAndGrad {
    double loss = 0.0;
    Eigen::VectorXd grad;
};

namespace detail {

using ColMatrix = Eigen::MatrixXd;
using ConstMap = Eigen::Map<const ColMatrix>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using MutMap = Eigen::Map<ColMatrix>;
using MutVecMap = Eigen::Map<Eigen::VectorXd>;

// Parameter layout (column-major blocks, in order):
//   hidden_dim == 0:  W [in x C], b [C]
//   hidden_dim  > 0:  W1 [in x H], b1 [H], W2 [H x C], b2 [C]
template <typename Ptr>
struct LayerOffsets {
    Ptr w1, b1, w2, b2;
};

inline LayerOffsets<const double*> layout(const ArchSpec& a, const double* p) {
    if (a.hidden_dim == 0) {
        const double* w = p;
        const double* b = w + a.input_dim * a.classes();
        return {nullptr, nullptr, w, b};
    }
    const double* w1 = p;
    const double* b1 = w1 + a.input_dim * a.hidden_dim;
    const double* w2 = b1 + a.hidden_dim;
    const double* b2 = w2 + a.hidden_dim * a.classes();
    return {w1, b1, w2, b2};
}

inline LayerOffsets<double*> layout(const ArchSpec& a, double* p) {
    auto c = layout(a, static_cast<const double*>(p));
    return {const_cast<double*>(c.w1), const_cast<double*>(c.b1), const_cast<double*>(c.w2),
            const_cast<double*>(c.b2)};
}

inline void check_dims(const ArchSpec& arch, Eigen::Index cols) {
    if (static_cast<Index>(cols) != arch.input_dim)
        throw std::invalid_argument("feature dimension " + std::to_string(cols) + " does not match model input_dim " +
                                    std::to_string(arch.input_dim));
}

/// Reusable buffers for the forward/backward pass.
struct Workspace {
    ColMatrix pre;     // hidden pre-activations [B x H]
    ColMatrix hidden;  // post-activation [B x H]
    ColMatrix logits;  // [B x C]
    ColMatrix dhidden;
};

template <typename Features>
void forward_into(const ArchSpec& arch, const double* theta, const Features& x, Workspace& ws) {
    const auto L = layout(arch, theta);
    const auto in = static_cast<Eigen::Index>(arch.input_dim);
    const auto h = static_cast<Eigen::Index>(arch.hidden_dim);
    const auto c = static_cast<Eigen::Index>(arch.classes());
    if (h == 0) {
        ws.logits.noalias() = x * ConstMap(L.w2, in, c);
        ws.logits.rowwise() += ConstVecMap(L.b2, c).transpose();
        return;
    }
    ws.pre.noalias() = x * ConstMap(L.w1, in, h);
    ws.pre.rowwise() += ConstVecMap(L.b1, h).transpose();
    ws.hidden = ws.pre.cwiseMax(0.0);
    ws.logits.noalias() = ws.hidden * ConstMap(L.w2, h, c);
    ws.logits.rowwise() += ConstVecMap(L.b2, c).transpose();
}

/// Mean cross-entropy over the batch; writes the gradient into `grad`
/// (sized parameter_count). Reuses `ws`.
template <typename Features>
double loss_and_grad_into(const ArchSpec& arch, const double* theta, const Features& x, std::span<const int> labels,
                          double* grad, Workspace& ws) {
    const auto batch = static_cast<Eigen::Index>(labels.size());
    const auto in = static_cast<Eigen::Index>(arch.input_dim);
    const auto h = static_cast<Eigen::Index>(arch.hidden_dim);
    const auto c = static_cast<Eigen::Index>(arch.classes());
    forward_into(arch, theta, x, ws);

    // softmax in place; logits become dL/dlogits
    double loss = 0.0;
    const double inv_b = 1.0 / static_cast<double>(batch);
    for (Eigen::Index r = 0; r < batch; ++r) {
        const double m = ws.logits.row(r).maxCoeff();
        double z = 0.0;
        for (Eigen::Index k = 0; k < c; ++k) z += std::exp(ws.logits(r, k) - m);
        const double lse = m + std::log(z);
        const int y = labels[static_cast<std::size_t>(r)];
        loss += lse - ws.logits(r, y);
        for (Eigen::Index k = 0; k < c; ++k) ws.logits(r, k) = std::exp(ws.logits(r, k) - lse) * inv_b;
        ws.logits(r, y) -= inv_b;
    }
    loss *= inv_b;

    auto G = layout(arch, grad);
    const auto L = layout(arch, theta);
    if (h == 0) {
        MutMap(G.w2, in, c).noalias() = x.transpose() * ws.logits;
        MutVecMap(G.b2, c) = ws.logits.colwise().sum().transpose();
        return loss;
    }
    MutMap(G.w2, h, c).noalias() = ws.hidden.transpose() * ws.logits;
    MutVecMap(G.b2, c) = ws.logits.colwise().sum().transpose();
    ws.dhidden.noalias() = ws.logits * ConstMap(L.w2, h, c).transpose();
    ws.dhidden = (ws.pre.array() > 0.0).select(ws.dhidden, 0.0);
    MutMap(G.w1, in, h).noalias() = x.transpose() * ws.dhidden;
    MutVecMap(G.b1, h) = ws.dhidden.colwise().sum().transpose();
    return loss;
}

// Lowest index wins ties.
inline int argmax_row(const ColMatrix& m, Eigen::Index r) {
    int best = 0;
    double best_v = m(r, 0);
    for (Eigen::Index k = 1; k < m.cols(); ++k) {
        if (m(r, k) > best_v) {
            best_v = m(r, k);
            best = static_cast<int>(k);
        }
    }
    return best;
}

inline void gather_rows(const Dataset& data, std::span<const Index> idx, FeatureMatrix& x, std::vector<int>& y) {
    x.resize(static_cast<Eigen::Index>(idx.size()), data.features.cols());
    y.resize(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        x.row(static_cast<Eigen::Index>(r)) = data.features.row(static_cast<Eigen::Index>(idx[r]));
        y[r] = data.labels[idx[r]];
    }
}

inline void check_batch(const ArchSpec& arch, const Batch& batch) {
    check_dims(arch, batch.features.cols());
    if (static_cast<Index>(batch.features.rows()) != batch.labels.size())
        throw std::invalid_argument("batch: feature rows and labels differ in count");
    for (int y : batch.labels)
        if (y < 0 || y >= arch.num_classes) throw std::invalid_argument("batch: label out of range");
}

}  // namespace detail

/// Weights ~ U[-1/sqrt(fan_in), 1/sqrt(fan_in)] per matrix, biases zero.
inline ModelParams init_model(const ArchSpec& arch, Seed seed) {
    arch.validate();
    ModelParams m{arch, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(arch.parameter_count()))};
    auto rng = make_rng(seed, {stream::init});
    auto fill = [&rng](double* w, Index count, Index fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (Index k = 0; k < count; ++k) w[k] = u(rng);
    };
    auto L = detail::layout(arch, m.theta.data());
    if (arch.hidden_dim == 0) {
        fill(L.w2, arch.input_dim * arch.classes(), arch.input_dim);
    } else {
        fill(L.w1, arch.input_dim * arch.hidden_dim, arch.input_dim);
        fill(L.w2, arch.hidden_dim * arch.classes(), arch.hidden_dim);
    }
    return m;
}

inline Eigen::MatrixXd forward(const ModelParams& model, const Batch& batch) {
    detail::check_batch(model.arch, batch);
    detail::Workspace ws;
    detail::forward_into(model.arch, model.theta.data(), batch.features, ws);
    return ws.logits;
}

inline LossAndGrad loss_and_grad(const ModelParams& model, const Batch& batch) {
    detail::check_batch(model.arch, batch);
    if (batch.labels.empty()) throw std::invalid_argument("loss_and_grad: empty batch");
    LossAndGrad out{0.0, Eigen::VectorXd(model.theta.size())};
    detail::Workspace ws;
    out.loss = detail::loss_and_grad_into(model.arch, model.theta.data(), batch.features, batch.labels,
                                          out.grad.data(), ws);
    return out;
}

/// Shuffle order used for epoch `epoch` of a call with the given config.
inline IndexList epoch_order(std::span<const Index> indices, const TrainConfig& cfg, std::size_t epoch) {
    IndexList order(indices.begin(), indices.end());
    Rng rng{derive_seed(cfg.shuffle_seed + epoch, {stream::shuffle})};
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

/// Number of SGD steps one epoch over `n` samples takes.
inline std::size_t steps_per_epoch(std::size_t n, Index batch_size) noexcept {
    return (n + batch_size - 1) / batch_size;
}

/// `epochs` passes of mini-batch SGD over data[indices]; the last batch of an
/// epoch may be short. Returns a new model; the input is untouched.
inline ModelParams train(const ModelParams& model, const Dataset& data, std::span<const Index> indices, int epochs,
                         const TrainConfig& cfg, TrainStats* stats = nullptr) {
    cfg.validate();
    if (epochs < 0) throw std::invalid_argument("train: epochs must be non-negative");
    if (epochs == 0) return model;
    if (indices.empty()) throw std::invalid_argument("train: empty data with epochs > 0");
    detail::check_dims(model.arch, data.features.cols());

    ModelParams out = model;
    Eigen::VectorXd grad(out.theta.size());
    detail::Workspace ws;
    FeatureMatrix xb;
    std::vector<int> yb;
    for (int e = 0; e < epochs; ++e) {
        const IndexList order = epoch_order(indices, cfg, static_cast<std::size_t>(e));
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t len = std::min<std::size_t>(cfg.batch_size, order.size() - start);
            detail::gather_rows(data, std::span(order).subspan(start, len), xb, yb);
            detail::loss_and_grad_into(out.arch, out.theta.data(), xb, yb, grad.data(), ws);
            out.theta.noalias() -= cfg.learning_rate * grad;
            if (stats) {
                ++stats->steps;
                stats->samples += len;
            }
        }
        if (stats) ++stats->epochs;
    }
    if (!out.theta.allFinite()) throw std::runtime_error("train: parameters became non-finite (learning rate too high?)");
    return out;
}

/// Element-wise mean. Each coordinate is accumulated over its sorted values
/// relative to the minimum, which makes the result independent of argument
/// order and exact for identical inputs.
inline ModelParams average_params(std::span<const ModelParams> models) {
    if (models.empty()) throw std::invalid_argument("average_params: empty model sequence");
    const ArchSpec& arch = models.front().arch;
    for (const auto& m : models) {
        if (!(m.arch == arch) || m.theta.size() != models.front().theta.size())
            throw std::invalid_argument("average_params: architecture mismatch");
    }
    ModelParams out{arch, Eigen::VectorXd(models.front().theta.size())};
    const double n = static_cast<double>(models.size());
    std::vector<double> column(models.size());
    for (Eigen::Index k = 0; k < out.theta.size(); ++k) {
        for (std::size_t j = 0; j < models.size(); ++j) column[j] = models[j].theta[k];
        std::sort(column.begin(), column.end());
        double acc = 0.0;
        for (std::size_t j = 1; j < column.size(); ++j) acc += column[j] - column[0];
        out.theta[k] = column[0] + acc / n;
    }
    return out;
}

/// Fraction of data[indices] whose argmax logit equals the label.
inline double accuracy(const ModelParams& model, const Dataset& data, std::span<const Index> indices) {
    if (indices.empty()) throw std::invalid_argument("accuracy: empty data");
    detail::check_dims(model.arch, data.features.cols());
    constexpr std::size_t chunk = 512;
    detail::Workspace ws;
    FeatureMatrix xb;
    std::vector<int> yb;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < indices.size(); start += chunk) {
        const std::size_t len = std::min(chunk, indices.size() - start);
        detail::gather_rows(data, indices.subspan(start, len), xb, yb);
        detail::forward_into(model.arch, model.theta.data(), xb, ws);
        for (std::size_t r = 0; r < len; ++r)
            if (detail::argmax_row(ws.logits, static_cast<Eigen::Index>(r)) == yb[r]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(indices.size());
}

inline IndexList all_indices(const Dataset& data) {
    IndexList idx(data.size());
    std::iota(idx.begin(), idx.end(), Index{0});
    return idx;
}

}  // namespace fedrewind

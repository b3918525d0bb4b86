#pragma once

// One-hidden-layer tanh encoder followed by a linear softmax classifier,
// with exact analytic gradients and momentum SGD.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "pmsda/numerics.hpp"
#include "pmsda/random.hpp"

namespace pmsda {

/// Encoder F (input_dim x hidden_dim weights, hidden bias) and classifier C
/// (hidden_dim x class_count weights, class bias).
struct ParameterBlocks {
    Matrix encoder_weights;
    Vector encoder_bias;
    Matrix classifier_weights;
    Vector classifier_bias;

    std::size_t input_dim() const noexcept { return encoder_weights.rows(); }
    std::size_t hidden_dim() const noexcept { return encoder_weights.cols(); }
    std::size_t class_count() const noexcept { return classifier_weights.cols(); }

    std::array<std::span<double>, 4> blocks() noexcept {
        return {std::span<double>(encoder_weights.values()), std::span<double>(encoder_bias),
                std::span<double>(classifier_weights.values()), std::span<double>(classifier_bias)};
    }
    std::array<std::span<const double>, 4> blocks() const noexcept {
        return {std::span<const double>(encoder_weights.values()), std::span<const double>(encoder_bias),
                std::span<const double>(classifier_weights.values()),
                std::span<const double>(classifier_bias)};
    }

    bool same_shape(const ParameterBlocks& o) const noexcept {
        return encoder_weights.rows() == o.encoder_weights.rows() &&
               encoder_weights.cols() == o.encoder_weights.cols() &&
               encoder_bias.size() == o.encoder_bias.size() &&
               classifier_weights.rows() == o.classifier_weights.rows() &&
               classifier_weights.cols() == o.classifier_weights.cols() &&
               classifier_bias.size() == o.classifier_bias.size();
    }

    bool operator==(const ParameterBlocks&) const = default;
};

struct ModelParams : ParameterBlocks {
    ModelParams() = default;
    ModelParams(std::size_t input_dim, std::size_t hidden_dim, std::size_t class_count)
        : ParameterBlocks{Matrix(input_dim, hidden_dim), Vector(hidden_dim, 0.0),
                          Matrix(hidden_dim, class_count), Vector(class_count, 0.0)} {}

    bool consistent() const noexcept {
        return encoder_bias.size() == hidden_dim() && classifier_weights.rows() == hidden_dim() &&
               classifier_bias.size() == class_count();
    }

    /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for every block.
    static ModelParams initialize(std::size_t input_dim, std::size_t hidden_dim, std::size_t class_count,
                                  std::uint64_t seed) {
        ModelParams p(input_dim, hidden_dim, class_count);
        Rng rng(derive_seed(seed, {stable_hash("model-init")}));
        const double enc = 1.0 / std::sqrt(static_cast<double>(input_dim));
        const double cls = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
        std::uniform_real_distribution<double> ue(-enc, enc), uc(-cls, cls);
        for (double& w : p.encoder_weights.values()) w = ue(rng);
        for (double& b : p.encoder_bias) b = ue(rng);
        for (double& w : p.classifier_weights.values()) w = uc(rng);
        for (double& b : p.classifier_bias) b = uc(rng);
        return p;
    }
};

/// Gradient (or momentum) buffers shaped like a ModelParams.
struct GradientSet : ParameterBlocks {
    GradientSet() = default;
    explicit GradientSet(const ParameterBlocks& shape)
        : ParameterBlocks{Matrix(shape.encoder_weights.rows(), shape.encoder_weights.cols()),
                          Vector(shape.encoder_bias.size(), 0.0),
                          Matrix(shape.classifier_weights.rows(), shape.classifier_weights.cols()),
                          Vector(shape.classifier_bias.size(), 0.0)} {}

    GradientSet& operator+=(const GradientSet& o) {
        if (!same_shape(o)) throw DomainError("GradientSet: shape mismatch in accumulation");
        auto dst = blocks();
        auto src = o.blocks();
        for (std::size_t b = 0; b < dst.size(); ++b)
            for (std::size_t i = 0; i < dst[b].size(); ++i) dst[b][i] += src[b][i];
        return *this;
    }

    void zero() {
        for (auto blk : blocks()) std::fill(blk.begin(), blk.end(), 0.0);
    }

    double max_abs() const {
        double m = 0.0;
        for (auto blk : blocks())
            for (double v : blk) m = std::max(m, std::abs(v));
        return m;
    }
};

struct SgdConfig {
    double learning_rate = 0.01;
    double classifier_lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 5e-4;

    void validate() const {
        if (!(learning_rate > 0.0)) throw ConfigError("sgd.learning_rate must be > 0");
        if (!(classifier_lr > 0.0)) throw ConfigError("sgd.classifier_lr must be > 0");
        if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("sgd.momentum must lie in [0, 1)");
        if (!(weight_decay >= 0.0)) throw ConfigError("sgd.weight_decay must be >= 0");
    }
};

struct LabeledSample {
    ConstVectorView x;
    std::size_t label = 0;
};

namespace detail {

inline void require_input_dim(const ModelParams& p, ConstVectorView x) {
    if (x.size() != p.input_dim()) {
        throw DomainError("model: input has dimension " + std::to_string(x.size()) + ", expected " +
                          std::to_string(p.input_dim()));
    }
}

inline Vector logits_of(const ModelParams& p, ConstVectorView h) {
    Vector z(p.classifier_bias);
    for (std::size_t k = 0; k < p.hidden_dim(); ++k) {
        const double hk = h[k];
        auto w = p.classifier_weights.row(k);
        for (std::size_t c = 0; c < z.size(); ++c) z[c] += hk * w[c];
    }
    return z;
}

/// Adds d(loss)/d(embedding) routed through tanh into the encoder blocks.
inline void accumulate_encoder_grad(const ModelParams& p, ConstVectorView x, ConstVectorView h,
                                    ConstVectorView dh, double scale, GradientSet& g) {
    for (std::size_t k = 0; k < p.hidden_dim(); ++k) {
        const double da = scale * dh[k] * (1.0 - h[k] * h[k]);
        if (da == 0.0) continue;
        g.encoder_bias[k] += da;
        for (std::size_t i = 0; i < p.input_dim(); ++i) g.encoder_weights(i, k) += da * x[i];
    }
}

}  // namespace detail

inline Vector embed(const ModelParams& p, ConstVectorView x) {
    detail::require_input_dim(p, x);
    Vector h(p.encoder_bias);
    for (std::size_t i = 0; i < p.input_dim(); ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        auto w = p.encoder_weights.row(i);
        for (std::size_t k = 0; k < h.size(); ++k) h[k] += xi * w[k];
    }
    for (double& v : h) v = std::tanh(v);
    return h;
}

struct ForwardResult {
    Vector embedding;
    Vector probs;
};

inline ForwardResult forward(const ModelParams& p, ConstVectorView x) {
    Vector h = embed(p, x);
    Vector probs = softmax(detail::logits_of(p, h));
    return {std::move(h), std::move(probs)};
}

inline std::size_t predict(const ModelParams& p, ConstVectorView x) { return argmax(forward(p, x).probs); }

inline std::vector<Vector> embed_all(const ModelParams& p, std::span<const Vector> xs) {
    std::vector<Vector> out;
    out.reserve(xs.size());
    for (const auto& x : xs) out.push_back(embed(p, x));
    return out;
}

struct LossAndGrad {
    double loss = 0.0;
    GradientSet grads;
};

/// Weighted mean cross-entropy, (1/n) * sum_i w_i * CE_i, and its exact gradient.
inline LossAndGrad backward(const ModelParams& p, std::span<const LabeledSample> batch,
                            std::span<const double> loss_weights) {
    if (batch.empty()) throw DomainError("backward: empty batch");
    if (loss_weights.size() != batch.size()) throw DomainError("backward: weight count does not match batch");
    LossAndGrad out{0.0, GradientSet(p)};
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    Vector dh(p.hidden_dim());
    for (std::size_t s = 0; s < batch.size(); ++s) {
        const double w = loss_weights[s];
        if (!std::isfinite(w)) throw DomainError("backward: non-finite loss weight");
        if (w == 0.0) continue;
        const auto& [x, y] = batch[s];
        auto [h, probs] = forward(p, x);
        out.loss += w * inv_n * cross_entropy(probs, y);
        // The clamp is active only when probs[y] < 1e-12; there the loss is flat.
        const bool clamped = probs[y] < kLogClamp;
        const double scale = w * inv_n;
        std::fill(dh.begin(), dh.end(), 0.0);
        for (std::size_t c = 0; c < probs.size(); ++c) {
            const double dz = clamped ? 0.0 : scale * (probs[c] - (c == y ? 1.0 : 0.0));
            if (dz == 0.0) continue;
            out.grads.classifier_bias[c] += dz;
            for (std::size_t k = 0; k < h.size(); ++k) {
                out.grads.classifier_weights(k, c) += dz * h[k];
                dh[k] += dz * p.classifier_weights(k, c);
            }
        }
        detail::accumulate_encoder_grad(p, x, h, dh, 1.0, out.grads);
    }
    return out;
}

inline LossAndGrad backward(const ModelParams& p, std::span<const LabeledSample> batch) {
    std::vector<double> ones(batch.size(), 1.0);
    return backward(p, batch, ones);
}

/// A scalar functional of a batch of embeddings: returns its value and writes
/// d(value)/d(embedding_i) into grads (pre-sized to match the embeddings).
using EmbeddingFunctional =
    std::function<double(std::span<const Vector> embeddings, std::vector<Vector>& grads)>;

/// Chain-rules an embedding-level functional through the encoder. Classifier blocks stay zero.
inline LossAndGrad backward_scalar(const ModelParams& p, std::span<const Vector> inputs,
                                   const EmbeddingFunctional& functional) {
    std::vector<Vector> emb = embed_all(p, inputs);
    std::vector<Vector> grads(emb.size(), Vector(p.hidden_dim(), 0.0));
    LossAndGrad out{functional(emb, grads), GradientSet(p)};
    if (grads.size() != emb.size()) throw DomainError("backward_scalar: functional resized gradients");
    for (std::size_t s = 0; s < inputs.size(); ++s) {
        if (grads[s].size() != p.hidden_dim()) throw DomainError("backward_scalar: gradient dimension mismatch");
        detail::accumulate_encoder_grad(p, inputs[s], emb[s], grads[s], 1.0, out.grads);
    }
    return out;
}

/// v <- momentum*v + grad + weight_decay*param; param <- param - lr*v.
/// Encoder blocks step with learning_rate, classifier blocks with classifier_lr.
inline void sgd_step(ModelParams& p, const GradientSet& g, const SgdConfig& cfg, GradientSet& velocity) {
    if (!p.same_shape(g) || !p.same_shape(velocity)) throw DomainError("sgd_step: shape mismatch");
    auto pb = p.blocks();
    auto gb = g.blocks();
    auto vb = velocity.blocks();
    for (std::size_t b = 0; b < pb.size(); ++b) {
        const double lr = b < 2 ? cfg.learning_rate : cfg.classifier_lr;
        for (std::size_t i = 0; i < pb[b].size(); ++i) {
            vb[b][i] = cfg.momentum * vb[b][i] + gb[b][i] + cfg.weight_decay * pb[b][i];
            pb[b][i] -= lr * vb[b][i];
        }
    }
}

// Checkpoint format: {"dims": [input, hidden, classes], "encoder_weights": [...], ...}.

inline nlohmann::json to_json(const ModelParams& p) {
    return nlohmann::json{{"dims", {p.input_dim(), p.hidden_dim(), p.class_count()}},
                          {"encoder_weights", p.encoder_weights.values()},
                          {"encoder_bias", p.encoder_bias},
                          {"classifier_weights", p.classifier_weights.values()},
                          {"classifier_bias", p.classifier_bias}};
}

inline ModelParams model_from_json(const nlohmann::json& j) {
    const auto dims = j.at("dims").get<std::vector<std::size_t>>();
    if (dims.size() != 3) throw ConfigError("checkpoint: dims must have three entries");
    ModelParams p;
    p.encoder_weights = Matrix(dims[0], dims[1], j.at("encoder_weights").get<std::vector<double>>());
    p.encoder_bias = j.at("encoder_bias").get<Vector>();
    p.classifier_weights = Matrix(dims[1], dims[2], j.at("classifier_weights").get<std::vector<double>>());
    p.classifier_bias = j.at("classifier_bias").get<Vector>();
    if (!p.consistent()) throw ConfigError("checkpoint: inconsistent block shapes");
    return p;
}

}  // namespace pmsda

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "utd/matrix.hpp"

namespace utd {

/// Fully connected layer acting on row batches: out = in * weight + bias.
/// `weight` is (in_width x out_width).
struct DenseLayer {
    RealMatrix weight;
    std::vector<double> bias;

    std::size_t in_width() const noexcept { return weight.rows(); }
    std::size_t out_width() const noexcept { return weight.cols(); }
    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Feature extractor: rectified hidden layers followed by a linear output
/// layer. With no layers it is the identity on `input_dim` columns.
struct EncoderParams {
    std::size_t input_dim = 0;
    std::vector<DenseLayer> layers;

    std::size_t feature_dim() const noexcept {
        return layers.empty() ? input_dim : layers.back().out_width();
    }
    friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

/// Linear classifier on features followed by a softmax. weight is (D x classes).
struct HeadParams {
    RealMatrix weight;
    std::vector<double> bias;

    std::size_t feature_dim() const noexcept { return weight.rows(); }
    std::size_t num_classes() const noexcept { return weight.cols(); }
    friend bool operator==(const HeadParams&, const HeadParams&) = default;
};

struct Network {
    EncoderParams encoder;
    HeadParams head;
    friend bool operator==(const Network&, const Network&) = default;
};

/// d(loss)/d(parameter) for every parameter of a Network, same layout.
struct NetworkGradient {
    EncoderParams encoder;
    HeadParams head;
    friend bool operator==(const NetworkGradient&, const NetworkGradient&) = default;
};

struct LossResult {
    double loss = 0.0;
    RealMatrix grad;
};

inline constexpr double kProbabilityFloor = 1e-12;

// -- construction ------------------------------------------------------------

/// Layer widths input_dim -> hidden... -> feature_dim, uniform Glorot init.
EncoderParams init_encoder(std::size_t input_dim, std::span<const std::size_t> hidden,
                           std::size_t feature_dim, std::uint64_t seed);
HeadParams init_head(std::size_t feature_dim, std::size_t num_classes, std::uint64_t seed);

/// Throws ShapeError if layer widths do not chain or a parameter is non-finite.
void validate(const EncoderParams& theta);
void validate(const HeadParams& omega);

// -- forward -----------------------------------------------------------------

RealMatrix forward_features(const EncoderParams& theta, const RealMatrix& batch);
RealMatrix head_logits(const HeadParams& omega, const RealMatrix& features);
RealMatrix softmax_rows(const RealMatrix& logits);
RealMatrix forward_head(const HeadParams& omega, const RealMatrix& features);
RealMatrix predict_proba(const Network& net, const RealMatrix& batch);

// -- losses ------------------------------------------------------------------

/// Mean negative log-likelihood of one-hot labels. The gradient is taken with
/// respect to the logits that produced `probs`: (probs - labels) / rows.
LossResult cross_entropy(const RealMatrix& probs, const RealMatrix& labels);
/// Mean squared error over all entries; grad = 2 (output - target) / entries.
LossResult reconstruction_loss(const RealMatrix& output, const RealMatrix& target);

RealMatrix one_hot(std::span<const int> labels, std::size_t num_classes);

// -- backward ----------------------------------------------------------------

/// Reverse-mode gradient of a scalar loss through encoder and head, given the
/// loss gradient with respect to the head logits for the same batch.
NetworkGradient backward(const EncoderParams& theta, const HeadParams& omega,
                         const RealMatrix& batch, const RealMatrix& grad_wrt_logits);

/// Gradient through the encoder alone given d(loss)/d(features).
/// If `grad_wrt_input` is set it receives d(loss)/d(batch).
EncoderParams backward_encoder(const EncoderParams& theta, const RealMatrix& batch,
                               const RealMatrix& grad_wrt_features,
                               RealMatrix* grad_wrt_input = nullptr);

struct ClassificationLoss {
    double loss = 0.0;
    NetworkGradient grad;
};

/// Mean cross-entropy of `net` on (batch, one-hot labels) and its gradient.
ClassificationLoss classification_loss(const Network& net, const RealMatrix& batch,
                                       const RealMatrix& labels);

// -- updates -----------------------------------------------------------------

Network sgd_step(const Network& params, const NetworkGradient& grad, double lr);
EncoderParams sgd_step(const EncoderParams& params, const EncoderParams& grad, double lr);

NetworkGradient zero_gradient(const Network& like);
EncoderParams zero_like(const EncoderParams& like);

// -- flat views --------------------------------------------------------------

std::size_t parameter_count(const EncoderParams& theta);
std::size_t parameter_count(const Network& net);

/// Encoder layers in order (weights then bias per layer), then head weight, head bias.
std::vector<double> flatten(const Network& net);
std::vector<double> flatten(const NetworkGradient& grad);
std::vector<double> flatten(const EncoderParams& theta);
Network unflatten(const Network& shape, std::span<const double> values);
NetworkGradient unflatten_gradient(const Network& shape, std::span<const double> values);
EncoderParams unflatten(const EncoderParams& shape, std::span<const double> values);

// -- verification ------------------------------------------------------------

/// Relative error used by the gradient checks: |a - b| / max(|a|, |b|, floor).
/// The floor keeps entries that are zero up to round-off from dominating.
inline constexpr double kGradientCheckFloor = 1e-4;
double relative_error(double analytic, double numeric);

/// Worst relative error between backward() and central differences of the
/// mean cross-entropy of `net` on (batch, labels).
double gradient_check(const Network& net, const RealMatrix& batch, const RealMatrix& labels,
                      double step);
/// Same for the encoder alone under mean squared error against `targets`.
double gradient_check(const EncoderParams& theta, const RealMatrix& batch,
                      const RealMatrix& targets, double step);

}  // namespace utd

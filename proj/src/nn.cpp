#include "utd/nn.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace utd {
namespace {

DenseLayer init_layer(std::size_t in, std::size_t out, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    DenseLayer layer{RealMatrix(in, out), std::vector<double>(out, 0.0)};
    for (double& w : layer.weight.values()) w = dist(rng);
    return layer;
}

RealMatrix affine(const DenseLayer& layer, const RealMatrix& in) {
    if (in.cols() != layer.in_width()) {
        throw ShapeError("layer expects " + std::to_string(layer.in_width()) + " inputs, got " +
                         std::to_string(in.cols()));
    }
    RealMatrix out = matmul(in, layer.weight);
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += layer.bias[c];
    }
    return out;
}

void relu_inplace(RealMatrix& m) {
    for (double& v : m.values()) v = std::max(v, 0.0);
}

// Activations entering each layer plus the final output.
struct EncoderTrace {
    std::vector<RealMatrix> inputs;
    RealMatrix output;
};

EncoderTrace trace_encoder(const EncoderParams& theta, const RealMatrix& batch) {
    if (batch.cols() != theta.input_dim) {
        throw ShapeError("encoder expects " + std::to_string(theta.input_dim) + " columns, got " +
                         std::to_string(batch.cols()));
    }
    EncoderTrace trace;
    trace.inputs.reserve(theta.layers.size());
    RealMatrix current = batch;
    for (std::size_t l = 0; l < theta.layers.size(); ++l) {
        trace.inputs.push_back(current);
        current = affine(theta.layers[l], current);
        if (l + 1 < theta.layers.size()) relu_inplace(current);
    }
    trace.output = std::move(current);
    return trace;
}

// Gradient of a layer given d(loss)/d(out); returns d(loss)/d(in).
RealMatrix layer_backward(const DenseLayer& layer, const RealMatrix& in, const RealMatrix& grad_out,
                          DenseLayer& grad) {
    grad.weight = matmul_tn(in, grad_out);
    grad.bias.assign(layer.out_width(), 0.0);
    for (std::size_t r = 0; r < grad_out.rows(); ++r) {
        auto row = grad_out.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) grad.bias[c] += row[c];
    }
    return matmul_nt(grad_out, layer.weight);
}

template <typename Fn>
void for_each_param(EncoderParams& theta, Fn&& fn) {
    for (auto& layer : theta.layers) {
        for (double& w : layer.weight.values()) fn(w);
        for (double& b : layer.bias) fn(b);
    }
}

template <typename Fn>
void for_each_param(const EncoderParams& theta, Fn&& fn) {
    for (const auto& layer : theta.layers) {
        for (double w : layer.weight.values()) fn(w);
        for (double b : layer.bias) fn(b);
    }
}

template <typename Params, typename Fn>
void for_each_network_param(Params& p, Fn&& fn) {
    for_each_param(p.encoder, fn);
    for (auto& w : p.head.weight.values()) fn(w);
    for (auto& b : p.head.bias) fn(b);
}

template <typename Params>
std::vector<double> flatten_network(const Params& p) {
    std::vector<double> out;
    for_each_network_param(p, [&](double v) { out.push_back(v); });
    return out;
}

template <typename Params>
Params unflatten_network(const Network& shape, std::span<const double> values) {
    if (values.size() != parameter_count(shape)) throw ShapeError("flat parameter length mismatch");
    Params p{shape.encoder, shape.head};
    std::size_t i = 0;
    for_each_network_param(p, [&](double& v) { v = values[i++]; });
    return p;
}

}  // namespace

EncoderParams init_encoder(std::size_t input_dim, std::span<const std::size_t> hidden,
                           std::size_t feature_dim, std::uint64_t seed) {
    if (input_dim == 0 || feature_dim == 0) throw InvalidArgument("encoder widths must be positive");
    std::mt19937_64 rng(seed);
    EncoderParams theta;
    theta.input_dim = input_dim;
    std::size_t in = input_dim;
    for (std::size_t width : hidden) {
        if (width == 0) throw InvalidArgument("hidden width must be positive");
        theta.layers.push_back(init_layer(in, width, rng));
        in = width;
    }
    theta.layers.push_back(init_layer(in, feature_dim, rng));
    return theta;
}

HeadParams init_head(std::size_t feature_dim, std::size_t num_classes, std::uint64_t seed) {
    if (num_classes < 2) throw InvalidArgument("head needs at least 2 classes");
    std::mt19937_64 rng(seed);
    DenseLayer layer = init_layer(feature_dim, num_classes, rng);
    return HeadParams{std::move(layer.weight), std::move(layer.bias)};
}

void validate(const EncoderParams& theta) {
    std::size_t in = theta.input_dim;
    for (const auto& layer : theta.layers) {
        if (layer.in_width() != in || layer.bias.size() != layer.out_width()) {
            throw ShapeError("encoder layer widths do not chain");
        }
        in = layer.out_width();
    }
    bool finite = true;
    for_each_param(theta, [&](double v) { finite = finite && std::isfinite(v); });
    if (!finite) throw ShapeError("encoder has non-finite parameters");
}

void validate(const HeadParams& omega) {
    if (omega.num_classes() < 2) throw ShapeError("head needs at least 2 classes");
    if (omega.bias.size() != omega.num_classes()) throw ShapeError("head bias width mismatch");
    bool finite = omega.weight.all_finite();
    for (double b : omega.bias) finite = finite && std::isfinite(b);
    if (!finite) throw ShapeError("head has non-finite parameters");
}

RealMatrix forward_features(const EncoderParams& theta, const RealMatrix& batch) {
    return trace_encoder(theta, batch).output;
}

RealMatrix head_logits(const HeadParams& omega, const RealMatrix& features) {
    if (features.cols() != omega.feature_dim()) {
        throw ShapeError("head expects " + std::to_string(omega.feature_dim()) +
                         " features, got " + std::to_string(features.cols()));
    }
    RealMatrix logits = matmul(features, omega.weight);
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        auto row = logits.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += omega.bias[c];
    }
    return logits;
}

RealMatrix softmax_rows(const RealMatrix& logits) {
    RealMatrix probs = logits;
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        auto row = probs.row(r);
        const double top = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (double& v : row) {
            v = std::exp(v - top);
            sum += v;
        }
        for (double& v : row) v /= sum;
    }
    return probs;
}

RealMatrix forward_head(const HeadParams& omega, const RealMatrix& features) {
    return softmax_rows(head_logits(omega, features));
}

RealMatrix predict_proba(const Network& net, const RealMatrix& batch) {
    return forward_head(net.head, forward_features(net.encoder, batch));
}

LossResult cross_entropy(const RealMatrix& probs, const RealMatrix& labels) {
    if (probs.rows() != labels.rows() || probs.cols() != labels.cols()) {
        throw ShapeError("cross_entropy: probabilities and labels differ in shape");
    }
    LossResult result{0.0, RealMatrix(probs.rows(), probs.cols())};
    if (probs.rows() == 0) return result;
    const double n = static_cast<double>(probs.rows());
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        for (std::size_t c = 0; c < probs.cols(); ++c) {
            const double y = labels(r, c);
            if (y != 0.0) result.loss -= y * std::log(std::max(probs(r, c), kProbabilityFloor));
            result.grad(r, c) = (probs(r, c) - y) / n;
        }
    }
    result.loss /= n;
    return result;
}

LossResult reconstruction_loss(const RealMatrix& output, const RealMatrix& target) {
    if (output.rows() != target.rows() || output.cols() != target.cols()) {
        throw ShapeError("reconstruction_loss: output and target differ in shape");
    }
    LossResult result{0.0, RealMatrix(output.rows(), output.cols())};
    if (output.empty()) return result;
    const double n = static_cast<double>(output.size());
    for (std::size_t i = 0; i < output.size(); ++i) {
        const double d = output.values()[i] - target.values()[i];
        result.loss += d * d;
        result.grad.values()[i] = 2.0 * d / n;
    }
    result.loss /= n;
    return result;
}

RealMatrix one_hot(std::span<const int> labels, std::size_t num_classes) {
    RealMatrix out(labels.size(), num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
            throw InvalidArgument("label " + std::to_string(labels[i]) + " outside [0, " +
                                  std::to_string(num_classes) + ")");
        }
        out(i, static_cast<std::size_t>(labels[i])) = 1.0;
    }
    return out;
}

EncoderParams backward_encoder(const EncoderParams& theta, const RealMatrix& batch,
                               const RealMatrix& grad_wrt_features, RealMatrix* grad_wrt_input) {
    EncoderTrace trace = trace_encoder(theta, batch);
    if (grad_wrt_features.rows() != trace.output.rows() ||
        grad_wrt_features.cols() != trace.output.cols()) {
        throw ShapeError("backward: upstream gradient does not match encoder output");
    }
    EncoderParams grad;
    grad.input_dim = theta.input_dim;
    grad.layers.resize(theta.layers.size());
    RealMatrix upstream = grad_wrt_features;
    for (std::size_t l = theta.layers.size(); l-- > 0;) {
        upstream = layer_backward(theta.layers[l], trace.inputs[l], upstream, grad.layers[l]);
        if (l > 0) {
            // inputs[l] = relu(pre-activation); its derivative is 1 where the output is positive
            const auto& act = trace.inputs[l].values();
            auto& g = upstream.values();
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (act[i] <= 0.0) g[i] = 0.0;
            }
        }
    }
    if (grad_wrt_input) *grad_wrt_input = std::move(upstream);
    return grad;
}

NetworkGradient backward(const EncoderParams& theta, const HeadParams& omega,
                         const RealMatrix& batch, const RealMatrix& grad_wrt_logits) {
    RealMatrix features = forward_features(theta, batch);
    if (grad_wrt_logits.rows() != features.rows() ||
        grad_wrt_logits.cols() != omega.num_classes()) {
        throw ShapeError("backward: logit gradient shape mismatch");
    }
    NetworkGradient grad;
    DenseLayer head_layer{omega.weight, omega.bias};
    DenseLayer head_grad;
    RealMatrix grad_features = layer_backward(head_layer, features, grad_wrt_logits, head_grad);
    grad.head = HeadParams{std::move(head_grad.weight), std::move(head_grad.bias)};
    grad.encoder = backward_encoder(theta, batch, grad_features);
    return grad;
}

ClassificationLoss classification_loss(const Network& net, const RealMatrix& batch,
                                       const RealMatrix& labels) {
    LossResult ce = cross_entropy(predict_proba(net, batch), labels);
    return {ce.loss, backward(net.encoder, net.head, batch, ce.grad)};
}

Network sgd_step(const Network& params, const NetworkGradient& grad, double lr) {
    if (lr < 0.0) throw InvalidArgument("learning rate must be non-negative");
    std::vector<double> p = flatten(params);
    const std::vector<double> g = flatten(grad);
    if (p.size() != g.size()) throw ShapeError("gradient does not match parameters");
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
    return unflatten(params, p);
}

EncoderParams sgd_step(const EncoderParams& params, const EncoderParams& grad, double lr) {
    if (lr < 0.0) throw InvalidArgument("learning rate must be non-negative");
    std::vector<double> p = flatten(params);
    const std::vector<double> g = flatten(grad);
    if (p.size() != g.size()) throw ShapeError("gradient does not match parameters");
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
    return unflatten(params, p);
}

EncoderParams zero_like(const EncoderParams& like) {
    EncoderParams z = like;
    for_each_param(z, [](double& v) { v = 0.0; });
    return z;
}

NetworkGradient zero_gradient(const Network& like) {
    NetworkGradient z{zero_like(like.encoder), like.head};
    std::fill(z.head.weight.values().begin(), z.head.weight.values().end(), 0.0);
    std::fill(z.head.bias.begin(), z.head.bias.end(), 0.0);
    return z;
}

std::size_t parameter_count(const EncoderParams& theta) {
    std::size_t n = 0;
    for (const auto& layer : theta.layers) n += layer.weight.size() + layer.bias.size();
    return n;
}

std::size_t parameter_count(const Network& net) {
    return parameter_count(net.encoder) + net.head.weight.size() + net.head.bias.size();
}

std::vector<double> flatten(const Network& net) { return flatten_network(net); }
std::vector<double> flatten(const NetworkGradient& grad) { return flatten_network(grad); }

std::vector<double> flatten(const EncoderParams& theta) {
    std::vector<double> out;
    out.reserve(parameter_count(theta));
    for_each_param(theta, [&](double v) { out.push_back(v); });
    return out;
}

Network unflatten(const Network& shape, std::span<const double> values) {
    return unflatten_network<Network>(shape, values);
}

NetworkGradient unflatten_gradient(const Network& shape, std::span<const double> values) {
    return unflatten_network<NetworkGradient>(shape, values);
}

EncoderParams unflatten(const EncoderParams& shape, std::span<const double> values) {
    if (values.size() != parameter_count(shape)) throw ShapeError("flat parameter length mismatch");
    EncoderParams out = shape;
    std::size_t i = 0;
    for_each_param(out, [&](double& v) { v = values[i++]; });
    return out;
}

double relative_error(double analytic, double numeric) {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), kGradientCheckFloor});
    return std::abs(analytic - numeric) / scale;
}

double gradient_check(const Network& net, const RealMatrix& batch, const RealMatrix& labels,
                      double step) {
    if (!(step > 0.0)) throw InvalidArgument("finite-difference step must be positive");
    const std::vector<double> analytic = flatten(classification_loss(net, batch, labels).grad);
    std::vector<double> params = flatten(net);
    auto loss_at = [&](const std::vector<double>& p) {
        return cross_entropy(predict_proba(unflatten(net, p), batch), labels).loss;
    };
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + step;
        const double up = loss_at(params);
        params[i] = saved - step;
        const double down = loss_at(params);
        params[i] = saved;
        worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * step)));
    }
    return worst;
}

double gradient_check(const EncoderParams& theta, const RealMatrix& batch,
                      const RealMatrix& targets, double step) {
    if (!(step > 0.0)) throw InvalidArgument("finite-difference step must be positive");
    LossResult mse = reconstruction_loss(forward_features(theta, batch), targets);
    const std::vector<double> analytic = flatten(backward_encoder(theta, batch, mse.grad));
    std::vector<double> params = flatten(theta);
    auto loss_at = [&](const std::vector<double>& p) {
        return reconstruction_loss(forward_features(unflatten(theta, p), batch), targets).loss;
    };
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + step;
        const double up = loss_at(params);
        params[i] = saved - step;
        const double down = loss_at(params);
        params[i] = saved;
        worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * step)));
    }
    return worst;
}

}  // namespace utd

#pragma once

// Dense feedforward networks with ReLU hidden layers, a linear or softmax
// output layer, inverted dropout, and exact reverse-mode gradients.
//
// Parameter layout (flat vector, layer by layer, l = 0 .. L-1 with
// in = dims[l], out = dims[l+1]):
//
//   [ W_l row-major (out x in) : W_l(j, i) at offset + j*in + i ][ b_l (out) ]
//
// A batch of points is an Eigen matrix with one point per column.

#include "error.hpp"
#include "random.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace bon {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class OutputMode { linear, softmax };

inline std::size_t param_count(std::span<const std::size_t> dims) {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) n += dims[l] * dims[l + 1] + dims[l + 1];
    return n;
}

struct MlpNetwork {
    std::vector<std::size_t> layer_dims;
    OutputMode output_mode = OutputMode::linear;
    std::vector<double> params;
    double dropout_p = 0.0;

    MlpNetwork() = default;

    // Zero-initialized network.
    MlpNetwork(std::vector<std::size_t> dims, OutputMode mode, double dropout = 0.0)
        : layer_dims(std::move(dims)), output_mode(mode), dropout_p(dropout) {
        validate_shape();
        params.assign(param_count(layer_dims), 0.0);
    }

    std::size_t layer_count() const { return layer_dims.size() - 1; }
    std::size_t input_dim() const { return layer_dims.front(); }
    std::size_t output_dim() const { return layer_dims.back(); }

    std::size_t weight_offset(std::size_t l) const {
        std::size_t off = 0;
        for (std::size_t i = 0; i < l; ++i) off += layer_dims[i] * layer_dims[i + 1] + layer_dims[i + 1];
        return off;
    }
    std::size_t bias_offset(std::size_t l) const {
        return weight_offset(l) + layer_dims[l] * layer_dims[l + 1];
    }

    Eigen::Map<const RowMajorMatrix> weights(std::size_t l) const {
        return {params.data() + weight_offset(l), Eigen::Index(layer_dims[l + 1]), Eigen::Index(layer_dims[l])};
    }
    Eigen::Map<RowMajorMatrix> weights(std::size_t l) {
        return {params.data() + weight_offset(l), Eigen::Index(layer_dims[l + 1]), Eigen::Index(layer_dims[l])};
    }
    Eigen::Map<const Vector> bias(std::size_t l) const {
        return {params.data() + bias_offset(l), Eigen::Index(layer_dims[l + 1])};
    }
    Eigen::Map<Vector> bias(std::size_t l) {
        return {params.data() + bias_offset(l), Eigen::Index(layer_dims[l + 1])};
    }

    void validate_shape() const {
        if (layer_dims.size() < 2) throw ShapeError("network needs at least input and output dims");
        for (auto d : layer_dims)
            if (d == 0) throw ShapeError("layer dims must be positive");
        if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("dropout_p must lie in [0, 1)");
    }

    void validate() const {
        validate_shape();
        if (params.size() != param_count(layer_dims))
            throw ShapeError("params length " + std::to_string(params.size()) + " does not match layer dims (" +
                             std::to_string(param_count(layer_dims)) + ")");
    }
};

// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
inline MlpNetwork make_mlp(std::vector<std::size_t> dims, OutputMode mode, Rng& rng, double dropout = 0.0) {
    MlpNetwork net(std::move(dims), mode, dropout);
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        const double limit = std::sqrt(6.0 / static_cast<double>(net.layer_dims[l] + net.layer_dims[l + 1]));
        auto w = net.weights(l);
        for (Eigen::Index j = 0; j < w.rows(); ++j)
            for (Eigen::Index i = 0; i < w.cols(); ++i) w(j, i) = rng.uniform(-limit, limit);
    }
    return net;
}

// Linear-output network computing the identity map. Hidden layers carry each
// input as a (positive, negative) ReLU pair, so every hidden width must be at
// least twice the input dim; with no hidden layer the weights are the identity.
inline MlpNetwork make_identity_mlp(std::vector<std::size_t> dims) {
    MlpNetwork net(std::move(dims), OutputMode::linear);
    const std::size_t d = net.input_dim();
    if (net.output_dim() != d) throw ShapeError("identity network needs output dim == input dim");
    const std::size_t L = net.layer_count();
    if (L == 1) {
        net.weights(0).setIdentity();
        return net;
    }
    for (std::size_t l = 1; l < L; ++l)
        if (net.layer_dims[l] < 2 * d) throw ShapeError("identity network needs hidden width >= 2 * input dim");
    auto first = net.weights(0);
    for (std::size_t i = 0; i < d; ++i) {
        first(2 * i, i) = 1.0;
        first(2 * i + 1, i) = -1.0;
    }
    for (std::size_t l = 1; l + 1 < L; ++l) {
        auto w = net.weights(l);
        for (std::size_t u = 0; u < 2 * d; ++u) w(u, u) = 1.0;
    }
    auto last = net.weights(L - 1);
    for (std::size_t i = 0; i < d; ++i) {
        last(i, 2 * i) = 1.0;
        last(i, 2 * i + 1) = -1.0;
    }
    return net;
}

// Per-parameter derivatives, index-aligned with MlpNetwork::params.
class GradVector {
public:
    GradVector() = default;
    explicit GradVector(std::size_t n) : values_(n, 0.0) {}
    explicit GradVector(std::vector<double> v) : values_(std::move(v)) {}

    std::size_t size() const { return values_.size(); }
    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }
    auto begin() { return values_.begin(); }
    auto end() { return values_.end(); }
    auto begin() const { return values_.begin(); }
    auto end() const { return values_.end(); }
    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }
    std::span<const double> span() const { return values_; }
    const std::vector<double>& values() const { return values_; }

    bool all_finite() const {
        return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
    }

    GradVector& operator+=(const GradVector& other) {
        if (other.size() != size()) throw ShapeError("gradient length mismatch");
        for (std::size_t i = 0; i < size(); ++i) values_[i] += other.values_[i];
        return *this;
    }

    GradVector& operator*=(double s) {
        for (auto& v : values_) v *= s;
        return *this;
    }

private:
    std::vector<double> values_;
};

struct ForwardTrace {
    std::vector<std::size_t> layer_dims;
    std::size_t param_count = 0;
    Matrix input;
    std::vector<Matrix> pre;   // z_l = W_l a_{l-1} + b_l, every layer
    std::vector<Matrix> act;   // hidden activations after ReLU and dropout
    std::vector<Matrix> mask;  // per hidden layer: 0 or 1/(1-p); empty when dropout is off
    Matrix output;             // probabilities in softmax mode, z_{L-1} otherwise

    Eigen::Index batch() const { return input.cols(); }

    std::vector<double> output_column(Eigen::Index j = 0) const {
        std::vector<double> out(static_cast<std::size_t>(output.rows()));
        for (Eigen::Index r = 0; r < output.rows(); ++r) out[r] = output(r, j);
        return out;
    }
};

inline void softmax_columns(const Matrix& logits, Matrix& probs) {
    probs.resize(logits.rows(), logits.cols());
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
        const double m = logits.col(j).maxCoeff();
        probs.col(j) = (logits.col(j).array() - m).exp();
        probs.col(j) /= probs.col(j).sum();
    }
}

namespace detail {

inline void check_input(const MlpNetwork& net, const Matrix& inputs) {
    net.validate();
    if (static_cast<std::size_t>(inputs.rows()) != net.input_dim())
        throw ShapeError("input has " + std::to_string(inputs.rows()) + " features, network expects " +
                         std::to_string(net.input_dim()));
}

inline ForwardTrace run_layers(const MlpNetwork& net, const Matrix& inputs, bool train, Rng* rng,
                               const std::vector<Matrix>* fixed_masks) {
    ForwardTrace t;
    t.layer_dims = net.layer_dims;
    t.param_count = net.params.size();
    t.input = inputs;
    const std::size_t L = net.layer_count();
    const bool dropout = fixed_masks ? !fixed_masks->empty() : (train && net.dropout_p > 0.0);
    if (dropout && !fixed_masks && rng == nullptr) throw ContractError("train-mode dropout needs a random source");
    t.pre.reserve(L);
    t.act.reserve(L - 1);
    const double keep_scale = dropout && !fixed_masks ? 1.0 / (1.0 - net.dropout_p) : 0.0;
    for (std::size_t l = 0; l < L; ++l) {
        const Matrix& prev = l == 0 ? t.input : t.act.back();
        Matrix z = net.weights(l) * prev;
        z.colwise() += net.bias(l);
        t.pre.push_back(std::move(z));
        if (l + 1 == L) break;
        Matrix a = t.pre.back().cwiseMax(0.0);
        if (dropout) {
            Matrix m;
            if (fixed_masks) {
                m = (*fixed_masks)[l];
            } else {
                m.resize(a.rows(), a.cols());
                for (Eigen::Index j = 0; j < a.cols(); ++j)
                    for (Eigen::Index r = 0; r < a.rows(); ++r)
                        m(r, j) = rng->bernoulli(net.dropout_p) ? 0.0 : keep_scale;
            }
            a.array() *= m.array();
            t.mask.push_back(std::move(m));
        }
        t.act.push_back(std::move(a));
    }
    if (net.output_mode == OutputMode::softmax)
        softmax_columns(t.pre.back(), t.output);
    else
        t.output = t.pre.back();
    return t;
}

} // namespace detail

// Forward pass over a batch (one point per column). rng is only consulted in
// train mode with dropout_p > 0.
inline ForwardTrace forward(const MlpNetwork& net, const Matrix& inputs, bool train_mode = false, Rng* rng = nullptr) {
    detail::check_input(net, inputs);
    return detail::run_layers(net, inputs, train_mode, rng, nullptr);
}

inline ForwardTrace forward(const MlpNetwork& net, std::span<const double> x, bool train_mode = false,
                            Rng* rng = nullptr) {
    Matrix in(static_cast<Eigen::Index>(x.size()), 1);
    for (std::size_t i = 0; i < x.size(); ++i) in(i, 0) = x[i];
    return forward(net, in, train_mode, rng);
}

// Re-evaluates the traced computation with the trace's own dropout masks.
inline Matrix replay(const MlpNetwork& net, const ForwardTrace& trace) {
    detail::check_input(net, trace.input);
    return detail::run_layers(net, trace.input, true, nullptr, &trace.mask).output;
}

inline std::vector<double> predict_output(const MlpNetwork& net, std::span<const double> x) {
    return forward(net, x).output_column();
}

// Backprop from gradients w.r.t. the final pre-activation (logits), summed
// over the batch columns.
inline GradVector backward_logits(const MlpNetwork& net, const ForwardTrace& trace, const Matrix& d_logits) {
    if (trace.layer_dims != net.layer_dims || trace.param_count != net.params.size())
        throw TraceError("trace was not produced by this network");
    if (static_cast<std::size_t>(d_logits.rows()) != net.output_dim() || d_logits.cols() != trace.batch())
        throw ShapeError("output gradient shape does not match the trace");
    GradVector grad(net.params.size());
    Matrix delta = d_logits;
    for (std::size_t l = net.layer_count(); l-- > 0;) {
        const Matrix& prev = l == 0 ? trace.input : trace.act[l - 1];
        Eigen::Map<RowMajorMatrix> dw(grad.data() + net.weight_offset(l), Eigen::Index(net.layer_dims[l + 1]),
                                      Eigen::Index(net.layer_dims[l]));
        Eigen::Map<Vector> db(grad.data() + net.bias_offset(l), Eigen::Index(net.layer_dims[l + 1]));
        dw.noalias() = delta * prev.transpose();
        db = delta.rowwise().sum();
        if (l == 0) break;
        Matrix up = net.weights(l).transpose() * delta;
        if (!trace.mask.empty()) up.array() *= trace.mask[l - 1].array();
        up.array() *= (trace.pre[l - 1].array() > 0.0).cast<double>();
        delta = std::move(up);
    }
    return grad;
}

// Backprop from gradients w.r.t. the network output. In softmax mode the
// softmax Jacobian is applied per column first.
inline GradVector backward(const MlpNetwork& net, const ForwardTrace& trace, const Matrix& d_output) {
    if (net.output_mode == OutputMode::linear) return backward_logits(net, trace, d_output);
    if (d_output.rows() != trace.output.rows() || d_output.cols() != trace.output.cols())
        throw ShapeError("output gradient shape does not match the trace");
    Matrix d_logits(d_output.rows(), d_output.cols());
    for (Eigen::Index j = 0; j < d_output.cols(); ++j) {
        const double dot = d_output.col(j).dot(trace.output.col(j));
        d_logits.col(j) = trace.output.col(j).array() * (d_output.col(j).array() - dot);
    }
    return backward_logits(net, trace, d_logits);
}

inline GradVector backward(const MlpNetwork& net, const ForwardTrace& trace, std::span<const double> d_output) {
    Matrix g(static_cast<Eigen::Index>(d_output.size()), 1);
    for (std::size_t i = 0; i < d_output.size(); ++i) g(i, 0) = d_output[i];
    return backward(net, trace, g);
}

inline Matrix to_column(std::span<const double> x) {
    Matrix m(static_cast<Eigen::Index>(x.size()), 1);
    for (std::size_t i = 0; i < x.size(); ++i) m(i, 0) = x[i];
    return m;
}

} // namespace bon

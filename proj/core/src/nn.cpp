#include "fedalign/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "fedalign/feedback.hpp"

namespace fedalign {

Matrix activate(const Matrix& z, ActivationKind kind) {
    Matrix out = z;
    switch (kind) {
        case ActivationKind::ReLU:
            for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
            break;
        case ActivationKind::Tanh:
            for (double& v : out.values()) v = std::tanh(v);
            break;
        case ActivationKind::Identity:
            break;
    }
    return out;
}

Matrix activate_derivative(const Matrix& z, ActivationKind kind) {
    Matrix out = z;
    switch (kind) {
        case ActivationKind::ReLU:
            for (double& v : out.values()) v = v > 0.0 ? 1.0 : 0.0;
            break;
        case ActivationKind::Tanh:
            for (double& v : out.values()) {
                const double t = std::tanh(v);
                v = 1.0 - t * t;
            }
            break;
        case ActivationKind::Identity:
            for (double& v : out.values()) v = 1.0;
            break;
    }
    return out;
}

void MlpModel::validate() const {
    if (layers.empty()) {
        throw std::invalid_argument("MlpModel: model has no layers");
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const DenseLayer& layer = layers[l];
        if (layer.weight.rows() == 0 || layer.weight.cols() == 0) {
            throw std::invalid_argument("MlpModel: layer " + std::to_string(l + 1) +
                                        " has an empty weight matrix");
        }
        if (layer.bias.rows() != layer.weight.rows() || layer.bias.cols() != 1) {
            throw std::invalid_argument(
                "MlpModel: layer " + std::to_string(l + 1) + " bias is " +
                std::to_string(layer.bias.rows()) + "x" + std::to_string(layer.bias.cols()) +
                ", expected " + std::to_string(layer.weight.rows()) + "x1");
        }
        if (l + 1 < layers.size() &&
            layers[l + 1].weight.cols() != layer.weight.rows()) {
            throw std::invalid_argument(
                "MlpModel: layer " + std::to_string(l + 2) + " expects " +
                std::to_string(layers[l + 1].weight.cols()) + " inputs but layer " +
                std::to_string(l + 1) + " produces " + std::to_string(layer.weight.rows()));
        }
    }
}

Matrix glorot_uniform(std::size_t out, std::size_t in, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    Matrix w(out, in);
    for (double& v : w.values()) v = rng.uniform(-limit, limit);
    return w;
}

MlpModel make_mlp(const std::vector<std::size_t>& dims, ActivationKind hidden,
                  Rng& rng, ActivationKind output) {
    if (dims.size() < 2) {
        throw std::invalid_argument("make_mlp: need at least input and output dimensions");
    }
    MlpModel model;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        DenseLayer layer;
        layer.weight = glorot_uniform(dims[l + 1], dims[l], rng);
        layer.bias = Matrix(dims[l + 1], 1);
        layer.activation = (l + 2 == dims.size()) ? output : hidden;
        model.layers.push_back(std::move(layer));
    }
    return model;
}

namespace {

// z = w h + b with the bias broadcast over columns.
Matrix affine(const DenseLayer& layer, const Matrix& h) {
    Matrix z = matmul(layer.weight, h);
    for (std::size_t i = 0; i < z.rows(); ++i) {
        const double b = layer.bias(i, 0);
        for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) += b;
    }
    return z;
}

// Shared skeleton for both backward passes.  When `feedback` is null or does
// not cover a layer, the layer's own weight transpose propagates the error,
// which is exactly standard backpropagation.
GradSet backward_impl(const MlpModel& model, const FeedbackSet* feedback,
                      const ForwardTrace& trace, const Matrix& dlogits,
                      std::vector<Matrix>* deltas) {
    model.validate();
    const std::size_t L = model.layer_count();
    if (trace.inputs.size() != L || trace.preacts.size() != L) {
        throw std::invalid_argument("backward: trace does not match the model's layer count");
    }
    if (dlogits.rows() != model.output_dim() || dlogits.cols() != trace.output.cols()) {
        throw ShapeError("backward: dlogits", dlogits.rows(), dlogits.cols(),
                         model.output_dim(), trace.output.cols());
    }

    GradSet grads;
    grads.weights.resize(L);
    grads.biases.resize(L);
    if (deltas != nullptr) deltas->assign(L, Matrix());

    // delta_L: pull the loss gradient through the output activation.  For the
    // canonical identity output this is dlogits itself.
    const DenseLayer& last = model.layers[L - 1];
    Matrix delta = last.activation == ActivationKind::Identity
                       ? dlogits
                       : hadamard(dlogits, activate_derivative(trace.preacts[L - 1],
                                                               last.activation));

    for (std::size_t l = L; l >= 1; --l) {
        grads.weights[l - 1] = matmul(delta, transpose(trace.inputs[l - 1]));
        grads.biases[l - 1] = row_sums(delta);
        if (deltas != nullptr) (*deltas)[l - 1] = delta;
        if (l == 1) break;

        const int layer_index = static_cast<int>(l);  // 1-based
        const Matrix& back = (feedback != nullptr && feedback->has(layer_index))
                                 ? feedback->feedback_for(layer_index)
                                 : model.layers[l - 1].weight;
        if (!back.same_shape(model.layers[l - 1].weight)) {
            throw ShapeError("backward: feedback for layer " + std::to_string(layer_index),
                             back.rows(), back.cols(),
                             model.layers[l - 1].weight.rows(),
                             model.layers[l - 1].weight.cols());
        }
        delta = hadamard(matmul(transpose(back), delta),
                         activate_derivative(trace.preacts[l - 2],
                                             model.layers[l - 2].activation));
    }
    return grads;
}

}  // namespace

ForwardTrace forward(const MlpModel& model, const Matrix& x) {
    model.validate();
    if (x.rows() != model.input_dim()) {
        throw ShapeError("forward: input", x.rows(), x.cols(), model.input_dim(), x.cols());
    }
    ForwardTrace trace;
    trace.inputs.reserve(model.layer_count());
    trace.preacts.reserve(model.layer_count());
    Matrix h = x;
    for (const DenseLayer& layer : model.layers) {
        trace.inputs.push_back(h);
        Matrix z = affine(layer, h);
        h = activate(z, layer.activation);
        trace.preacts.push_back(std::move(z));
    }
    trace.output = std::move(h);
    return trace;
}

GradSet backward_bp(const MlpModel& model, const ForwardTrace& trace, const Matrix& dlogits,
                    std::vector<Matrix>* deltas) {
    return backward_impl(model, nullptr, trace, dlogits, deltas);
}

GradSet backward_fa(const MlpModel& model, const FeedbackSet& feedback,
                    const ForwardTrace& trace, const Matrix& dlogits,
                    std::vector<Matrix>* deltas) {
    const int L = static_cast<int>(model.layer_count());
    for (int layer : feedback.fa_layers) {
        if (layer < 1 || layer > L) {
            throw std::invalid_argument("backward_fa: feedback set references layer " +
                                        std::to_string(layer) + " of a " +
                                        std::to_string(L) + "-layer model");
        }
    }
    return backward_impl(model, &feedback, trace, dlogits, deltas);
}

CrossEntropyResult cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
    const std::size_t classes = logits.rows();
    const std::size_t batch = logits.cols();
    if (labels.size() != batch) {
        throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) +
                                    " labels for a batch of " + std::to_string(batch));
    }
    if (batch == 0) {
        throw std::invalid_argument("cross_entropy: empty batch");
    }

    CrossEntropyResult result;
    result.dlogits = Matrix(classes, batch);
    const double inv_batch = 1.0 / static_cast<double>(batch);
    double loss = 0.0;

    for (std::size_t j = 0; j < batch; ++j) {
        const int label = labels[j];
        if (label < 0 || static_cast<std::size_t>(label) >= classes) {
            throw std::invalid_argument("cross_entropy: label " + std::to_string(label) +
                                        " out of range for " + std::to_string(classes) +
                                        " classes");
        }
        double zmax = logits(0, j);
        for (std::size_t c = 1; c < classes; ++c) zmax = std::max(zmax, logits(c, j));
        double denom = 0.0;
        for (std::size_t c = 0; c < classes; ++c) denom += std::exp(logits(c, j) - zmax);
        const double log_denom = std::log(denom);
        loss += -(logits(static_cast<std::size_t>(label), j) - zmax - log_denom);
        for (std::size_t c = 0; c < classes; ++c) {
            const double softmax = std::exp(logits(c, j) - zmax) / denom;
            const double onehot = (static_cast<std::size_t>(label) == c) ? 1.0 : 0.0;
            result.dlogits(c, j) = (softmax - onehot) * inv_batch;
        }
    }
    result.loss = loss * inv_batch;
    if (!std::isfinite(result.loss)) {
        throw std::runtime_error("cross_entropy: loss is not finite (diverged inputs?)");
    }
    return result;
}

void OptimizerState::validate() const {
    if (!(learning_rate > 0.0)) {
        throw std::invalid_argument("OptimizerState: learning_rate must be positive");
    }
    if (momentum < 0.0 || momentum >= 1.0) {
        throw std::invalid_argument("OptimizerState: momentum must lie in [0, 1)");
    }
    if (weight_decay < 0.0) {
        throw std::invalid_argument("OptimizerState: weight_decay must be non-negative");
    }
}

void sgd_step(MlpModel& model, const GradSet& grads, OptimizerState& opt) {
    opt.validate();
    const std::size_t L = model.layer_count();
    if (grads.weights.size() != L || grads.biases.size() != L) {
        throw std::invalid_argument("sgd_step: gradient set does not match the model");
    }
    if (opt.weight_velocity.empty()) {
        for (const DenseLayer& layer : model.layers) {
            opt.weight_velocity.emplace_back(layer.weight.rows(), layer.weight.cols());
            opt.bias_velocity.emplace_back(layer.bias.rows(), 1);
        }
    }
    for (std::size_t l = 0; l < L; ++l) {
        DenseLayer& layer = model.layers[l];
        if (!grads.weights[l].same_shape(layer.weight) ||
            !grads.biases[l].same_shape(layer.bias)) {
            throw ShapeError("sgd_step: gradients for layer " + std::to_string(l + 1),
                             grads.weights[l].rows(), grads.weights[l].cols(),
                             layer.weight.rows(), layer.weight.cols());
        }
        Matrix& vw = opt.weight_velocity[l];
        Matrix& vb = opt.bias_velocity[l];
        for (std::size_t i = 0; i < vw.size(); ++i) {
            double v = opt.momentum * vw.values()[i] + grads.weights[l].values()[i] +
                       opt.weight_decay * layer.weight.values()[i];
            vw.values()[i] = v;
            layer.weight.values()[i] -= opt.learning_rate * v;
        }
        for (std::size_t i = 0; i < vb.size(); ++i) {
            double v = opt.momentum * vb.values()[i] + grads.biases[l].values()[i] +
                       opt.weight_decay * layer.bias.values()[i];
            vb.values()[i] = v;
            layer.bias.values()[i] -= opt.learning_rate * v;
        }
    }
}

EvalResult evaluate(const MlpModel& model, const Matrix& features, const std::vector<int>& labels) {
    const ForwardTrace trace = forward(model, features);
    const CrossEntropyResult ce = cross_entropy(trace.output, labels);
    std::size_t correct = 0;
    for (std::size_t j = 0; j < labels.size(); ++j) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < trace.output.rows(); ++c) {
            if (trace.output(c, j) > trace.output(best, j)) best = c;
        }
        if (static_cast<int>(best) == labels[j]) ++correct;
    }
    return {ce.loss, static_cast<double>(correct) / static_cast<double>(labels.size())};
}

std::size_t parameter_count(const MlpModel& model) {
    std::size_t n = 0;
    for (const DenseLayer& layer : model.layers) n += layer.weight.size() + layer.bias.size();
    return n;
}

std::vector<double> flatten_layer(const Matrix& weight, const Matrix& bias) {
    std::vector<double> flat;
    flat.reserve(weight.size() + bias.size());
    flat.insert(flat.end(), weight.values().begin(), weight.values().end());
    flat.insert(flat.end(), bias.values().begin(), bias.values().end());
    return flat;
}

std::vector<double> flatten_layer(const DenseLayer& layer) {
    return flatten_layer(layer.weight, layer.bias);
}

std::vector<double> flatten(const MlpModel& model) {
    std::vector<double> flat;
    flat.reserve(parameter_count(model));
    for (const DenseLayer& layer : model.layers) {
        flat.insert(flat.end(), layer.weight.values().begin(), layer.weight.values().end());
        flat.insert(flat.end(), layer.bias.values().begin(), layer.bias.values().end());
    }
    return flat;
}

std::vector<double> flatten(const GradSet& grads) {
    std::vector<double> flat;
    for (std::size_t l = 0; l < grads.weights.size(); ++l) {
        flat.insert(flat.end(), grads.weights[l].values().begin(), grads.weights[l].values().end());
        flat.insert(flat.end(), grads.biases[l].values().begin(), grads.biases[l].values().end());
    }
    return flat;
}

}  // namespace fedalign

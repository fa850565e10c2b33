#pragma once

#include <cstdint>
#include <vector>

#include "fedalign/matrix.hpp"
#include "fedalign/rng.hpp"

namespace fedalign {

struct FeedbackSet;  // feedback.hpp

enum class ActivationKind { ReLU, Tanh, Identity };

// f(z), applied elementwise.
Matrix activate(const Matrix& z, ActivationKind kind);

// f'(z), applied elementwise.  ReLU'(0) is defined as 0.
Matrix activate_derivative(const Matrix& z, ActivationKind kind);

// ---------------------------------------------------------------------------
// A fully connected layer computing f(w h + b) for a batch h with one sample
// per column: weight is (out x in), bias is (out x 1) broadcast over columns.
// ---------------------------------------------------------------------------
struct DenseLayer {
    Matrix weight;
    Matrix bias;
    ActivationKind activation = ActivationKind::Identity;

    std::size_t out_dim() const { return weight.rows(); }
    std::size_t in_dim() const { return weight.cols(); }
};

struct MlpModel {
    std::vector<DenseLayer> layers;

    std::size_t layer_count() const { return layers.size(); }
    std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
    std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

    // Throws if the model is empty, shapes do not chain, or a bias is not a
    // column vector matching its layer's output dimension.
    void validate() const;
};

// Builds an MLP with the given dimension chain dims[0] -> ... -> dims.back().
// Hidden layers use `hidden`; the last layer uses `output` (identity by
// default, producing raw logits).  Weights are Glorot-uniform draws from rng;
// biases start at zero.
MlpModel make_mlp(const std::vector<std::size_t>& dims, ActivationKind hidden,
                  Rng& rng, ActivationKind output = ActivationKind::Identity);

// Glorot-uniform sample of an (out x in) weight matrix; the same family is
// used for random feedback matrices.
Matrix glorot_uniform(std::size_t out, std::size_t in, Rng& rng);

// ---------------------------------------------------------------------------
// Everything the backward pass needs from a forward pass.  With L layers and
// 1-based layer index l: inputs[l-1] = h_l (h_1 is the batch itself),
// preacts[l-1] = z_l = w_l h_l + b_l, and output = f_L(z_L).
// ---------------------------------------------------------------------------
struct ForwardTrace {
    std::vector<Matrix> inputs;
    std::vector<Matrix> preacts;
    Matrix output;
};

ForwardTrace forward(const MlpModel& model, const Matrix& x);

// Parameter gradients, mirroring the model's layer shapes.
struct GradSet {
    std::vector<Matrix> weights;
    std::vector<Matrix> biases;
};

// Standard backpropagation.  dlogits is the loss gradient with respect to the
// model output; gradients are the exact chain-rule derivatives of whatever
// scalar produced it (cross_entropy bakes the 1/batch factor into dlogits, so
// weight gradients come out batch-averaged).  When `deltas` is non-null it
// receives the per-layer error signals delta_1 ... delta_L.
GradSet backward_bp(const MlpModel& model, const ForwardTrace& trace, const Matrix& dlogits,
                    std::vector<Matrix>* deltas = nullptr);

// Feedback-alignment backward pass: when propagating the error from a layer
// l in the feedback set down to layer l-1, B_l replaces the weight transpose:
// delta_{l-1} = (B_l^T delta_l) . f'(z_{l-1}).  Weight/bias gradients keep
// their standard form in terms of the incoming delta; layers outside the set
// behave exactly like backward_bp.
GradSet backward_fa(const MlpModel& model, const FeedbackSet& feedback,
                    const ForwardTrace& trace, const Matrix& dlogits,
                    std::vector<Matrix>* deltas = nullptr);

// Mean cross-entropy over the batch: logits is (classes x batch), labels are
// 0-based class ids.  dlogits = (softmax - onehot) / batch.
struct CrossEntropyResult {
    double loss = 0.0;
    Matrix dlogits;
};
CrossEntropyResult cross_entropy(const Matrix& logits, const std::vector<int>& labels);

// ---------------------------------------------------------------------------
// SGD with classical momentum and decoupled L2 weight decay folded into the
// gradient:  v <- momentum v + g + decay w;  w <- w - lr v.
// Velocity buffers are created lazily on the first step.
// ---------------------------------------------------------------------------
struct OptimizerState {
    double learning_rate = 0.01;
    double momentum = 0.0;
    double weight_decay = 0.0;
    std::vector<Matrix> weight_velocity;
    std::vector<Matrix> bias_velocity;

    void validate() const;
};

void sgd_step(MlpModel& model, const GradSet& grads, OptimizerState& opt);

// --- evaluation and flattening helpers --------------------------------------

struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
};
EvalResult evaluate(const MlpModel& model, const Matrix& features, const std::vector<int>& labels);

std::size_t parameter_count(const MlpModel& model);

// Row-major weight entries followed by bias entries, one layer at a time.
std::vector<double> flatten(const MlpModel& model);

// Same layout for a single layer.
std::vector<double> flatten_layer(const DenseLayer& layer);
std::vector<double> flatten_layer(const Matrix& weight_grad, const Matrix& bias_grad);

std::vector<double> flatten(const GradSet& grads);

}  // namespace fedalign

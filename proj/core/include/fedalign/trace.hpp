#pragma once

#include <optional>
#include <set>
#include <vector>

#include "fedalign/feedback.hpp"
#include "fedalign/matrix.hpp"

namespace fedalign {

// ---------------------------------------------------------------------------
// Per-step recordings made during trace-mode local training, kept per layer.
// "pre" snapshots are the values the backward pass actually used at that
// step; "post" snapshots are taken after the SGD update and (for feedback
// layers) after the rescale that follows the batch.
// ---------------------------------------------------------------------------
struct LayerStepTrace {
    Matrix input;    // h_l fed into the layer (in x batch)
    Matrix fprime;   // f'(z_l) (out x batch)
    Matrix delta;    // error signal delta_l used for this layer's gradients
    Matrix weight;   // w_l before the step
    std::optional<Matrix> feedback;       // B_l before the step, if l is a feedback layer
    Matrix weight_post;                   // w_l after the step
    std::optional<Matrix> feedback_post;  // B_l after the post-step rescale
};

struct StepTrace {
    std::vector<LayerStepTrace> layers;  // index l-1 holds layer l
};

// Everything recorded for one client in one round of a trace-mode run.
struct ClientTrace {
    int client_id = 0;
    double eta = 0.0;                  // learning rate used this round
    FeedbackMode mode = FeedbackMode::GlobalWeights;
    std::set<int> fa_layers;           // 1-based
    std::vector<Matrix> global_reference;  // round-start global weights, per layer
    std::vector<Matrix> start_weights;     // local weights at k = 0 (== global)
    std::vector<Matrix> final_weights;     // local weights after the last step
    std::vector<StepTrace> steps;
};

}  // namespace fedalign

#pragma once

#include <cstdint>

#include "fedalign/nn.hpp"

namespace fedalign {

// ---------------------------------------------------------------------------
// Self-contained gradient oracle: random small MLPs are differentiated both
// analytically (backward_bp) and by central finite differences of the
// cross-entropy loss, parameter by parameter.  The same cases also audit the
// feedback-alignment collapse: with every feedback matrix equal to the
// forward weight, backward_fa must reproduce backward_bp.
// ---------------------------------------------------------------------------
struct GradCheckOptions {
    int cases = 50;
    double step = 1e-5;       // central-difference half-step
    std::uint64_t seed = 0;
    // Negative-control hook: perturbs one analytic gradient entry per case so
    // the harness itself can be shown to catch a broken backward pass.
    bool corrupt_backward = false;
};

struct GradCheckReport {
    int cases = 0;
    double max_relative_error = 0.0;       // analytic vs finite difference
    double max_collapse_residual = 0.0;    // backward_fa(B=W) vs backward_bp
    // Relative error uses |fd - analytic| / max(|fd|, |analytic|, 1).
    bool pass(double grad_tol = 1e-6, double collapse_tol = 1e-12) const {
        return max_relative_error < grad_tol && max_collapse_residual < collapse_tol;
    }
};

// Mean cross-entropy of the model on the given batch (the quantity the
// finite-difference probe evaluates).
double loss_at(const MlpModel& model, const Matrix& features, const std::vector<int>& labels);

GradCheckReport run_gradcheck(const GradCheckOptions& options);

}  // namespace fedalign

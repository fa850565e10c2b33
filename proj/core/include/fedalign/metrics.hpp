#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "fedalign/data.hpp"
#include "fedalign/feedback.hpp"
#include "fedalign/matrix.hpp"
#include "fedalign/nn.hpp"
#include "fedalign/trace.hpp"

namespace fedalign {

struct RoundRecord;  // federation.hpp

// ---------------------------------------------------------------------------
// Local drift: the mean distance between client updates and their mean,
//   H = (1/K) sum_i || u_i - mean(u) ||_2
// over flattened full-model updates.  Translation-invariant by construction.
// ---------------------------------------------------------------------------
double local_drift(const std::vector<std::vector<double>>& client_updates);

// Feature-space separation of labeled representations (one sample per
// column).  intra: mean distance of samples to their class centroid, averaged
// over classes.  inter: mean pairwise centroid distance.  separability =
// inter / intra, +infinity when intra is exactly 0.
struct RepresentationMetrics {
    double intra = 0.0;
    double inter = 0.0;
    double separability = 0.0;
};
RepresentationMetrics representation_metrics(const Matrix& features,
                                             const std::vector<int>& labels);

// Largest singular value via power iteration on A^T A (50 iterations,
// relative tolerance 1e-10).  When the iteration fails to settle, the
// Frobenius norm is returned instead -- a valid upper bound -- and
// `converged` is false so reports can flag the fallback.
struct SpectralNorm {
    double value = 0.0;
    bool converged = true;
};
SpectralNorm spectral_norm(const Matrix& m, int max_iterations = 50, double tol = 1e-10);

// ---------------------------------------------------------------------------
// Per-round drift-bound verification on recorded traces.  For every adjacent
// layer pair (l, l+1) the two clients' weight-delta divergence at layer l is
// compared against the sum of four per-step envelope terms:
//
//   error-signal divergence   x~ * ||op_i||_2 * ||delta_{i,l+1} - delta_{j,l+1}||
//   weight divergence         x~ * d~ * ||op_i - op_j||_2      (transpose-path runs)
//   rescale (|1-alpha|) term  x~ * d~ * ||B_i - B_j||_2        (rescaled feedback runs)
//   activation mismatch       x~ * d~ * ||f'(z_i,l) - f'(z_j,l)||_max * ||op_j||_2
//   input divergence          d~ * ||op_j||_2 * ||h_{i,l} - h_{j,l}||
//
// where op is the operator the backward pass actually applied at layer l+1
// (the weight transpose, or the feedback matrix for feedback layers), x~ and
// d~ are the empirical envelopes max||h_l|| and max||delta_{l+1}|| over both
// clients' covered steps, operator factors use spectral norms, and vector
// factors use Euclidean (Frobenius) norms.  The whole sum is scaled by the
// round's learning rate.  The derivation telescopes over local steps, so one
// row is emitted per step prefix: the row with steps = k compares the weight
// divergence accumulated after k steps against the k-term sum.  LHS <= RHS
// holds by construction whenever both traces come from plain-SGD local steps
// (momentum 0, weight decay 0).
// ---------------------------------------------------------------------------
enum class BoundMode { BP, FA, FARescaled };

struct BoundRow {
    BoundMode mode = BoundMode::BP;
    int layer = 0;          // 1-based l of the pair (l, l+1)
    int client_i = 0;
    int client_j = 0;
    int steps = 0;          // local steps covered: the bound for the prefix 1..steps
    double eta = 0.0;
    double lhs = 0.0;              // || Delta_i - Delta_j ||_F at layer l after `steps` steps
    double term_delta = 0.0;       // error-signal divergence term
    double term_weight = 0.0;      // weight/feedback divergence term
    double term_alpha = 0.0;       // |1 - alpha| rescale term
    double term_fprime = 0.0;      // activation mismatch term
    double term_input = 0.0;       // input divergence term
    double x_tilde = 0.0;
    double delta_tilde = 0.0;
    bool spectral_fallback = false;

    double rhs() const {
        return term_delta + term_weight + term_alpha + term_fprime + term_input;
    }
    double slack() const { return rhs() - lhs; }
};

// One row per adjacent layer pair per step prefix (pairs ordered by layer,
// prefixes by step).  Both traces must come from the same round: equal step
// counts, layer shapes, feedback layers, and learning rate.
std::vector<BoundRow> drift_bound_check(const ClientTrace& a, const ClientTrace& b);

// Rescale-invariant audit over recorded traces: after every batch of a
// GlobalWeights run, ||B_l||_F must match the local ||w_l||_F and B_l must
// point along the round-start global direction.
struct RescaleCheck {
    int steps_checked = 0;
    double max_norm_relative_deviation = 0.0;
    double max_direction_deviation = 0.0;
};
RescaleCheck check_rescale_invariant(const std::vector<std::vector<ClientTrace>>& traces);

// ---------------------------------------------------------------------------
// Empirical stand-ins for the analysis constants:
//   g_hat     max over sampled batches of || grad_fa - grad_bp ||_2
//   sigma_hat sqrt of the mean squared distance between stochastic and
//             full-shard gradients
//   gamma_hat sqrt( sum_i pi_i || grad_i - grad_bar ||^2 ) over full-shard
//             gradients, pi_i proportional to shard size
// ---------------------------------------------------------------------------
struct AssumptionEstimates {
    double g_hat = 0.0;
    double sigma_hat = 0.0;
    double gamma_hat = 0.0;
};

struct AssumptionOptions {
    int batch_size = 64;
    int batches_per_client = 4;
    std::uint64_t seed = 0;
};

AssumptionEstimates estimate_assumptions(const MlpModel& model, const Dataset& dataset,
                                         const std::vector<ClientShard>& shards,
                                         const FeedbackSet& feedback,
                                         const AssumptionOptions& options);

// Paired comparison of two runs over the same seeds: per-round drift
// reduction H_a - H_b and per-round evaluation accuracy difference b - a,
// plus their means.  Throws when the record lists differ in length.
struct DriftComparison {
    std::vector<double> drift_reduction;   // H_first - H_second, per round
    std::vector<double> accuracy_diff;     // acc_second - acc_first, per round
    double mean_drift_reduction = 0.0;
    double mean_accuracy_diff = 0.0;
};
DriftComparison compare_runs(const std::vector<RoundRecord>& baseline,
                             const std::vector<RoundRecord>& treatment);

inline constexpr double kSeparabilityInfinite = std::numeric_limits<double>::infinity();

}  // namespace fedalign

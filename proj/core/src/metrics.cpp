#include "fedalign/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fedalign/federation.hpp"
#include "fedalign/rng.hpp"

namespace fedalign {

double local_drift(const std::vector<std::vector<double>>& client_updates) {
    if (client_updates.empty()) {
        throw std::invalid_argument("local_drift: need at least one client update");
    }
    const std::size_t n = client_updates.front().size();
    for (const auto& u : client_updates) {
        if (u.size() != n) {
            throw std::invalid_argument("local_drift: client updates differ in length");
        }
    }
    std::vector<double> mean(n, 0.0);
    for (const auto& u : client_updates) {
        for (std::size_t k = 0; k < n; ++k) mean[k] += u[k];
    }
    for (double& v : mean) v /= static_cast<double>(client_updates.size());

    double acc = 0.0;
    for (const auto& u : client_updates) {
        double sq = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double d = u[k] - mean[k];
            sq += d * d;
        }
        acc += std::sqrt(sq);
    }
    return acc / static_cast<double>(client_updates.size());
}

RepresentationMetrics representation_metrics(const Matrix& features,
                                             const std::vector<int>& labels) {
    if (features.cols() != labels.size()) {
        throw std::invalid_argument("representation_metrics: got " +
                                    std::to_string(features.cols()) + " samples and " +
                                    std::to_string(labels.size()) + " labels");
    }
    if (labels.empty()) {
        throw std::invalid_argument("representation_metrics: empty sample set");
    }
    const std::size_t dim = features.rows();

    int max_label = 0;
    for (int y : labels) {
        if (y < 0) throw std::invalid_argument("representation_metrics: negative label");
        max_label = std::max(max_label, y);
    }
    const std::size_t classes = static_cast<std::size_t>(max_label) + 1;

    std::vector<std::vector<double>> centroids(classes, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(classes, 0);
    for (std::size_t s = 0; s < labels.size(); ++s) {
        const std::size_t c = static_cast<std::size_t>(labels[s]);
        ++counts[c];
        for (std::size_t r = 0; r < dim; ++r) centroids[c][r] += features(r, s);
    }
    for (std::size_t c = 0; c < classes; ++c) {
        if (counts[c] == 0) continue;
        for (double& v : centroids[c]) v /= static_cast<double>(counts[c]);
    }

    // intra: per-class mean distance to the class centroid, averaged over the
    // classes actually present.
    std::vector<double> class_spread(classes, 0.0);
    for (std::size_t s = 0; s < labels.size(); ++s) {
        const std::size_t c = static_cast<std::size_t>(labels[s]);
        double sq = 0.0;
        for (std::size_t r = 0; r < dim; ++r) {
            const double d = features(r, s) - centroids[c][r];
            sq += d * d;
        }
        class_spread[c] += std::sqrt(sq);
    }
    RepresentationMetrics out;
    std::size_t present = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        if (counts[c] == 0) continue;
        ++present;
        out.intra += class_spread[c] / static_cast<double>(counts[c]);
    }
    out.intra /= static_cast<double>(present);

    // inter: mean pairwise centroid distance.
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < classes; ++a) {
        if (counts[a] == 0) continue;
        for (std::size_t b = a + 1; b < classes; ++b) {
            if (counts[b] == 0) continue;
            double sq = 0.0;
            for (std::size_t r = 0; r < dim; ++r) {
                const double d = centroids[a][r] - centroids[b][r];
                sq += d * d;
            }
            out.inter += std::sqrt(sq);
            ++pairs;
        }
    }
    if (pairs > 0) out.inter /= static_cast<double>(pairs);

    out.separability = out.intra == 0.0 ? kSeparabilityInfinite : out.inter / out.intra;
    return out;
}

SpectralNorm spectral_norm(const Matrix& m, int max_iterations, double tol) {
    SpectralNorm out;
    if (m.size() == 0) return out;
    const double fro = frobenius_norm(m);
    if (fro == 0.0) return out;

    // Deterministic pseudo-random start vector: generic with respect to the
    // top right-singular subspace with probability one.
    Rng rng(0x9E3779B97F4A7C15ULL);
    std::vector<double> v(m.cols());
    double vnorm = 0.0;
    while (vnorm == 0.0) {
        for (double& x : v) x = rng.normal();
        double sq = 0.0;
        for (double x : v) sq += x * x;
        vnorm = std::sqrt(sq);
    }
    for (double& x : v) x /= vnorm;

    std::vector<double> u(m.rows());
    double sigma = 0.0;
    for (int it = 0; it < max_iterations; ++it) {
        // u = M v
        for (std::size_t r = 0; r < m.rows(); ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < m.cols(); ++c) acc += m(r, c) * v[c];
            u[r] = acc;
        }
        double usq = 0.0;
        for (double x : u) usq += x * x;
        const double estimate = std::sqrt(usq);
        if (estimate == 0.0) break;  // v landed in the null space: fall back

        // v = M^T u, renormalized
        for (std::size_t c = 0; c < m.cols(); ++c) {
            double acc = 0.0;
            for (std::size_t r = 0; r < m.rows(); ++r) acc += m(r, c) * u[r];
            v[c] = acc;
        }
        double vsq = 0.0;
        for (double x : v) vsq += x * x;
        const double wnorm = std::sqrt(vsq);
        if (wnorm == 0.0) break;
        for (double& x : v) x /= wnorm;

        if (it > 0 && std::abs(estimate - sigma) <= tol * std::max(estimate, 1e-300)) {
            out.value = estimate;
            out.converged = true;
            return out;
        }
        sigma = estimate;
    }
    out.value = fro;  // Frobenius norm: a valid upper bound on the spectral norm
    out.converged = false;
    return out;
}

namespace {

// The operator the backward pass applied at this layer: the feedback matrix
// where one was active, the weight otherwise.  (The transpose is applied; the
// spectral norm is transpose-invariant.)
const Matrix& backward_operator(const LayerStepTrace& layer) {
    return layer.feedback.has_value() ? *layer.feedback : layer.weight;
}

}  // namespace

std::vector<BoundRow> drift_bound_check(const ClientTrace& a, const ClientTrace& b) {
    if (a.steps.size() != b.steps.size()) {
        throw std::invalid_argument("drift_bound_check: traces differ in step count (" +
                                    std::to_string(a.steps.size()) + " vs " +
                                    std::to_string(b.steps.size()) + ")");
    }
    if (a.start_weights.size() != b.start_weights.size()) {
        throw std::invalid_argument("drift_bound_check: traces differ in layer count");
    }
    if (a.eta != b.eta) {
        throw std::invalid_argument("drift_bound_check: traces differ in learning rate");
    }
    if (a.fa_layers != b.fa_layers || a.mode != b.mode) {
        throw std::invalid_argument("drift_bound_check: traces differ in feedback setup");
    }
    const std::size_t L = a.start_weights.size();
    const std::size_t steps = a.steps.size();

    // The per-step divergence terms subtract error signals sample-for-sample,
    // so corresponding steps must carry equally sized batches (run with
    // max_batches_per_epoch low enough that no partial tail batch is reached).
    for (std::size_t k = 0; k < steps; ++k) {
        const std::size_t batch_a = a.steps[k].layers.front().input.cols();
        const std::size_t batch_b = b.steps[k].layers.front().input.cols();
        if (batch_a != batch_b) {
            throw std::invalid_argument(
                "drift_bound_check: batch sizes differ at step " + std::to_string(k + 1) +
                " (" + std::to_string(batch_a) + " vs " + std::to_string(batch_b) + ")");
        }
    }

    std::vector<BoundRow> rows;
    for (std::size_t l = 1; l < L; ++l) {  // 1-based pair (l, l+1); weights index l-1
        const bool feedback_pair = a.fa_layers.count(static_cast<int>(l + 1)) > 0;
        const BoundMode mode = !feedback_pair ? BoundMode::BP
                               : a.mode == FeedbackMode::GlobalWeights ? BoundMode::FARescaled
                                                                       : BoundMode::FA;

        // Running prefix state: envelopes, per-step term sums, fallback flag.
        double x_tilde = 0.0;
        double delta_tilde = 0.0;
        double sum_delta = 0.0;   // ||op_i||_2 * ||delta diff at l+1||
        double sum_op = 0.0;      // ||op_i - op_j||_2
        double sum_fprime = 0.0;  // ||f' diff at l||_max * ||op_j||_2
        double sum_input = 0.0;   // ||op_j||_2 * ||h diff at l||
        bool fallback = false;

        for (std::size_t k = 0; k < steps; ++k) {
            const LayerStepTrace& lo_i = a.steps[k].layers[l - 1];
            const LayerStepTrace& lo_j = b.steps[k].layers[l - 1];
            const LayerStepTrace& up_i = a.steps[k].layers[l];
            const LayerStepTrace& up_j = b.steps[k].layers[l];

            x_tilde = std::max({x_tilde, frobenius_norm(lo_i.input),
                                frobenius_norm(lo_j.input)});
            delta_tilde = std::max({delta_tilde, frobenius_norm(up_i.delta),
                                    frobenius_norm(up_j.delta)});

            const SpectralNorm op_i = spectral_norm(backward_operator(up_i));
            const SpectralNorm op_j = spectral_norm(backward_operator(up_j));
            const SpectralNorm op_diff =
                spectral_norm(sub(backward_operator(up_i), backward_operator(up_j)));
            if (!op_i.converged || !op_j.converged || !op_diff.converged) fallback = true;

            sum_delta += op_i.value * frobenius_norm(sub(up_i.delta, up_j.delta));
            sum_op += op_diff.value;
            sum_fprime += max_abs(sub(lo_i.fprime, lo_j.fprime)) * op_j.value;
            sum_input += op_j.value * frobenius_norm(sub(lo_i.input, lo_j.input));

            BoundRow row;
            row.mode = mode;
            row.layer = static_cast<int>(l);
            row.client_i = a.client_id;
            row.client_j = b.client_id;
            row.steps = static_cast<int>(k + 1);
            row.eta = a.eta;
            row.x_tilde = x_tilde;
            row.delta_tilde = delta_tilde;
            row.spectral_fallback = fallback;

            const Matrix prefix_i = sub(lo_i.weight_post, a.start_weights[l - 1]);
            const Matrix prefix_j = sub(lo_j.weight_post, b.start_weights[l - 1]);
            row.lhs = frobenius_norm(sub(prefix_i, prefix_j));

            row.term_delta = row.eta * x_tilde * sum_delta;
            const double op_term = row.eta * x_tilde * delta_tilde * sum_op;
            if (mode == BoundMode::FARescaled) {
                row.term_alpha = op_term;
            } else {
                row.term_weight = op_term;
            }
            row.term_fprime = row.eta * x_tilde * delta_tilde * sum_fprime;
            row.term_input = row.eta * delta_tilde * sum_input;
            rows.push_back(row);
        }
    }
    return rows;
}

RescaleCheck check_rescale_invariant(const std::vector<std::vector<ClientTrace>>& traces) {
    RescaleCheck out;
    for (const auto& round_traces : traces) {
        for (const ClientTrace& trace : round_traces) {
            if (trace.mode != FeedbackMode::GlobalWeights || trace.fa_layers.empty()) continue;
            for (const StepTrace& step : trace.steps) {
                for (int layer : trace.fa_layers) {
                    const std::size_t idx = static_cast<std::size_t>(layer - 1);
                    if (idx >= step.layers.size()) continue;
                    const LayerStepTrace& lt = step.layers[idx];
                    if (!lt.feedback_post.has_value()) continue;

                    const Matrix& fb = *lt.feedback_post;
                    const Matrix& w = lt.weight_post;
                    const Matrix& ref = trace.global_reference[idx];
                    const double w_norm = frobenius_norm(w);
                    const double ref_norm = frobenius_norm(ref);
                    const double fb_norm = frobenius_norm(fb);
                    if (w_norm == 0.0 || ref_norm == 0.0 || fb_norm == 0.0) continue;

                    out.max_norm_relative_deviation =
                        std::max(out.max_norm_relative_deviation,
                                 std::abs(fb_norm - w_norm) / w_norm);
                    const Matrix direction_gap =
                        sub(scale(1.0 / fb_norm, fb), scale(1.0 / ref_norm, ref));
                    out.max_direction_deviation = std::max(out.max_direction_deviation,
                                                           frobenius_norm(direction_gap));
                    ++out.steps_checked;
                }
            }
        }
    }
    return out;
}

namespace {

struct GatheredBatch {
    Matrix features;
    std::vector<int> labels;
};

// Materializes the given samples in the given index order.
GatheredBatch gather(const Dataset& dataset, const std::vector<std::size_t>& indices) {
    GatheredBatch out{Matrix(dataset.dim(), indices.size()), {}};
    out.labels.reserve(indices.size());
    for (std::size_t s = 0; s < indices.size(); ++s) {
        const std::size_t src = indices[s];
        for (std::size_t r = 0; r < dataset.dim(); ++r) {
            out.features(r, s) = dataset.features(r, src);
        }
        out.labels.push_back(dataset.labels[src]);
    }
    return out;
}

std::vector<double> bp_gradient(const MlpModel& model, const GatheredBatch& batch) {
    const ForwardTrace trace = forward(model, batch.features);
    const CrossEntropyResult ce = cross_entropy(trace.output, batch.labels);
    return flatten(backward_bp(model, trace, ce.dlogits));
}

double l2_difference(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

}  // namespace

AssumptionEstimates estimate_assumptions(const MlpModel& model, const Dataset& dataset,
                                         const std::vector<ClientShard>& shards,
                                         const FeedbackSet& feedback,
                                         const AssumptionOptions& options) {
    if (options.batch_size < 1) {
        throw std::invalid_argument("estimate_assumptions: batch_size must be >= 1");
    }
    if (options.batches_per_client < 1) {
        throw std::invalid_argument("estimate_assumptions: batches_per_client must be >= 1");
    }

    AssumptionEstimates out;
    Rng rng(mix_seed(options.seed, kEstimateStream));

    std::vector<std::vector<double>> full_gradients;
    std::vector<double> weights;
    double sq_noise = 0.0;
    std::size_t noise_samples = 0;

    for (const ClientShard& shard : shards) {
        if (shard.indices.empty()) continue;

        // Full-shard gradient in canonical ascending-index order.
        std::vector<std::size_t> canonical = shard.indices;
        std::sort(canonical.begin(), canonical.end());
        const GatheredBatch full = gather(dataset, canonical);
        std::vector<double> full_grad = bp_gradient(model, full);

        // Stochastic batches: shuffled draws, then canonical order inside the
        // batch so a batch spanning the whole shard reproduces the full-shard
        // gradient exactly.
        for (int bi = 0; bi < options.batches_per_client; ++bi) {
            std::vector<std::size_t> pool = canonical;
            rng.shuffle(pool);
            const std::size_t take =
                std::min(pool.size(), static_cast<std::size_t>(options.batch_size));
            std::vector<std::size_t> chosen(pool.begin(),
                                            pool.begin() + static_cast<std::ptrdiff_t>(take));
            std::sort(chosen.begin(), chosen.end());
            const GatheredBatch batch = gather(dataset, chosen);

            const ForwardTrace trace = forward(model, batch.features);
            const CrossEntropyResult ce = cross_entropy(trace.output, batch.labels);
            const std::vector<double> batch_grad = flatten(backward_bp(model, trace, ce.dlogits));

            const double noise = l2_difference(batch_grad, full_grad);
            sq_noise += noise * noise;
            ++noise_samples;

            if (!feedback.empty()) {
                const std::vector<double> fa_grad =
                    flatten(backward_fa(model, feedback, trace, ce.dlogits));
                out.g_hat = std::max(out.g_hat, l2_difference(fa_grad, batch_grad));
            }
        }

        weights.push_back(static_cast<double>(shard.indices.size()));
        full_gradients.push_back(std::move(full_grad));
    }

    if (full_gradients.empty()) {
        throw std::invalid_argument("estimate_assumptions: every shard is empty");
    }

    out.sigma_hat = std::sqrt(sq_noise / static_cast<double>(noise_samples));

    double total = 0.0;
    for (double w : weights) total += w;
    const std::size_t n = full_gradients.front().size();
    std::vector<double> mean(n, 0.0);
    for (std::size_t i = 0; i < full_gradients.size(); ++i) {
        const double pi = weights[i] / total;
        for (std::size_t k = 0; k < n; ++k) mean[k] += pi * full_gradients[i][k];
    }
    double gamma_sq = 0.0;
    for (std::size_t i = 0; i < full_gradients.size(); ++i) {
        const double pi = weights[i] / total;
        const double d = l2_difference(full_gradients[i], mean);
        gamma_sq += pi * d * d;
    }
    out.gamma_hat = std::sqrt(gamma_sq);
    return out;
}

DriftComparison compare_runs(const std::vector<RoundRecord>& baseline,
                             const std::vector<RoundRecord>& treatment) {
    if (baseline.size() != treatment.size()) {
        throw std::invalid_argument("compare_runs: record lists differ in length (" +
                                    std::to_string(baseline.size()) + " vs " +
                                    std::to_string(treatment.size()) + ")");
    }
    DriftComparison out;
    for (std::size_t r = 0; r < baseline.size(); ++r) {
        out.drift_reduction.push_back(baseline[r].drift - treatment[r].drift);
        out.accuracy_diff.push_back(treatment[r].eval_accuracy - baseline[r].eval_accuracy);
    }
    if (!out.drift_reduction.empty()) {
        for (double v : out.drift_reduction) out.mean_drift_reduction += v;
        out.mean_drift_reduction /= static_cast<double>(out.drift_reduction.size());
        for (double v : out.accuracy_diff) out.mean_accuracy_diff += v;
        out.mean_accuracy_diff /= static_cast<double>(out.accuracy_diff.size());
    }
    return out;
}

}  // namespace fedalign

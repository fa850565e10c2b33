#include "fedalign/gradcheck.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

#include "fedalign/feedback.hpp"
#include "fedalign/rng.hpp"

namespace fedalign {

double loss_at(const MlpModel& model, const Matrix& features, const std::vector<int>& labels) {
    const ForwardTrace trace = forward(model, features);
    return cross_entropy(trace.output, labels).loss;
}

namespace {

// ReLU has a kink at 0: a pre-activation within `margin` of it could change
// sign under the finite-difference perturbation and poison the comparison.
bool near_relu_kink(const MlpModel& model, const ForwardTrace& trace, double margin) {
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        if (model.layers[l].activation != ActivationKind::ReLU) continue;
        const Matrix& z = trace.preacts[l];
        for (std::size_t k = 0; k < z.size(); ++k) {
            if (std::abs(z.values()[k]) < margin) return true;
        }
    }
    return false;
}

struct Case {
    MlpModel model;
    Matrix features;
    std::vector<int> labels;
};

Case sample_case(Rng& rng) {
    constexpr double kKinkMargin = 1e-3;
    for (int attempt = 0; attempt < 200; ++attempt) {
        const int depth = 1 + static_cast<int>(rng.below(3));     // <= 3 layers
        const int classes = 2 + static_cast<int>(rng.below(4));   // 2..5
        std::vector<std::size_t> dims;
        dims.push_back(1 + rng.below(16));                        // input dim
        for (int l = 1; l < depth; ++l) dims.push_back(1 + rng.below(16));
        dims.push_back(static_cast<std::size_t>(classes));

        const ActivationKind hidden =
            rng.below(2) == 0 ? ActivationKind::ReLU : ActivationKind::Tanh;

        Case c{make_mlp(dims, hidden, rng), Matrix(0, 0), {}};
        const std::size_t batch = 1 + rng.below(8);
        c.features = Matrix(dims.front(), batch);
        for (std::size_t k = 0; k < c.features.size(); ++k) {
            c.features.values()[k] = rng.normal();
        }
        for (std::size_t s = 0; s < batch; ++s) {
            c.labels.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(classes))));
        }

        const ForwardTrace trace = forward(c.model, c.features);
        if (!near_relu_kink(c.model, trace, kKinkMargin)) return c;
    }
    throw std::runtime_error("gradcheck: could not sample a case clear of the ReLU kink");
}

}  // namespace

GradCheckReport run_gradcheck(const GradCheckOptions& options) {
    if (options.cases < 1) {
        throw std::invalid_argument("gradcheck: cases must be >= 1");
    }
    if (!(options.step > 0.0)) {
        throw std::invalid_argument("gradcheck: step must be positive");
    }

    Rng rng(mix_seed(options.seed, kInitStream));
    GradCheckReport report;
    report.cases = options.cases;

    for (int i = 0; i < options.cases; ++i) {
        Case c = sample_case(rng);

        const ForwardTrace trace = forward(c.model, c.features);
        const CrossEntropyResult ce = cross_entropy(trace.output, c.labels);
        GradSet analytic = backward_bp(c.model, trace, ce.dlogits);
        if (options.corrupt_backward) {
            analytic.weights[0](0, 0) += 1e-3;
        }

        // Central finite differences, one parameter at a time.
        for (std::size_t l = 0; l < c.model.layer_count(); ++l) {
            auto probe = [&](Matrix& param, const Matrix& grad) {
                for (std::size_t k = 0; k < param.size(); ++k) {
                    const double saved = param.values()[k];
                    param.values()[k] = saved + options.step;
                    const double up = loss_at(c.model, c.features, c.labels);
                    param.values()[k] = saved - options.step;
                    const double down = loss_at(c.model, c.features, c.labels);
                    param.values()[k] = saved;

                    const double fd = (up - down) / (2.0 * options.step);
                    const double an = grad.values()[k];
                    const double scale = std::max({std::abs(fd), std::abs(an), 1.0});
                    report.max_relative_error =
                        std::max(report.max_relative_error, std::abs(fd - an) / scale);
                }
            };
            probe(c.model.layers[l].weight, analytic.weights[l]);
            probe(c.model.layers[l].bias, analytic.biases[l]);
        }

        // Collapse audit: feedback matrices equal to the forward weights must
        // leave the backward pass unchanged.
        std::set<int> all_layers;
        for (std::size_t l = 2; l <= c.model.layer_count(); ++l) {
            all_layers.insert(static_cast<int>(l));
        }
        if (!all_layers.empty()) {
            const FeedbackSet fb =
                init_feedback(c.model, all_layers, FeedbackMode::GlobalNoRescale);
            const GradSet fa = backward_fa(c.model, fb, trace, ce.dlogits);
            const GradSet bp = backward_bp(c.model, trace, ce.dlogits);
            const std::vector<double> fa_flat = flatten(fa);
            const std::vector<double> bp_flat = flatten(bp);
            for (std::size_t k = 0; k < fa_flat.size(); ++k) {
                report.max_collapse_residual = std::max(report.max_collapse_residual,
                                                        std::abs(fa_flat[k] - bp_flat[k]));
            }
        }
    }
    return report;
}

}  // namespace fedalign

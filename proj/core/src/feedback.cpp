#include "fedalign/feedback.hpp"

#include <stdexcept>
#include <string>

namespace fedalign {

const Matrix& FeedbackSet::feedback_for(int layer) const {
    auto it = feedback.find(layer);
    if (it == feedback.end()) {
        throw std::out_of_range("FeedbackSet: no feedback matrix for layer " +
                                std::to_string(layer));
    }
    return it->second;
}

FeedbackSet init_feedback(const MlpModel& global, const std::set<int>& fa_layers,
                          FeedbackMode mode, Rng* rng, const std::vector<Matrix>* bank) {
    global.validate();
    const int L = static_cast<int>(global.layer_count());

    FeedbackSet fb;
    fb.mode = mode;
    fb.fa_layers = fa_layers;
    for (int layer : fa_layers) {
        if (layer < 1 || layer > L) {
            throw std::invalid_argument("init_feedback: layer " + std::to_string(layer) +
                                        " out of range for a " + std::to_string(L) +
                                        "-layer model");
        }
        const Matrix& w = global.layers[static_cast<std::size_t>(layer - 1)].weight;
        fb.global_reference[layer] = w;
        switch (mode) {
            case FeedbackMode::GlobalWeights:
            case FeedbackMode::GlobalNoRescale:
                fb.feedback[layer] = w;
                break;
            case FeedbackMode::RandomFixed:
                if (bank != nullptr) {
                    if (bank->size() != static_cast<std::size_t>(L)) {
                        throw std::invalid_argument(
                            "init_feedback: feedback bank holds " +
                            std::to_string(bank->size()) + " matrices for a " +
                            std::to_string(L) + "-layer model");
                    }
                    const Matrix& b = (*bank)[static_cast<std::size_t>(layer - 1)];
                    if (!b.same_shape(w)) {
                        throw ShapeError("init_feedback: bank layer " + std::to_string(layer),
                                         b.rows(), b.cols(), w.rows(), w.cols());
                    }
                    fb.feedback[layer] = b;
                } else if (rng != nullptr) {
                    fb.feedback[layer] = glorot_uniform(w.rows(), w.cols(), *rng);
                } else {
                    throw std::invalid_argument(
                        "init_feedback: RandomFixed needs an rng or a pre-sampled bank");
                }
                break;
        }
    }
    return fb;
}

std::vector<Matrix> sample_feedback_bank(const MlpModel& topology, Rng& rng) {
    topology.validate();
    std::vector<Matrix> bank;
    bank.reserve(topology.layer_count());
    for (const DenseLayer& layer : topology.layers) {
        bank.push_back(glorot_uniform(layer.weight.rows(), layer.weight.cols(), rng));
    }
    return bank;
}

void rescale_feedback(FeedbackSet& fb, const MlpModel& local) {
    if (fb.mode != FeedbackMode::GlobalWeights) return;
    const int L = static_cast<int>(local.layer_count());
    for (int layer : fb.fa_layers) {
        if (layer < 1 || layer > L) {
            throw std::invalid_argument("rescale_feedback: layer " + std::to_string(layer) +
                                        " out of range for a " + std::to_string(L) +
                                        "-layer model");
        }
        const Matrix& reference = fb.global_reference.at(layer);
        const double ref_norm = frobenius_norm(reference);
        if (ref_norm == 0.0) {
            fb.warnings.push_back("rescale_feedback: layer " + std::to_string(layer) +
                                  " has a zero-norm global reference; rescale skipped");
            continue;
        }
        const Matrix& w = local.layers[static_cast<std::size_t>(layer - 1)].weight;
        if (!w.same_shape(reference)) {
            throw ShapeError("rescale_feedback: layer " + std::to_string(layer),
                             w.rows(), w.cols(), reference.rows(), reference.cols());
        }
        fb.feedback[layer] = scale(frobenius_norm(w) / ref_norm, reference);
    }
}

}  // namespace fedalign

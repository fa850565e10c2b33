#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "fedalign/matrix.hpp"
#include "fedalign/nn.hpp"
#include "fedalign/rng.hpp"

namespace fedalign {

// How the feedback matrices are produced and maintained.
//   GlobalWeights   - B_l starts as the round-start global weight W_l and is
//                     rescaled toward the local weight norm after every batch.
//   RandomFixed     - B_l is a random matrix sampled once (same initializer
//                     family as the weights) and never changed.
//   GlobalNoRescale - B_l stays pinned at the round-start global weight.
enum class FeedbackMode { GlobalWeights, RandomFixed, GlobalNoRescale };

// ---------------------------------------------------------------------------
// Per-client feedback state for one round.  Layer indices are 1-based, i.e.
// fa_layers is a subset of {1, ..., L}.  global_reference caches the
// round-start global weights the rescale rule refers back to; it never tracks
// the evolving B.
// ---------------------------------------------------------------------------
struct FeedbackSet {
    FeedbackMode mode = FeedbackMode::GlobalWeights;
    std::set<int> fa_layers;
    std::map<int, Matrix> feedback;          // B_l for l in fa_layers
    std::map<int, Matrix> global_reference;  // W_l at round start
    std::vector<std::string> warnings;

    bool empty() const { return fa_layers.empty(); }
    bool has(int layer) const { return fa_layers.count(layer) != 0; }
    const Matrix& feedback_for(int layer) const;
};

// Builds the feedback state for a round.  For GlobalWeights/GlobalNoRescale
// the feedback matrices are copies of the global weights.  For RandomFixed
// they are taken from `bank` when given (one matrix per layer, sampled once
// per run) or sampled fresh from `rng` otherwise; one of the two must be
// provided.  Throws on out-of-range layers or shape mismatches.
FeedbackSet init_feedback(const MlpModel& global, const std::set<int>& fa_layers,
                          FeedbackMode mode, Rng* rng = nullptr,
                          const std::vector<Matrix>* bank = nullptr);

// One random feedback matrix per layer, drawn from the weight-initializer
// family.  Sampled once per run so RandomFixed matrices persist across rounds.
std::vector<Matrix> sample_feedback_bank(const MlpModel& topology, Rng& rng);

// Adaptive rescaling, applied after every local batch update in
// GlobalWeights mode:  B_l <- (||w_l||_F / ||W_l||_F) * W_l  where w_l is the
// current local weight and W_l the cached round-start global weight.  Other
// modes are a no-op.  A degenerate reference (||W_l||_F = 0) skips the layer
// and records a warning instead of dividing by zero.
void rescale_feedback(FeedbackSet& fb, const MlpModel& local);

}  // namespace fedalign

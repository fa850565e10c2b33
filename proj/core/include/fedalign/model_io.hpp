#pragma once

#include <string>

#include "fedalign/nn.hpp"

namespace fedalign {

// Flat JSON serialization of an MLP: a list of layers, each with its shape,
// activation name, and row-major weight / bias entries.  Doubles round-trip
// exactly.  model_from_json validates shapes and throws std::runtime_error on
// malformed input.
std::string model_to_json(const MlpModel& model);
MlpModel model_from_json(const std::string& text);

std::string activation_name(ActivationKind kind);
ActivationKind activation_from_name(const std::string& name);

}  // namespace fedalign

#include "fedalign/model_io.hpp"

#include <stdexcept>

#include <nlohmann/json.hpp>

namespace fedalign {

using nlohmann::json;

std::string activation_name(ActivationKind kind) {
    switch (kind) {
        case ActivationKind::ReLU: return "relu";
        case ActivationKind::Tanh: return "tanh";
        case ActivationKind::Identity: return "identity";
    }
    throw std::logic_error("activation_name: unknown kind");
}

ActivationKind activation_from_name(const std::string& name) {
    if (name == "relu") return ActivationKind::ReLU;
    if (name == "tanh") return ActivationKind::Tanh;
    if (name == "identity") return ActivationKind::Identity;
    throw std::runtime_error("unknown activation '" + name +
                             "' (expected relu, tanh, or identity)");
}

std::string model_to_json(const MlpModel& model) {
    model.validate();
    json layers = json::array();
    for (const DenseLayer& layer : model.layers) {
        json entry;
        entry["out"] = layer.weight.rows();
        entry["in"] = layer.weight.cols();
        entry["activation"] = activation_name(layer.activation);
        entry["weight"] = layer.weight.values();
        entry["bias"] = layer.bias.values();
        layers.push_back(std::move(entry));
    }
    json doc;
    doc["layers"] = std::move(layers);
    return doc.dump();
}

MlpModel model_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& err) {
        throw std::runtime_error(std::string("model_from_json: invalid JSON: ") + err.what());
    }
    if (!doc.is_object() || !doc.contains("layers") || !doc["layers"].is_array()) {
        throw std::runtime_error("model_from_json: expected an object with a 'layers' array");
    }
    MlpModel model;
    for (const json& entry : doc["layers"]) {
        if (!entry.is_object() || !entry.contains("out") || !entry.contains("in") ||
            !entry.contains("activation") || !entry.contains("weight") ||
            !entry.contains("bias")) {
            throw std::runtime_error(
                "model_from_json: each layer needs out, in, activation, weight, bias");
        }
        const std::size_t out = entry["out"].get<std::size_t>();
        const std::size_t in = entry["in"].get<std::size_t>();
        const auto weight = entry["weight"].get<std::vector<double>>();
        const auto bias = entry["bias"].get<std::vector<double>>();
        if (weight.size() != out * in) {
            throw std::runtime_error("model_from_json: weight entry count " +
                                     std::to_string(weight.size()) + " does not match " +
                                     std::to_string(out) + "x" + std::to_string(in));
        }
        if (bias.size() != out) {
            throw std::runtime_error("model_from_json: bias entry count " +
                                     std::to_string(bias.size()) + " does not match out=" +
                                     std::to_string(out));
        }
        DenseLayer layer;
        layer.weight = Matrix(out, in);
        layer.weight.values() = weight;
        layer.bias = Matrix(out, 1);
        layer.bias.values() = bias;
        layer.activation = activation_from_name(entry["activation"].get<std::string>());
        model.layers.push_back(std::move(layer));
    }
    model.validate();
    return model;
}

}  // namespace fedalign

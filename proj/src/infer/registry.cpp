#include "ecg/infer/registry.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"

#include "ecg/infer/forward.hpp"

namespace ecg::infer {

using nlohmann::json;

std::vector<ModelDescriptor> parse_model_descriptors(const json& models,
                                                     const std::filesystem::path& base_dir) {
  if (!models.is_array()) throw Error(ErrorCode::ParseError, "model list must be an array");
  std::vector<ModelDescriptor> out;
  for (const auto& m : models) {
    try {
      ModelDescriptor d;
      d.model_id = m.at("model_id").get<std::string>();
      d.kind = parse_model_kind(m.at("kind").get<std::string>());
      std::filesystem::path weights = m.at("weight_file").get<std::string>();
      d.weight_file = weights.is_absolute() ? weights : base_dir / weights;
      d.threshold = m.value("threshold", 0.5);
      if (!(d.threshold > 0.0 && d.threshold < 1.0)) {
        throw Error(ErrorCode::ParseError, "threshold of " + d.model_id + " must be in (0,1)");
      }
      out.push_back(std::move(d));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, std::string("bad registry entry: ") + e.what());
    }
  }
  return out;
}

std::vector<ModelDescriptor> read_registry_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::NotFound, "cannot open model registry " + path.string());
  const json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_object() || !doc.contains("models") ||
      !doc["models"].is_array()) {
    throw Error(ErrorCode::ParseError, "model registry must hold a 'models' array");
  }
  return parse_model_descriptors(doc["models"], path.parent_path());
}

ModelRegistry::ModelRegistry(std::vector<ModelDescriptor> descriptors) {
  std::sort(descriptors.begin(), descriptors.end(),
            [](const auto& a, const auto& b) { return a.model_id < b.model_id; });
  for (auto& d : descriptors) {
    Slot slot;
    slot.descriptor = d;
    try {
      slot.model = std::make_shared<const LoadedModel>(load_model(d));
    } catch (const Error& e) {
      slot.load_error = e;
    }
    slots_.push_back(std::move(slot));
  }
}

ModelRegistry ModelRegistry::from_file(const std::filesystem::path& path) {
  return ModelRegistry(read_registry_file(path));
}

std::vector<ModelOutcome> predict_all(const NormalizedWindow& window,
                                      const ModelRegistry& registry) {
  if (registry.empty()) throw Error(ErrorCode::BadRequest, "model registry is empty");
  std::vector<ModelOutcome> out;
  out.reserve(registry.slots().size());
  for (const auto& slot : registry.slots()) {
    ModelOutcome r;
    r.model_id = slot.descriptor.model_id;
    r.threshold = slot.descriptor.threshold;
    if (!slot.model) {
      r.error = slot.load_error;
      out.push_back(std::move(r));
      continue;
    }
    try {
      const auto fwd = cnn_forward(slot.model->cnn, window);
      r.probability = slot.model->ensemble
                          ? ensemble_forward(*slot.model->ensemble, fwd.embedding)
                          : fwd.probability;
    } catch (const Error& e) {
      r.error = e;
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace ecg::infer

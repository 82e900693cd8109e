#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ecg/core/error.hpp"
#include "ecg/core/types.hpp"
#include "ecg/infer/model.hpp"

namespace ecg::infer {

// Registry file:
//   {"models": [{"model_id": "lvsd", "kind": "cnn",
//                "weight_file": "lvsd.ecgw", "threshold": 0.5}, ...]}
// Relative weight paths resolve against the registry file's directory.
std::vector<ModelDescriptor> read_registry_file(const std::filesystem::path& path);
// The "models" array on its own; relative paths resolve against `base_dir`.
std::vector<ModelDescriptor> parse_model_descriptors(const nlohmann::json& models,
                                                     const std::filesystem::path& base_dir);

// Loads every descriptor once. A model that fails to load stays in the
// registry as a failed slot, so its error is reported per prediction instead
// of taking the other models down with it.
class ModelRegistry {
 public:
  struct Slot {
    ModelDescriptor descriptor;
    std::shared_ptr<const LoadedModel> model;  // null when loading failed
    std::optional<Error> load_error;
  };

  ModelRegistry() = default;
  explicit ModelRegistry(std::vector<ModelDescriptor> descriptors);
  static ModelRegistry from_file(const std::filesystem::path& path);

  // Ordered by model_id.
  const std::vector<Slot>& slots() const noexcept { return slots_; }
  bool empty() const noexcept { return slots_.empty(); }

 private:
  std::vector<Slot> slots_;
};

struct ModelOutcome {
  std::string model_id;
  double threshold = 0.5;
  std::optional<double> probability;
  std::optional<Error> error;

  bool ok() const noexcept { return probability.has_value(); }
};

// One outcome per registered model, ordered by model_id. The cnn+ensemble
// model feeds the CNN embedding into its tree ensemble. Throws BadRequest
// for an empty registry; per-model failures are returned, never thrown.
std::vector<ModelOutcome> predict_all(const NormalizedWindow& window,
                                      const ModelRegistry& registry);

}  // namespace ecg::infer

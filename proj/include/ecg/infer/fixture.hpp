#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ecg/infer/model.hpp"
#include "ecg/infer/weight_file.hpp"

namespace ecg::infer {

// Stand-in weights: no trained parameters are shipped, so test and demo
// models are drawn from a fixed-seed PRNG. Batch-norm running statistics
// are set from one pass over a seeded synthetic calibration signal, which
// keeps activations well scaled through all seven blocks.
struct FixtureSpec {
  std::string model_id;
  ModelKind kind = ModelKind::Cnn;
  std::uint64_t seed = 1;
  LayerPlan plan;
  int tree_count = 24;
};

WeightFile make_fixture_model(const FixtureSpec& spec);

// Seeded, z-scored synthetic signal used for calibration.
std::vector<double> calibration_signal(std::uint64_t seed, int length);

// Writes lvsd/hcm/structural weight files plus registry.json into `dir`.
// Returns the registry path.
std::filesystem::path write_fixture_registry(const std::filesystem::path& dir,
                                             const LayerPlan& plan = {});

}  // namespace ecg::infer

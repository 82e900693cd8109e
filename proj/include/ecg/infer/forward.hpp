#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "ecg/core/types.hpp"
#include "ecg/infer/model.hpp"

namespace ecg::infer {

// Channel-major activation: data[c * length + t].
struct Activation {
  int channels = 0;
  int length = 0;
  std::vector<double> data;

  std::span<const double> channel(int c) const {
    return {data.data() + static_cast<std::size_t>(c) * length,
            static_cast<std::size_t>(length)};
  }
};

// Individual stages, exposed so each can be checked against a direct oracle.
namespace layers {

// Cross-correlation with stride 1 and "same" padding: pad_left = (k-1)/2,
// pad_right = k-1-pad_left, zeros outside the signal.
Activation conv1d_same(const Activation& in, const ConvLayer& layer);
// (x - mean) / sqrt(var + eps) * gamma + beta, per channel.
void batch_norm(Activation& a, const BatchNorm& bn, double eps);
void batch_norm(std::vector<double>& v, const BatchNorm& bn, double eps);
void relu(std::vector<double>& v);
// Non-overlapping max over `pool` samples; trailing remainder dropped.
Activation max_pool(const Activation& in, int pool);
// Time-major flatten: out[t * channels + c].
std::vector<double> flatten(const Activation& a);
std::vector<double> dense(std::span<const double> in, const std::vector<double>& weight,
                          const std::vector<double>& bias, int out_dim);

}  // namespace layers

struct ForwardOutput {
  double logit = 0.0;
  double probability = 0.5;
  // Post-activation output of the second hidden dense block.
  std::vector<double> embedding;
};

// Full deterministic forward pass. `input.size()` must equal
// model.input_length. Throws NumericError naming the first layer that
// produced a non-finite value.
ForwardOutput cnn_forward(const CnnModel& model, std::span<const double> input);
ForwardOutput cnn_forward(const CnnModel& model, const NormalizedWindow& window);

// Leaf value reached by walking a tree. A feature at or below the node
// threshold goes left (ties go left); a strictly greater one goes right.
double tree_score(const Tree& tree, std::span<const double> features);

// sigmoid(base_score + sum of tree leaves). Throws ModelShapeError when the
// embedding dimension differs from the ensemble's.
double ensemble_forward(const TreeEnsemble& ensemble, std::span<const double> embedding);

}  // namespace ecg::infer

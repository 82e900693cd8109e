#pragma once

// Model containers for the single-lead ECG classifiers.
//
// CNN template: seven blocks of conv (stride 1, same padding) -> batch norm ->
// ReLU -> max-pool(2), flatten (time-major: index = t * channels + c), two
// blocks of dense -> batch norm -> ReLU -> dropout, then dense(1) -> sigmoid.
// The input is a (5000, 1, 1) tensor; its degenerate second axis makes the
// "2-D" convolutions plain 1-D ones.
//
// Tensor layouts: conv kernel [out][in][k], dense weight [out][in].

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ecg::infer {

inline constexpr int kConvLayerCount = 7;
inline constexpr int kDenseLayerCount = 2;
inline constexpr int kDefaultInputLength = 5000;
inline constexpr double kDefaultBnEpsilon = 1e-5;
inline constexpr double kDefaultDropoutRate = 0.532;

struct BatchNorm {
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> mean;
  std::vector<double> var;

  static BatchNorm identity(std::size_t n);
};

struct ConvLayer {
  std::string name;
  int in_channels = 1;
  int out_channels = 1;
  int kernel_length = 1;
  int stride = 1;
  int pool_length = 2;
  std::vector<double> kernel;
  std::vector<double> bias;
  BatchNorm bn;
};

struct DenseLayer {
  std::string name;
  int in_dim = 1;
  int out_dim = 1;
  double dropout_rate = kDefaultDropoutRate;
  std::vector<double> weight;
  std::vector<double> bias;
  BatchNorm bn;
};

struct OutputLayer {
  std::string name = "output";
  int in_dim = 1;
  int out_dim = 1;
  std::vector<double> weight;
  double bias = 0.0;
};

struct CnnModel {
  std::string model_id;
  int input_length = kDefaultInputLength;
  double bn_epsilon = kDefaultBnEpsilon;
  std::vector<ConvLayer> conv;
  std::vector<DenseLayer> dense;
  OutputLayer output;

  // Sequence length after the last pooling stage; 0 if the chain collapses.
  int final_length() const;
  int embedding_dim() const;
};

// A node is a leaf when `feature` is negative.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double leaf = 0.0;

  bool is_leaf() const noexcept { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
};

struct TreeEnsemble {
  std::string model_id;
  int feature_dim = 0;
  double base_score = 0.0;
  std::vector<Tree> trees;
};

enum class ModelKind { Cnn, CnnEnsemble };

std::string_view to_string(ModelKind kind) noexcept;
ModelKind parse_model_kind(std::string_view text);

struct ModelDescriptor {
  std::string model_id;
  ModelKind kind = ModelKind::Cnn;
  std::filesystem::path weight_file;
  double threshold = 0.5;
};

struct LoadedModel {
  ModelDescriptor descriptor;
  CnnModel cnn;
  std::optional<TreeEnsemble> ensemble;
};

// Default layer plan.
struct LayerPlan {
  int input_length = kDefaultInputLength;
  std::vector<int> conv_channels{16, 16, 32, 32, 64, 64, 64};
  std::vector<int> kernel_lengths{7, 7, 5, 5, 3, 3, 3};
  std::vector<int> dense_widths{64, 32};
  double dropout_rate = kDefaultDropoutRate;
};

// Structural checks; throws Error(ModelShapeError, ..., layer_name).
void validate(const CnnModel& model);
void validate(const TreeEnsemble& ensemble, int embedding_dim);

// Reads the descriptor's weight file, validates everything, and checks that
// the file's kind matches the descriptor. Throws NotFound for a missing file
// and ModelShapeError for any structural problem.
LoadedModel load_model(const ModelDescriptor& descriptor);

}  // namespace ecg::infer

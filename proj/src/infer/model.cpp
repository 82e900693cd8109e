#include "ecg/infer/model.hpp"

#include <cmath>
#include <system_error>

#include "ecg/core/error.hpp"
#include "ecg/infer/weight_file.hpp"

namespace ecg::infer {

namespace {

[[noreturn]] void shape_error(const std::string& layer, const std::string& what) {
  throw Error(ErrorCode::ModelShapeError, layer + ": " + what, layer);
}

void check_size(const std::string& layer, const char* tensor, std::size_t got,
                std::size_t want) {
  if (got != want) {
    shape_error(layer, std::string(tensor) + " has " + std::to_string(got) +
                           " values, expected " + std::to_string(want));
  }
}

void check_bn(const std::string& layer, const BatchNorm& bn, std::size_t n) {
  check_size(layer, "bn_gamma", bn.gamma.size(), n);
  check_size(layer, "bn_beta", bn.beta.size(), n);
  check_size(layer, "bn_mean", bn.mean.size(), n);
  check_size(layer, "bn_var", bn.var.size(), n);
  for (double v : bn.var) {
    if (!(v >= 0.0)) shape_error(layer, "negative batch-norm variance");
  }
}

}  // namespace

BatchNorm BatchNorm::identity(std::size_t n) {
  return BatchNorm{std::vector<double>(n, 1.0), std::vector<double>(n, 0.0),
                   std::vector<double>(n, 0.0), std::vector<double>(n, 1.0)};
}

int CnnModel::final_length() const {
  int len = input_length;
  for (const auto& c : conv) {
    len = c.pool_length > 0 ? len / c.pool_length : 0;
  }
  return len;
}

int CnnModel::embedding_dim() const {
  return dense.empty() ? 0 : dense.back().out_dim;
}

std::string_view to_string(ModelKind kind) noexcept {
  return kind == ModelKind::Cnn ? "cnn" : "cnn+ensemble";
}

ModelKind parse_model_kind(std::string_view text) {
  if (text == "cnn") return ModelKind::Cnn;
  if (text == "cnn+ensemble") return ModelKind::CnnEnsemble;
  throw Error(ErrorCode::BadRequest, "unknown model kind '" + std::string(text) + "'");
}

void validate(const CnnModel& m) {
  if (m.input_length <= 0) shape_error("input", "input length must be positive");
  if (!(m.bn_epsilon > 0.0)) shape_error("header", "bn_epsilon must be positive");
  if (m.conv.size() != static_cast<std::size_t>(kConvLayerCount)) {
    shape_error("header", "expected 7 convolutional layers, found " +
                              std::to_string(m.conv.size()));
  }
  if (m.dense.size() != static_cast<std::size_t>(kDenseLayerCount)) {
    shape_error("header", "expected 2 dense layers, found " + std::to_string(m.dense.size()));
  }

  int channels = 1;
  int length = m.input_length;
  for (const auto& c : m.conv) {
    if (c.in_channels != channels) {
      shape_error(c.name, "expects " + std::to_string(c.in_channels) +
                              " input channels but receives " + std::to_string(channels));
    }
    if (c.out_channels <= 0 || c.kernel_length <= 0) {
      shape_error(c.name, "non-positive dimension");
    }
    if (c.stride != 1) shape_error(c.name, "only stride 1 is supported");
    if (c.pool_length != 2) shape_error(c.name, "pool length must be 2");
    check_size(c.name, "kernel", c.kernel.size(),
               static_cast<std::size_t>(c.out_channels) * c.in_channels * c.kernel_length);
    check_size(c.name, "bias", c.bias.size(), static_cast<std::size_t>(c.out_channels));
    check_bn(c.name, c.bn, static_cast<std::size_t>(c.out_channels));
    channels = c.out_channels;
    length /= c.pool_length;
    if (length < 1) shape_error(c.name, "sequence length collapses to zero");
  }

  int width = length * channels;
  for (const auto& d : m.dense) {
    if (d.in_dim != width) {
      shape_error(d.name, "expects " + std::to_string(d.in_dim) + " inputs but receives " +
                              std::to_string(width));
    }
    if (d.out_dim <= 0) shape_error(d.name, "non-positive width");
    if (!(d.dropout_rate >= 0.0 && d.dropout_rate < 1.0)) {
      shape_error(d.name, "dropout rate outside [0, 1)");
    }
    check_size(d.name, "weight", d.weight.size(),
               static_cast<std::size_t>(d.out_dim) * d.in_dim);
    check_size(d.name, "bias", d.bias.size(), static_cast<std::size_t>(d.out_dim));
    check_bn(d.name, d.bn, static_cast<std::size_t>(d.out_dim));
    width = d.out_dim;
  }

  if (m.output.in_dim != width) {
    shape_error(m.output.name, "expects " + std::to_string(m.output.in_dim) +
                                   " inputs but receives " + std::to_string(width));
  }
  if (m.output.out_dim != 1) shape_error(m.output.name, "output layer must have 1 unit");
  check_size(m.output.name, "weight", m.output.weight.size(),
             static_cast<std::size_t>(m.output.in_dim));
}

void validate(const TreeEnsemble& e, int embedding_dim) {
  const std::string layer = "ensemble";
  if (e.feature_dim != embedding_dim) {
    shape_error(layer, "declares " + std::to_string(e.feature_dim) +
                           " features but the embedding has " + std::to_string(embedding_dim));
  }
  if (!std::isfinite(e.base_score)) shape_error(layer, "non-finite base score");
  for (std::size_t t = 0; t < e.trees.size(); ++t) {
    const auto& nodes = e.trees[t].nodes;
    const auto where = "tree " + std::to_string(t);
    if (nodes.empty()) shape_error(layer, where + " has no nodes");
    const int n = static_cast<int>(nodes.size());
    for (int i = 0; i < n; ++i) {
      const auto& node = nodes[static_cast<std::size_t>(i)];
      if (node.is_leaf()) {
        if (!std::isfinite(node.leaf)) shape_error(layer, where + " has a non-finite leaf");
        continue;
      }
      if (node.feature >= embedding_dim) {
        shape_error(layer, where + " references feature " + std::to_string(node.feature) +
                               " >= embedding dimension " + std::to_string(embedding_dim));
      }
      // Children point forward so every walk terminates.
      if (node.left <= i || node.left >= n || node.right <= i || node.right >= n) {
        shape_error(layer, where + " has an out-of-order child index at node " +
                               std::to_string(i));
      }
      if (!std::isfinite(node.threshold)) {
        shape_error(layer, where + " has a non-finite threshold");
      }
    }
  }
}

LoadedModel load_model(const ModelDescriptor& descriptor) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(descriptor.weight_file, ec)) {
    throw Error(ErrorCode::NotFound,
                "weight file " + descriptor.weight_file.string() + " does not exist",
                descriptor.model_id);
  }
  auto file = read_weight_file(descriptor.weight_file);
  if (file.kind != descriptor.kind) {
    shape_error("header", "file kind " + std::string(to_string(file.kind)) +
                              " does not match descriptor kind " +
                              std::string(to_string(descriptor.kind)));
  }
  if (descriptor.kind == ModelKind::CnnEnsemble && !file.ensemble) {
    shape_error("ensemble", "cnn+ensemble model has no ensemble section");
  }
  if (!(descriptor.threshold > 0.0 && descriptor.threshold < 1.0)) {
    throw Error(ErrorCode::BadRequest, "threshold must lie in (0, 1)", descriptor.model_id);
  }
  LoadedModel out;
  out.descriptor = descriptor;
  out.cnn = std::move(file.cnn);
  out.cnn.model_id = descriptor.model_id;
  if (descriptor.kind == ModelKind::CnnEnsemble) out.ensemble = std::move(file.ensemble);
  return out;
}

}  // namespace ecg::infer

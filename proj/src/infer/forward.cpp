#include "ecg/infer/forward.hpp"

#include <algorithm>
#include <cmath>

#include "ecg/core/error.hpp"
#include "ecg/core/math.hpp"

namespace ecg::infer {

namespace layers {

Activation conv1d_same(const Activation& in, const ConvLayer& layer) {
  const int len = in.length;
  const int k = layer.kernel_length;
  const int pad_left = (k - 1) / 2;
  Activation out{layer.out_channels, len,
                 std::vector<double>(static_cast<std::size_t>(layer.out_channels) * len)};
  for (int o = 0; o < layer.out_channels; ++o) {
    double* dst = out.data.data() + static_cast<std::size_t>(o) * len;
    std::fill(dst, dst + len, layer.bias[static_cast<std::size_t>(o)]);
    for (int c = 0; c < layer.in_channels; ++c) {
      const double* src = in.data.data() + static_cast<std::size_t>(c) * len;
      const double* w = layer.kernel.data() +
                        (static_cast<std::size_t>(o) * layer.in_channels + c) * k;
      // One tap at a time: dst[t] += w[j] * src[t + j - pad_left] over the
      // range of t that keeps the source index inside the signal.
      for (int j = 0; j < k; ++j) {
        const int shift = j - pad_left;
        const int t0 = std::max(0, -shift);
        const int t1 = std::min(len, len - shift);
        const double wj = w[j];
        for (int t = t0; t < t1; ++t) dst[t] += wj * src[t + shift];
      }
    }
  }
  return out;
}

void batch_norm(Activation& a, const BatchNorm& bn, double eps) {
  for (int c = 0; c < a.channels; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    const double scale = bn.gamma[ci] / std::sqrt(bn.var[ci] + eps);
    const double shift = bn.beta[ci] - bn.mean[ci] * scale;
    double* p = a.data.data() + ci * a.length;
    for (int t = 0; t < a.length; ++t) p[t] = p[t] * scale + shift;
  }
}

void batch_norm(std::vector<double>& v, const BatchNorm& bn, double eps) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double scale = bn.gamma[i] / std::sqrt(bn.var[i] + eps);
    v[i] = v[i] * scale + (bn.beta[i] - bn.mean[i] * scale);
  }
}

void relu(std::vector<double>& v) {
  for (double& x : v) x = x > 0.0 ? x : 0.0;
}

Activation max_pool(const Activation& in, int pool) {
  const int len = in.length / pool;
  Activation out{in.channels, len,
                 std::vector<double>(static_cast<std::size_t>(in.channels) * len)};
  for (int c = 0; c < in.channels; ++c) {
    const double* src = in.data.data() + static_cast<std::size_t>(c) * in.length;
    double* dst = out.data.data() + static_cast<std::size_t>(c) * len;
    for (int t = 0; t < len; ++t) {
      const double* w = src + static_cast<std::ptrdiff_t>(t) * pool;
      dst[t] = *std::max_element(w, w + pool);
    }
  }
  return out;
}

std::vector<double> flatten(const Activation& a) {
  std::vector<double> out(a.data.size());
  for (int c = 0; c < a.channels; ++c) {
    for (int t = 0; t < a.length; ++t) {
      out[static_cast<std::size_t>(t) * a.channels + c] =
          a.data[static_cast<std::size_t>(c) * a.length + t];
    }
  }
  return out;
}

std::vector<double> dense(std::span<const double> in, const std::vector<double>& weight,
                          const std::vector<double>& bias, int out_dim) {
  std::vector<double> out(static_cast<std::size_t>(out_dim));
  const std::size_t n = in.size();
  for (std::size_t o = 0; o < out.size(); ++o) {
    const double* w = weight.data() + o * n;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += w[i] * in[i];
    out[o] = acc + bias[o];
  }
  return out;
}

}  // namespace layers

namespace {

void check_finite(std::span<const double> v, const std::string& layer) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw Error(ErrorCode::NumericError, layer + ": non-finite activation", layer);
    }
  }
}

}  // namespace

ForwardOutput cnn_forward(const CnnModel& m, std::span<const double> input) {
  if (input.size() != static_cast<std::size_t>(m.input_length)) {
    throw Error(ErrorCode::ModelShapeError,
                "input: expected " + std::to_string(m.input_length) + " samples, got " +
                    std::to_string(input.size()),
                "input");
  }
  check_finite(input, "input");

  Activation a{1, m.input_length, {input.begin(), input.end()}};
  for (const auto& c : m.conv) {
    a = layers::conv1d_same(a, c);
    layers::batch_norm(a, c.bn, m.bn_epsilon);
    layers::relu(a.data);
    a = layers::max_pool(a, c.pool_length);
    check_finite(a.data, c.name);
  }

  std::vector<double> v = layers::flatten(a);
  for (const auto& d : m.dense) {
    v = layers::dense(v, d.weight, d.bias, d.out_dim);
    layers::batch_norm(v, d.bn, m.bn_epsilon);
    layers::relu(v);
    // Dropout is the identity at inference; d.dropout_rate is not consulted.
    check_finite(v, d.name);
  }

  ForwardOutput out;
  out.embedding = v;
  double logit = m.output.bias;
  for (std::size_t i = 0; i < v.size(); ++i) logit += m.output.weight[i] * v[i];
  if (!std::isfinite(logit)) {
    throw Error(ErrorCode::NumericError, m.output.name + ": non-finite logit", m.output.name);
  }
  out.logit = logit;
  out.probability = sigmoid(logit);
  return out;
}

ForwardOutput cnn_forward(const CnnModel& model, const NormalizedWindow& window) {
  return cnn_forward(model, window.values());
}

double tree_score(const Tree& tree, std::span<const double> features) {
  std::size_t i = 0;
  for (;;) {
    const auto& node = tree.nodes[i];
    if (node.is_leaf()) return node.leaf;
    const double x = features[static_cast<std::size_t>(node.feature)];
    i = static_cast<std::size_t>(x <= node.threshold ? node.left : node.right);
  }
}

double ensemble_forward(const TreeEnsemble& e, std::span<const double> embedding) {
  if (embedding.size() != static_cast<std::size_t>(e.feature_dim)) {
    throw Error(ErrorCode::ModelShapeError,
                "ensemble: embedding has " + std::to_string(embedding.size()) +
                    " features, ensemble expects " + std::to_string(e.feature_dim),
                "ensemble");
  }
  double score = e.base_score;
  for (const auto& t : e.trees) score += tree_score(t, embedding);
  if (!std::isfinite(score)) {
    throw Error(ErrorCode::NumericError, "ensemble: non-finite score", "ensemble");
  }
  return sigmoid(score);
}

}  // namespace ecg::infer

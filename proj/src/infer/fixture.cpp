#include "ecg/infer/fixture.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "json.hpp"

#include "ecg/core/error.hpp"
#include "ecg/dsp/preprocess.hpp"
#include "ecg/infer/forward.hpp"

namespace ecg::infer {

namespace {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // 53-bit uniform in [0, 1); independent of the standard library's
  // distribution implementations.
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }
  int index(int n) { return static_cast<int>(unit() * n); }

 private:
  std::mt19937_64 engine_;
};

double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

void fill_uniform(std::vector<double>& v, std::size_t n, Rng& rng, double a) {
  v.resize(n);
  for (auto& x : v) x = f32(rng.uniform(-a, a));
}

void calibrate_bn(BatchNorm& bn, std::size_t channels, std::span<const double> values,
                  std::size_t per_channel, Rng& rng) {
  bn.gamma.resize(channels);
  bn.beta.resize(channels);
  bn.mean.resize(channels);
  bn.var.resize(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    double mean = 0.0;
    for (std::size_t t = 0; t < per_channel; ++t) mean += values[c * per_channel + t];
    mean /= static_cast<double>(per_channel);
    double var = 0.0;
    for (std::size_t t = 0; t < per_channel; ++t) {
      const double d = values[c * per_channel + t] - mean;
      var += d * d;
    }
    var /= static_cast<double>(per_channel);
    bn.mean[c] = f32(mean);
    bn.var[c] = f32(var + 1e-3);
    bn.gamma[c] = f32(rng.uniform(0.8, 1.2));
    bn.beta[c] = f32(rng.uniform(-0.2, 0.2));
  }
}

double pick_threshold(double calibrated, Rng& rng) {
  if (calibrated > 1e-6) return f32(calibrated * rng.uniform(0.6, 1.4));
  return f32(rng.uniform(0.0, 0.5));
}

}  // namespace

std::vector<double> calibration_signal(std::uint64_t seed, int length) {
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<double> x(static_cast<std::size_t>(length));
  const double f1 = rng.uniform(1.0, 1.5);
  const double f2 = rng.uniform(5.0, 12.0);
  for (int i = 0; i < length; ++i) {
    const double t = i / 500.0;
    x[static_cast<std::size_t>(i)] = std::sin(2 * std::numbers::pi * f1 * t) +
                                     0.4 * std::sin(2 * std::numbers::pi * f2 * t) +
                                     0.2 * rng.uniform(-1.0, 1.0);
  }
  return dsp::zscore(x);
}

WeightFile make_fixture_model(const FixtureSpec& spec) {
  const auto& plan = spec.plan;
  if (plan.conv_channels.size() != kConvLayerCount ||
      plan.kernel_lengths.size() != kConvLayerCount ||
      plan.dense_widths.size() != kDenseLayerCount) {
    throw Error(ErrorCode::BadRequest, "layer plan needs 7 conv and 2 dense entries");
  }
  Rng rng(spec.seed);
  WeightFile f;
  f.kind = spec.kind;
  CnnModel& m = f.cnn;
  m.model_id = spec.model_id;
  m.input_length = plan.input_length;

  Activation a{1, plan.input_length, calibration_signal(spec.seed, plan.input_length)};
  int channels = 1;
  for (int i = 0; i < kConvLayerCount; ++i) {
    ConvLayer c;
    c.name = "conv" + std::to_string(i + 1);
    c.in_channels = channels;
    c.out_channels = plan.conv_channels[static_cast<std::size_t>(i)];
    c.kernel_length = plan.kernel_lengths[static_cast<std::size_t>(i)];
    const auto fan_in = static_cast<double>(c.in_channels * c.kernel_length);
    fill_uniform(c.kernel,
                 static_cast<std::size_t>(c.out_channels * c.in_channels * c.kernel_length),
                 rng, std::sqrt(3.0 / fan_in));
    fill_uniform(c.bias, static_cast<std::size_t>(c.out_channels), rng, 0.05);
    auto pre = layers::conv1d_same(a, c);
    calibrate_bn(c.bn, static_cast<std::size_t>(c.out_channels), pre.data,
                 static_cast<std::size_t>(pre.length), rng);
    layers::batch_norm(pre, c.bn, m.bn_epsilon);
    layers::relu(pre.data);
    a = layers::max_pool(pre, c.pool_length);
    channels = c.out_channels;
    m.conv.push_back(std::move(c));
  }

  std::vector<double> v = layers::flatten(a);
  for (int i = 0; i < kDenseLayerCount; ++i) {
    DenseLayer d;
    d.name = "dense" + std::to_string(i + 1);
    d.in_dim = static_cast<int>(v.size());
    d.out_dim = plan.dense_widths[static_cast<std::size_t>(i)];
    d.dropout_rate = plan.dropout_rate;
    fill_uniform(d.weight, static_cast<std::size_t>(d.out_dim) * v.size(), rng,
                 std::sqrt(3.0 / static_cast<double>(v.size())));
    fill_uniform(d.bias, static_cast<std::size_t>(d.out_dim), rng, 0.05);
    auto pre = layers::dense(v, d.weight, d.bias, d.out_dim);
    // A single calibration vector gives no spread per unit; use unit
    // variance around the observed activation instead.
    d.bn.gamma.resize(pre.size());
    d.bn.beta.resize(pre.size());
    d.bn.mean.resize(pre.size());
    d.bn.var.resize(pre.size());
    for (std::size_t k = 0; k < pre.size(); ++k) {
      d.bn.mean[k] = f32(pre[k] + rng.uniform(-0.5, 0.5));
      d.bn.var[k] = f32(rng.uniform(0.5, 1.5));
      d.bn.gamma[k] = f32(rng.uniform(0.8, 1.2));
      d.bn.beta[k] = f32(rng.uniform(-0.1, 0.3));
    }
    layers::batch_norm(pre, d.bn, m.bn_epsilon);
    layers::relu(pre);
    v = std::move(pre);
    m.dense.push_back(std::move(d));
  }

  m.output.in_dim = static_cast<int>(v.size());
  fill_uniform(m.output.weight, v.size(), rng, std::sqrt(3.0 / static_cast<double>(v.size())));
  m.output.bias = f32(rng.uniform(-0.1, 0.1));

  if (spec.kind == ModelKind::CnnEnsemble) {
    TreeEnsemble e;
    e.model_id = spec.model_id;
    e.feature_dim = static_cast<int>(v.size());
    e.base_score = f32(rng.uniform(-0.2, 0.2));
    for (int t = 0; t < spec.tree_count; ++t) {
      Tree tree;
      const int f_root = rng.index(e.feature_dim);
      const int f_left = rng.index(e.feature_dim);
      const int f_right = rng.index(e.feature_dim);
      tree.nodes.push_back({f_root, pick_threshold(v[static_cast<std::size_t>(f_root)], rng), 1, 2, 0.0});
      tree.nodes.push_back({f_left, pick_threshold(v[static_cast<std::size_t>(f_left)], rng), 3, 4, 0.0});
      tree.nodes.push_back({f_right, pick_threshold(v[static_cast<std::size_t>(f_right)], rng), 5, 6, 0.0});
      for (int leaf = 0; leaf < 4; ++leaf) {
        tree.nodes.push_back({-1, 0.0, -1, -1, f32(rng.uniform(-0.3, 0.3))});
      }
      e.trees.push_back(std::move(tree));
    }
    f.ensemble = std::move(e);
  }

  validate(m);
  if (f.ensemble) validate(*f.ensemble, m.embedding_dim());
  return f;
}

std::filesystem::path write_fixture_registry(const std::filesystem::path& dir,
                                             const LayerPlan& plan) {
  struct Entry {
    const char* id;
    ModelKind kind;
    std::uint64_t seed;
  };
  const Entry entries[] = {{"hcm", ModelKind::CnnEnsemble, 23},
                           {"lvsd", ModelKind::Cnn, 11},
                           {"structural", ModelKind::Cnn, 37}};
  std::filesystem::create_directories(dir);
  nlohmann::json models = nlohmann::json::array();
  for (const auto& e : entries) {
    FixtureSpec spec{e.id, e.kind, e.seed, plan};
    const auto file = std::string(e.id) + ".ecgw";
    write_weight_file(dir / file, make_fixture_model(spec));
    models.push_back({{"model_id", e.id},
                      {"kind", std::string(to_string(e.kind))},
                      {"weight_file", file},
                      {"threshold", 0.5}});
  }
  const auto path = dir / "registry.json";
  std::ofstream out(path);
  out << nlohmann::json{{"models", models}}.dump(2) << "\n";
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  return path;
}

}  // namespace ecg::infer

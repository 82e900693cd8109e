#include "ecg/infer/weight_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "ecg/core/error.hpp"

namespace ecg::infer {

using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little,
              "weight file I/O assumes a little-endian host");

constexpr char kMagic[4] = {'E', 'C', 'G', 'W'};

[[noreturn]] void shape_error(const std::string& layer, const std::string& what) {
  throw Error(ErrorCode::ModelShapeError, layer + ": " + what, layer);
}

std::uint32_t read_u32(std::string_view bytes, std::size_t offset) {
  std::uint32_t v = 0;
  std::memcpy(&v, bytes.data() + offset, sizeof v);
  return v;
}

void append_u32(std::string& out, std::uint32_t v) {
  char buf[4];
  std::memcpy(buf, &v, sizeof v);
  out.append(buf, 4);
}

// One tensor slot in declaration order; `target` is filled on decode.
struct Slot {
  std::string layer;
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double>* target;
};

std::size_t element_count(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void push_bn(std::vector<Slot>& slots, const std::string& layer, BatchNorm& bn,
             std::size_t n) {
  slots.push_back({layer, layer + ".bn_gamma", {n}, &bn.gamma});
  slots.push_back({layer, layer + ".bn_beta", {n}, &bn.beta});
  slots.push_back({layer, layer + ".bn_mean", {n}, &bn.mean});
  slots.push_back({layer, layer + ".bn_var", {n}, &bn.var});
}

std::size_t dim(int v) { return v > 0 ? static_cast<std::size_t>(v) : 0; }

// Tensor slots implied by the layer plan. `output_bias` receives the scalar
// output bias as a one-element vector.
std::vector<Slot> plan_slots(CnnModel& m, std::vector<double>& output_bias) {
  std::vector<Slot> slots;
  for (auto& c : m.conv) {
    slots.push_back({c.name, c.name + ".kernel",
                     {dim(c.out_channels), dim(c.in_channels), dim(c.kernel_length)},
                     &c.kernel});
    slots.push_back({c.name, c.name + ".bias", {dim(c.out_channels)}, &c.bias});
    push_bn(slots, c.name, c.bn, dim(c.out_channels));
  }
  for (auto& d : m.dense) {
    slots.push_back({d.name, d.name + ".weight", {dim(d.out_dim), dim(d.in_dim)}, &d.weight});
    slots.push_back({d.name, d.name + ".bias", {dim(d.out_dim)}, &d.bias});
    push_bn(slots, d.name, d.bn, dim(d.out_dim));
  }
  slots.push_back({m.output.name, m.output.name + ".weight",
                   {dim(m.output.out_dim), dim(m.output.in_dim)}, &m.output.weight});
  slots.push_back({m.output.name, m.output.name + ".bias", {dim(m.output.out_dim)},
                   &output_bias});
  return slots;
}

template <typename T>
T field(const json& obj, const char* key, const std::string& layer) {
  const auto it = obj.find(key);
  if (it == obj.end()) shape_error(layer, std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    shape_error(layer, std::string("field '") + key + "' has the wrong type");
  }
}

json ensemble_to_json(const TreeEnsemble& e) {
  json trees = json::array();
  for (const auto& t : e.trees) {
    json nodes = json::array();
    for (const auto& n : t.nodes) {
      if (n.is_leaf()) {
        nodes.push_back({{"leaf", n.leaf}});
      } else {
        nodes.push_back({{"feature", n.feature},
                         {"threshold", n.threshold},
                         {"left", n.left},
                         {"right", n.right}});
      }
    }
    trees.push_back({{"nodes", std::move(nodes)}});
  }
  return {{"feature_dim", e.feature_dim}, {"base_score", e.base_score}, {"trees", trees}};
}

TreeEnsemble ensemble_from_json(const json& j) {
  const std::string layer = "ensemble";
  if (!j.is_object()) shape_error(layer, "ensemble section is not an object");
  TreeEnsemble e;
  e.feature_dim = field<int>(j, "feature_dim", layer);
  e.base_score = field<double>(j, "base_score", layer);
  const auto trees = j.find("trees");
  if (trees == j.end() || !trees->is_array()) shape_error(layer, "missing trees array");
  for (const auto& tj : *trees) {
    Tree t;
    const auto nodes = tj.find("nodes");
    if (nodes == tj.end() || !nodes->is_array()) shape_error(layer, "tree without nodes");
    for (const auto& nj : *nodes) {
      TreeNode n;
      if (nj.contains("leaf")) {
        n.leaf = field<double>(nj, "leaf", layer);
      } else {
        n.feature = field<int>(nj, "feature", layer);
        if (n.feature < 0) shape_error(layer, "negative feature index");
        n.threshold = field<double>(nj, "threshold", layer);
        n.left = field<int>(nj, "left", layer);
        n.right = field<int>(nj, "right", layer);
      }
      t.nodes.push_back(n);
    }
    e.trees.push_back(std::move(t));
  }
  return e;
}

json build_header(const WeightFile& f, std::vector<Slot>& slots) {
  const auto& m = f.cnn;
  json conv = json::array();
  for (const auto& c : m.conv) {
    conv.push_back({{"name", c.name},
                    {"in_channels", c.in_channels},
                    {"out_channels", c.out_channels},
                    {"kernel_length", c.kernel_length},
                    {"stride", c.stride},
                    {"padding", "same"},
                    {"pool_length", c.pool_length}});
  }
  json dense = json::array();
  for (const auto& d : m.dense) {
    dense.push_back({{"name", d.name},
                     {"in_dim", d.in_dim},
                     {"out_dim", d.out_dim},
                     {"dropout_rate", d.dropout_rate}});
  }
  json tensors = json::array();
  for (const auto& s : slots) tensors.push_back({{"name", s.name}, {"shape", s.shape}});

  json h = {{"model_id", m.model_id},
            {"kind", std::string(to_string(f.kind))},
            {"dtype", "f32le"},
            {"input_length", m.input_length},
            {"bn_epsilon", m.bn_epsilon},
            {"conv", conv},
            {"dense", dense},
            {"output",
             {{"name", m.output.name}, {"in_dim", m.output.in_dim}, {"out_dim", m.output.out_dim}}},
            {"tensors", tensors}};
  if (f.ensemble) h["ensemble"] = ensemble_to_json(*f.ensemble);
  return h;
}

}  // namespace

std::string encode_weight_file(const WeightFile& f) {
  CnnModel copy = f.cnn;
  std::vector<double> output_bias{copy.output.bias};
  auto slots = plan_slots(copy, output_bias);
  const std::string header = build_header(f, slots).dump();

  std::string out(kMagic, 4);
  append_u32(out, kWeightFileVersion);
  append_u32(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  for (const auto& s : slots) {
    const auto want = element_count(s.shape);
    if (s.target->size() != want) {
      shape_error(s.layer, s.name + " holds " + std::to_string(s.target->size()) +
                               " values, plan expects " + std::to_string(want));
    }
    for (double v : *s.target) {
      const float x = static_cast<float>(v);
      char buf[4];
      std::memcpy(buf, &x, 4);
      out.append(buf, 4);
    }
  }
  return out;
}

std::string weight_file_header(std::string_view bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    shape_error("header", "not an ECGW weight file");
  }
  if (read_u32(bytes, 4) != kWeightFileVersion) {
    shape_error("header", "unsupported weight file version");
  }
  const std::uint64_t len = read_u32(bytes, 8);
  if (12 + len > bytes.size()) shape_error("header", "truncated header");
  return std::string(bytes.substr(12, len));
}

std::string replace_weight_file_header(std::string_view bytes, std::string_view header_json) {
  const auto old_header = weight_file_header(bytes);
  std::string out(kMagic, 4);
  append_u32(out, kWeightFileVersion);
  append_u32(out, static_cast<std::uint32_t>(header_json.size()));
  out += header_json;
  out += bytes.substr(12 + old_header.size());
  return out;
}

WeightFile decode_weight_file(std::string_view bytes) {
  const std::string header_text = weight_file_header(bytes);
  const json h = json::parse(header_text, nullptr, false);
  if (h.is_discarded() || !h.is_object()) shape_error("header", "header is not a JSON object");
  if (field<std::string>(h, "dtype", "header") != "f32le") {
    shape_error("header", "unsupported dtype");
  }

  WeightFile f;
  f.kind = parse_model_kind(field<std::string>(h, "kind", "header"));
  auto& m = f.cnn;
  m.model_id = field<std::string>(h, "model_id", "header");
  m.input_length = field<int>(h, "input_length", "header");
  m.bn_epsilon = field<double>(h, "bn_epsilon", "header");

  const auto conv = h.find("conv");
  const auto dense = h.find("dense");
  const auto output = h.find("output");
  const auto tensors = h.find("tensors");
  if (conv == h.end() || !conv->is_array() || dense == h.end() || !dense->is_array() ||
      output == h.end() || !output->is_object() || tensors == h.end() ||
      !tensors->is_array()) {
    shape_error("header", "missing conv/dense/output/tensors sections");
  }
  for (const auto& cj : *conv) {
    ConvLayer c;
    c.name = field<std::string>(cj, "name", "header");
    c.in_channels = field<int>(cj, "in_channels", c.name);
    c.out_channels = field<int>(cj, "out_channels", c.name);
    c.kernel_length = field<int>(cj, "kernel_length", c.name);
    c.stride = field<int>(cj, "stride", c.name);
    c.pool_length = field<int>(cj, "pool_length", c.name);
    if (field<std::string>(cj, "padding", c.name) != "same") {
      shape_error(c.name, "only same padding is supported");
    }
    m.conv.push_back(std::move(c));
  }
  for (const auto& dj : *dense) {
    DenseLayer d;
    d.name = field<std::string>(dj, "name", "header");
    d.in_dim = field<int>(dj, "in_dim", d.name);
    d.out_dim = field<int>(dj, "out_dim", d.name);
    d.dropout_rate = field<double>(dj, "dropout_rate", d.name);
    m.dense.push_back(std::move(d));
  }
  m.output.name = field<std::string>(*output, "name", "output");
  m.output.in_dim = field<int>(*output, "in_dim", m.output.name);
  m.output.out_dim = field<int>(*output, "out_dim", m.output.name);

  std::vector<double> output_bias;
  auto slots = plan_slots(m, output_bias);
  for (const auto& s : slots) {
    for (auto d : s.shape) {
      if (d > (1u << 20)) shape_error(s.layer, "dimension out of range in " + s.name);
    }
  }
  if (tensors->size() != slots.size()) {
    shape_error("header", "tensor table lists " + std::to_string(tensors->size()) +
                              " tensors, layer plan implies " + std::to_string(slots.size()));
  }
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto& tj = (*tensors)[i];
    const auto& s = slots[i];
    if (field<std::string>(tj, "name", s.layer) != s.name) {
      shape_error(s.layer, "tensor " + std::to_string(i) + " should be " + s.name);
    }
    if (field<std::vector<std::size_t>>(tj, "shape", s.layer) != s.shape) {
      shape_error(s.layer, s.name + " shape " + tj.at("shape").dump() +
                               " disagrees with the layer plan " + json(s.shape).dump());
    }
  }

  std::size_t offset = 12 + header_text.size();
  for (auto& s : slots) {
    const auto n = element_count(s.shape);
    if (bytes.size() - offset < n * 4) shape_error(s.layer, "payload truncated in " + s.name);
    s.target->resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      float x;
      std::memcpy(&x, bytes.data() + offset + 4 * k, 4);
      (*s.target)[k] = static_cast<double>(x);
    }
    offset += n * 4;
  }
  if (offset != bytes.size()) shape_error("weights", "trailing bytes after the last tensor");
  m.output.bias = output_bias.empty() ? 0.0 : output_bias[0];

  validate(m);
  if (const auto e = h.find("ensemble"); e != h.end()) {
    f.ensemble = ensemble_from_json(*e);
    f.ensemble->model_id = m.model_id;
    validate(*f.ensemble, m.embedding_dim());
  } else if (f.kind == ModelKind::CnnEnsemble) {
    shape_error("ensemble", "cnn+ensemble model has no ensemble section");
  }
  return f;
}

WeightFile read_weight_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::NotFound, "cannot open weight file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_weight_file(buf.str());
}

void write_weight_file(const std::filesystem::path& path, const WeightFile& f) {
  const auto bytes = encode_weight_file(f);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "cannot write weight file " + path.string());
}

}  // namespace ecg::infer

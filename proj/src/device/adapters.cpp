#include "ecg/device/adapters.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include "json.hpp"

#include "ecg/core/error.hpp"

namespace ecg::device {

namespace pt = boost::property_tree;
using nlohmann::json;

namespace {

constexpr std::string_view kWatchRoot = "ecgExport";

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

std::size_t skip_space(std::string_view s, std::size_t pos) {
  while (pos < s.size() && is_space(s[pos])) ++pos;
  return pos;
}

// Skips BOM, XML declaration, comments and whitespace; returns the offset of
// the first element tag or npos.
std::size_t first_element(std::string_view s) {
  std::size_t pos = 0;
  if (s.substr(0, 3) == "\xEF\xBB\xBF") pos = 3;
  for (;;) {
    pos = skip_space(s, pos);
    if (pos >= s.size() || s[pos] != '<') return std::string_view::npos;
    if (s.substr(pos, 2) == "<?") {
      const auto end = s.find("?>", pos + 2);
      if (end == std::string_view::npos) return std::string_view::npos;
      pos = end + 2;
    } else if (s.substr(pos, 4) == "<!--") {
      const auto end = s.find("-->", pos + 4);
      if (end == std::string_view::npos) return std::string_view::npos;
      pos = end + 3;
    } else {
      return pos;
    }
  }
}

bool looks_like_watch_export(std::string_view s) {
  const auto pos = first_element(s);
  if (pos == std::string_view::npos) return false;
  const auto name = s.substr(pos + 1, kWatchRoot.size());
  if (name != kWatchRoot) return false;
  const auto after = pos + 1 + kWatchRoot.size();
  return after < s.size() && (is_space(s[after]) || s[after] == '>' || s[after] == '/');
}

std::optional<DeviceKind> json_record_kind(const json& doc) {
  if (!doc.is_object()) return std::nullopt;
  const auto dev = doc.find("device");
  if (dev == doc.end() || !dev->is_string() || !doc.contains("samples_uV")) {
    return std::nullopt;
  }
  const auto& name = dev->get_ref<const std::string&>();
  if (name == "kardia") return DeviceKind::Kardia;
  if (name == "fitbit") return DeviceKind::Fitbit;
  return std::nullopt;
}

json parse_json_object(std::string_view bytes) {
  json doc = json::parse(bytes.begin(), bytes.end(), nullptr, false);
  if (doc.is_discarded()) {
    throw Error(ErrorCode::ParseError, "record is not valid JSON");
  }
  return doc;
}

[[noreturn]] void parse_error(const std::string& what) {
  throw Error(ErrorCode::ParseError, what);
}

void check_duration(std::size_t n, int rate, const AdapterConfig& config) {
  const double duration = static_cast<double>(n) / rate;
  if (std::fabs(duration - config.nominal_duration_s) > config.duration_tolerance_s) {
    throw Error(ErrorCode::DurationOutOfRange,
                "duration " + std::to_string(duration) + " s outside " +
                    std::to_string(config.nominal_duration_s) + " +/- " +
                    std::to_string(config.duration_tolerance_s) + " s");
  }
}

void check_rate(int rate, std::span<const int> allowed) {
  if (std::find(allowed.begin(), allowed.end(), rate) == allowed.end()) {
    throw Error(ErrorCode::RateMismatch,
                "sample rate " + std::to_string(rate) + " Hz not accepted");
  }
}

EcgRecording make_recording(std::string_view bytes, DeviceKind device, int rate,
                            std::vector<double> samples_mv, Timestamp recorded_at,
                            Timestamp received_at) {
  EcgRecording::Fields f;
  f.recording_id = RecordingId::of_bytes(bytes);
  f.device = device;
  f.sample_rate_hz = rate;
  f.lead = "I";
  f.samples_mv = std::move(samples_mv);
  f.recorded_at = recorded_at;
  f.received_at = received_at;
  return EcgRecording(std::move(f));
}

int parse_int_strict(std::string_view text, const char* what) {
  int v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || ptr != end) {
    parse_error(std::string("attribute ") + what + " is not an integer");
  }
  return v;
}

std::vector<double> parse_microvolt_text(std::string_view text) {
  std::vector<double> out;
  out.reserve(text.size() / 4);
  std::size_t pos = 0;
  for (;;) {
    pos = skip_space(text, pos);
    if (pos >= text.size()) break;
    std::size_t end = pos;
    while (end < text.size() && !is_space(text[end])) ++end;
    long long v = 0;
    const auto* first = text.data() + pos;
    const auto* last = text.data() + end;
    if (*first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last) {
      parse_error("sample '" + std::string(text.substr(pos, std::min<std::size_t>(end - pos, 32))) +
                  "' is not an integer microvolt value");
    }
    out.push_back(static_cast<double>(v) / 1000.0);
    pos = end;
  }
  return out;
}

struct JsonRecordFields {
  int rate = 0;
  Timestamp recorded_at{};
  std::vector<double> samples_mv;
};

JsonRecordFields read_json_record(const json& doc) {
  JsonRecordFields out;
  const auto rate = doc.find("rate");
  if (rate == doc.end() || !rate->is_number_integer()) {
    parse_error("field 'rate' missing or not an integer");
  }
  const auto r = rate->get<long long>();
  if (r <= 0 || r > 1'000'000) parse_error("field 'rate' out of range");
  out.rate = static_cast<int>(r);

  const auto at = doc.find("recordedAt");
  if (at == doc.end() || !at->is_string()) {
    parse_error("field 'recordedAt' missing or not a string");
  }
  out.recorded_at = parse_rfc3339(at->get_ref<const std::string&>());

  const auto& samples = doc.at("samples_uV");
  if (!samples.is_array()) parse_error("field 'samples_uV' is not an array");
  if (samples.empty()) parse_error("field 'samples_uV' is empty");
  out.samples_mv.reserve(samples.size());
  for (const auto& s : samples) {
    if (!s.is_number()) parse_error("non-numeric entry in 'samples_uV'");
    const double v = s.get<double>();
    if (!std::isfinite(v)) parse_error("non-finite entry in 'samples_uV'");
    out.samples_mv.push_back(v / 1000.0);
  }
  return out;
}

EcgRecording parse_json_device(std::string_view bytes, DeviceKind expected,
                               std::span<const int> allowed_rates,
                               const AdapterConfig& config, Timestamp received_at) {
  const json doc = parse_json_object(bytes);
  const auto kind = json_record_kind(doc);
  if (!kind || *kind != expected) {
    parse_error(std::string("payload is not a ") + std::string(to_string(expected)) +
                " record");
  }
  auto fields = read_json_record(doc);
  check_rate(fields.rate, allowed_rates);
  check_duration(fields.samples_mv.size(), fields.rate, config);
  return make_recording(bytes, expected, fields.rate, std::move(fields.samples_mv),
                        fields.recorded_at, received_at);
}

}  // namespace

DeviceKind detect_format(std::string_view bytes) {
  if (looks_like_watch_export(bytes)) return DeviceKind::AppleWatch;
  const auto pos = skip_space(bytes, 0);
  if (pos < bytes.size() && bytes[pos] == '{') {
    const json doc = json::parse(bytes.begin(), bytes.end(), nullptr, false);
    if (!doc.is_discarded()) {
      if (auto kind = json_record_kind(doc)) return *kind;
    }
  }
  throw Error(ErrorCode::FormatUnknown, "payload matches no known device signature");
}

EcgRecording parse_apple_watch_export(std::string_view bytes,
                                      const AdapterConfig& config,
                                      Timestamp received_at) {
  if (!looks_like_watch_export(bytes)) parse_error("root element is not <ecgExport>");

  pt::ptree tree;
  try {
    std::istringstream in{std::string(bytes)};
    pt::read_xml(in, tree);
  } catch (const pt::ptree_error& e) {
    parse_error(std::string("malformed XML: ") + e.what());
  }

  const pt::ptree* root = nullptr;
  for (const auto& [name, child] : tree) {
    if (name == kWatchRoot) {
      if (root != nullptr) parse_error("multiple <ecgExport> elements");
      root = &child;
    } else if (name != "<xmlcomment>") {
      parse_error("unexpected top-level element <" + name + ">");
    }
  }
  if (root == nullptr) parse_error("missing <ecgExport> element");

  const auto rate_attr = root->get_optional<std::string>("<xmlattr>.rateHz");
  if (!rate_attr) parse_error("missing rateHz attribute");
  const int rate = parse_int_strict(*rate_attr, "rateHz");
  if (rate <= 0) parse_error("rateHz must be positive");

  const auto at_attr = root->get_optional<std::string>("<xmlattr>.recordedAt");
  if (!at_attr) parse_error("missing recordedAt timestamp");
  const Timestamp recorded_at = parse_rfc3339(*at_attr);

  const auto lead = root->get_optional<std::string>("<xmlattr>.lead");
  if (!lead) parse_error("missing lead attribute");
  if (*lead != "I") parse_error("unsupported lead '" + *lead + "'");

  if (root->count("samples") != 1) parse_error("expected exactly one <samples> element");
  auto samples = parse_microvolt_text(root->get<std::string>("samples"));
  if (samples.empty()) parse_error("<samples> is empty");

  const int allowed[] = {kAppleWatchRateHz};
  check_rate(rate, allowed);
  check_duration(samples.size(), rate, config);
  return make_recording(bytes, DeviceKind::AppleWatch, rate, std::move(samples),
                        recorded_at, received_at);
}

EcgRecording parse_kardia_record(std::string_view bytes, const AdapterConfig& config,
                                 Timestamp received_at) {
  const int allowed[] = {kKardiaRateHz};
  return parse_json_device(bytes, DeviceKind::Kardia, allowed, config, received_at);
}

EcgRecording parse_fitbit_record(std::string_view bytes, const AdapterConfig& config,
                                 Timestamp received_at) {
  return parse_json_device(bytes, DeviceKind::Fitbit, config.fitbit_allowed_rates,
                           config, received_at);
}

EcgRecording parse_any(std::string_view bytes, const AdapterConfig& config,
                       Timestamp received_at) {
  switch (detect_format(bytes)) {
    case DeviceKind::AppleWatch:
      return parse_apple_watch_export(bytes, config, received_at);
    case DeviceKind::Kardia:
      return parse_kardia_record(bytes, config, received_at);
    case DeviceKind::Fitbit:
      return parse_fitbit_record(bytes, config, received_at);
  }
  throw Error(ErrorCode::FormatUnknown, "unreachable device kind");
}

}  // namespace ecg::device

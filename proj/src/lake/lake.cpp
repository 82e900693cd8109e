#include "ecg/lake/lake.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <openssl/rand.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ecg/core/error.hpp"
#include "ecg/core/math.hpp"
#include "ecg/lake/codec.hpp"

namespace ecg::lake {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void io_error(const std::string& what) {
  throw Error(ErrorCode::IoError, what + ": " + std::strerror(errno));
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::NotFound, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

int open_append(const fs::path& path) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) io_error("cannot open " + path.string());
  return fd;
}

void write_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const auto n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      io_error("write failed");
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

// Reads complete lines; a torn trailing line (no newline) is cut off so the
// next append starts on a clean boundary.
std::vector<std::string> read_lines_repairing(const fs::path& path) {
  std::vector<std::string> lines;
  if (!fs::exists(path)) return lines;
  const std::string data = read_file(path);
  std::size_t start = 0;
  while (start < data.size()) {
    const auto nl = data.find('\n', start);
    if (nl == std::string::npos) {
      if (::truncate(path.c_str(), static_cast<off_t>(start)) != 0) {
        io_error("cannot repair " + path.string());
      }
      break;
    }
    if (nl > start) lines.emplace_back(data.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

std::string shard_path(const char* dir, const RecordingId& id, const char* suffix) {
  return std::string(dir) + "/" + id.str().substr(0, 2) + "/" + id.str() + suffix;
}

std::atomic<std::uint64_t> g_tmp_counter{0};

}  // namespace

Lake::Lake(fs::path root, LakeOptions options)
    : root_(std::move(root)), options_(std::move(options)) {
  std::error_code ec;
  for (const char* d : {"blobs", "recordings", "results", "quarantine", "state", "registry"}) {
    fs::create_directories(root_ / d, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + (root_ / d).string());
  }
  open_registry();
  load_index();
  load_results();
  index_fd_ = open_append(root_ / "index.jsonl");
  results_fd_ = open_append(root_ / "results.jsonl");
}

Lake::~Lake() {
  for (int fd : {index_fd_, results_fd_, registry_fd_}) {
    if (fd >= 0) ::close(fd);
  }
}

void Lake::open_registry() {
  const auto key_path = root_ / "registry" / "secret.key";
  if (fs::exists(key_path)) {
    secret_ = read_file(key_path);
  } else {
    unsigned char key[32];
    if (RAND_bytes(key, sizeof key) != 1) {
      throw Error(ErrorCode::IoError, "cannot generate pseudonym key");
    }
    secret_.assign(reinterpret_cast<const char*>(key), sizeof key);
    write_atomic(key_path, secret_);
    ::chmod(key_path.c_str(), 0600);
  }
  const auto map_path = root_ / "registry" / "studies.jsonl";
  for (const auto& line : read_lines_repairing(map_path)) {
    const auto j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::ParseError, "corrupt study registry row");
    studies_.emplace(j.at("external_id").get<std::string>(),
                     StudyId(j.at("study_id").get<std::string>()));
  }
  registry_fd_ = open_append(map_path);
}

void Lake::load_index() {
  for (const auto& line : read_lines_repairing(root_ / "index.jsonl")) {
    const auto j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::ParseError, "corrupt index row");
    auto e = entry_from_json(j);
    if (e.index_seq != entries_.size() + 1) {
      throw Error(ErrorCode::ParseError, "index_seq gap or duplicate at row " +
                                             std::to_string(entries_.size() + 1));
    }
    by_id_.emplace(e.recording_id.str(), entries_.size());
    entries_.push_back(std::move(e));
  }
}

void Lake::load_results() {
  for (const auto& line : read_lines_repairing(root_ / "results.jsonl")) {
    const auto j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::ParseError, "corrupt results row");
    const auto type = j.value("type", std::string{});
    if (type == "prediction") {
      auto r = prediction_from_json(j.at("result"));
      results_[r.recording_id.str()].push_back(std::move(r));
    } else if (type == "note") {
      auto n = note_from_json(j.at("note"));
      notes_[n.recording_id.str()].push_back(std::move(n));
    } else {
      throw Error(ErrorCode::ParseError, "unknown results row type '" + type + "'");
    }
  }
}

void Lake::fsync_dir(const fs::path& dir) const {
  if (!options_.sync) return;
  const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
  if (fd < 0) io_error("cannot open directory " + dir.string());
  ::fsync(fd);
  ::close(fd);
}

void Lake::write_atomic(const fs::path& path, std::string_view bytes) const {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + path.parent_path().string());
  const auto tmp = path.string() + ".tmp." + std::to_string(::getpid()) + "." +
                   std::to_string(g_tmp_counter.fetch_add(1));
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) io_error("cannot create " + tmp);
  try {
    write_all(fd, bytes);
    if (options_.sync && ::fsync(fd) != 0) io_error("fsync failed for " + tmp);
  } catch (...) {
    ::close(fd);
    ::unlink(tmp.c_str());
    throw;
  }
  ::close(fd);
  if (::rename(tmp.c_str(), path.c_str()) != 0) {
    ::unlink(tmp.c_str());
    io_error("cannot rename into " + path.string());
  }
  fsync_dir(path.parent_path());
}

void Lake::append_line(const fs::path& file, int fd, const std::string& line) {
  const off_t before = ::lseek(fd, 0, SEEK_END);
  try {
    write_all(fd, line + "\n");
    if (options_.sync && ::fdatasync(fd) != 0) io_error("fdatasync failed");
  } catch (...) {
    // No partial row may stay visible.
    if (before >= 0) (void)!::ftruncate(fd, before);
    throw Error(ErrorCode::IoError, "append to " + file.filename().string() + " failed");
  }
}

StudyId Lake::register_study(std::string_view external_id) {
  if (external_id.empty()) throw Error(ErrorCode::BadRequest, "external id is empty");
  if (external_id.size() > 256 ||
      !std::all_of(external_id.begin(), external_id.end(),
                   [](char c) { return c > 0x20 && c < 0x7f; })) {
    throw Error(ErrorCode::BadRequest, "external id must be 1-256 printable ASCII characters");
  }
  std::lock_guard lock(registry_mu_);
  if (const auto it = studies_.find(external_id); it != studies_.end()) return it->second;
  StudyId id(keyed_digest(secret_, external_id).substr(0, StudyId::kLength));
  const json row = {{"external_id", std::string(external_id)}, {"study_id", id.str()}};
  append_line(root_ / "registry" / "studies.jsonl", registry_fd_, row.dump());
  studies_.emplace(std::string(external_id), id);
  return id;
}

LakeEntry Lake::put_recording(const device::RawDeviceRecord& raw, const EcgRecording& parsed,
                              double upload_s) {
  return put_recording(raw, parsed, [upload_s] { return upload_s; });
}

LakeEntry Lake::put_recording(const device::RawDeviceRecord& raw, const EcgRecording& parsed,
                              const std::function<double()>& upload_s) {
  const RecordingId& id = parsed.recording_id();
  if (id != RecordingId::of_bytes(raw.bytes)) {
    throw Error(ErrorCode::BadRequest, "recording id does not match the raw payload");
  }
  if (parsed.study_id().str().empty()) {
    throw Error(ErrorCode::BadRequest, "recording has no study id");
  }
  if (find_entry(id)) {
    throw Error(ErrorCode::AlreadyExists, "recording already stored", id.str());
  }

  write_atomic(root_ / blob_path_for(id), raw.bytes);
  write_atomic(root_ / shard_path("recordings", id, ".json"),
               to_json(StoredRecording{parsed, upload_s()}).dump());
  if (options_.after_blob_write) options_.after_blob_write();

  std::lock_guard gate(gate_);
  LakeEntry e;
  {
    std::shared_lock read(state_mu_);
    if (by_id_.count(id.str()) != 0) {
      throw Error(ErrorCode::AlreadyExists, "recording already stored", id.str());
    }
    e.index_seq = entries_.size() + 1;
  }
  e.recording_id = id;
  e.device = parsed.device();
  e.study_id = parsed.study_id();
  e.blob_path = blob_path_for(id);
  e.received_at = parsed.received_at();
  append_line(root_ / "index.jsonl", index_fd_, to_json(e).dump());

  std::unique_lock write(state_mu_);
  by_id_.emplace(id.str(), entries_.size());
  entries_.push_back(e);
  return e;
}

std::vector<LakeEntry> Lake::list_since(IndexSeq cursor) const {
  std::shared_lock lock(state_mu_);
  if (cursor >= entries_.size()) return {};
  return {entries_.begin() + static_cast<std::ptrdiff_t>(cursor), entries_.end()};
}

std::optional<LakeEntry> Lake::find_entry(const RecordingId& id) const {
  std::shared_lock lock(state_mu_);
  const auto it = by_id_.find(id.str());
  if (it == by_id_.end()) return std::nullopt;
  return entries_[it->second];
}

std::vector<LakeEntry> Lake::entries_for_study(const StudyId& study) const {
  std::shared_lock lock(state_mu_);
  std::vector<LakeEntry> out;
  for (const auto& e : entries_) {
    if (e.study_id == study) out.push_back(e);
  }
  return out;
}

std::size_t Lake::index_size() const {
  std::shared_lock lock(state_mu_);
  return entries_.size();
}

IndexSeq Lake::max_seq() const { return index_size(); }

StoredRecording Lake::get_recording(const RecordingId& id) const {
  if (!find_entry(id)) throw Error(ErrorCode::NotFound, "unknown recording " + id.str());
  const auto doc = json::parse(read_file(root_ / shard_path("recordings", id, ".json")),
                               nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::ParseError, "corrupt canonical recording");
  return recording_from_json(doc);
}

std::string Lake::get_raw(const RecordingId& id) const {
  if (!find_entry(id)) throw Error(ErrorCode::NotFound, "unknown recording " + id.str());
  const auto bytes = read_file(root_ / blob_path_for(id));
  if (content_hash(bytes) != id.str()) {
    throw Error(ErrorCode::IoError, "blob integrity check failed for " + id.str());
  }
  return bytes;
}

void Lake::quarantine(std::string_view bytes) {
  write_atomic(root_ / "quarantine" / content_hash(bytes), bytes);
}

void Lake::stage_results(const RecordingId& id, std::string_view document) {
  write_atomic(root_ / shard_path("results", id, ".json"), document);
}

void Lake::put_result(const PredictionResult& result) {
  result.validate();
  if (!find_entry(result.recording_id)) {
    throw Error(ErrorCode::NotFound, "result for unknown recording " + result.recording_id.str());
  }
  const json row = {{"type", "prediction"}, {"result", to_json(result)}};
  std::lock_guard gate(gate_);
  append_line(root_ / "results.jsonl", results_fd_, row.dump());
  std::unique_lock write(state_mu_);
  results_[result.recording_id.str()].push_back(result);
}

void Lake::put_note(const ProcessingNote& note) {
  if (!find_entry(note.recording_id)) {
    throw Error(ErrorCode::NotFound, "note for unknown recording " + note.recording_id.str());
  }
  const json row = {{"type", "note"}, {"note", to_json(note)}};
  std::lock_guard gate(gate_);
  append_line(root_ / "results.jsonl", results_fd_, row.dump());
  std::unique_lock write(state_mu_);
  notes_[note.recording_id.str()].push_back(note);
}

std::vector<PredictionResult> Lake::get_results(const RecordingId& id) const {
  std::shared_lock lock(state_mu_);
  if (by_id_.count(id.str()) == 0) {
    throw Error(ErrorCode::NotFound, "unknown recording " + id.str());
  }
  const auto it = results_.find(id.str());
  if (it == results_.end()) return {};
  auto out = it->second;
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.produced_at < b.produced_at; });
  return out;
}

std::vector<ProcessingNote> Lake::get_notes(const RecordingId& id) const {
  std::shared_lock lock(state_mu_);
  if (by_id_.count(id.str()) == 0) {
    throw Error(ErrorCode::NotFound, "unknown recording " + id.str());
  }
  const auto it = notes_.find(id.str());
  return it == notes_.end() ? std::vector<ProcessingNote>{} : it->second;
}

bool Lake::has_outcome(const RecordingId& id) const {
  std::shared_lock lock(state_mu_);
  return results_.count(id.str()) != 0 || notes_.count(id.str()) != 0;
}

}  // namespace ecg::lake

#pragma once

// Local data lake.
//
//   <root>/blobs/<h[0:2]>/<h>            raw device payloads, named by SHA-256
//   <root>/recordings/<h[0:2]>/<h>.json  canonical recordings
//   <root>/results/<h[0:2]>/<h>.json     staged result documents
//   <root>/quarantine/<h>                payloads no adapter recognized
//   <root>/index.jsonl                   append-only index, one LakeEntry per line
//   <root>/results.jsonl                 append-only results and notes
//   <root>/state/                        consumer cursors
//   <root>/registry/secret.key           pseudonym key (instance local)
//   <root>/registry/studies.jsonl        external id -> study id map
//
// Blob and document writes go to a temp file and are renamed into place;
// index and result rows are appended under one writer gate, so a crash
// between the blob write and the append leaves an orphan blob that nothing
// references. A torn trailing index line is discarded when the lake opens.

#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ecg/core/types.hpp"
#include "ecg/device/adapters.hpp"
#include "ecg/lake/records.hpp"

namespace ecg::lake {

class IndexReader {
 public:
  virtual ~IndexReader() = default;
  // Entries with index_seq > cursor, ascending.
  virtual std::vector<LakeEntry> list_since(IndexSeq cursor) const = 0;
};

struct LakeOptions {
  // fsync files and directories before acknowledging a write.
  bool sync = true;
  // Test hook, runs after the blobs are in place and before the index append.
  std::function<void()> after_blob_write;
};

class Lake final : public IndexReader {
 public:
  // Opens (creating if needed) a lake rooted at `root`. Throws IoError.
  explicit Lake(std::filesystem::path root, LakeOptions options = {});
  ~Lake();

  Lake(const Lake&) = delete;
  Lake& operator=(const Lake&) = delete;

  const std::filesystem::path& root() const noexcept { return root_; }

  // Pseudonymization. Idempotent; throws BadRequest for an empty id.
  StudyId register_study(std::string_view external_id);

  // Stores the raw payload and canonical form, then appends the index row.
  // Throws AlreadyExists (subject = recording id) when the recording is
  // already indexed, IoError on storage failure.
  LakeEntry put_recording(const device::RawDeviceRecord& raw, const EcgRecording& parsed,
                          double upload_s = 0.0);
  // `upload_s` is evaluated once the raw blob is durable.
  LakeEntry put_recording(const device::RawDeviceRecord& raw, const EcgRecording& parsed,
                          const std::function<double()>& upload_s);

  std::vector<LakeEntry> list_since(IndexSeq cursor) const override;
  std::optional<LakeEntry> find_entry(const RecordingId& id) const;
  std::vector<LakeEntry> entries_for_study(const StudyId& study) const;
  std::size_t index_size() const;
  IndexSeq max_seq() const;

  // Throws NotFound for unknown ids.
  StoredRecording get_recording(const RecordingId& id) const;
  std::string get_raw(const RecordingId& id) const;

  // Keeps an unrecognized payload out of the lake proper.
  void quarantine(std::string_view bytes);

  // Writes the result document for a recording (durable, not yet indexed).
  void stage_results(const RecordingId& id, std::string_view document);

  void put_result(const PredictionResult& result);
  void put_note(const ProcessingNote& note);

  // Results ordered by produced_at. Throws NotFound for ids never indexed.
  std::vector<PredictionResult> get_results(const RecordingId& id) const;
  std::vector<ProcessingNote> get_notes(const RecordingId& id) const;

  // True once any result or note exists for the recording.
  bool has_outcome(const RecordingId& id) const;

  std::filesystem::path state_dir() const { return root_ / "state"; }

 private:
  void open_registry();
  void load_index();
  void load_results();
  void append_line(const std::filesystem::path& file, int fd, const std::string& line);
  void write_atomic(const std::filesystem::path& path, std::string_view bytes) const;
  void fsync_dir(const std::filesystem::path& dir) const;

  std::filesystem::path root_;
  LakeOptions options_;

  // Serializes every append to index.jsonl and results.jsonl.
  std::mutex gate_;
  int index_fd_ = -1;
  int results_fd_ = -1;

  mutable std::shared_mutex state_mu_;
  std::vector<LakeEntry> entries_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::unordered_map<std::string, std::vector<PredictionResult>> results_;
  std::unordered_map<std::string, std::vector<ProcessingNote>> notes_;

  std::mutex registry_mu_;
  std::string secret_;
  std::map<std::string, StudyId, std::less<>> studies_;
  int registry_fd_ = -1;
};

}  // namespace ecg::lake

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ecg/core/types.hpp"

namespace ecg::lake {

using IndexSeq = std::uint64_t;

// One row of the append-only metadata index.
struct LakeEntry {
  IndexSeq index_seq = 0;
  RecordingId recording_id;
  DeviceKind device = DeviceKind::Kardia;
  StudyId study_id;
  std::string blob_path;
  Timestamp received_at{};

  bool operator==(const LakeEntry&) const = default;
};

// "blobs/<first two hex digits>/<recording id>"
std::string blob_path_for(const RecordingId& id);

// Terminal or per-model processing outcome that is not a probability.
enum class NoteKind {
  Rejected,    // preprocessing refused the recording (TooShort, FlatSignal)
  ModelError,  // one model failed; the others may still have results
  Failed,      // the pipeline could not process the entry at all
};

std::string_view to_string(NoteKind kind) noexcept;
NoteKind parse_note_kind(std::string_view text);

struct ProcessingNote {
  RecordingId recording_id;
  NoteKind kind = NoteKind::Rejected;
  std::string model_id;  // empty unless kind == ModelError
  std::string code;      // error code name, e.g. "FlatSignal"
  std::string reason;
  Timestamp produced_at{};
};

// Canonical recording as stored, with the measured ingest write time.
struct StoredRecording {
  EcgRecording recording;
  double upload_s = 0.0;
};

}  // namespace ecg::lake

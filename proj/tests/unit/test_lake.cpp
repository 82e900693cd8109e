#include <sys/wait.h>
#include <unistd.h>

#include <fstream>
#include <random>

#include "doctest.h"

#include "ecg/core/error.hpp"
#include "ecg/core/math.hpp"
#include "ecg/lake/codec.hpp"
#include "ecg/lake/lake.hpp"
#include "lake_fixtures.hpp"
#include "testutil.hpp"

using namespace ecg;
using namespace ecg::lake;
using ecg::testing::golden;
using ecg::testing::Payload;
using ecg::testing::synthetic_payload;
using ecg::testing::TempDir;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an ecg::Error");
  return ErrorCode::IoError;
}

LakeOptions fast() {
  LakeOptions o;
  o.sync = false;
  return o;
}

StageTimings timings() { return StageTimings(30.0, 0.7, 19.17, 13.51, 2.35); }

}  // namespace

TEST_CASE("register_study is idempotent, injective, and keyed") {
  TempDir dir;
  Lake lake(dir.path(), fast());
  const auto a = lake.register_study("MRN-001");
  CHECK(lake.register_study("MRN-001") == a);
  CHECK(lake.register_study("MRN-002") != a);
  CHECK(code_of([&] { lake.register_study(""); }) == ErrorCode::BadRequest);
  CHECK(code_of([&] { lake.register_study("has space"); }) == ErrorCode::BadRequest);

  Lake reopened(dir.path(), fast());
  CHECK(reopened.register_study("MRN-001") == a);

  TempDir other;
  Lake elsewhere(other.path(), fast());
  CHECK(elsewhere.register_study("MRN-001") != a);
}

TEST_CASE("put_recording assigns consecutive sequence numbers and dedupes") {
  TempDir dir;
  Lake lake(dir.path(), fast());
  CHECK(lake.list_since(0).empty());
  const auto study = lake.register_study("MRN-001");
  std::vector<LakeEntry> entries;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto p = synthetic_payload(DeviceKind::Kardia, seed, study);
    entries.push_back(lake.put_recording(p.raw, p.parsed, 0.25));
    CHECK(entries.back().index_seq == seed);
    CHECK(entries.back().blob_path == blob_path_for(p.parsed.recording_id()));
  }
  const auto again = synthetic_payload(DeviceKind::Kardia, 3, study);
  CHECK(code_of([&] { lake.put_recording(again.raw, again.parsed); }) ==
        ErrorCode::AlreadyExists);
  CHECK(lake.index_size() == 5);
  CHECK(ecg::testing::index_on_disk(lake).size() == 5);

  const auto tail = lake.list_since(3);
  REQUIRE(tail.size() == 2);
  CHECK(tail[0] == entries[3]);
  CHECK(tail[1] == entries[4]);
  CHECK(lake.list_since(5).empty());
  CHECK(lake.list_since(99).empty());
  CHECK(lake.list_since(0) == entries);

  const auto stored = lake.get_recording(entries[0].recording_id);
  CHECK(stored.upload_s == 0.25);
  CHECK(stored.recording.study_id() == study);
  CHECK(stored.recording.samples().size() == 3000);
  CHECK(lake.entries_for_study(study).size() == 5);

  Lake reopened(dir.path(), fast());
  CHECK(reopened.list_since(0) == entries);
  const auto p6 = synthetic_payload(DeviceKind::Fitbit, 6, study);
  CHECK(reopened.put_recording(p6.raw, p6.parsed).index_seq == 6);
}

TEST_CASE("put_recording refuses inconsistent input") {
  TempDir dir;
  Lake lake(dir.path(), fast());
  const auto study = lake.register_study("MRN-001");
  auto p = synthetic_payload(DeviceKind::Kardia, 1, study);
  auto tampered = p.raw;
  tampered.bytes += " ";
  CHECK(code_of([&] { lake.put_recording(tampered, p.parsed); }) == ErrorCode::BadRequest);
  const auto unassigned = device::parse_any(p.raw.bytes);
  CHECK(code_of([&] { lake.put_recording(p.raw, unassigned); }) == ErrorCode::BadRequest);
  CHECK(lake.index_size() == 0);
}

TEST_CASE("two concurrent writers produce a gap-free index") {
  TempDir dir;
  Lake lake(dir.path(), fast());
  const auto r = ecg::testing::concurrent_puts(lake, 2, 500, 1000);
  CHECK(r.failures == 0);
  CHECK(r.stored == 1000);
  CHECK(r.gap_free);
  Lake reopened(dir.path(), fast());
  CHECK(reopened.index_size() == 1000);
}

TEST_CASE("blobs round-trip byte for byte") {
  TempDir dir;
  Lake lake(dir.path(), fast());
  const auto study = lake.register_study("MRN-blob");
  const auto base = synthetic_payload(DeviceKind::Kardia, 1, study);
  std::mt19937_64 rng(1000);
  std::uniform_int_distribution<int> byte(0, 255);
  for (int i = 0; i < 1000; ++i) {
    device::RawDeviceRecord raw = base.raw;
    std::string noise(static_cast<std::size_t>(i % 64), '\0');
    for (auto& c : noise) c = static_cast<char>(byte(rng));
    raw.bytes += noise + std::to_string(i);
    EcgRecording::Fields f;
    f.recording_id = RecordingId::of_bytes(raw.bytes);
    f.study_id = study;
    f.sample_rate_hz = 100;
    f.samples_mv = {0.1, 0.2};
    lake.put_recording(raw, EcgRecording(std::move(f)));
    CHECK(lake.get_raw(RecordingId::of_bytes(raw.bytes)) == raw.bytes);
  }
  CHECK(lake.index_size() == 1000);
}

TEST_CASE("a crash between blob write and index append leaves an invisible orphan") {
  TempDir dir;
  const auto payload = [&] {
    Lake lake(dir.path(), fast());
    return synthetic_payload(DeviceKind::Kardia, 77, lake.register_study("MRN-crash"));
  }();
  const pid_t child = fork();
  REQUIRE(child >= 0);
  if (child == 0) {
    LakeOptions o = fast();
    o.after_blob_write = [] { ::_exit(42); };
    Lake lake(dir.path(), o);
    lake.put_recording(payload.raw, payload.parsed);
    ::_exit(0);
  }
  int status = 0;
  REQUIRE(::waitpid(child, &status, 0) == child);
  REQUIRE(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 42);

  CHECK(std::filesystem::exists(dir.path() / blob_path_for(payload.parsed.recording_id())));
  Lake lake(dir.path(), fast());
  CHECK(lake.list_since(0).empty());
  CHECK_FALSE(lake.find_entry(payload.parsed.recording_id()));
  CHECK(lake.put_recording(payload.raw, payload.parsed).index_seq == 1);
  CHECK(lake.get_raw(payload.parsed.recording_id()) == payload.raw.bytes);
}

TEST_CASE("a torn trailing index line is discarded on open") {
  TempDir dir;
  LakeEntry first;
  {
    Lake lake(dir.path(), fast());
    const auto study = lake.register_study("MRN-torn");
    const auto p = synthetic_payload(DeviceKind::Kardia, 1, study);
    first = lake.put_recording(p.raw, p.parsed);
  }
  {
    std::ofstream out(dir.path() / "index.jsonl", std::ios::app);
    out << R"({"blob_path":"blobs/ab/ab)";
  }
  Lake lake(dir.path(), fast());
  CHECK(lake.list_since(0) == std::vector<LakeEntry>{first});
  const auto p = synthetic_payload(DeviceKind::Kardia, 2, lake.register_study("MRN-torn"));
  CHECK(lake.put_recording(p.raw, p.parsed).index_seq == 2);
  CHECK(ecg::testing::index_on_disk(lake).size() == 2);
}

TEST_CASE("no external identifier appears outside the registry") {
  TempDir dir;
  {
    Lake lake(dir.path(), fast());
    std::uint64_t seed = 1;
    for (const char* ext : {"MRN-001", "MRN-002", "MRN-003"}) {
      const auto study = lake.register_study(ext);
      for (int i = 0; i < 2; ++i) {
        const auto p = synthetic_payload(DeviceKind::Kardia, seed++, study);
        const auto e = lake.put_recording(p.raw, p.parsed);
        lake.put_result(PredictionResult::make(e.recording_id, "lvsd", 0.7, 0.5, timings(),
                                               parse_rfc3339("2024-03-01T12:01:00Z")));
      }
    }
  }
  const auto outside = ecg::testing::slurp_tree(dir.path(), dir.path() / "registry");
  CHECK(outside.size() > 10000);
  CHECK(outside.find("MRN-") == std::string::npos);
  const auto registry = ecg::testing::slurp_tree(dir.path() / "registry");
  CHECK(registry.find("MRN-001") != std::string::npos);
}

TEST_CASE("results and notes") {
  TempDir dir;
  Lake lake(dir.path(), fast());
  const auto p = synthetic_payload(DeviceKind::Kardia, 1, lake.register_study("MRN-001"));
  const auto id = p.parsed.recording_id();
  CHECK(code_of([&] { lake.get_results(id); }) == ErrorCode::NotFound);
  CHECK(code_of([&] { lake.get_recording(id); }) == ErrorCode::NotFound);
  lake.put_recording(p.raw, p.parsed);
  CHECK(lake.get_results(id).empty());
  CHECK_FALSE(lake.has_outcome(id));

  const auto t0 = parse_rfc3339("2024-03-01T12:01:00.000Z");
  const auto r3 = PredictionResult::make(id, "structural", 0.25, 0.5, timings(),
                                         add_seconds(t0, 2));
  const auto r1 = PredictionResult::make(id, "hcm", 0.75, 0.5, timings(), t0);
  const auto r2 = PredictionResult::make(id, "lvsd", 0.5, 0.5, timings(), add_seconds(t0, 1));
  for (const auto& r : {r3, r1, r2}) lake.put_result(r);
  CHECK(lake.has_outcome(id));

  auto check = [&](const Lake& l) {
    const auto got = l.get_results(id);
    REQUIRE(got.size() == 3);
    CHECK(got[0].model_id == "hcm");
    CHECK(got[1].model_id == "lvsd");
    CHECK(got[2].model_id == "structural");
    CHECK(got[0].probability == r1.probability);
    CHECK(got[0].label == true);
    CHECK(got[1].label == true);
    CHECK(got[2].label == false);
    CHECK(got[0].threshold == r1.threshold);
    CHECK(got[0].produced_at == r1.produced_at);
    CHECK(got[0].timings.total_s() == r1.timings.total_s());
    CHECK(got[0].timings.pickup_s() == 19.17);
  };
  check(lake);
  lake.put_note({id, NoteKind::ModelError, "x", "NumericError", "conv4: non-finite", t0});
  Lake reopened(dir.path(), fast());
  check(reopened);
  const auto notes = reopened.get_notes(id);
  REQUIRE(notes.size() == 1);
  CHECK(notes[0].kind == NoteKind::ModelError);
  CHECK(notes[0].model_id == "x");
  CHECK(notes[0].reason == "conv4: non-finite");

  const auto unknown = RecordingId::of_bytes("never stored");
  CHECK(code_of([&] { lake.put_result(PredictionResult::make(unknown, "lvsd", 0.5, 0.5,
                                                             timings(), t0)); }) ==
        ErrorCode::NotFound);
}

TEST_CASE("staged results and quarantine live outside the index") {
  TempDir dir;
  Lake lake(dir.path(), fast());
  lake.quarantine("garbage bytes");
  CHECK(std::filesystem::exists(dir.path() / "quarantine" / content_hash("garbage bytes")));
  CHECK(lake.index_size() == 0);
  const auto p = synthetic_payload(DeviceKind::Kardia, 1, lake.register_study("MRN-001"));
  lake.put_recording(p.raw, p.parsed);
  lake.stage_results(p.parsed.recording_id(), R"({"models":[]})");
  CHECK_FALSE(lake.has_outcome(p.parsed.recording_id()));
}

TEST_CASE("index rows match the golden on-disk format") {
  TempDir dir;
  std::filesystem::create_directories(dir.path() / "registry");
  {
    std::ofstream key(dir.path() / "registry" / "secret.key", std::ios::binary);
    key << golden("lake-secret.key");
  }
  Lake lake(dir.path(), fast());
  const auto study = lake.register_study("MRN-001");
  const auto bytes = golden("kardia.json");
  const auto at = parse_rfc3339("2024-03-01T12:00:30.000Z");
  const auto parsed = device::parse_any(bytes, {}, at).with_study(study);
  lake.put_recording({DeviceKind::Kardia, bytes, "golden", at}, parsed);
  CHECK(ecg::testing::read_file(dir.path() / "index.jsonl") == golden("index-line.jsonl"));

  const auto line = golden("index-line.jsonl");
  const auto e = entry_from_json(nlohmann::json::parse(line));
  CHECK(e.index_seq == 1);
  CHECK(e.study_id.str() == "dc29684c60f17dd6780b963bf8ca9c78");
  CHECK(to_json(e).dump() + "\n" == line);
}

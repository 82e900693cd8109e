#pragma once

// Pull side of ingest: vendor-style query APIs (Kardia, Fitbit) are polled
// with a cursor and every new record is pushed through the Ingestor.
//
// Wire format of GET /records?since=<cursor>:
//   {"records": [{"seq": 4, "external_id": "MRN-001",
//                 "record": {"device": "kardia", "rate": 100, ...}}, ...],
//    "next": 4}
// `record` is a device record as parse_kardia_record/parse_fitbit_record
// accept it; its compact serialization is the raw payload.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "ecg/api/ingest.hpp"

namespace ecg::api {

struct FeedRecord {
  std::uint64_t seq = 0;
  std::string external_id;
  std::string bytes;
};

struct FeedPage {
  std::vector<FeedRecord> records;
  std::uint64_t next = 0;
};

class RecordFeed {
 public:
  virtual ~RecordFeed() = default;
  virtual FeedPage fetch(std::uint64_t since) = 0;
  virtual std::string source() const = 0;
};

// Decodes a response body. Throws ParseError.
FeedPage parse_feed_page(std::string_view body);

// Client for a remote feed, e.g. "http://127.0.0.1:8081". Transport
// failures and non-200 replies throw IoError.
class HttpRecordFeed final : public RecordFeed {
 public:
  explicit HttpRecordFeed(std::string base_url);
  FeedPage fetch(std::uint64_t since) override;
  std::string source() const override { return base_url_; }

 private:
  std::string base_url_;
};

struct PullReport {
  std::size_t fetched = 0;
  std::size_t ingested = 0;
  std::size_t duplicates = 0;
  std::size_t rejected = 0;  // unparseable or out-of-contract records
  std::uint64_t cursor = 0;
};

// Keeps a per-feed cursor in <lake>/state/feed-<name>.cursor.
class FeedConnector {
 public:
  FeedConnector(std::string name, RecordFeed& feed, Ingestor& ingestor);

  // One fetch + ingest round. A rejected record is logged and skipped; a
  // transport failure throws and leaves the cursor where it was.
  PullReport pull();

  std::uint64_t cursor() const noexcept { return cursor_; }

 private:
  std::filesystem::path cursor_file() const;

  std::string name_;
  RecordFeed& feed_;
  Ingestor& ingestor_;
  std::uint64_t cursor_ = 0;
};

}  // namespace ecg::api

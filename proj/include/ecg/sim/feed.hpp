#pragma once

// Vendor query API stand-in. A schedule says when each synthetic record
// becomes visible; GET /records?since=<cursor> returns what is visible now.
//
// Schedule file:
//   {"device": "kardia", "origin": "2024-03-01T12:00:00.000Z",
//    "items": [{"at_s": 10, "external_id": "MRN-001", "seed": 7, "flat": false}]}
// Item seeds default to base_seed + position.

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

#include "json.hpp"

#include "ecg/api/feed.hpp"
#include "ecg/pipeline/clock.hpp"
#include "ecg/sim/synth.hpp"

namespace httplib {
class Server;
}

namespace ecg::sim {

struct ScheduleItem {
  double at_s = 0.0;
  std::string external_id;
  SynthSpec spec;
};

struct Schedule {
  DeviceKind device = DeviceKind::Kardia;
  Timestamp origin = SynthSpec::default_recorded_at();
  std::vector<ScheduleItem> items;
};

// Throws ParseError. Items come back ordered by at_s (stable).
Schedule parse_schedule(const nlohmann::json& doc, std::uint64_t base_seed);
Schedule load_schedule(const std::filesystem::path& path, std::uint64_t base_seed);

class ScheduledFeed final : public api::RecordFeed {
 public:
  ScheduledFeed(Schedule schedule, pipeline::Clock& clock, std::string source = "sim");

  // Records with seq > since whose emit time is at or before now. seq is the
  // 1-based position in the schedule.
  api::FeedPage fetch(std::uint64_t since) override;
  std::string source() const override { return source_; }

  // Adds a record at runtime (bench driver).
  std::uint64_t push(ScheduleItem item);

 private:
  struct Entry {
    Timestamp visible_at;
    std::string external_id;
    std::string bytes;
  };

  pipeline::Clock& clock_;
  std::string source_;
  Timestamp origin_;
  std::mutex mu_;
  std::vector<Entry> entries_;
};

nlohmann::json feed_page_json(const api::FeedPage& page);

// GET /records?since=N. A missing cursor means 0; anything but a decimal
// integer is 400.
void install_feed_routes(httplib::Server& server, api::RecordFeed& feed);

}  // namespace ecg::sim

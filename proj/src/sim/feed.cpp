#include "ecg/sim/feed.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

#include "httplib.h"

#include "ecg/core/error.hpp"

namespace ecg::sim {

using nlohmann::json;

Schedule parse_schedule(const json& doc, std::uint64_t base_seed) {
  try {
    Schedule s;
    s.device = parse_device_kind(doc.value("device", std::string("kardia")));
    if (doc.contains("origin")) s.origin = parse_rfc3339(doc.at("origin").get<std::string>());
    const auto& items = doc.at("items");
    for (std::size_t i = 0; i < items.size(); ++i) {
      const auto& it = items[i];
      ScheduleItem item;
      item.at_s = it.at("at_s").get<double>();
      if (!(item.at_s >= 0.0)) throw Error(ErrorCode::ParseError, "at_s must be >= 0");
      item.external_id = it.at("external_id").get<std::string>();
      item.spec.device = s.device;
      item.spec.seed = it.contains("seed") ? it.at("seed").get<std::uint64_t>() : base_seed + i;
      item.spec.flat = it.value("flat", false);
      item.spec.recorded_at = add_seconds(s.origin, item.at_s - item.spec.duration_s);
      s.items.push_back(std::move(item));
    }
    std::stable_sort(s.items.begin(), s.items.end(),
                     [](const auto& a, const auto& b) { return a.at_s < b.at_s; });
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("bad schedule: ") + e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::ParseError, "bad schedule: " + e.message());
  }
}

Schedule load_schedule(const std::filesystem::path& path, std::uint64_t base_seed) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::NotFound, "cannot open schedule " + path.string());
  try {
    return parse_schedule(json::parse(in), base_seed);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("bad schedule: ") + e.what());
  }
}

ScheduledFeed::ScheduledFeed(Schedule schedule, pipeline::Clock& clock, std::string source)
    : clock_(clock), source_(std::move(source)), origin_(schedule.origin) {
  for (auto& item : schedule.items) push(std::move(item));
}

std::uint64_t ScheduledFeed::push(ScheduleItem item) {
  Entry e{add_seconds(origin_, item.at_s), std::move(item.external_id), serialize(item.spec)};
  std::lock_guard lock(mu_);
  entries_.push_back(std::move(e));
  return entries_.size();
}

api::FeedPage ScheduledFeed::fetch(std::uint64_t since) {
  const auto now = clock_.now();
  std::lock_guard lock(mu_);
  api::FeedPage page;
  page.next = since;
  for (std::size_t i = since; i < entries_.size(); ++i) {
    // Visibility is a prefix: a later record never shows before an earlier one.
    if (entries_[i].visible_at > now) break;
    page.records.push_back({i + 1, entries_[i].external_id, entries_[i].bytes});
    page.next = i + 1;
  }
  return page;
}

json feed_page_json(const api::FeedPage& page) {
  json records = json::array();
  for (const auto& r : page.records) {
    records.push_back(
        {{"seq", r.seq}, {"external_id", r.external_id}, {"record", json::parse(r.bytes)}});
  }
  return {{"records", std::move(records)}, {"next", page.next}};
}

void install_feed_routes(httplib::Server& server, api::RecordFeed& feed) {
  server.Get("/records", [&feed](const httplib::Request& req, httplib::Response& res) {
    std::uint64_t since = 0;
    if (req.has_param("since")) {
      const auto text = req.get_param_value("since");
      const auto* last = text.data() + text.size();
      const auto [ptr, ec] = std::from_chars(text.data(), last, since);
      if (text.empty() || ec != std::errc() || ptr != last) {
        res.status = 400;
        res.set_content(json{{"error", {{"code", "BadRequest"},
                                        {"message", "since must be a non-negative integer"}}}}
                            .dump(),
                        "application/json");
        return;
      }
    }
    res.set_content(feed_page_json(feed.fetch(since)).dump(), "application/json");
  });
}

}  // namespace ecg::sim

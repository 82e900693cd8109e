#include "ecg/api/feed.hpp"

#include <spdlog/spdlog.h>

#include <fstream>

#include "httplib.h"
#include "json.hpp"

namespace ecg::api {

namespace fs = std::filesystem;
using nlohmann::json;

FeedPage parse_feed_page(std::string_view body) {
  try {
    const auto doc = json::parse(body);
    FeedPage page;
    page.next = doc.at("next").get<std::uint64_t>();
    for (const auto& r : doc.at("records")) {
      const auto& record = r.at("record");
      if (!record.is_object()) throw Error(ErrorCode::ParseError, "feed record is not an object");
      page.records.push_back(
          {r.at("seq").get<std::uint64_t>(), r.at("external_id").get<std::string>(),
           record.dump()});
    }
    return page;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("bad feed page: ") + e.what());
  }
}

HttpRecordFeed::HttpRecordFeed(std::string base_url) : base_url_(std::move(base_url)) {}

FeedPage HttpRecordFeed::fetch(std::uint64_t since) {
  httplib::Client client(base_url_);
  client.set_connection_timeout(5);
  client.set_read_timeout(30);
  const auto res = client.Get("/records?since=" + std::to_string(since));
  if (!res) {
    throw Error(ErrorCode::IoError,
                "feed " + base_url_ + " unreachable: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(ErrorCode::IoError,
                "feed " + base_url_ + " answered " + std::to_string(res->status));
  }
  return parse_feed_page(res->body);
}

FeedConnector::FeedConnector(std::string name, RecordFeed& feed, Ingestor& ingestor)
    : name_(std::move(name)), feed_(feed), ingestor_(ingestor) {
  std::ifstream in(cursor_file());
  if (!(in >> cursor_)) cursor_ = 0;
}

fs::path FeedConnector::cursor_file() const {
  return ingestor_.lake().state_dir() / ("feed-" + name_ + ".cursor");
}

PullReport FeedConnector::pull() {
  const auto page = feed_.fetch(cursor_);
  PullReport report;
  report.fetched = page.records.size();
  for (const auto& r : page.records) {
    try {
      const auto out = ingestor_.ingest({r.bytes, r.external_id, std::nullopt,
                                         feed_.source() + "/records#" + std::to_string(r.seq)});
      ++(out.duplicate ? report.duplicates : report.ingested);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::IoError) throw;
      ++report.rejected;
      spdlog::warn("feed {}: record {} rejected: {}", name_, r.seq, e.what());
    }
  }
  if (page.next > cursor_) {
    const auto path = cursor_file();
    const auto tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      out << page.next << "\n";
      if (!out.flush()) throw Error(ErrorCode::IoError, "cannot persist feed cursor");
    }
    fs::rename(tmp, path);
    cursor_ = page.next;
  }
  report.cursor = cursor_;
  return report;
}

}  // namespace ecg::api

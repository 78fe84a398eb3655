#include "ebg/chat_backend.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <limits>

#include <httplib.h>
#include <json.hpp>

#include "ebg/analysis.hpp"
#include "ebg/llm.hpp"

namespace ebg::llm {

using nlohmann::json;

MissingTranscriptEntry::MissingTranscriptEntry(std::string digest)
    : std::runtime_error("no recorded response for prompt digest " + digest), digest_(std::move(digest)) {}

std::string to_jsonl(const TranscriptEntry& entry) {
  const json j = {{"digest", entry.digest},
                  {"prompt", entry.prompt},
                  {"response", entry.response},
                  {"backend", entry.backend},
                  {"timestamp", entry.timestamp}};
  return j.dump();
}

std::vector<TranscriptEntry> read_transcript(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open transcript " + path.string());
  std::vector<TranscriptEntry> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      TranscriptEntry e;
      e.prompt = j.at("prompt").get<std::string>();
      e.response = j.at("response").get<std::string>();
      e.digest = j.value("digest", prompt_digest(e.prompt));
      e.backend = j.value("backend", "");
      e.timestamp = j.value("timestamp", "");
      out.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw std::runtime_error(path.string() + ":" + std::to_string(number) + ": malformed transcript entry: " +
                               ex.what());
    }
  }
  return out;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------

LiveBackend::LiveBackend(LiveSettings settings) : settings_(std::move(settings)) {
  const std::string& url = settings_.endpoint_url;
  const auto scheme_end = url.find("://");
  if (url.empty() || scheme_end == std::string::npos)
    throw std::invalid_argument("endpoint_url must be an absolute http(s) URL, got \"" + url + "\"");
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
}

std::string LiveBackend::complete(const std::string& prompt) {
  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(settings_.timeout_seconds, 0);
  client.set_read_timeout(settings_.timeout_seconds, 0);
  client.set_write_timeout(settings_.timeout_seconds, 0);

  httplib::Headers headers;
  if (!settings_.api_key.empty()) headers.emplace("Authorization", "Bearer " + settings_.api_key);

  const json body = {{"model", settings_.model},
                     {"messages", json::array({{{"role", "user"}, {"content", prompt}}})},
                     {"temperature", settings_.decoding.temperature},
                     {"max_tokens", settings_.decoding.max_tokens}};

  const auto res = client.Post(path_, headers, body.dump(), "application/json");
  if (!res) throw TransportError("request to " + settings_.endpoint_url + " failed: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw TransportError("endpoint returned HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
  try {
    const json reply = json::parse(res->body);
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw TransportError(std::string("malformed chat-completion response: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

ReplayBackend::ReplayBackend(std::vector<TranscriptEntry> entries, ReplayMode mode)
    : entries_(std::move(entries)), mode_(mode) {
  for (std::size_t i = 0; i < entries_.size(); ++i) by_digest_[entries_[i].digest].entries.push_back(i);
}

std::string ReplayBackend::complete(const std::string& prompt) {
  const std::string digest = prompt_digest(prompt);
  std::lock_guard lock(mutex_);
  if (auto it = by_digest_.find(digest); it != by_digest_.end()) {
    Slot& slot = it->second;
    if (slot.cursor < slot.entries.size()) return entries_[slot.entries[slot.cursor++]].response;
    if (mode_ == ReplayMode::fuzzy) return entries_[slot.entries.back()].response;
  }
  if (mode_ == ReplayMode::strict || entries_.empty()) throw MissingTranscriptEntry(digest);

  std::size_t best = 0;
  std::size_t best_distance = std::numeric_limits<std::size_t>::max();
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const std::size_t d = analysis::levenshtein(prompt, entries_[i].prompt);
    if (d < best_distance) {
      best_distance = d;
      best = i;
    }
  }
  return entries_[best].response;
}

// ---------------------------------------------------------------------------

RecordingBackend::RecordingBackend(std::shared_ptr<ChatBackend> inner, std::filesystem::path transcript_path)
    : inner_(std::move(inner)), path_(std::move(transcript_path)) {
  if (!inner_) throw std::invalid_argument("RecordingBackend needs an inner backend");
}

std::string RecordingBackend::complete(const std::string& prompt) {
  std::string response = inner_->complete(prompt);
  TranscriptEntry entry{prompt_digest(prompt), prompt, response, inner_->tag(), utc_timestamp()};
  std::lock_guard lock(mutex_);
  std::ofstream out(path_, std::ios::app);
  if (!out) throw std::runtime_error("cannot append to transcript " + path_.string());
  out << to_jsonl(entry) << '\n';
  return response;
}

}  // namespace ebg::llm

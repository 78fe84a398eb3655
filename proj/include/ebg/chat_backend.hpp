#pragma once

// Chat-completion backends: a live HTTP client for chat-completions style
// endpoints, a replay backend answering from a recorded transcript, and a
// recorder that tees a live backend into a transcript file.

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ebg::llm {

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  /// Sends `prompt` as a single user message and returns the reply text.
  /// Must be safe to call concurrently.
  virtual std::string complete(const std::string& prompt) = 0;
  virtual std::string tag() const = 0;
};

/// Network or HTTP-level failure. Retryable.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Replay lookup failed. Not retryable: the run has diverged from the recording.
class MissingTranscriptEntry : public std::runtime_error {
 public:
  explicit MissingTranscriptEntry(std::string digest);
  const std::string& digest() const { return digest_; }

 private:
  std::string digest_;
};

struct TranscriptEntry {
  std::string digest;
  std::string prompt;
  std::string response;
  std::string backend;
  std::string timestamp;
};

/// One JSON object per line, fields {digest, prompt, response, backend, timestamp}.
std::string to_jsonl(const TranscriptEntry& entry);
/// Throws std::runtime_error naming the line number on malformed input.
std::vector<TranscriptEntry> read_transcript(const std::filesystem::path& path);

/// Current UTC time as YYYY-MM-DDTHH:MM:SSZ.
std::string utc_timestamp();

struct DecodingParams {
  double temperature = 0.8;
  int max_tokens = 512;
};

struct LiveSettings {
  /// Full URL of the chat-completions endpoint, e.g. http://host:8000/v1/chat/completions
  std::string endpoint_url;
  std::string api_key;
  std::string model = "llama-3.3-70b-instruct";
  DecodingParams decoding;
  int timeout_seconds = 120;
};

class LiveBackend final : public ChatBackend {
 public:
  /// Throws std::invalid_argument when the endpoint URL is empty or malformed.
  explicit LiveBackend(LiveSettings settings);

  std::string complete(const std::string& prompt) override;
  std::string tag() const override { return "live:" + settings_.model; }

 private:
  LiveSettings settings_;
  std::string scheme_host_port_;
  std::string path_;
};

enum class ReplayMode {
  /// A prompt without a remaining recorded response is an error.
  strict,
  /// Falls back to the recorded prompt nearest in edit distance.
  fuzzy,
};

class ReplayBackend final : public ChatBackend {
 public:
  ReplayBackend(std::vector<TranscriptEntry> entries, ReplayMode mode = ReplayMode::strict);

  /// Repeated identical prompts receive their recorded responses in order.
  std::string complete(const std::string& prompt) override;
  std::string tag() const override { return "replay"; }

 private:
  struct Slot {
    std::vector<std::size_t> entries;
    std::size_t cursor = 0;
  };
  std::vector<TranscriptEntry> entries_;
  ReplayMode mode_;
  std::mutex mutex_;
  std::map<std::string, Slot> by_digest_;
};

class RecordingBackend final : public ChatBackend {
 public:
  /// Appends to `transcript_path`, creating it if needed.
  RecordingBackend(std::shared_ptr<ChatBackend> inner, std::filesystem::path transcript_path);

  std::string complete(const std::string& prompt) override;
  std::string tag() const override { return inner_->tag(); }

 private:
  std::shared_ptr<ChatBackend> inner_;
  std::filesystem::path path_;
  std::mutex mutex_;
};

}  // namespace ebg::llm

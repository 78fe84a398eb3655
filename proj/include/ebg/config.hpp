#pragma once

// JSON configuration file: engine, optimizers, backend and analysis blocks.
// Every default is the published experimental setting.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ebg/chat_backend.hpp"
#include "ebg/engine.hpp"

namespace ebg::config {

enum class BackendMode { live, replay, record };

struct BackendConfig {
  BackendMode mode = BackendMode::live;
  std::string endpoint_url;
  std::string api_key;  // never written back out
  std::string model = "llama-3.3-70b-instruct";
  llm::DecodingParams decoding;
  int timeout_seconds = 120;
  std::string transcript;
  llm::ReplayMode replay_fallback = llm::ReplayMode::strict;
};

struct AnalysisConfig {
  std::size_t sobol_base_samples = 1024;
  std::size_t curvature_points = 500;
  double fd_gradient_step = 1e-5;
  double fd_hessian_step = 1e-3;
  std::uint64_t seed = 7;
};

struct AppConfig {
  engine::EngineConfig engine;
  BackendConfig backend;
  AnalysisConfig analysis;
};

/// Raised with one entry per violated or unknown field.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

nlohmann::json to_json(const AppConfig& config);
AppConfig from_json(const nlohmann::json& j);
AppConfig load_config(const std::filesystem::path& path);

/// EBG_API_URL, EBG_API_KEY and EBG_MODEL override the backend block.
void apply_environment(AppConfig& config);

/// Structural checks plus backend-mode requirements.
std::vector<std::string> validate(const AppConfig& config);

}  // namespace ebg::config

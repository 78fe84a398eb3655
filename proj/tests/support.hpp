#pragma once

// Shared helpers for the unit tests.

#include <chrono>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ebg/chat_backend.hpp"
#include "ebg/engine.hpp"

namespace test {

// Hand-written versions of the two published example benchmarks.
inline double ga_preferred_native(const double* x) {
  using std::abs, std::cos, std::sin, std::sinh, std::sqrt;
  return x[0] * x[0] + sin(x[1]) * x[2] + abs(x[3] - x[4]) + sqrt(abs(x[0] - x[1])) +
         x[2] * x[3] / (1 + x[4] * x[4] + abs(sin(x[0]) * sinh(x[1]))) + sinh(x[0]) * cos(x[1]) * cos(x[1]) +
         (x[2] - x[3]) * (x[2] - x[3]) / (1 + abs(x[4])) +
         x[0] * x[1] * x[2] * x[3] * x[4] / (1 + abs(x[0]) + abs(x[1]) + abs(x[2]) + abs(x[3]) + abs(x[4])) +
         sin(x[0]) * sin(x[1]) * sin(x[2]) * sin(x[3]) * sin(x[4]) + (x[0] - x[1]) * (x[0] - x[1]) / (1 + x[2] * x[2]) +
         cos(x[0]) * cos(x[1]) * cos(x[2]) * cos(x[3]) * cos(x[4]) + x[3] * x[4] / (1 + abs(x[0]) + abs(x[1]) + abs(x[2]));
}

inline double de_preferred_native(const double* x) {
  using std::abs, std::cos, std::sin, std::sinh, std::sqrt;
  return x[0] * x[0] + abs(x[1] * x[2]) + sqrt(abs(x[3])) - sin(x[4]) + sin(x[0] * x[1]) + cos(x[2] * x[3]) +
         x[0] / (1 + x[4] * x[4]) + sinh(x[1] * x[2] * x[3]) + abs(x[0] - x[1] + x[2] - x[3] + x[4]) +
         sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + x[3] * x[3] + x[4] * x[4]) + x[1] * sinh(x[0] * x[2]) +
         abs(x[2] - x[3]) / sqrt(1 + x[4] * x[4]);
}

inline const char* kGaPreferred =
    "x[0]**2 + sin(x[1])*x[2] + abs(x[3] - x[4]) + sqrt(abs(x[0] - x[1])) + x[2]*x[3]/(1 + x[4]**2 + "
    "abs(sin(x[0])*sinh(x[1]))) + sinh(x[0])*cos(x[1])**2 + abs(x[2] - x[3])**2/(1 + abs(x[4])) + "
    "x[0]*x[1]*x[2]*x[3]*x[4]/(1 + abs(x[0]) + abs(x[1]) + abs(x[2]) + abs(x[3]) + abs(x[4])) + "
    "sin(x[0])*sin(x[1])*sin(x[2])*sin(x[3])*sin(x[4]) + abs(x[0] - x[1])**2/(1 + x[2]**2) + "
    "cos(x[0])*cos(x[1])*cos(x[2])*cos(x[3])*cos(x[4]) + x[3]*x[4]/(1 + abs(x[0]) + abs(x[1]) + abs(x[2]))";

inline const char* kDePreferred =
    "x[0]**2 + abs(x[1]*x[2]) + sqrt(abs(x[3])) - sin(x[4]) + sin(x[0]*x[1]) + cos(x[2]*x[3]) + "
    "x[0]/(1 + x[4]**2) + sinh(x[1]*x[2]*x[3]) + abs(x[0] - x[1] + x[2] - x[3] + x[4]) + "
    "sqrt(x[0]**2 + x[1]**2 + x[2]**2 + x[3]**2 + x[4]**2) + x[1]*sinh(x[0]*x[2]) + abs(x[2] - x[3])/sqrt(1 + x[4]**2)";

inline double relative_error(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

/// Backend answering from a callback; records every prompt it sees.
class ScriptedBackend : public ebg::llm::ChatBackend {
 public:
  using Script = std::function<std::string(const std::string& prompt, std::size_t call)>;
  explicit ScriptedBackend(Script script) : script_(std::move(script)) {}

  std::string complete(const std::string& prompt) override {
    std::lock_guard lock(mutex_);
    prompts.push_back(prompt);
    return script_(prompt, prompts.size() - 1);
  }
  std::string tag() const override { return "scripted"; }

  std::vector<std::string> prompts;

 private:
  Script script_;
  std::mutex mutex_;
};

/// Replies with a fresh valid expression on every call.
inline ScriptedBackend::Script distinct_expressions() {
  return [](const std::string&, std::size_t call) {
    return "Problem: f(x) = x[" + std::to_string(call % 5) + "]**2 + " + std::to_string(call + 1) + "*abs(x[" +
           std::to_string((call + 2) % 5) + "])";
  };
}

/// Small engine configuration that runs in well under a second.
inline ebg::engine::EngineConfig small_engine(std::size_t population = 4, std::size_t generations = 3) {
  ebg::engine::EngineConfig c;
  c.population = population;
  c.max_generations = generations;
  c.workers = 1;
  c.fitness.trials = 3;
  c.fitness.prevalidation_samples = 200;
  c.inner.ga.population = 10;
  c.inner.ga.generations = 10;
  c.inner.de.population = 10;
  c.inner.de.generations = 10;
  return c;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 gen(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("ebg_" + tag + "_" + std::to_string(gen()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) out.push_back(line);
  return out;
}

}  // namespace test

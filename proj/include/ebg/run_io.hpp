#pragma once

// Run directory persistence:
//   config.json               configuration snapshot (no secrets)
//   benchmarks.jsonl          every evaluated benchmark, in id order
//   population.gen<k>.jsonl   members of generation k, best first
//   lineage.jsonl             one operator application per line
//   best.json                 final best benchmark and best-fitness trace
// transcript.jsonl is written by the recording backend when recording.

#include <filesystem>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "ebg/config.hpp"
#include "ebg/engine.hpp"

namespace ebg::run_io {

/// Malformed run directory content; the message names file and line.
class RunFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json to_json(const engine::Benchmark& b);
nlohmann::json to_json(const engine::LineageEvent& e);
engine::LineageEvent lineage_from_json(const nlohmann::json& j);

std::filesystem::path population_file(const std::filesystem::path& dir, int generation);

class RunWriter final : public engine::RunSink {
 public:
  /// Creates `dir`, writes config.json and truncates the append-only files.
  RunWriter(std::filesystem::path dir, const nlohmann::json& config_snapshot);

  void on_benchmark(const engine::Benchmark& b) override;
  void on_lineage(const engine::LineageEvent& e) override;
  void on_population(int generation, const std::vector<const engine::Benchmark*>& members) override;
  void on_finish(const engine::RunRecord& run) override;

 private:
  std::filesystem::path dir_;
};

struct LoadedRun {
  config::AppConfig config;
  engine::RunRecord record;
};

/// Rebuilds the run record from a run directory. Throws RunFormatError.
LoadedRun load_run(const std::filesystem::path& dir);

}  // namespace ebg::run_io

#include <algorithm>
#include <fstream>
#include <sstream>

#include "ebg/analysis.hpp"

namespace ebg::analysis {

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

}  // namespace

std::string generations_csv(const engine::RunRecord& run) {
  std::ostringstream csv;
  csv << "generation,best,median\n";
  for (std::size_t g = 0; g < run.populations.size(); ++g) {
    std::vector<double> f;
    for (engine::BenchmarkId id : run.populations[g]) f.push_back(run.benchmark(id).fitness());
    if (f.empty()) continue;
    csv << g << ',' << expr::format_number(*std::min_element(f.begin(), f.end())) << ','
        << expr::format_number(quantile(f, 0.5)) << '\n';
  }
  return csv.str();
}

std::string trajectory_csv(const fitness::BenchmarkEvaluation& evaluation, std::string_view a1_name,
                           std::string_view a2_name) {
  if (evaluation.a1_trials.size() != evaluation.a1_bests.size() ||
      evaluation.a2_trials.size() != evaluation.a2_bests.size())
    throw std::invalid_argument("trajectory export needs an evaluation with kept trials");
  std::vector<const opt::TrialOutcome*> columns;
  std::ostringstream csv;
  csv << "generation";
  for (std::size_t t = 0; t < evaluation.a1_trials.size(); ++t) {
    csv << ',' << a1_name << "_trial" << t;
    columns.push_back(&evaluation.a1_trials[t]);
  }
  for (std::size_t t = 0; t < evaluation.a2_trials.size(); ++t) {
    csv << ',' << a2_name << "_trial" << t;
    columns.push_back(&evaluation.a2_trials[t]);
  }
  csv << '\n';
  std::size_t rows = 0;
  for (const auto* c : columns) rows = std::max(rows, c->best_trace.size());
  // Traces of aborted or shorter runs leave empty cells.
  for (std::size_t r = 0; r < rows; ++r) {
    csv << r;
    for (const auto* c : columns) {
      csv << ',';
      if (r < c->best_trace.size()) csv << expr::format_number(c->best_trace[r]);
    }
    csv << '\n';
  }
  return csv.str();
}

void write_trajectories(const engine::RunRecord& run, const std::filesystem::path& dir,
                        std::vector<engine::BenchmarkId> ids, std::size_t workers) {
  std::filesystem::create_directories(dir);
  write_file(dir / "generations.csv", generations_csv(run));
  if (ids.empty()) {
    const auto best = run.best_id();
    if (!best) return;
    ids.push_back(*best);
  }
  const engine::EngineConfig& cfg = run.config;
  fitness::EvaluationOptions options;
  options.workers = workers;
  options.keep_trials = true;
  for (engine::BenchmarkId id : ids) {
    const engine::Benchmark& b = run.benchmark(id);
    const fitness::BenchmarkEvaluation ev = fitness::evaluate_benchmark(b.expression, cfg.fitness, cfg.inner, options);
    write_file(dir / ("trajectory_" + std::to_string(id) + ".csv"),
               trajectory_csv(ev, fitness::to_string(cfg.fitness.target), fitness::to_string(cfg.fitness.competitor)));
  }
}

}  // namespace ebg::analysis

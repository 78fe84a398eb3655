#pragma once

// Generational loop of the benchmark generator: seeded initialization,
// language-model crossover/mutation, pooled-rank scoring and top-N elitist
// survivor selection.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ebg/chat_backend.hpp"
#include "ebg/expr.hpp"
#include "ebg/fitness.hpp"
#include "ebg/offspring.hpp"
#include "ebg/rng.hpp"

namespace ebg::engine {

using BenchmarkId = std::int64_t;

enum class Origin { seed, init_llm, crossover, mutation };

std::string_view to_string(Origin origin);
Origin origin_from_string(std::string_view text);

struct Benchmark {
  BenchmarkId id = 0;
  expr::Expression expression;
  std::string text;
  fitness::BenchmarkEvaluation evaluation;
  int generation_created = 0;
  Origin origin = Origin::seed;
  /// Crossover: 2, mutation: 1, seed and init: empty.
  std::vector<BenchmarkId> parent_ids;

  double fitness() const { return evaluation.fitness; }
};

/// One operator application. For init events the parents are the in-context examples.
struct LineageEvent {
  BenchmarkId child_id = 0;
  Origin kind = Origin::init_llm;
  std::vector<BenchmarkId> parent_ids;
  std::size_t attempts = 1;
  bool identical = false;
  int generation = 0;
};

struct EngineConfig {
  std::size_t population = 10;
  std::size_t max_generations = 20;
  double crossover_rate = 0.5;
  std::size_t dimension = 5;
  std::uint64_t run_seed = 1;
  /// In-context examples shown during initialization; 0 means all previous members.
  std::size_t max_init_examples = 0;
  std::size_t workers = 0;

  fitness::FitnessConfig fitness;
  fitness::InnerSetup inner;
  llm::RetryPolicy retry;
  expr::FunctionWhitelist whitelist;
  std::string operator_list_text = std::string(llm::kAdvertisedOperators);

  /// Every violated constraint, one message per field. Empty when valid.
  std::vector<std::string> problems() const;
};

struct RunRecord {
  EngineConfig config;
  /// Every benchmark ever accepted; index == id.
  std::vector<Benchmark> benchmarks;
  /// Member ids of each generation's population, sorted by (fitness, id).
  std::vector<std::vector<BenchmarkId>> populations;
  std::vector<LineageEvent> lineage;
  std::vector<double> best_fitness_per_generation;
  bool completed = false;
  std::string abort_reason;
  std::size_t evaluated_benchmarks = 0;
  std::size_t inner_trials = 0;
  std::size_t cache_hits = 0;

  const Benchmark& benchmark(BenchmarkId id) const;
  /// Best member of the last recorded population.
  std::optional<BenchmarkId> best_id() const;
};

/// Persistence hooks; the engine calls them from its single thread.
class RunSink {
 public:
  virtual ~RunSink() = default;
  virtual void on_start(const EngineConfig&) {}
  virtual void on_benchmark(const Benchmark&) {}
  virtual void on_lineage(const LineageEvent&) {}
  virtual void on_population(int /*generation*/, const std::vector<const Benchmark*>& /*members*/) {}
  virtual void on_finish(const RunRecord&) {}
};

/// sum_{i=0}^{D-1} x[i]**(i+1), written x[0] + x[1]**2 + ...
expr::Expression seed_expression(std::size_t dimension);

/// The `n` best by ascending fitness, ties broken by lower id, in that order.
std::vector<Benchmark> select_survivors(std::vector<Benchmark> pool, std::size_t n);

class Evolution {
 public:
  /// Throws std::invalid_argument listing config problems.
  Evolution(EngineConfig config, llm::ChatBackend& client, RunSink* sink = nullptr);

  /// Generation 0: the seed plus N-1 init offspring, all scored.
  void initialize_population();
  /// One pass of offspring creation, scoring and survivor selection.
  void step_generation();
  /// Initialization plus max_generations-1 steps. Unrecoverable backend
  /// failures end the run early with completed=false.
  RunRecord run();

  const RunRecord& record() const { return record_; }
  std::vector<BenchmarkId> population() const;

 private:
  BenchmarkId accept(expr::Expression expression, std::string text, Origin origin,
                     std::vector<BenchmarkId> parent_ids, int generation);
  void evaluate_pending(std::span<const BenchmarkId> ids);
  void set_population(std::vector<BenchmarkId> ids, int generation);
  bool prevalidate(const expr::Expression& e);
  llm::OperatorContext operator_context() const;

  EngineConfig config_;
  llm::ChatBackend& client_;
  RunSink* sink_;
  Rng rng_;
  llm::FailureBudget budget_;
  RunRecord record_;
  std::map<std::string, fitness::BenchmarkEvaluation> cache_;
  std::uint64_t prevalidation_calls_ = 0;
  int generation_ = 0;
};

}  // namespace ebg::engine

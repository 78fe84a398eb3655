#pragma once

// Benchmark scoring: run the target algorithm (A1) and the competitor (A2)
// for T seeded trials each and reduce the per-trial bests to the pooled-rank
// fitness. Lower fitness means A1 dominates A2 more clearly.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ebg/expr.hpp"
#include "ebg/optimizers.hpp"

namespace ebg::fitness {

enum class Algorithm { ga, de };

std::string_view to_string(Algorithm a);  // "GA" / "DE"
/// Accepts "GA"/"DE" in any case; throws std::invalid_argument otherwise.
Algorithm algorithm_from_string(std::string_view text);

/// Search box plus both optimizers' settings.
struct InnerSetup {
  opt::SearchSpace space;
  opt::GaConfig ga;
  opt::DeConfig de;
};

struct FitnessConfig {
  std::size_t trials = 20;
  double alpha = 10.0;
  double invalid_penalty = 1e6;
  Algorithm target = Algorithm::ga;
  Algorithm competitor = Algorithm::de;
  std::uint64_t base_seed = 20250101;
  std::size_t prevalidation_samples = 1000;

  void validate() const;
};

struct PooledRank {
  double fitness;
  double rank_term;
  double penalty_term;
};

/// Ranks are ascending (1 = smallest) over the pooled 2T values with average
/// ranks on ties. rank_term = sum of A1 ranks / (2T(2T+1)/2);
/// penalty_term = alpha * max(0, -min(a1_bests)). Throws std::invalid_argument
/// on non-finite input or mismatched lengths.
PooledRank pooled_rank_fitness(std::span<const double> a1_bests, std::span<const double> a2_bests, double alpha);

struct InvalidPoint {
  opt::Point point;
  expr::Invalidity cause;
};

/// The first of `samples` seeded uniform points in the box where the
/// expression has no finite value.
std::optional<InvalidPoint> first_invalid_point(const expr::Expression& expression, const opt::SearchSpace& space,
                                                std::size_t samples, std::uint64_t seed);

/// True iff `samples` independent uniform points in the box all evaluate to finite reals.
bool prevalidate(const expr::Expression& expression, const opt::SearchSpace& space, std::size_t samples,
                 std::uint64_t seed);

/// Seed of trial `trial` of `algorithm`: a SplitMix64 chain over
/// (base_seed, algorithm tag, trial index).
std::uint64_t trial_seed(std::uint64_t base_seed, Algorithm algorithm, std::size_t trial);

opt::TrialOutcome run_trial(Algorithm algorithm, const expr::Expression& expression, const InnerSetup& setup,
                            std::uint64_t seed);

struct BenchmarkEvaluation {
  double fitness = 0.0;
  std::vector<double> a1_bests;
  std::vector<double> a2_bests;
  double rank_term = 0.0;
  double penalty_term = 0.0;
  bool any_invalid = false;
  /// Full per-trial outcomes (with convergence traces); filled only on request.
  std::vector<opt::TrialOutcome> a1_trials;
  std::vector<opt::TrialOutcome> a2_trials;
};

struct EvaluationOptions {
  std::size_t workers = 1;
  bool keep_trials = false;
};

/// Runs the 2T trials (concurrently when workers > 1; results are indexed so
/// the outcome does not depend on scheduling). Any invalid trial sets
/// fitness = invalid_penalty.
BenchmarkEvaluation evaluate_benchmark(const expr::Expression& expression, const FitnessConfig& config,
                                       const InnerSetup& setup, const EvaluationOptions& options = {});

}  // namespace ebg::fitness

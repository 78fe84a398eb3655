#include "ebg/fitness.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "ebg/parallel.hpp"
#include "ebg/rng.hpp"

namespace ebg::fitness {

std::string_view to_string(Algorithm a) { return a == Algorithm::ga ? "GA" : "DE"; }

Algorithm algorithm_from_string(std::string_view text) {
  std::string upper(text);
  for (char& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (upper == "GA") return Algorithm::ga;
  if (upper == "DE") return Algorithm::de;
  throw std::invalid_argument("unknown algorithm \"" + std::string(text) + "\" (expected GA or DE)");
}

void FitnessConfig::validate() const {
  if (trials < 1) throw std::invalid_argument("fitness trials must be at least 1");
  if (!(alpha >= 0.0)) throw std::invalid_argument("fitness alpha must be non-negative");
  if (target == competitor) throw std::invalid_argument("target and competitor algorithms must differ");
  if (!(invalid_penalty > 0.0)) throw std::invalid_argument("invalid_penalty must be positive");
}

PooledRank pooled_rank_fitness(std::span<const double> a1_bests, std::span<const double> a2_bests, double alpha) {
  if (a1_bests.empty() || a1_bests.size() != a2_bests.size())
    throw std::invalid_argument("pooled_rank_fitness: both trial vectors need the same nonzero length");
  const std::size_t t = a1_bests.size();

  struct Entry {
    double value;
    bool from_a1;
  };
  std::vector<Entry> pooled;
  pooled.reserve(2 * t);
  for (double v : a1_bests) pooled.push_back({v, true});
  for (double v : a2_bests) pooled.push_back({v, false});
  for (const Entry& e : pooled)
    if (!std::isfinite(e.value)) throw std::invalid_argument("pooled_rank_fitness: non-finite trial value");

  std::sort(pooled.begin(), pooled.end(), [](const Entry& l, const Entry& r) { return l.value < r.value; });

  double a1_rank_sum = 0.0;
  for (std::size_t i = 0; i < pooled.size();) {
    std::size_t j = i;
    while (j < pooled.size() && pooled[j].value == pooled[i].value) ++j;
    // Ranks i+1 .. j share their average.
    const double average = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (pooled[k].from_a1) a1_rank_sum += average;
    i = j;
  }

  const double n = static_cast<double>(2 * t);
  const double rank_total = n * (n + 1.0) / 2.0;
  const double best_a1 = *std::min_element(a1_bests.begin(), a1_bests.end());

  PooledRank out{};
  out.rank_term = a1_rank_sum / rank_total;
  out.penalty_term = alpha * std::max(0.0, -best_a1);
  out.fitness = out.rank_term + out.penalty_term;
  return out;
}

std::optional<InvalidPoint> first_invalid_point(const expr::Expression& expression, const opt::SearchSpace& space,
                                                std::size_t samples, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(space.dimension);
  for (std::size_t s = 0; s < samples; ++s) {
    for (double& v : x) v = rng.uniform(space.lower, space.upper);
    if (const expr::EvalResult r = expression.evaluate(x); !r) return InvalidPoint{x, r.cause()};
  }
  return std::nullopt;
}

bool prevalidate(const expr::Expression& expression, const opt::SearchSpace& space, std::size_t samples,
                 std::uint64_t seed) {
  return !first_invalid_point(expression, space, samples, seed);
}

std::uint64_t trial_seed(std::uint64_t base_seed, Algorithm algorithm, std::size_t trial) {
  const std::uint64_t tag = algorithm == Algorithm::ga ? 0x4741 : 0x4445;  // "GA" / "DE"
  return derive_seed(base_seed, tag, trial);
}

opt::TrialOutcome run_trial(Algorithm algorithm, const expr::Expression& expression, const InnerSetup& setup,
                            std::uint64_t seed) {
  if (algorithm == Algorithm::ga) return opt::run_ga(expression, setup.space, setup.ga, seed);
  return opt::run_de(expression, setup.space, setup.de, seed);
}

BenchmarkEvaluation evaluate_benchmark(const expr::Expression& expression, const FitnessConfig& config,
                                       const InnerSetup& setup, const EvaluationOptions& options) {
  config.validate();
  const std::size_t t = config.trials;

  // Jobs 0..T-1 are A1 trials, T..2T-1 are A2 trials.
  std::vector<opt::TrialOutcome> outcomes(2 * t);
  parallel_for(2 * t, options.workers, [&](std::size_t job) {
    const bool first = job < t;
    const Algorithm algorithm = first ? config.target : config.competitor;
    const std::size_t trial = first ? job : job - t;
    outcomes[job] = run_trial(algorithm, expression, setup, trial_seed(config.base_seed, algorithm, trial));
  });

  BenchmarkEvaluation eval;
  eval.a1_bests.reserve(t);
  eval.a2_bests.reserve(t);
  for (std::size_t i = 0; i < 2 * t; ++i) {
    const opt::TrialOutcome& o = outcomes[i];
    const double best = o.valid ? o.best_value : std::numeric_limits<double>::quiet_NaN();
    (i < t ? eval.a1_bests : eval.a2_bests).push_back(best);
    eval.any_invalid = eval.any_invalid || !o.valid;
  }

  if (eval.any_invalid) {
    eval.fitness = config.invalid_penalty;
  } else {
    const PooledRank r = pooled_rank_fitness(eval.a1_bests, eval.a2_bests, config.alpha);
    eval.fitness = r.fitness;
    eval.rank_term = r.rank_term;
    eval.penalty_term = r.penalty_term;
  }

  if (options.keep_trials) {
    eval.a1_trials.assign(std::make_move_iterator(outcomes.begin()),
                          std::make_move_iterator(outcomes.begin() + static_cast<std::ptrdiff_t>(t)));
    eval.a2_trials.assign(std::make_move_iterator(outcomes.begin() + static_cast<std::ptrdiff_t>(t)),
                          std::make_move_iterator(outcomes.end()));
  }
  return eval;
}

}  // namespace ebg::fitness

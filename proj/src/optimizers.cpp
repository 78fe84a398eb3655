#include "ebg/optimizers.hpp"

#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "ebg/rng.hpp"

namespace ebg::opt {

namespace {

struct Individual {
  Point x;
  double value;
};

// Tracks the best point seen and the invalid-evaluation abort.
class TrialState {
 public:
  TrialState(const expr::Expression& objective, std::uint64_t seed) : objective_(objective) {
    outcome_.seed = seed;
    outcome_.best_value = std::numeric_limits<double>::quiet_NaN();
  }

  // Returns nullopt and marks the trial invalid on a non-finite or domain-error evaluation.
  std::optional<double> evaluate(const Point& x, bool initial) {
    if (initial)
      ++outcome_.initial_evaluations;
    else
      ++outcome_.evaluations_used;
    const expr::EvalResult r = objective_.evaluate(x);
    if (!r) {
      outcome_.valid = false;
      outcome_.invalid_cause = r.cause();
      return std::nullopt;
    }
    const double v = r.value();
    if (outcome_.best_point.empty() || v < outcome_.best_value) {
      outcome_.best_value = v;
      outcome_.best_point = x;
    }
    return v;
  }

  void close_generation() { outcome_.best_trace.push_back(outcome_.best_value); }

  TrialOutcome finish() && { return std::move(outcome_); }

 private:
  const expr::Expression& objective_;
  TrialOutcome outcome_;
};

Point random_point(const SearchSpace& space, Rng& rng) {
  Point x(space.dimension);
  for (double& v : x) v = rng.uniform(space.lower, space.upper);
  return x;
}

void check_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(std::string(what) + " must lie in [0, 1]");
}

}  // namespace

bool SearchSpace::contains(std::span<const double> x) const {
  if (x.size() != dimension) return false;
  return std::all_of(x.begin(), x.end(), [&](double v) { return v >= lower && v <= upper; });
}

void SearchSpace::validate() const {
  if (dimension == 0) throw std::invalid_argument("search space dimension must be positive");
  if (!(lower < upper)) throw std::invalid_argument("search space requires lower < upper");
}

void GaConfig::validate() const {
  if (population < 2 || population % 2 != 0)
    throw std::invalid_argument("GA population must be even and at least 2");
  check_probability(crossover_rate, "GA crossover_rate");
  check_probability(mutation_rate, "GA mutation_rate");
  if (!(eta_sbx > 0.0) || !(eta_pm > 0.0)) throw std::invalid_argument("GA distribution indices must be positive");
  if (tournament_size < 1) throw std::invalid_argument("GA tournament_size must be at least 1");
}

void DeConfig::validate() const {
  if (population < 4) throw std::invalid_argument("DE population must be at least 4");
  check_probability(crossover_cr, "DE crossover_cr");
  if (!std::isfinite(scale_f)) throw std::invalid_argument("DE scale_f must be finite");
}

void clip_to_box(std::span<double> x, const SearchSpace& space) {
  for (double& v : x) v = std::clamp(v, space.lower, space.upper);
}

Point de_mutant(std::span<const double> r1, std::span<const double> r2, std::span<const double> r3, double f) {
  if (r1.size() != r2.size() || r1.size() != r3.size())
    throw std::invalid_argument("de_mutant: vectors must have equal length");
  Point v(r1.size());
  for (std::size_t j = 0; j < v.size(); ++j) v[j] = r1[j] + f * (r2[j] - r3[j]);
  return v;
}

TrialOutcome run_ga(const expr::Expression& objective, const SearchSpace& space, const GaConfig& config,
                    std::uint64_t seed) {
  space.validate();
  config.validate();
  if (objective.dimension() != space.dimension)
    throw std::invalid_argument("objective dimension does not match search space");

  Rng rng(seed);
  auto uniform = [&rng] { return rng.uniform(); };
  TrialState state(objective, seed);
  const std::size_t mu = config.population;

  std::vector<Individual> population;
  population.reserve(2 * mu);
  for (std::size_t i = 0; i < mu; ++i) {
    Point x = random_point(space, rng);
    const auto v = state.evaluate(x, true);
    if (!v) return std::move(state).finish();
    population.push_back({std::move(x), *v});
  }
  state.close_generation();

  auto tournament = [&]() -> const Individual& {
    std::size_t best = rng.below(mu);
    for (std::size_t k = 1; k < config.tournament_size; ++k) {
      const std::size_t challenger = rng.below(mu);
      if (population[challenger].value < population[best].value) best = challenger;
    }
    return population[best];
  };

  std::vector<Point> offspring;
  offspring.reserve(mu);
  for (std::size_t gen = 0; gen < config.generations; ++gen) {
    offspring.clear();
    while (offspring.size() < mu) {
      const Individual& a = tournament();
      const Individual& b = tournament();
      Point c1 = a.x;
      Point c2 = b.x;
      if (rng.uniform() < config.crossover_rate) {
        std::tie(c1, c2) = sbx_pair(a.x, b.x, config.eta_sbx, uniform);
        clip_to_box(c1, space);
        clip_to_box(c2, space);
      }
      offspring.push_back(pm_mutate(c1, space, config.eta_pm, config.mutation_rate, uniform));
      if (offspring.size() < mu)
        offspring.push_back(pm_mutate(c2, space, config.eta_pm, config.mutation_rate, uniform));
    }

    for (Point& child : offspring) {
      const auto v = state.evaluate(child, false);
      if (!v) return std::move(state).finish();
      population.push_back({std::move(child), *v});
    }
    // (mu + lambda): parents precede offspring, so stable sort prefers parents on ties.
    std::stable_sort(population.begin(), population.end(),
                     [](const Individual& l, const Individual& r) { return l.value < r.value; });
    population.resize(mu);
    state.close_generation();
  }
  return std::move(state).finish();
}

TrialOutcome run_de(const expr::Expression& objective, const SearchSpace& space, const DeConfig& config,
                    std::uint64_t seed) {
  space.validate();
  config.validate();
  if (objective.dimension() != space.dimension)
    throw std::invalid_argument("objective dimension does not match search space");

  Rng rng(seed);
  auto uniform = [&rng] { return rng.uniform(); };
  auto index = [&rng](std::size_t n) { return rng.below(n); };
  TrialState state(objective, seed);
  const std::size_t np = config.population;

  std::vector<Individual> population;
  population.reserve(np);
  for (std::size_t i = 0; i < np; ++i) {
    Point x = random_point(space, rng);
    const auto v = state.evaluate(x, true);
    if (!v) return std::move(state).finish();
    population.push_back({std::move(x), *v});
  }
  state.close_generation();

  std::vector<Individual> next = population;
  for (std::size_t gen = 0; gen < config.generations; ++gen) {
    for (std::size_t i = 0; i < np; ++i) {
      std::size_t r1, r2, r3;
      do r1 = rng.below(np);
      while (r1 == i);
      do r2 = rng.below(np);
      while (r2 == i || r2 == r1);
      do r3 = rng.below(np);
      while (r3 == i || r3 == r1 || r3 == r2);

      Point mutant = de_mutant(population[r1].x, population[r2].x, population[r3].x, config.scale_f);
      clip_to_box(mutant, space);
      Point trial = binomial_cross(population[i].x, mutant, config.crossover_cr, uniform, index);

      const auto v = state.evaluate(trial, false);
      if (!v) return std::move(state).finish();
      if (*v <= population[i].value)
        next[i] = {std::move(trial), *v};
      else
        next[i] = population[i];
    }
    std::swap(population, next);
    state.close_generation();
  }
  return std::move(state).finish();
}

}  // namespace ebg::opt

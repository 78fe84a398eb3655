#pragma once

// Inner optimizers used to score candidate benchmarks: a real-coded GA
// (binary tournament, SBX, polynomial mutation, (mu+lambda) survival) and
// DE/rand/1/bin. Both minimize an Expression over a box.
//
// The variation operators are templates over a `next_uniform` callable
// returning draws in [0, 1), so tests can script the random stream.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "ebg/expr.hpp"

namespace ebg::opt {

using Point = std::vector<double>;

struct SearchSpace {
  std::size_t dimension = 5;
  double lower = -1.0;
  double upper = 1.0;

  bool contains(std::span<const double> x) const;
  /// Throws std::invalid_argument on dimension 0 or lower >= upper.
  void validate() const;
};

struct GaConfig {
  std::size_t population = 50;
  std::size_t generations = 1000;
  double crossover_rate = 0.8;
  /// Per-variable probability of polynomial mutation.
  double mutation_rate = 0.1;
  double eta_sbx = 20.0;
  double eta_pm = 20.0;
  std::size_t tournament_size = 2;

  void validate() const;
};

struct DeConfig {
  std::size_t population = 50;
  std::size_t generations = 1000;
  double scale_f = 1.0;
  double crossover_cr = 0.8;

  void validate() const;
};

struct TrialOutcome {
  /// Best finite objective value seen; NaN when the first evaluation was invalid.
  double best_value = 0.0;
  Point best_point;
  std::uint64_t seed = 0;
  bool valid = true;
  std::optional<expr::Invalidity> invalid_cause;
  /// Objective calls made by the generational loop (population x generations when complete).
  std::size_t evaluations_used = 0;
  /// Objective calls spent on the initial population.
  std::size_t initial_evaluations = 0;
  /// Best-so-far value after the initial population (index 0) and after each generation.
  std::vector<double> best_trace;
};

void clip_to_box(std::span<double> x, const SearchSpace& space);

// ---------------------------------------------------------------------------
// Variation operators

/// SBX spread factor for a uniform draw u in [0, 1).
inline double sbx_beta(double u, double eta) {
  const double exponent = 1.0 / (eta + 1.0);
  if (u <= 0.5) return std::pow(2.0 * u, exponent);
  return std::pow(1.0 / (2.0 * (1.0 - u)), exponent);
}

/// One SBX gene pair for a given draw u. c1 + c2 == p1 + p2 up to rounding.
inline std::pair<double, double> sbx_gene(double p1, double p2, double eta, double u) {
  const double beta = sbx_beta(u, eta);
  return {0.5 * ((1.0 + beta) * p1 + (1.0 - beta) * p2), 0.5 * ((1.0 - beta) * p1 + (1.0 + beta) * p2)};
}

/// Simulated binary crossover of two parents. Each gene crosses with
/// probability 0.5 and is copied otherwise. Children are returned unclipped.
template <class Uniform>
std::pair<Point, Point> sbx_pair(std::span<const double> p1, std::span<const double> p2, double eta,
                                 Uniform&& next_uniform) {
  Point c1(p1.begin(), p1.end());
  Point c2(p2.begin(), p2.end());
  for (std::size_t j = 0; j < c1.size(); ++j) {
    if (next_uniform() < 0.5) {
      const double u = next_uniform();
      std::tie(c1[j], c2[j]) = sbx_gene(p1[j], p2[j], eta, u);
    }
  }
  return {std::move(c1), std::move(c2)};
}

/// Bounded polynomial-mutation perturbation (as a fraction of the box width)
/// for gene value x and draw u.
inline double pm_delta(double x, double lower, double upper, double eta, double u) {
  const double width = upper - lower;
  const double delta1 = (x - lower) / width;
  const double delta2 = (upper - x) / width;
  const double power = 1.0 / (eta + 1.0);
  if (u < 0.5) {
    const double xy = 1.0 - delta1;
    const double val = 2.0 * u + (1.0 - 2.0 * u) * std::pow(xy, eta + 1.0);
    return std::pow(val, power) - 1.0;
  }
  const double xy = 1.0 - delta2;
  const double val = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * std::pow(xy, eta + 1.0);
  return 1.0 - std::pow(val, power);
}

/// Polynomial mutation; each gene mutates with `per_gene_probability`.
/// Result stays inside the box.
template <class Uniform>
Point pm_mutate(std::span<const double> x, const SearchSpace& space, double eta, double per_gene_probability,
                Uniform&& next_uniform) {
  Point y(x.begin(), x.end());
  for (double& gene : y) {
    if (next_uniform() < per_gene_probability) {
      const double u = next_uniform();
      gene += pm_delta(gene, space.lower, space.upper, eta, u) * (space.upper - space.lower);
      gene = std::clamp(gene, space.lower, space.upper);
    }
  }
  return y;
}

/// v = r1 + F (r2 - r3), componentwise. Unclipped.
Point de_mutant(std::span<const double> r1, std::span<const double> r2, std::span<const double> r3, double f);

/// Binomial crossover: gene j comes from the mutant when a draw is below CR
/// or j is the forced index; otherwise from the target. The forced index is
/// drawn first, then one uniform per gene.
template <class Uniform, class Index>
Point binomial_cross(std::span<const double> target, std::span<const double> mutant, double cr,
                     Uniform&& next_uniform, Index&& next_index) {
  Point trial(target.begin(), target.end());
  const std::size_t forced = next_index(trial.size());
  for (std::size_t j = 0; j < trial.size(); ++j) {
    if (next_uniform() < cr || j == forced) trial[j] = mutant[j];
  }
  return trial;
}

// ---------------------------------------------------------------------------

/// Deterministic given `seed`. Aborts with valid=false at the first invalid evaluation.
TrialOutcome run_ga(const expr::Expression& objective, const SearchSpace& space, const GaConfig& config,
                    std::uint64_t seed);

TrialOutcome run_de(const expr::Expression& objective, const SearchSpace& space, const DeConfig& config,
                    std::uint64_t seed);

}  // namespace ebg::opt

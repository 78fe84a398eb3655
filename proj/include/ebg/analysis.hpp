#pragma once

// Landscape and run-history analysis: Sobol' sensitivity indices, curvature
// features from finite differences, edit distances with classical MDS, and
// lineage statistics. Plot-ready exports live here too.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ebg/engine.hpp"
#include "ebg/expr.hpp"
#include "ebg/optimizers.hpp"

namespace ebg::analysis {

// ---------------------------------------------------------------------------
// Sobol'

struct SobolResult {
  std::vector<double> first_order;
  std::vector<double> total_order;
  /// Monte Carlo standard errors of the two estimators.
  std::vector<double> first_order_se;
  std::vector<double> total_order_se;
  double total_variance = 0.0;
  std::size_t base_samples = 0;
  std::size_t evaluations = 0;
};

/// A sampled point where the expression has no finite value.
class InvalidSamplePoint : public std::runtime_error {
 public:
  InvalidSamplePoint(std::vector<double> point, expr::Invalidity cause);
  const std::vector<double>& point() const { return point_; }
  expr::Invalidity cause() const { return cause_; }

 private:
  std::vector<double> point_;
  expr::Invalidity cause_;
};

/// Saltelli design on a digitally shifted Sobol' sequence: matrices A, B and the D cross
/// matrices A_B^(i), (D + 2) * base_samples evaluations in total.
/// First order: mean(f_B (f_ABi - f_A)) / V. Total: mean((f_A - f_ABi)^2) / 2V.
/// When V is zero every index is reported as 0.
SobolResult sobol_indices(const expr::Expression& expression, const opt::SearchSpace& space,
                          std::size_t base_samples, std::uint64_t seed, std::size_t workers = 1);

// ---------------------------------------------------------------------------
// Curvature

struct CurvatureFeatures {
  /// Median over usable points of max|g_i| / min|g_i|. NaN when undefined.
  double grad_ratio_median = 0.0;
  /// Lower quartile over usable points of max|lambda| / min|lambda|. NaN when undefined.
  double hessian_cond_lower_quartile = 0.0;
  std::size_t sample_count = 0;
  std::size_t gradient_points_used = 0;
  std::size_t hessian_points_used = 0;
  std::size_t gradient_points_skipped = 0;
  std::size_t hessian_points_skipped = 0;
  /// Points whose stencil hit an invalid evaluation; excluded from both features.
  std::size_t invalid_points = 0;
  double fd_step = 0.0;
  double fd_hessian_step = 0.0;
};

/// Magnitudes below this are treated as zero and the point is skipped.
inline constexpr double kDegenerateMagnitude = 1e-12;
inline constexpr std::size_t kMinUsablePoints = 4;

/// Eigenvalue magnitude below which a finite-difference Hessian is treated as
/// singular: the larger of kDegenerateMagnitude and the stencil's rounding
/// noise for function values of size `f_scale`.
inline double hessian_noise_floor(double f_scale, double step) {
  return std::max(kDegenerateMagnitude, 64.0 * std::numeric_limits<double>::epsilon() * f_scale / (step * step));
}

/// Fewer than kMinUsablePoints usable points for both features at once.
class InsufficientCurvaturePoints : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Latin hypercube sample of `n` points in the box.
std::vector<opt::Point> latin_hypercube(std::size_t n, const opt::SearchSpace& space, std::uint64_t seed);

/// Central differences with step `gradient_step` for the gradient and
/// `hessian_step` for the (symmetrized) Hessian. A feature with fewer than
/// kMinUsablePoints usable points is NaN.
CurvatureFeatures curvature_features(const expr::Expression& expression, const opt::SearchSpace& space,
                                     std::size_t sample_points, double gradient_step, double hessian_step,
                                     std::uint64_t seed, std::size_t workers = 1);

/// Linear-interpolation quantile (R type 7). `values` must be nonempty.
double quantile(std::vector<double> values, double p);

// ---------------------------------------------------------------------------
// Distances and embedding

std::size_t levenshtein(std::string_view a, std::string_view b);

using DistanceMatrix = std::vector<std::vector<double>>;

/// Classical (Torgerson) MDS into k dimensions. Axes with a negative
/// eigenvalue collapse to 0; each axis is signed so that its largest-magnitude
/// coordinate is positive. Throws std::invalid_argument unless the input is
/// square, symmetric, nonnegative and zero on the diagonal.
std::vector<std::vector<double>> mds_embed(const DistanceMatrix& distances, std::size_t k = 2);

// ---------------------------------------------------------------------------
// Lineage statistics

struct OperatorStats {
  /// Distinct individuals in the ancestor graph of the target, itself included.
  std::size_t lineage_individuals = 0;
  /// Crossover and mutation events in that graph, identical copies excluded.
  std::size_t genetic_operations = 0;
  std::size_t crossover_operations = 0;
  std::size_t mutation_operations = 0;
  /// crossover / genetic_operations; 0 with ratio_defined=false when there are none.
  double crossover_ratio = 0.0;
  bool ratio_defined = false;
};

/// Walks the crossover/mutation ancestry of `target`. Initialization events
/// are not genetic operations and their in-context examples are not parents.
/// Ids are 0..benchmark_count-1; throws std::out_of_range for an unknown target.
OperatorStats operator_stats(std::span<const engine::LineageEvent> lineage, std::size_t benchmark_count,
                             engine::BenchmarkId target);

/// Mean of the per-run statistics (ratios over runs where defined).
struct AverageOperatorStats {
  double avg_lineage_individuals = 0.0;
  double avg_genetic_operations = 0.0;
  double crossover_ratio = 0.0;
  std::size_t runs = 0;
};
AverageOperatorStats average(std::span<const OperatorStats> runs);

// ---------------------------------------------------------------------------
// Exports

nlohmann::json to_json(const SobolResult& r);
nlohmann::json to_json(const CurvatureFeatures& c);
nlohmann::json to_json(const OperatorStats& s);

/// Closure check: every non-seed benchmark has exactly one lineage event and
/// every parent precedes its child. Empty when the lineage is complete.
std::vector<std::string> lineage_problems(const engine::RunRecord& run);

/// Graphviz digraph: one node per benchmark labelled with id and fitness;
/// crossover edges solid, mutation edges dashed, initialization edges dotted.
std::string lineage_dot(const engine::RunRecord& run);

/// Writes distances.csv, embedding.csv, operator_stats.json and lineage.dot.
void write_lineage_outputs(const engine::RunRecord& run, const std::filesystem::path& dir);

/// generation,best,median rows for every recorded population.
std::string generations_csv(const engine::RunRecord& run);

/// One row per inner generation (index 0 = initial population) and one
/// column per trial: A1 trials first, then A2. Requires kept trials.
std::string trajectory_csv(const fitness::BenchmarkEvaluation& evaluation, std::string_view a1_name,
                           std::string_view a2_name);

/// Writes generations.csv and, for each id (default: the final best),
/// trajectory_<id>.csv by re-running its seeded trials with traces kept.
void write_trajectories(const engine::RunRecord& run, const std::filesystem::path& dir,
                        std::vector<engine::BenchmarkId> ids = {}, std::size_t workers = 1);

}  // namespace ebg::analysis

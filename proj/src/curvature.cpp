#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ebg/analysis.hpp"
#include "ebg/parallel.hpp"
#include "ebg/rng.hpp"

namespace ebg::analysis {

namespace {

struct PointFeatures {
  bool valid = true;
  std::optional<double> grad_ratio;
  std::optional<double> hessian_cond;
};

PointFeatures features_at(const expr::Expression& f, const opt::Point& x, double hg, double hh) {
  const std::size_t d = x.size();
  PointFeatures out;
  opt::Point p = x;
  bool ok = true;
  double scale = 0.0;
  auto eval = [&]() {
    const expr::EvalResult r = f.evaluate(p);
    if (!r) {
      ok = false;
      return 0.0;
    }
    scale = std::max(scale, std::abs(r.value()));
    return r.value();
  };

  const double f0 = eval();
  std::vector<double> grad(d);
  Eigen::MatrixXd hess(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    p[i] = x[i] + hg;
    const double gp = eval();
    p[i] = x[i] - hg;
    const double gm = eval();
    grad[i] = (gp - gm) / (2.0 * hg);

    p[i] = x[i] + hh;
    const double hp = eval();
    p[i] = x[i] - hh;
    const double hm = eval();
    p[i] = x[i];
    hess(i, i) = (hp - 2.0 * f0 + hm) / (hh * hh);

    for (std::size_t j = 0; j < i; ++j) {
      double corner[4];
      int k = 0;
      for (double si : {1.0, -1.0})
        for (double sj : {1.0, -1.0}) {
          p[i] = x[i] + si * hh;
          p[j] = x[j] + sj * hh;
          corner[k++] = eval();
        }
      p[i] = x[i];
      p[j] = x[j];
      const double h = (corner[0] - corner[1] - corner[2] + corner[3]) / (4.0 * hh * hh);
      hess(i, j) = h;
      hess(j, i) = h;
    }
  }
  if (!ok) {
    out.valid = false;
    return out;
  }

  double gmax = 0.0, gmin = std::numeric_limits<double>::infinity();
  for (double g : grad) {
    gmax = std::max(gmax, std::abs(g));
    gmin = std::min(gmin, std::abs(g));
  }
  if (gmin >= kDegenerateMagnitude) out.grad_ratio = gmax / gmin;

  const Eigen::MatrixXd sym = 0.5 * (hess + hess.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym, Eigen::EigenvaluesOnly);
  const Eigen::VectorXd mags = solver.eigenvalues().cwiseAbs();
  const double lmin = mags.minCoeff();
  if (lmin >= hessian_noise_floor(scale, hh)) out.hessian_cond = mags.maxCoeff() / lmin;
  return out;
}

}  // namespace

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile probability must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<opt::Point> latin_hypercube(std::size_t n, const opt::SearchSpace& space, std::uint64_t seed) {
  space.validate();
  Rng rng(seed);
  std::vector<opt::Point> points(n, opt::Point(space.dimension));
  std::vector<std::size_t> strata(n);
  const double width = space.upper - space.lower;
  for (std::size_t j = 0; j < space.dimension; ++j) {
    std::iota(strata.begin(), strata.end(), std::size_t{0});
    for (std::size_t k = n; k > 1; --k) std::swap(strata[k - 1], strata[rng.below(k)]);
    for (std::size_t k = 0; k < n; ++k)
      points[k][j] = space.lower + width * (static_cast<double>(strata[k]) + rng.uniform()) / static_cast<double>(n);
  }
  return points;
}

CurvatureFeatures curvature_features(const expr::Expression& expression, const opt::SearchSpace& space,
                                     std::size_t sample_points, double gradient_step, double hessian_step,
                                     std::uint64_t seed, std::size_t workers) {
  if (expression.dimension() != space.dimension)
    throw std::invalid_argument("expression dimension does not match the search space");
  if (!(gradient_step > 0.0) || !(hessian_step > 0.0))
    throw std::invalid_argument("finite-difference steps must be positive");

  const std::vector<opt::Point> points = latin_hypercube(sample_points, space, seed);
  std::vector<PointFeatures> per_point(points.size());
  parallel_for(points.size(), resolve_workers(workers), [&](std::size_t k) {
    per_point[k] = features_at(expression, points[k], gradient_step, hessian_step);
  });

  CurvatureFeatures out;
  out.sample_count = sample_points;
  out.fd_step = gradient_step;
  out.fd_hessian_step = hessian_step;
  std::vector<double> ratios, conds;
  for (const PointFeatures& pf : per_point) {
    if (!pf.valid) {
      ++out.invalid_points;
      continue;
    }
    if (pf.grad_ratio)
      ratios.push_back(*pf.grad_ratio);
    else
      ++out.gradient_points_skipped;
    if (pf.hessian_cond)
      conds.push_back(*pf.hessian_cond);
    else
      ++out.hessian_points_skipped;
  }
  out.gradient_points_used = ratios.size();
  out.hessian_points_used = conds.size();
  if (ratios.size() < kMinUsablePoints && conds.size() < kMinUsablePoints)
    throw InsufficientCurvaturePoints("curvature features undefined: " + std::to_string(ratios.size()) +
                                      " usable gradient points and " + std::to_string(conds.size()) +
                                      " usable Hessian points out of " + std::to_string(sample_points) +
                                      " (need " + std::to_string(kMinUsablePoints) + ")");
  const double nan = std::numeric_limits<double>::quiet_NaN();
  out.grad_ratio_median = ratios.size() >= kMinUsablePoints ? quantile(ratios, 0.5) : nan;
  out.hessian_cond_lower_quartile = conds.size() >= kMinUsablePoints ? quantile(conds, 0.25) : nan;
  return out;
}

}  // namespace ebg::analysis

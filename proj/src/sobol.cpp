#include <cmath>
#include <cstdint>
#include <numeric>

#include <boost/random/sobol.hpp>

#include "ebg/analysis.hpp"
#include "ebg/parallel.hpp"
#include "ebg/rng.hpp"

namespace ebg::analysis {

namespace {

std::string describe_point(const std::vector<double>& x) {
  std::string s = "[";
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (i) s += ", ";
    s += expr::format_number(x[i]);
  }
  return s + "]";
}

double mean(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

// Sample standard error of the mean.
double standard_error(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

// Columns 0..d-1 of each row fill A, columns d..2d-1 fill B. Every column is
// XORed with its own random 32-bit digital shift.
void shifted_sobol(std::size_t n, const opt::SearchSpace& space, std::uint64_t seed, std::vector<opt::Point>& a,
                   std::vector<opt::Point>& b) {
  const std::size_t d = space.dimension;
  boost::random::sobol_engine<std::uint32_t, 32> qrng(2 * d);
  Rng rng(seed);
  std::vector<std::uint32_t> shift(2 * d);
  for (auto& s : shift) s = static_cast<std::uint32_t>(rng.next() >> 32);
  const double width = space.upper - space.lower;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < 2 * d; ++c) {
      const double u = (static_cast<double>(qrng() ^ shift[c]) + 0.5) * 0x1p-32;
      (c < d ? a[r][c] : b[r][c - d]) = space.lower + width * u;
    }
}

}  // namespace

InvalidSamplePoint::InvalidSamplePoint(std::vector<double> point, expr::Invalidity cause)
    : std::runtime_error("invalid evaluation (" + std::string(expr::to_string(cause)) + ") at x = " +
                         describe_point(point)),
      point_(std::move(point)),
      cause_(cause) {}

SobolResult sobol_indices(const expr::Expression& expression, const opt::SearchSpace& space,
                          std::size_t base_samples, std::uint64_t seed, std::size_t workers) {
  space.validate();
  if (expression.dimension() != space.dimension)
    throw std::invalid_argument("expression dimension does not match the search space");
  if (base_samples < 2) throw std::invalid_argument("sobol base_samples must be at least 2");

  const std::size_t n = base_samples;
  const std::size_t d = space.dimension;
  if (2 * d > boost::random::default_sobol_table::max_dimension)
    throw std::invalid_argument("sobol dimension too large for the low-discrepancy sequence");
  std::vector<opt::Point> a(n, opt::Point(d)), b(n, opt::Point(d));
  shifted_sobol(n, space, seed, a, b);

  // Row r of block k: k = 0 is A, k = 1 is B, k = 2 + i is A_B^(i).
  std::vector<double> values((d + 2) * n);
  auto point_of = [&](std::size_t block, std::size_t r) {
    if (block == 0) return a[r];
    if (block == 1) return b[r];
    opt::Point p = a[r];
    p[block - 2] = b[r][block - 2];
    return p;
  };
  parallel_for(values.size(), resolve_workers(workers), [&](std::size_t k) {
    const opt::Point p = point_of(k / n, k % n);
    const expr::EvalResult r = expression.evaluate(p);
    if (!r) throw InvalidSamplePoint(p, r.cause());
    values[k] = r.value();
  });

  const std::span<const double> fa(values.data(), n);
  const std::span<const double> fb(values.data() + n, n);
  std::vector<double> both(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(2 * n));
  const double m = mean(both);
  double var = 0.0;
  for (double v : both) var += (v - m) * (v - m);
  var /= static_cast<double>(both.size());

  SobolResult out;
  out.base_samples = n;
  out.evaluations = values.size();
  out.total_variance = var;
  out.first_order.assign(d, 0.0);
  out.total_order.assign(d, 0.0);
  out.first_order_se.assign(d, 0.0);
  out.total_order_se.assign(d, 0.0);
  if (var <= 0.0) return out;

  std::vector<double> first(n), total(n);
  for (std::size_t i = 0; i < d; ++i) {
    const double* fab = values.data() + (2 + i) * n;
    for (std::size_t r = 0; r < n; ++r) {
      first[r] = fb[r] * (fab[r] - fa[r]);
      total[r] = 0.5 * (fa[r] - fab[r]) * (fa[r] - fab[r]);
    }
    out.first_order[i] = mean(first) / var;
    out.total_order[i] = mean(total) / var;
    out.first_order_se[i] = standard_error(first) / var;
    out.total_order_se[i] = standard_error(total) / var;
  }
  return out;
}

}  // namespace ebg::analysis

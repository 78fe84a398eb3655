#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>

#include "ebg/analysis.hpp"

namespace ebg::analysis {

using engine::BenchmarkId;
using engine::LineageEvent;
using engine::Origin;
using nlohmann::json;

std::size_t levenshtein(std::string_view a, std::string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

std::vector<std::vector<double>> mds_embed(const DistanceMatrix& distances, std::size_t k) {
  const std::size_t n = distances.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (distances[i].size() != n) throw std::invalid_argument("distance matrix must be square");
    if (distances[i][i] != 0.0) throw std::invalid_argument("distance matrix must have a zero diagonal");
    for (std::size_t j = 0; j < n; ++j) {
      const double d = distances[i][j];
      if (!std::isfinite(d) || d < 0.0) throw std::invalid_argument("distances must be finite and nonnegative");
      if (std::abs(d - distances[j][i]) > 1e-12 * std::max(1.0, d))
        throw std::invalid_argument("distance matrix must be symmetric");
    }
  }
  std::vector<std::vector<double>> coords(n, std::vector<double>(k, 0.0));
  if (n == 0) return coords;

  Eigen::MatrixXd sq(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) sq(i, j) = distances[i][j] * distances[i][j];
  const Eigen::MatrixXd centering =
      Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
  const Eigen::MatrixXd gram = -0.5 * centering * sq * centering;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(0.5 * (gram + gram.transpose()));

  // Eigenvalues come back ascending.
  for (std::size_t axis = 0; axis < k && axis < n; ++axis) {
    const Eigen::Index col = static_cast<Eigen::Index>(n - 1 - axis);
    const double lambda = solver.eigenvalues()(col);
    if (!(lambda > 0.0)) continue;
    Eigen::VectorXd v = solver.eigenvectors().col(col) * std::sqrt(lambda);
    Eigen::Index arg = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i)
      if (std::abs(v(i)) > std::abs(v(arg)) * (1.0 + 1e-9)) arg = i;
    if (v(arg) < 0.0) v = -v;
    for (std::size_t i = 0; i < n; ++i) coords[i][axis] = v(static_cast<Eigen::Index>(i));
  }
  return coords;
}

OperatorStats operator_stats(std::span<const LineageEvent> lineage, std::size_t benchmark_count, BenchmarkId target) {
  if (target < 0 || static_cast<std::size_t>(target) >= benchmark_count)
    throw std::out_of_range("unknown benchmark id " + std::to_string(target));
  std::vector<const LineageEvent*> event_of(benchmark_count, nullptr);
  for (const LineageEvent& e : lineage)
    if (e.child_id >= 0 && static_cast<std::size_t>(e.child_id) < benchmark_count)
      event_of[static_cast<std::size_t>(e.child_id)] = &e;

  OperatorStats out;
  std::set<BenchmarkId> seen{target};
  std::deque<BenchmarkId> queue{target};
  while (!queue.empty()) {
    const BenchmarkId id = queue.front();
    queue.pop_front();
    const LineageEvent* e = event_of[static_cast<std::size_t>(id)];
    if (!e || e->kind == Origin::init_llm || e->kind == Origin::seed) continue;
    if (!e->identical) {
      ++out.genetic_operations;
      ++(e->kind == Origin::crossover ? out.crossover_operations : out.mutation_operations);
    }
    for (BenchmarkId p : e->parent_ids) {
      if (p < 0 || static_cast<std::size_t>(p) >= benchmark_count)
        throw std::out_of_range("lineage references unknown parent " + std::to_string(p));
      if (seen.insert(p).second) queue.push_back(p);
    }
  }
  out.lineage_individuals = seen.size();
  out.ratio_defined = out.genetic_operations > 0;
  out.crossover_ratio = out.ratio_defined ? static_cast<double>(out.crossover_operations) /
                                                static_cast<double>(out.genetic_operations)
                                          : 0.0;
  return out;
}

AverageOperatorStats average(std::span<const OperatorStats> runs) {
  AverageOperatorStats out;
  out.runs = runs.size();
  if (runs.empty()) return out;
  std::size_t defined = 0;
  for (const OperatorStats& s : runs) {
    out.avg_lineage_individuals += static_cast<double>(s.lineage_individuals);
    out.avg_genetic_operations += static_cast<double>(s.genetic_operations);
    if (s.ratio_defined) {
      out.crossover_ratio += s.crossover_ratio;
      ++defined;
    }
  }
  out.avg_lineage_individuals /= static_cast<double>(runs.size());
  out.avg_genetic_operations /= static_cast<double>(runs.size());
  if (defined) out.crossover_ratio /= static_cast<double>(defined);
  return out;
}

json to_json(const SobolResult& r) {
  return json{{"first_order", r.first_order},       {"total_order", r.total_order},
              {"first_order_se", r.first_order_se}, {"total_order_se", r.total_order_se},
              {"total_variance", r.total_variance}, {"base_samples", r.base_samples},
              {"evaluations", r.evaluations}};
}

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

}  // namespace

json to_json(const CurvatureFeatures& c) {
  return json{{"grad_ratio_median", number_or_null(c.grad_ratio_median)},
              {"hessian_cond_lower_quartile", number_or_null(c.hessian_cond_lower_quartile)},
              {"sample_count", c.sample_count},
              {"gradient_points_used", c.gradient_points_used},
              {"hessian_points_used", c.hessian_points_used},
              {"gradient_points_skipped", c.gradient_points_skipped},
              {"hessian_points_skipped", c.hessian_points_skipped},
              {"invalid_points", c.invalid_points},
              {"fd_step", c.fd_step},
              {"fd_hessian_step", c.fd_hessian_step}};
}

json to_json(const OperatorStats& s) {
  return json{{"lineage_individuals", s.lineage_individuals},
              {"genetic_operations", s.genetic_operations},
              {"crossover_operations", s.crossover_operations},
              {"mutation_operations", s.mutation_operations},
              {"crossover_ratio", s.crossover_ratio},
              {"ratio_defined", s.ratio_defined}};
}

std::vector<std::string> lineage_problems(const engine::RunRecord& run) {
  std::vector<std::string> out;
  const auto count = static_cast<BenchmarkId>(run.benchmarks.size());
  std::vector<int> events(run.benchmarks.size(), 0);
  for (const LineageEvent& e : run.lineage) {
    if (e.child_id < 0 || e.child_id >= count) {
      out.push_back("lineage event for unknown child " + std::to_string(e.child_id));
      continue;
    }
    ++events[static_cast<std::size_t>(e.child_id)];
    for (BenchmarkId p : e.parent_ids)
      if (p < 0 || p >= e.child_id)
        out.push_back("benchmark " + std::to_string(e.child_id) + " has parent " + std::to_string(p) +
                      " that does not precede it");
  }
  for (const engine::Benchmark& b : run.benchmarks) {
    const int n = events[static_cast<std::size_t>(b.id)];
    if (b.origin == Origin::seed && n != 0) out.push_back("seed benchmark " + std::to_string(b.id) + " has a lineage event");
    if (b.origin != Origin::seed && n != 1)
      out.push_back("benchmark " + std::to_string(b.id) + " has " + std::to_string(n) + " lineage events");
  }
  return out;
}

std::string lineage_dot(const engine::RunRecord& run) {
  std::ostringstream dot;
  dot << "digraph lineage {\n  rankdir=TB;\n  node [shape=box, fontsize=10];\n";
  for (const engine::Benchmark& b : run.benchmarks)
    dot << "  n" << b.id << " [label=\"" << b.id << "\\n" << short_number(b.fitness()) << "\"];\n";
  for (const LineageEvent& e : run.lineage) {
    const char* style = e.kind == Origin::crossover  ? "style=solid"
                        : e.kind == Origin::mutation ? "style=dashed"
                                                     : "style=dotted, color=gray";
    for (BenchmarkId p : e.parent_ids) dot << "  n" << p << " -> n" << e.child_id << " [" << style << "];\n";
  }
  dot << "}\n";
  return dot.str();
}

void write_lineage_outputs(const engine::RunRecord& run, const std::filesystem::path& dir) {
  if (const auto problems = lineage_problems(run); !problems.empty())
    throw std::runtime_error("incomplete lineage: " + problems.front());
  const auto best = run.best_id();
  if (!best) throw std::runtime_error("run has no recorded population");
  std::filesystem::create_directories(dir);

  const std::size_t n = run.benchmarks.size();
  DistanceMatrix dist(n, std::vector<double>(n, 0.0));
  std::ostringstream csv;
  csv << "id_a,id_b,distance\n";
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto d = levenshtein(run.benchmarks[i].text, run.benchmarks[j].text);
      dist[i][j] = dist[j][i] = static_cast<double>(d);
      csv << i << ',' << j << ',' << d << '\n';
    }
  write_file(dir / "distances.csv", csv.str());

  const auto coords = mds_embed(dist, 2);
  std::ostringstream emb;
  emb << "id,x,y\n";
  for (std::size_t i = 0; i < n; ++i)
    emb << i << ',' << expr::format_number(coords[i][0]) << ',' << expr::format_number(coords[i][1]) << '\n';
  write_file(dir / "embedding.csv", emb.str());

  json stats = to_json(operator_stats(run.lineage, n, *best));
  stats["benchmark_id"] = *best;
  write_file(dir / "operator_stats.json", stats.dump(2) + "\n");
  write_file(dir / "lineage.dot", lineage_dot(run));
}

}  // namespace ebg::analysis

// ebg: command-line front end for benchmark generation and analysis.
//
// Exit codes: 0 success, 1 validation error, 2 runtime abort.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include "ebg/analysis.hpp"
#include "ebg/chat_backend.hpp"
#include "ebg/config.hpp"
#include "ebg/engine.hpp"
#include "ebg/fitness.hpp"
#include "ebg/run_io.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;

// Raised for bad user input detected by the commands themselves.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

ebg::config::AppConfig load_app_config(const std::string& path) {
  ebg::config::AppConfig cfg = path.empty() ? ebg::config::AppConfig{} : ebg::config::load_config(path);
  ebg::config::apply_environment(cfg);
  return cfg;
}

void require_valid(const std::vector<std::string>& problems) {
  if (!problems.empty()) throw ebg::config::ConfigError(problems);
}

std::string read_expression(const std::string& text, const std::string& file) {
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw UsageError("cannot read " + file);
    std::string line;
    while (std::getline(in, line))
      if (line.find_first_not_of(" \t\r") != std::string::npos) return line;
    throw UsageError(file + " contains no expression");
  }
  return text;
}

ebg::expr::Expression parse_or_throw(const std::string& text, const ebg::engine::EngineConfig& cfg) {
  return ebg::expr::parse(text, cfg.dimension, cfg.whitelist);
}

// --------------------------------------------------------------------------

struct GenerateArgs {
  std::string config, out, replay;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
};

int cmd_generate(const GenerateArgs& args) {
  using ebg::config::BackendMode;
  ebg::config::AppConfig cfg = load_app_config(args.config);
  if (args.seed) cfg.engine.run_seed = *args.seed;
  if (args.workers) cfg.engine.workers = *args.workers;
  if (!args.replay.empty()) {
    cfg.backend.mode = BackendMode::replay;
    cfg.backend.transcript = args.replay;
  }
  require_valid(ebg::config::validate(cfg));

  const fs::path out(args.out);
  std::shared_ptr<ebg::llm::ChatBackend> backend;
  if (cfg.backend.mode == BackendMode::replay) {
    std::vector<ebg::llm::TranscriptEntry> entries;
    try {
      entries = ebg::llm::read_transcript(cfg.backend.transcript);
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
    backend = std::make_shared<ebg::llm::ReplayBackend>(std::move(entries), cfg.backend.replay_fallback);
  } else {
    ebg::llm::LiveSettings live;
    live.endpoint_url = cfg.backend.endpoint_url;
    live.api_key = cfg.backend.api_key;
    live.model = cfg.backend.model;
    live.decoding = cfg.backend.decoding;
    live.timeout_seconds = cfg.backend.timeout_seconds;
    try {
      backend = std::make_shared<ebg::llm::LiveBackend>(live);
    } catch (const std::invalid_argument& e) {
      throw ebg::config::ConfigError({std::string("backend.endpoint_url: ") + e.what()});
    }
    if (cfg.backend.mode == BackendMode::record) {
      fs::create_directories(out);
      fs::remove(out / "transcript.jsonl");
      backend = std::make_shared<ebg::llm::RecordingBackend>(backend, out / "transcript.jsonl");
    }
  }

  ebg::run_io::RunWriter writer(out, ebg::config::to_json(cfg));
  ebg::engine::Evolution evolution(cfg.engine, *backend, &writer);
  const ebg::engine::RunRecord run = evolution.run();

  std::cout << "generations: " << run.populations.size() << "\n"
            << "evaluated benchmarks: " << run.evaluated_benchmarks << " (cache hits: " << run.cache_hits << ")\n";
  if (const auto best = run.best_id()) {
    const auto& b = run.benchmark(*best);
    std::cout << "best: f(x) = " << b.text << "\n"
              << "fitness: " << ebg::expr::format_number(b.fitness()) << "\n";
  }
  if (!run.completed) {
    std::cerr << "error: run aborted: " << run.abort_reason << "\n";
    return kRuntime;
  }
  return kOk;
}

// --------------------------------------------------------------------------

struct EvaluateArgs {
  std::string expr, file, config, out = ".";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> trials, workers;
};

int cmd_evaluate(const EvaluateArgs& args) {
  ebg::config::AppConfig cfg = load_app_config(args.config);
  ebg::engine::EngineConfig& e = cfg.engine;
  if (args.seed) e.fitness.base_seed = *args.seed;
  if (args.trials) e.fitness.trials = *args.trials;
  if (args.workers) e.workers = *args.workers;
  require_valid(e.problems());

  const ebg::expr::Expression f = parse_or_throw(read_expression(args.expr, args.file), e);
  const std::string text = ebg::expr::render(f);
  if (const auto bad = ebg::fitness::first_invalid_point(f, e.inner.space, e.fitness.prevalidation_samples,
                                                         ebg::derive_seed(e.fitness.base_seed, 0x5056, 0))) {
    std::string point;
    for (double v : bad->point) point += (point.empty() ? "" : ", ") + fmt(v);
    throw UsageError("prevalidation failed: " + std::string(ebg::expr::to_string(bad->cause)) + " at x = [" +
                     point + "]");
  }

  ebg::fitness::EvaluationOptions options;
  options.workers = e.workers;
  const ebg::fitness::BenchmarkEvaluation ev = ebg::fitness::evaluate_benchmark(f, e.fitness, e.inner, options);
  const std::string a1(ebg::fitness::to_string(e.fitness.target));
  const std::string a2(ebg::fitness::to_string(e.fitness.competitor));

  std::cout << "f(x) = " << text << "\n"
            << "fitness: " << ebg::expr::format_number(ev.fitness) << "\n"
            << "rank term: " << ebg::expr::format_number(ev.rank_term) << "\n"
            << "penalty term: " << ebg::expr::format_number(ev.penalty_term) << "\n"
            << "trial\t" << a1 << "\t" << a2 << "\n";
  for (std::size_t t = 0; t < ev.a1_bests.size(); ++t)
    std::cout << t << "\t" << fmt(ev.a1_bests[t]) << "\t" << fmt(ev.a2_bests[t]) << "\n";

  auto reals = [](const std::vector<double>& v) {
    json a = json::array();
    for (double x : v) a.push_back(std::isfinite(x) ? json(x) : json(nullptr));
    return a;
  };
  write_json(fs::path(args.out) / "evaluation.json",
             json{{"expression", text},
                  {"fitness", ev.fitness},
                  {"rank_term", ev.rank_term},
                  {"penalty_term", ev.penalty_term},
                  {"any_invalid", ev.any_invalid},
                  {"target", a1},
                  {"competitor", a2},
                  {"trials", e.fitness.trials},
                  {"base_seed", e.fitness.base_seed},
                  {"a1_bests", reals(ev.a1_bests)},
                  {"a2_bests", reals(ev.a2_bests)}});
  return kOk;
}

// --------------------------------------------------------------------------

struct AnalyzeArgs {
  std::string expr, file, run, config, what = "both", out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> samples, points, workers;
};

int cmd_analyze(const AnalyzeArgs& args) {
  ebg::config::AppConfig cfg;
  std::string text;
  fs::path out = args.out;
  if (!args.run.empty()) {
    ebg::run_io::LoadedRun loaded = ebg::run_io::load_run(args.run);
    const auto best = loaded.record.best_id();
    if (!best) throw UsageError(args.run + " has no recorded population");
    text = loaded.record.benchmark(*best).text;
    cfg = std::move(loaded.config);
    if (!args.config.empty()) cfg.analysis = load_app_config(args.config).analysis;
    if (out.empty()) out = args.run;
  } else {
    cfg = load_app_config(args.config);
    text = read_expression(args.expr, args.file);
  }
  if (out.empty()) out = ".";
  if (args.seed) cfg.analysis.seed = *args.seed;
  if (args.samples) cfg.analysis.sobol_base_samples = *args.samples;
  if (args.points) cfg.analysis.curvature_points = *args.points;
  if (args.workers) cfg.engine.workers = *args.workers;
  require_valid(cfg.engine.problems());

  const ebg::expr::Expression f = parse_or_throw(text, cfg.engine);
  const auto& space = cfg.engine.inner.space;
  const auto& a = cfg.analysis;
  std::cout << "f(x) = " << ebg::expr::render(f) << "\n";

  if (args.what == "sobol" || args.what == "both") {
    const auto r = ebg::analysis::sobol_indices(f, space, a.sobol_base_samples, a.seed, cfg.engine.workers);
    json j = ebg::analysis::to_json(r);
    j["expression"] = ebg::expr::render(f);
    j["seed"] = a.seed;
    write_json(out / "sobol.json", j);
    std::cout << "total variance: " << fmt(r.total_variance) << "\nvar\tS_i\tS_Ti\n";
    for (std::size_t i = 0; i < r.first_order.size(); ++i)
      std::cout << "x[" << i << "]\t" << fmt(r.first_order[i]) << "\t" << fmt(r.total_order[i]) << "\n";
  }
  if (args.what == "curvature" || args.what == "both") {
    const auto c = ebg::analysis::curvature_features(f, space, a.curvature_points, a.fd_gradient_step,
                                                      a.fd_hessian_step, a.seed, cfg.engine.workers);
    json j = ebg::analysis::to_json(c);
    j["expression"] = ebg::expr::render(f);
    j["seed"] = a.seed;
    write_json(out / "curvature.json", j);
    std::cout << "gradient ratio median: " << fmt(c.grad_ratio_median) << "\n"
              << "hessian condition lower quartile: " << fmt(c.hessian_cond_lower_quartile) << "\n";
  }
  return kOk;
}

// --------------------------------------------------------------------------

int cmd_lineage(const std::string& run_dir, std::string out) {
  const ebg::run_io::LoadedRun loaded = ebg::run_io::load_run(run_dir);
  if (!loaded.record.best_id()) throw UsageError(run_dir + " has no recorded population");
  if (out.empty()) out = run_dir;
  ebg::analysis::write_lineage_outputs(loaded.record, out);
  const auto& run = loaded.record;
  const auto stats = ebg::analysis::operator_stats(run.lineage, run.benchmarks.size(), *run.best_id());
  std::cout << "benchmarks: " << run.benchmarks.size() << "\n"
            << "best id: " << *run.best_id() << "\n"
            << "lineage individuals: " << stats.lineage_individuals << "\n"
            << "genetic operations: " << stats.genetic_operations << "\n"
            << "crossover ratio: " << fmt(stats.crossover_ratio) << (stats.ratio_defined ? "" : " (undefined)")
            << "\n";
  return kOk;
}

int cmd_trajectory(const std::string& run_dir, std::string out, const std::vector<std::int64_t>& ids,
                   std::optional<std::size_t> workers) {
  const ebg::run_io::LoadedRun loaded = ebg::run_io::load_run(run_dir);
  if (!loaded.record.best_id()) throw UsageError(run_dir + " has no recorded population");
  if (out.empty()) out = run_dir;
  for (auto id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= loaded.record.benchmarks.size())
      throw UsageError("unknown benchmark id " + std::to_string(id));
  ebg::analysis::write_trajectories(loaded.record, out, ids, workers.value_or(loaded.config.engine.workers));
  std::cout << "wrote " << (fs::path(out) / "generations.csv").string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evolutionary generation of optimization benchmarks with a language model as variation operator"};
  app.require_subcommand(0, 1);
  bool print_default = false;
  app.add_flag("--print-default-config", print_default, "Print the full default configuration as JSON");

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Run the generator and write a run directory");
  generate->add_option("--config", gen.config, "Configuration file (JSON)")->check(CLI::ExistingFile);
  generate->add_option("--out", gen.out, "Run directory")->required();
  generate->add_option("--seed", gen.seed, "Run seed");
  generate->add_option("--replay", gen.replay, "Answer prompts from a recorded transcript");
  generate->add_option("--workers", gen.workers, "Evaluation threads (0 = all cores)");

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Score one benchmark expression");
  auto* ev_expr = evaluate->add_option("--expr", ev.expr, "Expression, e.g. \"x[0]**2 + sin(x[1])\"");
  auto* ev_file = evaluate->add_option("--file", ev.file, "File whose first line is the expression");
  ev_expr->excludes(ev_file);
  evaluate->add_option("--config", ev.config, "Configuration file (JSON)")->check(CLI::ExistingFile);
  evaluate->add_option("--seed", ev.seed, "Base seed of the inner trials");
  evaluate->add_option("--trials", ev.trials, "Trials per algorithm");
  evaluate->add_option("--out", ev.out, "Directory for evaluation.json");
  evaluate->add_option("--workers", ev.workers, "Evaluation threads (0 = all cores)");

  AnalyzeArgs an;
  auto* analyze = app.add_subcommand("analyze", "Sobol' indices and curvature features");
  auto* an_expr = analyze->add_option("--expr", an.expr, "Expression to analyze");
  auto* an_file = analyze->add_option("--file", an.file, "File whose first line is the expression");
  auto* an_run = analyze->add_option("--run", an.run, "Run directory; analyzes its final best benchmark");
  an_expr->excludes(an_file)->excludes(an_run);
  an_file->excludes(an_run);
  analyze->add_option("--what", an.what, "sobol, curvature or both")
      ->check(CLI::IsMember({"sobol", "curvature", "both"}));
  analyze->add_option("--config", an.config, "Configuration file (JSON)")->check(CLI::ExistingFile);
  analyze->add_option("--out", an.out, "Output directory (default: run directory or .)");
  analyze->add_option("--seed", an.seed, "Sampling seed");
  analyze->add_option("--samples", an.samples, "Sobol' base samples");
  analyze->add_option("--points", an.points, "Curvature sample points");
  analyze->add_option("--workers", an.workers, "Evaluation threads (0 = all cores)");

  std::string lin_run, lin_out;
  auto* lineage = app.add_subcommand("lineage", "Distances, MDS embedding, operator statistics and DOT graph");
  lineage->add_option("--run", lin_run, "Run directory")->required();
  lineage->add_option("--out", lin_out, "Output directory (default: run directory)");

  std::string traj_run, traj_out;
  std::vector<std::int64_t> traj_ids;
  std::optional<std::size_t> traj_workers;
  auto* trajectory = app.add_subcommand("trajectory", "Per-generation fitness table and inner search traces");
  trajectory->add_option("--run", traj_run, "Run directory")->required();
  trajectory->add_option("--out", traj_out, "Output directory (default: run directory)");
  trajectory->add_option("--id", traj_ids, "Benchmark ids to trace (default: final best)");
  trajectory->add_option("--workers", traj_workers, "Evaluation threads (0 = all cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kValidation;
  }

  try {
    if (print_default) {
      std::cout << ebg::config::to_json(ebg::config::AppConfig{}).dump(2) << "\n";
      return kOk;
    }
    if (*generate) return cmd_generate(gen);
    if (*evaluate) {
      if (ev.expr.empty() && ev.file.empty()) throw UsageError("evaluate needs --expr or --file");
      return cmd_evaluate(ev);
    }
    if (*analyze) {
      if (an.expr.empty() && an.file.empty() && an.run.empty())
        throw UsageError("analyze needs --expr, --file or --run");
      return cmd_analyze(an);
    }
    if (*lineage) return cmd_lineage(lin_run, lin_out);
    if (*trajectory) return cmd_trajectory(traj_run, traj_out, traj_ids, traj_workers);
    std::cout << app.help();
    return kValidation;
  } catch (const ebg::config::ConfigError& e) {
    std::cerr << "error: invalid configuration\n";
    for (const auto& p : e.problems()) std::cerr << "  " << p << "\n";
    return kValidation;
  } catch (const ebg::expr::ParseError& e) {
    std::cerr << "error: cannot parse expression at offset " << e.position() << ": " << e.what() << "\n";
    return kValidation;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const ebg::run_io::RunFormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
}

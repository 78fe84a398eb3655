#include "ebg/run_io.hpp"

#include <cmath>
#include <fstream>

namespace ebg::run_io {

using nlohmann::json;

namespace {

json reals(const std::vector<double>& v) {
  json out = json::array();
  for (double x : v) out.push_back(std::isfinite(x) ? json(x) : json(nullptr));
  return out;
}

std::vector<double> reals_from(const json& j) {
  std::vector<double> out;
  for (const json& x : j) out.push_back(x.is_null() ? std::nan("") : x.get<double>());
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text, std::ios::openmode mode) {
  std::ofstream out(path, std::ios::binary | mode);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

template <class Fn>
void for_each_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RunFormatError(path.string() + ": cannot open");
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    try {
      fn(json::parse(line));
    } catch (const std::exception& e) {
      throw RunFormatError(path.filename().string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

}  // namespace

json to_json(const engine::Benchmark& b) {
  return json{{"id", b.id},
              {"expression", b.text},
              {"fitness", b.fitness()},
              {"rank_term", b.evaluation.rank_term},
              {"penalty_term", b.evaluation.penalty_term},
              {"any_invalid", b.evaluation.any_invalid},
              {"origin", engine::to_string(b.origin)},
              {"parents", b.parent_ids},
              {"generation", b.generation_created},
              {"a1_bests", reals(b.evaluation.a1_bests)},
              {"a2_bests", reals(b.evaluation.a2_bests)}};
}

json to_json(const engine::LineageEvent& e) {
  return json{{"child", e.child_id},       {"kind", engine::to_string(e.kind)},
              {"parents", e.parent_ids},   {"attempts", e.attempts},
              {"identical", e.identical}, {"generation", e.generation}};
}

engine::LineageEvent lineage_from_json(const json& j) {
  engine::LineageEvent e;
  e.child_id = j.at("child").get<engine::BenchmarkId>();
  e.kind = engine::origin_from_string(j.at("kind").get<std::string>());
  e.parent_ids = j.at("parents").get<std::vector<engine::BenchmarkId>>();
  e.attempts = j.at("attempts").get<std::size_t>();
  e.identical = j.at("identical").get<bool>();
  e.generation = j.at("generation").get<int>();
  return e;
}

std::filesystem::path population_file(const std::filesystem::path& dir, int generation) {
  return dir / ("population.gen" + std::to_string(generation) + ".jsonl");
}

RunWriter::RunWriter(std::filesystem::path dir, const json& config_snapshot) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
  write_text(dir_ / "config.json", config_snapshot.dump(2) + "\n", std::ios::trunc);
  write_text(dir_ / "benchmarks.jsonl", "", std::ios::trunc);
  write_text(dir_ / "lineage.jsonl", "", std::ios::trunc);
  for (int g = 0; std::filesystem::exists(population_file(dir_, g)); ++g)
    std::filesystem::remove(population_file(dir_, g));
  std::filesystem::remove(dir_ / "best.json");
}

void RunWriter::on_benchmark(const engine::Benchmark& b) {
  write_text(dir_ / "benchmarks.jsonl", to_json(b).dump() + "\n", std::ios::app);
}

void RunWriter::on_lineage(const engine::LineageEvent& e) {
  write_text(dir_ / "lineage.jsonl", to_json(e).dump() + "\n", std::ios::app);
}

void RunWriter::on_population(int generation, const std::vector<const engine::Benchmark*>& members) {
  std::string text;
  for (const engine::Benchmark* b : members) text += to_json(*b).dump() + "\n";
  write_text(population_file(dir_, generation), text, std::ios::trunc);
}

void RunWriter::on_finish(const engine::RunRecord& run) {
  json best = nullptr;
  if (const auto id = run.best_id()) best = to_json(run.benchmark(*id));
  const json doc{{"status", run.completed ? "completed" : "aborted"},
                 {"abort_reason", run.abort_reason},
                 {"best", best},
                 {"best_fitness_per_generation", reals(run.best_fitness_per_generation)},
                 {"generations", run.populations.size()},
                 {"benchmarks", run.benchmarks.size()},
                 {"evaluated_benchmarks", run.evaluated_benchmarks},
                 {"inner_trials", run.inner_trials},
                 {"cache_hits", run.cache_hits}};
  write_text(dir_ / "best.json", doc.dump(2) + "\n", std::ios::trunc);
}

LoadedRun load_run(const std::filesystem::path& dir) {
  LoadedRun out;
  try {
    out.config = config::load_config(dir / "config.json");
  } catch (const config::ConfigError& e) {
    throw RunFormatError(std::string("config.json: ") + e.what());
  }
  engine::RunRecord& run = out.record;
  run.config = out.config.engine;
  const std::size_t dimension = run.config.dimension;
  const expr::FunctionWhitelist& whitelist = run.config.whitelist;

  for_each_line(dir / "benchmarks.jsonl", [&](const json& j) {
    const auto id = j.at("id").get<engine::BenchmarkId>();
    if (id != static_cast<engine::BenchmarkId>(run.benchmarks.size()))
      throw std::runtime_error("benchmark ids must be consecutive from 0");
    const std::string text = j.at("expression").get<std::string>();
    fitness::BenchmarkEvaluation ev;
    ev.fitness = j.at("fitness").get<double>();
    ev.rank_term = j.at("rank_term").get<double>();
    ev.penalty_term = j.at("penalty_term").get<double>();
    ev.any_invalid = j.at("any_invalid").get<bool>();
    ev.a1_bests = reals_from(j.at("a1_bests"));
    ev.a2_bests = reals_from(j.at("a2_bests"));
    run.benchmarks.push_back(engine::Benchmark{id, expr::parse(text, dimension, whitelist), text, std::move(ev),
                                               j.at("generation").get<int>(),
                                               engine::origin_from_string(j.at("origin").get<std::string>()),
                                               j.at("parents").get<std::vector<engine::BenchmarkId>>()});
  });

  for_each_line(dir / "lineage.jsonl", [&](const json& j) { run.lineage.push_back(lineage_from_json(j)); });

  for (int g = 0; std::filesystem::exists(population_file(dir, g)); ++g) {
    std::vector<engine::BenchmarkId> ids;
    for_each_line(population_file(dir, g), [&](const json& j) {
      const auto id = j.at("id").get<engine::BenchmarkId>();
      run.benchmark(id);
      ids.push_back(id);
    });
    if (ids.empty()) throw RunFormatError(population_file(dir, g).filename().string() + ": empty population");
    run.best_fitness_per_generation.push_back(run.benchmark(ids.front()).fitness());
    run.populations.push_back(std::move(ids));
  }

  const std::filesystem::path best = dir / "best.json";
  if (std::filesystem::exists(best)) {
    std::ifstream in(best);
    try {
      const json j = json::parse(in);
      run.completed = j.at("status").get<std::string>() == "completed";
      run.abort_reason = j.at("abort_reason").get<std::string>();
      run.evaluated_benchmarks = j.at("evaluated_benchmarks").get<std::size_t>();
      run.inner_trials = j.at("inner_trials").get<std::size_t>();
      run.cache_hits = j.at("cache_hits").get<std::size_t>();
    } catch (const std::exception& e) {
      throw RunFormatError(std::string("best.json: ") + e.what());
    }
  }
  return out;
}

}  // namespace ebg::run_io

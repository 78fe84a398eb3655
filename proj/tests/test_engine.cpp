#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <set>

#include "ebg/config.hpp"
#include "ebg/engine.hpp"
#include "ebg/llm.hpp"
#include "ebg/run_io.hpp"
#include "support.hpp"

using namespace ebg::engine;
using ebg::expr::parse;
using ebg::expr::render;

namespace {

Benchmark with_fitness(BenchmarkId id, double f) {
  ebg::fitness::BenchmarkEvaluation ev;
  ev.fitness = f;
  return Benchmark{id, parse("x[0]", 5), "x[0]", ev, 0, Origin::seed, {}};
}

std::vector<double> fitnesses(const std::vector<Benchmark>& v) {
  std::vector<double> out;
  for (const Benchmark& b : v) out.push_back(b.fitness());
  return out;
}

std::vector<BenchmarkId> ids(const std::vector<Benchmark>& v) {
  std::vector<BenchmarkId> out;
  for (const Benchmark& b : v) out.push_back(b.id);
  return out;
}

// Structural invariants every finished run must satisfy.
void check_run_invariants(const RunRecord& run) {
  const std::size_t n = run.config.population;
  REQUIRE(run.populations.size() == run.best_fitness_per_generation.size());
  for (std::size_t g = 0; g < run.populations.size(); ++g) {
    const auto& pop = run.populations[g];
    CHECK(pop.size() == n);
    CHECK(std::set<BenchmarkId>(pop.begin(), pop.end()).size() == n);
    for (std::size_t k = 1; k < pop.size(); ++k) {
      const Benchmark& a = run.benchmark(pop[k - 1]);
      const Benchmark& b = run.benchmark(pop[k]);
      CHECK((a.fitness() < b.fitness() || (a.fitness() == b.fitness() && a.id < b.id)));
    }
    CHECK(run.best_fitness_per_generation[g] == run.benchmark(pop.front()).fitness());
    if (g > 0) CHECK(run.best_fitness_per_generation[g] <= run.best_fitness_per_generation[g - 1]);
  }
  for (std::size_t i = 0; i < run.benchmarks.size(); ++i) {
    const Benchmark& b = run.benchmarks[i];
    CHECK(b.id == static_cast<BenchmarkId>(i));
    switch (b.origin) {
      case Origin::seed:
      case Origin::init_llm:
        CHECK(b.parent_ids.empty());
        break;
      case Origin::crossover:
        CHECK(b.parent_ids.size() == 2);
        break;
      case Origin::mutation:
        CHECK(b.parent_ids.size() == 1);
        break;
    }
    CHECK(b.fitness() == b.evaluation.rank_term + b.evaluation.penalty_term);
  }
  for (const LineageEvent& e : run.lineage) {
    for (BenchmarkId p : e.parent_ids) CHECK(p < e.child_id);
    const Benchmark& child = run.benchmark(e.child_id);
    CHECK(child.origin == e.kind);
    CHECK(child.generation_created == e.generation);
    if (e.kind == Origin::crossover || e.kind == Origin::mutation) {
      CHECK(child.parent_ids == e.parent_ids);
      REQUIRE(e.generation >= 1);
      const auto& alive = run.populations[static_cast<std::size_t>(e.generation - 1)];
      for (BenchmarkId p : e.parent_ids) CHECK(std::find(alive.begin(), alive.end(), p) != alive.end());
    }
  }
  CHECK(run.inner_trials == 2 * run.config.fitness.trials * run.evaluated_benchmarks);
  CHECK(run.evaluated_benchmarks + run.cache_hits == run.benchmarks.size());
}

std::string init_expr(const char* text) { return render(parse(text, 5)); }

const char* kInitEx1 = "x[0]**2 + sin(x[1])**2 + abs(x[2]*x[3]) + sqrt(abs(x[4])) + x[0]*x[1]*x[2]";
const char* kInitEx2 = "x[0]**2 + sin(x[1])**2 + abs(x[2]*x[3]) + sqrt(abs(x[4])) + x[0]*sin(x[1])*abs(x[2])";
const char* kInitOut = "x[0]**2 + sin(x[1])**2 + abs(x[2]*x[3]) + sqrt(abs(x[4])) + x[0]*sin(x[1])*x[2]*x[3]";

// Transcript reproducing the published initialization example, optionally truncated.
std::vector<ebg::llm::TranscriptEntry> fig3_transcript(std::size_t entries) {
  using namespace ebg::llm;
  const std::string seed = render(seed_expression(5));
  const std::vector<std::vector<std::string>> examples{
      {seed}, {seed, init_expr(kInitEx1)}, {seed, init_expr(kInitEx1), init_expr(kInitEx2)}};
  const char* replies[] = {kInitEx1, kInitEx2, kInitOut};
  std::vector<TranscriptEntry> out;
  for (std::size_t k = 0; k < entries; ++k) {
    PromptSpec spec;
    spec.kind = PromptKind::init;
    spec.examples = examples[k];
    const std::string prompt = build_prompt(spec);
    out.push_back({prompt_digest(prompt), prompt, std::string("Problem: f(x) = ") + replies[k], "test", ""});
  }
  return out;
}

}  // namespace

TEST_CASE("seed expression") {
  CHECK(render(seed_expression(1)) == "x[0]");
  CHECK(render(seed_expression(2)) == "x[0] + x[1]**2");
  CHECK(render(seed_expression(5)) == "x[0] + x[1]**2 + x[2]**3 + x[3]**4 + x[4]**5");
  const double x[] = {0.5, -0.5, 0.25};
  CHECK(seed_expression(3).evaluate(x).value() == 0.5 + 0.25 + 0.25 * 0.25 * 0.25);
  CHECK_THROWS_AS(seed_expression(0), std::invalid_argument);
}

TEST_CASE("select_survivors") {
  CHECK(fitnesses(select_survivors({with_fitness(0, 0.3), with_fitness(1, 0.5), with_fitness(2, 0.4),
                                    with_fitness(3, 0.5)},
                                   2)) == std::vector<double>{0.3, 0.4});
  CHECK(ids(select_survivors({with_fitness(3, 0.7), with_fitness(1, 0.7), with_fitness(2, 0.7), with_fitness(0, 0.7)},
                             2)) == std::vector<BenchmarkId>{0, 1});
  CHECK(ids(select_survivors({with_fitness(0, 1e6), with_fitness(1, 0.256), with_fitness(2, 0.3),
                              with_fitness(3, 0.256)},
                             2)) == std::vector<BenchmarkId>{1, 3});
  CHECK(ids(select_survivors({with_fitness(0, 0.9), with_fitness(1, 0.1), with_fitness(2, 0.5)}, 3)) ==
        std::vector<BenchmarkId>{1, 2, 0});
}

TEST_CASE("property: survivors are the N smallest by (fitness, id)") {
  ebg::Rng rng(12);
  for (int k = 0; k < 500; ++k) {
    const std::size_t n = 1 + rng.below(8);
    std::vector<Benchmark> pool;
    for (std::size_t i = 0; i < 2 * n; ++i)
      pool.push_back(with_fitness(static_cast<BenchmarkId>(i), static_cast<double>(rng.below(5)) / 4.0));
    std::vector<Benchmark> shuffled = pool;
    for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
    const auto kept = select_survivors(shuffled, n);
    REQUIRE(kept.size() == n);
    // Oracle: rank each benchmark by counting those that beat it.
    for (const Benchmark& b : pool) {
      std::size_t better = 0;
      for (const Benchmark& o : pool)
        better += o.fitness() < b.fitness() || (o.fitness() == b.fitness() && o.id < b.id);
      const bool in = std::any_of(kept.begin(), kept.end(), [&](const Benchmark& s) { return s.id == b.id; });
      CHECK(in == (better < n));
      if (in) CHECK(kept[better].id == b.id);
    }
  }
}

TEST_CASE("config problems are reported per field") {
  EngineConfig c = test::small_engine();
  CHECK(c.problems().empty());
  c.population = 0;
  c.max_generations = 0;
  c.crossover_rate = 1.5;
  const auto problems = c.problems();
  CHECK(problems.size() >= 3);
  test::ScriptedBackend backend(test::distinct_expressions());
  CHECK_THROWS_AS(Evolution(c, backend), std::invalid_argument);
}

TEST_CASE("population of one is just the seed") {
  test::ScriptedBackend backend(test::distinct_expressions());
  EngineConfig c = test::small_engine(1, 1);
  const RunRecord run = Evolution(c, backend).run();
  CHECK(run.completed);
  CHECK(backend.prompts.empty());
  REQUIRE(run.populations.size() == 1);
  CHECK(run.populations[0] == std::vector<BenchmarkId>{0});
  CHECK(run.benchmarks[0].origin == Origin::seed);
  CHECK(run.best_id() == BenchmarkId{0});

  c.max_generations = 3;
  c.crossover_rate = 1.0;
  const RunRecord longer = Evolution(c, backend).run();
  CHECK(longer.completed);
  for (const LineageEvent& e : longer.lineage) CHECK(e.kind == Origin::mutation);
  check_run_invariants(longer);
}

TEST_CASE("max_generations = 1 is initialization only") {
  test::ScriptedBackend backend(test::distinct_expressions());
  const RunRecord run = Evolution(test::small_engine(4, 1), backend).run();
  CHECK(run.completed);
  CHECK(run.populations.size() == 1);
  CHECK(run.benchmarks.size() == 4);
  CHECK(backend.prompts.size() == 3);
  for (const LineageEvent& e : run.lineage) CHECK(e.kind == Origin::init_llm);
  CHECK(*run.best_id() == run.populations[0].front());
  check_run_invariants(run);
}

TEST_CASE("operator choice follows the crossover rate") {
  for (double pc : {0.0, 1.0}) {
    test::ScriptedBackend backend(test::distinct_expressions());
    EngineConfig c = test::small_engine(4, 3);
    c.crossover_rate = pc;
    const RunRecord run = Evolution(c, backend).run();
    REQUIRE(run.completed);
    std::size_t ops = 0;
    for (const LineageEvent& e : run.lineage) {
      if (e.kind == Origin::init_llm) continue;
      ++ops;
      CHECK(e.kind == (pc == 1.0 ? Origin::crossover : Origin::mutation));
    }
    CHECK(ops == 8);
    check_run_invariants(run);
  }
}

TEST_CASE("initialization reproducing the published example") {
  ebg::llm::ReplayBackend replay(fig3_transcript(3));
  const RunRecord run = Evolution(test::small_engine(4, 1), replay).run();
  REQUIRE(run.completed);
  REQUIRE(run.benchmarks.size() == 4);
  CHECK(run.benchmarks[0].text == "x[0] + x[1]**2 + x[2]**3 + x[3]**4 + x[4]**5");
  CHECK(run.benchmarks[1].text == init_expr(kInitEx1));
  CHECK(run.benchmarks[2].text == init_expr(kInitEx2));
  CHECK(run.benchmarks[3].text.find("x[0]**2 + sin(x[1])**2 + abs(x[2]*x[3]) + sqrt(abs(x[4]))") !=
        std::string::npos);
  for (BenchmarkId id : {1, 2, 3}) CHECK(run.benchmark(id).origin == Origin::init_llm);
  REQUIRE(run.lineage.size() == 3);
  CHECK(run.lineage[2].parent_ids == std::vector<BenchmarkId>{0, 1, 2});
  check_run_invariants(run);
}

TEST_CASE("transcript exhausted during initialization aborts cleanly") {
  ebg::llm::ReplayBackend replay(fig3_transcript(1));
  test::TempDir dir("abort");
  ebg::run_io::RunWriter writer(dir.path(), ebg::config::to_json(ebg::config::AppConfig{}));
  const RunRecord run = Evolution(test::small_engine(4, 3), replay, &writer).run();
  CHECK_FALSE(run.completed);
  CHECK(run.abort_reason.find("no recorded response") != std::string::npos);
  CHECK(run.benchmarks.size() == 2);
  CHECK(run.populations.empty());
  const auto best = nlohmann::json::parse(test::slurp(dir.path() / "best.json"));
  CHECK(best["status"] == "aborted");
  // Accepted but unscored members appear in the lineage only.
  CHECK(test::lines_of(test::slurp(dir.path() / "lineage.jsonl")).size() == 1);
  CHECK(test::slurp(dir.path() / "benchmarks.jsonl").empty());
}

TEST_CASE("global failure cap aborts the run") {
  test::ScriptedBackend backend([](const std::string& prompt, std::size_t call) -> std::string {
    if (prompt.find("Example 1:\nf(x) = ") != std::string::npos)
      return "Problem: f(x) = abs(x[0]) + " + std::to_string(call + 1);
    return "no idea";
  });
  EngineConfig c = test::small_engine(4, 3);
  c.retry.global_failure_cap = 7;
  const RunRecord run = Evolution(c, backend).run();
  CHECK_FALSE(run.completed);
  CHECK(run.abort_reason.find("cap") != std::string::npos);
  CHECK(run.populations.size() == 1);
  CHECK(backend.prompts.size() == 3 + 8);
}

TEST_CASE("failed offspring are retried with fresh parents") {
  // Every third reply is unusable; offspring still fill the pool.
  test::ScriptedBackend backend([](const std::string& p, std::size_t call) {
    if (call % 3 == 2) return std::string("I cannot help with that.");
    return test::distinct_expressions()(p, call);
  });
  EngineConfig c = test::small_engine(4, 4);
  c.retry.max_attempts_per_offspring = 1;
  const RunRecord run = Evolution(c, backend).run();
  REQUIRE(run.completed);
  CHECK(run.populations.size() == 4);
  CHECK(backend.prompts.size() > run.benchmarks.size() - 1);
  check_run_invariants(run);

  c.retry.max_attempts_per_offspring = 3;
  test::ScriptedBackend again([](const std::string& p, std::size_t call) {
    if (call % 3 == 2) return std::string("I cannot help with that.");
    return test::distinct_expressions()(p, call);
  });
  const RunRecord multi = Evolution(c, again).run();
  REQUIRE(multi.completed);
  CHECK(std::any_of(multi.lineage.begin(), multi.lineage.end(), [](const LineageEvent& e) { return e.attempts > 1; }));
  check_run_invariants(multi);
}

TEST_CASE("identical expressions hit the evaluation cache") {
  test::ScriptedBackend backend([](const std::string&, std::size_t) { return "Problem: f(x) = abs(x[0]) + x[1]**2"; });
  const RunRecord run = Evolution(test::small_engine(4, 3), backend).run();
  REQUIRE(run.completed);
  CHECK(run.evaluated_benchmarks == 2);
  CHECK(run.cache_hits == run.benchmarks.size() - 2);
  for (const Benchmark& b : run.benchmarks)
    if (b.text == "abs(x[0]) + x[1]**2") CHECK(b.fitness() == run.benchmarks[1].fitness());
  for (const LineageEvent& e : run.lineage)
    if (e.kind != Origin::init_llm) CHECK(e.identical);
  check_run_invariants(run);
}

TEST_CASE("record and replay give the same run and byte-identical artifacts") {
  test::TempDir dir("recreplay");
  const auto transcript = dir.path() / "transcript.jsonl";
  const EngineConfig c = test::small_engine(4, 3);
  const nlohmann::json snapshot = ebg::config::to_json(ebg::config::AppConfig{c, {}, {}});

  RunRecord recorded;
  {
    auto inner = std::make_shared<test::ScriptedBackend>(test::distinct_expressions());
    ebg::llm::RecordingBackend rec(inner, transcript);
    ebg::run_io::RunWriter writer(dir.path() / "a", snapshot);
    recorded = Evolution(c, rec, &writer).run();
  }
  REQUIRE(recorded.completed);
  check_run_invariants(recorded);

  ebg::llm::ReplayBackend replay(ebg::llm::read_transcript(transcript));
  ebg::run_io::RunWriter writer(dir.path() / "b", snapshot);
  EngineConfig threaded = c;
  threaded.workers = 3;
  const RunRecord replayed = Evolution(threaded, replay, &writer).run();
  REQUIRE(replayed.completed);
  CHECK(replayed.populations == recorded.populations);
  CHECK(replayed.best_fitness_per_generation == recorded.best_fitness_per_generation);
  REQUIRE(replayed.benchmarks.size() == recorded.benchmarks.size());
  for (std::size_t i = 0; i < recorded.benchmarks.size(); ++i) {
    CHECK(replayed.benchmarks[i].text == recorded.benchmarks[i].text);
    CHECK(replayed.benchmarks[i].evaluation.a1_bests == recorded.benchmarks[i].evaluation.a1_bests);
    CHECK(replayed.benchmarks[i].evaluation.a2_bests == recorded.benchmarks[i].evaluation.a2_bests);
  }
  for (const char* name : {"benchmarks.jsonl", "lineage.jsonl", "best.json", "population.gen0.jsonl",
                           "population.gen1.jsonl", "population.gen2.jsonl"})
    CHECK(test::slurp(dir.path() / "a" / name) == test::slurp(dir.path() / "b" / name));
  CHECK_FALSE(std::filesystem::exists(dir.path() / "a" / "population.gen3.jsonl"));

  SUBCASE("load_run round trip") {
    const auto loaded = ebg::run_io::load_run(dir.path() / "a");
    const RunRecord& r = loaded.record;
    CHECK(r.completed);
    CHECK(r.populations == recorded.populations);
    CHECK(r.best_fitness_per_generation == recorded.best_fitness_per_generation);
    CHECK(r.lineage.size() == recorded.lineage.size());
    CHECK(r.evaluated_benchmarks == recorded.evaluated_benchmarks);
    CHECK(r.inner_trials == recorded.inner_trials);
    for (std::size_t i = 0; i < r.lineage.size(); ++i) {
      CHECK(r.lineage[i].child_id == recorded.lineage[i].child_id);
      CHECK(r.lineage[i].parent_ids == recorded.lineage[i].parent_ids);
      CHECK(r.lineage[i].kind == recorded.lineage[i].kind);
    }
    for (std::size_t i = 0; i < r.benchmarks.size(); ++i) {
      CHECK(r.benchmarks[i].fitness() == recorded.benchmarks[i].fitness());
      CHECK(r.benchmarks[i].parent_ids == recorded.benchmarks[i].parent_ids);
    }
    CHECK(loaded.config.engine.population == 4);
    CHECK(loaded.config.backend.api_key.empty());
  }
  SUBCASE("corrupt lineage line names file and line") {
    auto lines = test::lines_of(test::slurp(dir.path() / "a" / "lineage.jsonl"));
    lines[1] = "{\"child\": 2, \"kind\": \"teleport\"}";
    std::ofstream out(dir.path() / "a" / "lineage.jsonl", std::ios::trunc);
    for (const auto& l : lines) out << l << "\n";
    out.close();
    try {
      ebg::run_io::load_run(dir.path() / "a");
      FAIL("no error");
    } catch (const ebg::run_io::RunFormatError& e) {
      CHECK(std::string(e.what()).find("lineage.jsonl:2") != std::string::npos);
    }
  }
}

TEST_CASE("configuration file") {
  using namespace ebg::config;
  const AppConfig defaults;
  CHECK(defaults.engine.population == 10);
  CHECK(defaults.engine.max_generations == 20);
  CHECK(defaults.engine.crossover_rate == 0.5);
  CHECK(defaults.engine.fitness.trials == 20);
  CHECK(defaults.engine.inner.ga.population == 50);
  CHECK(defaults.engine.inner.ga.generations == 1000);
  CHECK(defaults.engine.inner.ga.crossover_rate == 0.8);
  CHECK(defaults.engine.inner.de.scale_f == 1.0);
  CHECK(defaults.engine.inner.de.crossover_cr == 0.8);

  AppConfig c;
  c.engine.population = 6;
  c.engine.inner.de.scale_f = 0.7;
  c.backend.mode = BackendMode::replay;
  c.backend.transcript = "t.jsonl";
  c.backend.api_key = "secret";
  const nlohmann::json j = to_json(c);
  CHECK_FALSE(j["backend"].contains("api_key"));
  const AppConfig back = from_json(j);
  CHECK(back.engine.population == 6);
  CHECK(back.engine.inner.de.scale_f == 0.7);
  CHECK(back.backend.mode == BackendMode::replay);
  CHECK(to_json(back) == j);
  CHECK(validate(back).empty());

  try {
    from_json(nlohmann::json::parse(R"({"engine": {"populaton": 5}, "extra": {}})"));
    FAIL("no error");
  } catch (const ConfigError& e) {
    CHECK(e.problems().size() == 2);
    CHECK(std::string(e.what()).find("engine.populaton") != std::string::npos);
  }
  CHECK_THROWS_AS(from_json(nlohmann::json::parse(R"({"engine": {"population": -3}})")), ConfigError);
  CHECK_THROWS_AS(from_json(nlohmann::json::parse(R"({"backend": {"mode": "psychic"}})")), ConfigError);

  AppConfig live;
  const auto problems = validate(live);
  REQUIRE(problems.size() == 1);
  CHECK(problems[0].find("backend.endpoint_url") != std::string::npos);
  AppConfig replay;
  replay.backend.mode = BackendMode::replay;
  REQUIRE(validate(replay).size() == 1);
  CHECK(validate(replay)[0].find("backend.transcript") != std::string::npos);

  ::setenv("EBG_API_URL", "http://example.invalid/v1/chat/completions", 1);
  ::setenv("EBG_MODEL", "other-model", 1);
  apply_environment(live);
  ::unsetenv("EBG_API_URL");
  ::unsetenv("EBG_MODEL");
  CHECK(live.backend.endpoint_url == "http://example.invalid/v1/chat/completions");
  CHECK(live.backend.model == "other-model");
  CHECK(validate(live).empty());
}

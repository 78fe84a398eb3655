#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "support.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kFixtures = EBG_FIXTURES_DIR;

struct Outcome {
  int code = -1;
  std::string output;
};

// Runs the CLI with the backend environment cleared; stdout and stderr are merged.
Outcome cli(const std::string& args) {
  const std::string cmd =
      "env -u EBG_API_URL -u EBG_API_KEY -u EBG_MODEL '" + std::string(EBG_CLI_PATH) + "' " + args + " 2>&1";
  Outcome o;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  for (std::size_t n; (n = std::fread(buf, 1, sizeof buf, pipe)) > 0;) o.output.append(buf, n);
  const int status = pclose(pipe);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

json read_json(const fs::path& p) { return json::parse(test::slurp(p)); }

std::size_t count_of(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t at = text.find(needle); at != std::string::npos; at = text.find(needle, at + 1)) ++n;
  return n;
}

// Smoke fixture config with some engine fields replaced.
fs::path smoke_variant(const fs::path& dir, const json& engine_patch) {
  json cfg = read_json(kFixtures / "smoke_config.json");
  cfg["engine"].update(engine_patch);
  const fs::path p = dir / "config.variant.json";
  write_file(p, cfg.dump(2));
  return p;
}

std::string replay_args(const fs::path& config, const fs::path& out) {
  return "generate --config " + q(config) + " --replay " + q(kFixtures / "smoke_transcript.jsonl") + " --out " +
         q(out);
}

}  // namespace

TEST_CASE("default configuration") {
  test::TempDir dir("cli_defaults");
  const Outcome o = cli("--print-default-config");
  REQUIRE(o.code == 0);
  const json cfg = json::parse(o.output);
  CHECK(cfg["engine"]["population"] == 10);
  CHECK(cfg["engine"]["max_generations"] == 20);
  CHECK(cfg["fitness"]["alpha"] == 10.0);
  CHECK(cfg["ga"]["generations"] == 1000);
  CHECK(cfg["de"]["scale_f"] == 1.0);

  // The defaults use the live backend, which needs an endpoint.
  write_file(dir.path() / "c.json", o.output);
  const Outcome g = cli("generate --config " + q(dir.path() / "c.json") + " --out " + q(dir.path() / "run"));
  CHECK(g.code == 1);
  CHECK(g.output.find("backend.endpoint_url") != std::string::npos);

  const Outcome bad = cli("generate --config " + q(dir.path() / "missing.json") + " --out x");
  CHECK(bad.code == 1);
  write_file(dir.path() / "typo.json", R"({"engine": {"popsize": 4}})");
  const Outcome typo = cli("evaluate --expr 1 --config " + q(dir.path() / "typo.json"));
  CHECK(typo.code == 1);
  CHECK(typo.output.find("engine.popsize") != std::string::npos);
}

TEST_CASE("generate replays the bundled transcript deterministically") {
  test::TempDir dir("cli_generate");
  const fs::path config = kFixtures / "smoke_config.json";
  const Outcome a = cli(replay_args(config, dir.path() / "a"));
  const Outcome b = cli(replay_args(config, dir.path() / "b"));
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(a.output == b.output);
  CHECK(a.output.find("generations: 3") != std::string::npos);
  CHECK(a.output.find("best: f(x) = ") != std::string::npos);
  CHECK(a.output.find("fitness: ") != std::string::npos);

  for (const char* name : {"config.json", "benchmarks.jsonl", "lineage.jsonl", "best.json", "population.gen0.jsonl",
                           "population.gen1.jsonl", "population.gen2.jsonl"}) {
    INFO(name);
    REQUIRE(fs::exists(dir.path() / "a" / name));
    CHECK(test::slurp(dir.path() / "a" / name) == test::slurp(dir.path() / "b" / name));
  }
  CHECK_FALSE(fs::exists(dir.path() / "a" / "transcript.jsonl"));

  const json best = read_json(dir.path() / "a" / "best.json");
  CHECK(best["status"] == "completed");
  const auto trace = best["best_fitness_per_generation"].get<std::vector<double>>();
  REQUIRE(trace.size() == 3);
  for (std::size_t g = 1; g < trace.size(); ++g) CHECK(trace[g] <= trace[g - 1]);
  for (int g = 0; g < 3; ++g)
    CHECK(test::lines_of(test::slurp(dir.path() / "a" / ("population.gen" + std::to_string(g) + ".jsonl"))).size() ==
          4);
  CHECK(read_json(dir.path() / "a" / "config.json")["backend"]["mode"] == "replay");
}

TEST_CASE("generate aborts when the transcript runs out") {
  test::TempDir dir("cli_abort");
  const Outcome o = cli(replay_args(smoke_variant(dir.path(), {{"max_generations", 6}}), dir.path() / "run"));
  CHECK(o.code == 2);
  CHECK(o.output.find("no recorded response") != std::string::npos);
  CHECK(read_json(dir.path() / "run" / "best.json")["status"] == "aborted");
  CHECK(fs::exists(dir.path() / "run" / "population.gen2.jsonl"));
}

TEST_CASE("evaluate") {
  test::TempDir dir("cli_evaluate");
  SUBCASE("constant objective ties") {
    const Outcome o = cli("evaluate --expr 1 --trials 3 --out " + q(dir.path()));
    REQUIRE(o.code == 0);
    CHECK(o.output.find("fitness: 0.5\n") != std::string::npos);
    CHECK(o.output.find("trial\tGA\tDE") != std::string::npos);
    const json ev = read_json(dir.path() / "evaluation.json");
    CHECK(ev["fitness"] == 0.5);
    CHECK(ev["a1_bests"].size() == 3);
    CHECK(ev["a2_bests"].size() == 3);
  }
  SUBCASE("prevalidation failure names the cause") {
    const Outcome o = cli("evaluate --expr 'sqrt(x[0])' --out " + q(dir.path()));
    CHECK(o.code == 1);
    CHECK(o.output.find("prevalidation failed: sqrt-of-negative at x = [") != std::string::npos);
    CHECK_FALSE(fs::exists(dir.path() / "evaluation.json"));
  }
  SUBCASE("parse errors and missing input") {
    CHECK(cli("evaluate --expr 'x[0] +' --out " + q(dir.path())).code == 1);
    CHECK(cli("evaluate --expr 'log(x[0])' --out " + q(dir.path())).code == 1);
    CHECK(cli("evaluate --out " + q(dir.path())).code == 1);
    CHECK(cli("evaluate --file " + q(dir.path() / "nothing.txt")).code == 1);
  }
  SUBCASE("file input and determinism") {
    write_file(dir.path() / "f.txt", "\nProblem: unused\n");
    CHECK(cli("evaluate --file " + q(dir.path() / "f.txt")).code == 1);
    write_file(dir.path() / "g.txt", "x[0]**2 + abs(x[1])\n");
    const std::string args = "evaluate --file " + q(dir.path() / "g.txt") + " --trials 2 --seed 5 --out ";
    REQUIRE(cli(args + q(dir.path() / "1")).code == 0);
    REQUIRE(cli(args + q(dir.path() / "2")).code == 0);
    CHECK(test::slurp(dir.path() / "1" / "evaluation.json") == test::slurp(dir.path() / "2" / "evaluation.json"));
  }
}

TEST_CASE("evaluate a published benchmark with the default budgets") {
  test::TempDir dir("cli_ga_preferred");
  const Outcome o = cli("evaluate --expr '" + std::string(test::kGaPreferred) + "' --out " + q(dir.path()));
  REQUIRE(o.code == 0);
  const json ev = read_json(dir.path() / "evaluation.json");
  CHECK(ev["trials"] == 20);
  CHECK(ev["a1_bests"].size() == 20);
  CHECK(ev["a2_bests"].size() == 20);
  const double f = ev["fitness"];
  CHECK(f >= 210.0 / 820.0 - 1e-12);
  CHECK(f == doctest::Approx(ev["rank_term"].get<double>() + ev["penalty_term"].get<double>()));
}

TEST_CASE("analyze") {
  test::TempDir dir("cli_analyze");
  write_file(dir.path() / "d2.json", R"({"engine": {"dimension": 2}})");
  const std::string two = " --config " + q(dir.path() / "d2.json");

  SUBCASE("Sobol reference functions") {
    REQUIRE(cli("analyze --expr 'x[0]' --what sobol --samples 1024 --out " + q(dir.path() / "a")).code == 0);
    const json a = read_json(dir.path() / "a" / "sobol.json");
    CHECK(std::abs(a["first_order"][0].get<double>() - 1.0) <= 0.02);
    CHECK(a["first_order"].size() == 5);
    CHECK_FALSE(fs::exists(dir.path() / "a" / "curvature.json"));

    REQUIRE(cli("analyze --expr 'x[0] + x[1]' --what sobol --samples 1024" + two + " --out " + q(dir.path() / "b"))
                .code == 0);
    const json b = read_json(dir.path() / "b" / "sobol.json");
    for (int i = 0; i < 2; ++i) CHECK(std::abs(b["first_order"][i].get<double>() - 0.5) <= 0.05);

    REQUIRE(cli("analyze --expr 'x[0]*x[1]' --what sobol --samples 1024" + two + " --out " + q(dir.path() / "c"))
                .code == 0);
    const json c = read_json(dir.path() / "c" / "sobol.json");
    for (int i = 0; i < 2; ++i) {
      CHECK(std::abs(c["first_order"][i].get<double>()) <= 0.05);
      CHECK(std::abs(c["total_order"][i].get<double>() - 1.0) <= 0.05);
    }
  }
  SUBCASE("curvature of an anisotropic quadratic") {
    const Outcome o = cli("analyze --expr 'x[0]**2 + x[1]**2 + x[2]**2 + x[3]**2 + 100*x[4]**2' --what curvature --out " +
                          q(dir.path()));
    REQUIRE(o.code == 0);
    const json c = read_json(dir.path() / "curvature.json");
    CHECK(std::abs(c["hessian_cond_lower_quartile"].get<double>() - 100.0) <= 1.0);
    CHECK(c["sample_count"] == 500);
  }
  SUBCASE("invalid sample point is reported") {
    const Outcome o = cli("analyze --expr 'sqrt(x[0])' --what sobol --out " + q(dir.path()));
    CHECK(o.code == 2);
    CHECK(o.output.find("sqrt-of-negative") != std::string::npos);
    CHECK(o.output.find("at x = [-") != std::string::npos);
  }
  SUBCASE("linear function has no curvature") {
    CHECK(cli("analyze --expr 'x[0]' --what curvature --out " + q(dir.path())).code == 2);
  }
  SUBCASE("argument errors") {
    CHECK(cli("analyze --what sobol").code == 1);
    CHECK(cli("analyze --expr 'x[0]' --what everything").code == 1);
  }
}

TEST_CASE("lineage, trajectory and analysis of a replayed run") {
  test::TempDir dir("cli_lineage");
  const fs::path run = dir.path() / "run";
  REQUIRE(cli(replay_args(kFixtures / "smoke_config.json", run)).code == 0);

  const Outcome o = cli("lineage --run " + q(run));
  REQUIRE(o.code == 0);
  CHECK(o.output.find("lineage individuals: ") != std::string::npos);
  const std::string dot = test::slurp(run / "lineage.dot");
  CHECK(count_of(dot, "[label=") == 4 * 3);

  std::size_t operator_edges = 0, init_edges = 0;
  for (const std::string& line : test::lines_of(test::slurp(run / "lineage.jsonl"))) {
    const json e = json::parse(line);
    if (e["kind"] == "crossover" || e["kind"] == "mutation")
      operator_edges += e["parents"].size();
    else
      init_edges += e["parents"].size();
  }
  CHECK(operator_edges > 0);
  CHECK(count_of(dot, "style=solid") + count_of(dot, "style=dashed") == operator_edges);
  CHECK(count_of(dot, "style=dotted") == init_edges);
  for (const char* name : {"distances.csv", "embedding.csv", "operator_stats.json"})
    CHECK(fs::exists(run / name));
  CHECK(test::lines_of(test::slurp(run / "embedding.csv")).size() == 13);
  CHECK(test::lines_of(test::slurp(run / "distances.csv")).front() == "id_a,id_b,distance");

  const Outcome t = cli("trajectory --run " + q(run) + " --out " + q(dir.path() / "traj"));
  REQUIRE(t.code == 0);
  CHECK(test::lines_of(test::slurp(dir.path() / "traj" / "generations.csv")).size() == 4);
  const json best = read_json(run / "best.json");
  const std::string traj =
      test::slurp(dir.path() / "traj" / ("trajectory_" + std::to_string(best["best"]["id"].get<int>()) + ".csv"));
  const auto rows = test::lines_of(traj);
  REQUIRE(rows.size() == 51 + 1);
  CHECK(count_of(rows.front(), ",") + 1 == 2 * 3 + 1);
  CHECK(cli("trajectory --run " + q(run) + " --id 99 --out " + q(dir.path() / "traj")).code == 1);
  CHECK(cli("trajectory --run " + q(run) + " --id 0 --id 1 --out " + q(dir.path() / "t2")).code == 0);
  CHECK(fs::exists(dir.path() / "t2" / "trajectory_1.csv"));

  const Outcome an = cli("analyze --run " + q(run) + " --what sobol --samples 128");
  REQUIRE(an.code == 0);
  CHECK(fs::exists(run / "sobol.json"));
  // The fixture's best ignores three of the five variables.
  const Outcome flat = cli("analyze --run " + q(run) + " --what curvature --points 50");
  CHECK(flat.code == 2);
  CHECK(flat.output.find("curvature features undefined") != std::string::npos);

  SUBCASE("corrupt lineage line") {
    auto lines = test::lines_of(test::slurp(run / "lineage.jsonl"));
    lines[1] = "{\"child\": ";
    std::ofstream out(run / "lineage.jsonl", std::ios::trunc);
    for (const auto& l : lines) out << l << "\n";
    out.close();
    const Outcome bad = cli("lineage --run " + q(run));
    CHECK(bad.code == 1);
    CHECK(bad.output.find("lineage.jsonl:2") != std::string::npos);
  }
  SUBCASE("incomplete lineage") {
    auto lines = test::lines_of(test::slurp(run / "lineage.jsonl"));
    lines.pop_back();
    std::ofstream out(run / "lineage.jsonl", std::ios::trunc);
    for (const auto& l : lines) out << l << "\n";
    out.close();
    const Outcome bad = cli("lineage --run " + q(run));
    CHECK(bad.code == 2);
    CHECK(bad.output.find("incomplete lineage") != std::string::npos);
  }
}

TEST_CASE("single-generation run has only initialization edges") {
  test::TempDir dir("cli_single");
  const fs::path run = dir.path() / "run";
  REQUIRE(cli(replay_args(smoke_variant(dir.path(), {{"max_generations", 1}}), run)).code == 0);
  REQUIRE(cli("lineage --run " + q(run)).code == 0);
  const std::string dot = test::slurp(run / "lineage.dot");
  CHECK(count_of(dot, "[label=") == 4);
  CHECK(count_of(dot, "style=solid") == 0);
  CHECK(count_of(dot, "style=dashed") == 0);
  CHECK(count_of(dot, "style=dotted") == 1 + 2 + 3);
}

TEST_CASE("argument errors exit with 1") {
  CHECK(cli("").code == 1);
  CHECK(cli("generate").code == 1);
  CHECK(cli("frobnicate").code == 1);
  CHECK(cli("lineage").code == 1);
  CHECK(cli("lineage --run /nonexistent/run").code == 1);
  CHECK(cli("generate --out x --seed notanumber").code == 1);
  CHECK(cli("--help").code == 0);
}

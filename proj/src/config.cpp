#include "ebg/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <type_traits>

namespace ebg::config {

using nlohmann::json;

namespace {

std::string_view mode_name(BackendMode m) {
  switch (m) {
    case BackendMode::live:
      return "live";
    case BackendMode::replay:
      return "replay";
    case BackendMode::record:
      return "record";
  }
  return "live";
}

// Reads one object block, collecting type errors and unknown keys.
class Block {
 public:
  Block(const json& root, const char* name, std::vector<std::string>& problems)
      : name_(name), problems_(problems) {
    if (!root.contains(name)) return;
    const json& j = root.at(name);
    if (!j.is_object()) {
      problems_.push_back(name_ + ": must be an object");
      return;
    }
    object_ = &j;
  }

  ~Block() {
    if (!object_) return;
    for (const auto& item : object_->items())
      if (!seen_.count(item.key())) problems_.push_back(name_ + "." + item.key() + ": unknown field");
  }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!object_ || !object_->contains(key)) return;
    const json& v = object_->at(key);
    const std::string field = name_ + "." + key;
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) return fail(field, "must be a boolean");
      out = v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) return fail(field, "must be a string");
      out = v.get<std::string>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) return fail(field, "must be a number");
      out = v.get<double>();
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
        return fail(field, "must be a non-negative integer");
      out = v.get<T>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) return fail(field, "must be an integer");
      out = v.get<T>();
    } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
      if (!v.is_array()) return fail(field, "must be an array of strings");
      out.clear();
      for (const json& e : v) {
        if (!e.is_string()) return fail(field, "must be an array of strings");
        out.push_back(e.get<std::string>());
      }
    }
  }

 private:
  void fail(const std::string& field, const char* what) { problems_.push_back(field + ": " + what); }

  std::string name_;
  std::vector<std::string>& problems_;
  const json* object_ = nullptr;
  std::set<std::string> seen_;
};

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error([&] {
        std::string msg = "configuration has " + std::to_string(problems.size()) + " problem(s):";
        for (const auto& p : problems) msg += "\n  " + p;
        return msg;
      }()),
      problems_(std::move(problems)) {}

json to_json(const AppConfig& c) {
  const engine::EngineConfig& e = c.engine;
  json whitelist = json::array();
  for (const auto& name : e.whitelist.names()) whitelist.push_back(name);
  return json{
      {"engine",
       {{"population", e.population},
        {"max_generations", e.max_generations},
        {"crossover_rate", e.crossover_rate},
        {"dimension", e.dimension},
        {"seed", e.run_seed},
        {"max_init_examples", e.max_init_examples},
        {"workers", e.workers}}},
      {"search_space", {{"lower", e.inner.space.lower}, {"upper", e.inner.space.upper}}},
      {"fitness",
       {{"trials", e.fitness.trials},
        {"alpha", e.fitness.alpha},
        {"invalid_penalty", e.fitness.invalid_penalty},
        {"target", fitness::to_string(e.fitness.target)},
        {"competitor", fitness::to_string(e.fitness.competitor)},
        {"base_seed", e.fitness.base_seed},
        {"prevalidation_samples", e.fitness.prevalidation_samples}}},
      {"ga",
       {{"population", e.inner.ga.population},
        {"generations", e.inner.ga.generations},
        {"crossover_rate", e.inner.ga.crossover_rate},
        {"mutation_rate", e.inner.ga.mutation_rate},
        {"eta_sbx", e.inner.ga.eta_sbx},
        {"eta_pm", e.inner.ga.eta_pm},
        {"tournament_size", e.inner.ga.tournament_size}}},
      {"de",
       {{"population", e.inner.de.population},
        {"generations", e.inner.de.generations},
        {"scale_f", e.inner.de.scale_f},
        {"crossover_cr", e.inner.de.crossover_cr}}},
      {"retry",
       {{"max_attempts_per_offspring", e.retry.max_attempts_per_offspring},
        {"reselect_parents_on_failure", e.retry.reselect_parents_on_failure},
        {"global_failure_cap", e.retry.global_failure_cap}}},
      {"prompt", {{"operator_list", e.operator_list_text}, {"whitelist", whitelist}}},
      {"backend",
       {{"mode", mode_name(c.backend.mode)},
        {"endpoint_url", c.backend.endpoint_url},
        {"model", c.backend.model},
        {"temperature", c.backend.decoding.temperature},
        {"max_tokens", c.backend.decoding.max_tokens},
        {"timeout_seconds", c.backend.timeout_seconds},
        {"transcript", c.backend.transcript},
        {"replay_fallback", c.backend.replay_fallback == llm::ReplayMode::strict ? "strict" : "fuzzy"}}},
      {"analysis",
       {{"sobol_base_samples", c.analysis.sobol_base_samples},
        {"curvature_points", c.analysis.curvature_points},
        {"fd_gradient_step", c.analysis.fd_gradient_step},
        {"fd_hessian_step", c.analysis.fd_hessian_step},
        {"seed", c.analysis.seed}}},
  };
}

AppConfig from_json(const json& j) {
  std::vector<std::string> problems;
  AppConfig c;
  if (!j.is_object()) throw ConfigError({"<root>: must be a JSON object"});

  static const std::set<std::string> kBlocks{"engine", "search_space", "fitness", "ga",      "de",
                                             "retry",  "prompt",       "backend", "analysis"};
  for (const auto& item : j.items())
    if (!kBlocks.count(item.key())) problems.push_back(item.key() + ": unknown section");

  engine::EngineConfig& e = c.engine;
  {
    Block b(j, "engine", problems);
    b.read("population", e.population);
    b.read("max_generations", e.max_generations);
    b.read("crossover_rate", e.crossover_rate);
    b.read("dimension", e.dimension);
    b.read("seed", e.run_seed);
    b.read("max_init_examples", e.max_init_examples);
    b.read("workers", e.workers);
  }
  e.inner.space.dimension = e.dimension;
  {
    Block b(j, "search_space", problems);
    b.read("lower", e.inner.space.lower);
    b.read("upper", e.inner.space.upper);
  }
  {
    Block b(j, "fitness", problems);
    std::string target(fitness::to_string(e.fitness.target));
    std::string competitor(fitness::to_string(e.fitness.competitor));
    b.read("trials", e.fitness.trials);
    b.read("alpha", e.fitness.alpha);
    b.read("invalid_penalty", e.fitness.invalid_penalty);
    b.read("target", target);
    b.read("competitor", competitor);
    b.read("base_seed", e.fitness.base_seed);
    b.read("prevalidation_samples", e.fitness.prevalidation_samples);
    try {
      e.fitness.target = fitness::algorithm_from_string(target);
    } catch (const std::invalid_argument& ex) {
      problems.push_back(std::string("fitness.target: ") + ex.what());
    }
    try {
      e.fitness.competitor = fitness::algorithm_from_string(competitor);
    } catch (const std::invalid_argument& ex) {
      problems.push_back(std::string("fitness.competitor: ") + ex.what());
    }
  }
  {
    Block b(j, "ga", problems);
    b.read("population", e.inner.ga.population);
    b.read("generations", e.inner.ga.generations);
    b.read("crossover_rate", e.inner.ga.crossover_rate);
    b.read("mutation_rate", e.inner.ga.mutation_rate);
    b.read("eta_sbx", e.inner.ga.eta_sbx);
    b.read("eta_pm", e.inner.ga.eta_pm);
    b.read("tournament_size", e.inner.ga.tournament_size);
  }
  {
    Block b(j, "de", problems);
    b.read("population", e.inner.de.population);
    b.read("generations", e.inner.de.generations);
    b.read("scale_f", e.inner.de.scale_f);
    b.read("crossover_cr", e.inner.de.crossover_cr);
  }
  {
    Block b(j, "retry", problems);
    b.read("max_attempts_per_offspring", e.retry.max_attempts_per_offspring);
    b.read("reselect_parents_on_failure", e.retry.reselect_parents_on_failure);
    b.read("global_failure_cap", e.retry.global_failure_cap);
  }
  {
    Block b(j, "prompt", problems);
    b.read("operator_list", e.operator_list_text);
    std::vector<std::string> names(e.whitelist.names().begin(), e.whitelist.names().end());
    b.read("whitelist", names);
    try {
      e.whitelist = expr::FunctionWhitelist(std::set<std::string>(names.begin(), names.end()));
    } catch (const std::invalid_argument& ex) {
      problems.push_back(std::string("prompt.whitelist: ") + ex.what());
    }
  }
  {
    Block b(j, "backend", problems);
    std::string mode(mode_name(c.backend.mode));
    std::string fallback = "strict";
    b.read("mode", mode);
    b.read("endpoint_url", c.backend.endpoint_url);
    b.read("api_key", c.backend.api_key);
    b.read("model", c.backend.model);
    b.read("temperature", c.backend.decoding.temperature);
    b.read("max_tokens", c.backend.decoding.max_tokens);
    b.read("timeout_seconds", c.backend.timeout_seconds);
    b.read("transcript", c.backend.transcript);
    b.read("replay_fallback", fallback);
    if (mode == "live")
      c.backend.mode = BackendMode::live;
    else if (mode == "replay")
      c.backend.mode = BackendMode::replay;
    else if (mode == "record")
      c.backend.mode = BackendMode::record;
    else
      problems.push_back("backend.mode: must be one of live, replay, record");
    if (fallback == "strict")
      c.backend.replay_fallback = llm::ReplayMode::strict;
    else if (fallback == "fuzzy")
      c.backend.replay_fallback = llm::ReplayMode::fuzzy;
    else
      problems.push_back("backend.replay_fallback: must be strict or fuzzy");
  }
  {
    Block b(j, "analysis", problems);
    b.read("sobol_base_samples", c.analysis.sobol_base_samples);
    b.read("curvature_points", c.analysis.curvature_points);
    b.read("fd_gradient_step", c.analysis.fd_gradient_step);
    b.read("fd_hessian_step", c.analysis.fd_hessian_step);
    b.read("seed", c.analysis.seed);
  }

  if (!problems.empty()) throw ConfigError(std::move(problems));
  return c;
}

AppConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({path.string() + ": cannot open"});
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError({path.string() + ": " + e.what()});
  }
  return from_json(j);
}

void apply_environment(AppConfig& config) {
  if (const char* url = std::getenv("EBG_API_URL"); url && *url) config.backend.endpoint_url = url;
  if (const char* key = std::getenv("EBG_API_KEY"); key && *key) config.backend.api_key = key;
  if (const char* model = std::getenv("EBG_MODEL"); model && *model) config.backend.model = model;
}

std::vector<std::string> validate(const AppConfig& config) {
  std::vector<std::string> out = config.engine.problems();
  const BackendConfig& b = config.backend;
  if (b.mode == BackendMode::replay && b.transcript.empty())
    out.push_back("backend.transcript: required in replay mode");
  if ((b.mode == BackendMode::live || b.mode == BackendMode::record) && b.endpoint_url.empty())
    out.push_back(std::string("backend.endpoint_url: required in ") + std::string(mode_name(b.mode)) +
                  " mode (or set EBG_API_URL)");
  if (!(b.decoding.temperature >= 0.0)) out.push_back("backend.temperature: must be non-negative");
  if (b.decoding.max_tokens < 1) out.push_back("backend.max_tokens: must be positive");
  if (b.timeout_seconds < 1) out.push_back("backend.timeout_seconds: must be positive");
  const AnalysisConfig& a = config.analysis;
  if (a.sobol_base_samples < 2) out.push_back("analysis.sobol_base_samples: must be at least 2");
  if (a.curvature_points < 4) out.push_back("analysis.curvature_points: must be at least 4");
  if (!(a.fd_gradient_step > 0.0)) out.push_back("analysis.fd_gradient_step: must be positive");
  if (!(a.fd_hessian_step > 0.0)) out.push_back("analysis.fd_hessian_step: must be positive");
  return out;
}

}  // namespace ebg::config

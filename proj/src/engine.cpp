#include "ebg/engine.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace ebg::engine {

std::string_view to_string(Origin origin) {
  switch (origin) {
    case Origin::seed:
      return "seed";
    case Origin::init_llm:
      return "init_llm";
    case Origin::crossover:
      return "crossover";
    case Origin::mutation:
      return "mutation";
  }
  return "unknown";
}

Origin origin_from_string(std::string_view text) {
  if (text == "seed") return Origin::seed;
  if (text == "init_llm") return Origin::init_llm;
  if (text == "crossover") return Origin::crossover;
  if (text == "mutation") return Origin::mutation;
  throw std::invalid_argument("unknown origin \"" + std::string(text) + "\"");
}

std::vector<std::string> EngineConfig::problems() const {
  std::vector<std::string> out;
  auto check = [&](auto&& fn, const char* field) {
    try {
      fn();
    } catch (const std::invalid_argument& e) {
      out.push_back(std::string(field) + ": " + e.what());
    }
  };
  if (population < 1) out.push_back("engine.population: must be at least 1");
  if (max_generations < 1) out.push_back("engine.max_generations: must be at least 1");
  if (!(crossover_rate >= 0.0 && crossover_rate <= 1.0)) out.push_back("engine.crossover_rate: must lie in [0, 1]");
  if (dimension < 1) out.push_back("engine.dimension: must be positive");
  if (inner.space.dimension != dimension)
    out.push_back("search_space.dimension: must equal engine.dimension");
  check([&] { inner.space.validate(); }, "search_space");
  check([&] { inner.ga.validate(); }, "ga");
  check([&] { inner.de.validate(); }, "de");
  check([&] { fitness.validate(); }, "fitness");
  check([&] { retry.validate(); }, "retry");
  return out;
}

const Benchmark& RunRecord::benchmark(BenchmarkId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= benchmarks.size())
    throw std::out_of_range("unknown benchmark id " + std::to_string(id));
  return benchmarks[static_cast<std::size_t>(id)];
}

std::optional<BenchmarkId> RunRecord::best_id() const {
  if (populations.empty() || populations.back().empty()) return std::nullopt;
  return populations.back().front();
}

expr::Expression seed_expression(std::size_t dimension) {
  if (dimension < 1) throw std::invalid_argument("seed expression needs dimension >= 1");
  expr::NodePtr sum;
  for (std::size_t i = 0; i < dimension; ++i) {
    expr::NodePtr term = expr::variable(i);
    if (i > 0) term = expr::binary(expr::BinaryOp::pow, term, expr::constant(static_cast<double>(i + 1)));
    sum = sum ? expr::binary(expr::BinaryOp::add, sum, term) : term;
  }
  return expr::Expression(sum, dimension);
}

std::vector<Benchmark> select_survivors(std::vector<Benchmark> pool, std::size_t n) {
  std::sort(pool.begin(), pool.end(), [](const Benchmark& a, const Benchmark& b) {
    if (a.fitness() != b.fitness()) return a.fitness() < b.fitness();
    return a.id < b.id;
  });
  if (pool.size() > n) pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(n), pool.end());
  return pool;
}

// ---------------------------------------------------------------------------

Evolution::Evolution(EngineConfig config, llm::ChatBackend& client, RunSink* sink)
    : config_(std::move(config)),
      client_(client),
      sink_(sink),
      rng_(derive_seed(config_.run_seed, 0x454e47, 0)),
      budget_(config_.retry.global_failure_cap) {
  if (const auto problems = config_.problems(); !problems.empty()) {
    std::string msg = "invalid engine configuration:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw std::invalid_argument(msg);
  }
  record_.config = config_;
  if (sink_) sink_->on_start(config_);
}

llm::OperatorContext Evolution::operator_context() const {
  llm::OperatorContext ctx;
  ctx.dimension = config_.dimension;
  ctx.a1_name = std::string(fitness::to_string(config_.fitness.target));
  ctx.a2_name = std::string(fitness::to_string(config_.fitness.competitor));
  ctx.operator_list_text = config_.operator_list_text;
  ctx.whitelist = config_.whitelist;
  ctx.policy = config_.retry;
  return ctx;
}

bool Evolution::prevalidate(const expr::Expression& e) {
  const std::uint64_t seed = derive_seed(config_.run_seed, 0x5056, prevalidation_calls_++);
  return fitness::prevalidate(e, config_.inner.space, config_.fitness.prevalidation_samples, seed);
}

BenchmarkId Evolution::accept(expr::Expression expression, std::string text, Origin origin,
                              std::vector<BenchmarkId> parent_ids, int generation) {
  const auto id = static_cast<BenchmarkId>(record_.benchmarks.size());
  record_.benchmarks.push_back(Benchmark{id, std::move(expression), std::move(text), {}, generation, origin,
                                         std::move(parent_ids)});
  return id;
}

void Evolution::evaluate_pending(std::span<const BenchmarkId> ids) {
  fitness::EvaluationOptions options;
  options.workers = config_.workers;
  for (BenchmarkId id : ids) {
    Benchmark& b = record_.benchmarks[static_cast<std::size_t>(id)];
    if (auto it = cache_.find(b.text); it != cache_.end()) {
      b.evaluation = it->second;
      ++record_.cache_hits;
    } else {
      b.evaluation = fitness::evaluate_benchmark(b.expression, config_.fitness, config_.inner, options);
      ++record_.evaluated_benchmarks;
      record_.inner_trials += b.evaluation.a1_bests.size() + b.evaluation.a2_bests.size();
      cache_.emplace(b.text, b.evaluation);
    }
    if (sink_) sink_->on_benchmark(b);
  }
}

void Evolution::set_population(std::vector<BenchmarkId> ids, int generation) {
  std::vector<Benchmark> members;
  for (BenchmarkId id : ids) members.push_back(record_.benchmarks[static_cast<std::size_t>(id)]);
  members = select_survivors(std::move(members), config_.population);

  std::vector<BenchmarkId> sorted;
  std::vector<const Benchmark*> pointers;
  for (const Benchmark& m : members) {
    sorted.push_back(m.id);
    pointers.push_back(&record_.benchmarks[static_cast<std::size_t>(m.id)]);
  }
  record_.best_fitness_per_generation.push_back(members.front().fitness());
  record_.populations.push_back(std::move(sorted));
  if (sink_) sink_->on_population(generation, pointers);
}

std::vector<BenchmarkId> Evolution::population() const {
  return record_.populations.empty() ? std::vector<BenchmarkId>{} : record_.populations.back();
}

void Evolution::initialize_population() {
  if (!record_.populations.empty()) throw std::logic_error("population already initialized");
  generation_ = 0;
  const llm::OperatorContext ctx = operator_context();

  std::vector<BenchmarkId> members;
  expr::Expression seed = seed_expression(config_.dimension);
  std::string seed_text = expr::render(seed);
  members.push_back(accept(std::move(seed), std::move(seed_text), Origin::seed, {}, 0));

  while (members.size() < config_.population) {
    std::size_t first = 0;
    if (config_.max_init_examples > 0 && members.size() > config_.max_init_examples)
      first = members.size() - config_.max_init_examples;
    std::vector<llm::ParentRef> examples;
    for (std::size_t k = first; k < members.size(); ++k) {
      const Benchmark& b = record_.benchmark(members[k]);
      examples.push_back({b.id, b.text});
    }

    llm::OffspringResult result = llm::generate_offspring(
        llm::PromptKind::init, examples, client_, ctx, [this](const expr::Expression& e) { return prevalidate(e); },
        budget_);
    if (!result.offspring) continue;  // budget_ bounds the retries

    llm::Offspring& child = *result.offspring;
    const BenchmarkId id = accept(std::move(child.expression), std::move(child.text), Origin::init_llm, {}, 0);
    LineageEvent event{id, Origin::init_llm, child.parent_ids, child.attempts, child.identical, 0};
    record_.lineage.push_back(event);
    if (sink_) sink_->on_lineage(event);
    members.push_back(id);
  }

  evaluate_pending(members);
  set_population(std::move(members), 0);
}

void Evolution::step_generation() {
  if (record_.populations.empty()) throw std::logic_error("step_generation before initialize_population");
  const int generation = ++generation_;
  const std::vector<BenchmarkId> parents = record_.populations.back();
  const std::size_t n = parents.size();
  const llm::OperatorContext ctx = operator_context();
  auto validator = [this](const expr::Expression& e) { return prevalidate(e); };

  std::vector<BenchmarkId> offspring;
  std::vector<LineageEvent> events;
  while (offspring.size() < config_.population) {
    // A lone member can only be mutated.
    const bool crossover = rng_.uniform() < config_.crossover_rate && n >= 2;
    std::vector<llm::ParentRef> chosen;
    if (crossover) {
      const std::size_t i = rng_.below(n);
      std::size_t j = rng_.below(n - 1);
      if (j >= i) ++j;
      for (std::size_t k : {i, j}) {
        const Benchmark& b = record_.benchmark(parents[k]);
        chosen.push_back({b.id, b.text});
      }
    } else {
      const Benchmark& b = record_.benchmark(parents[rng_.below(n)]);
      chosen.push_back({b.id, b.text});
    }
    const llm::PromptKind kind = crossover ? llm::PromptKind::crossover : llm::PromptKind::mutation;

    llm::OffspringResult result;
    do {
      result = llm::generate_offspring(kind, chosen, client_, ctx, validator, budget_);
    } while (!result.offspring && !config_.retry.reselect_parents_on_failure);
    if (!result.offspring) continue;  // reselect operator and parents

    llm::Offspring& child = *result.offspring;
    const Origin origin = crossover ? Origin::crossover : Origin::mutation;
    const BenchmarkId id =
        accept(std::move(child.expression), std::move(child.text), origin, child.parent_ids, generation);
    events.push_back(LineageEvent{id, origin, child.parent_ids, child.attempts, child.identical, generation});
    offspring.push_back(id);
  }

  for (const LineageEvent& e : events) {
    record_.lineage.push_back(e);
    if (sink_) sink_->on_lineage(e);
  }
  evaluate_pending(offspring);

  std::vector<BenchmarkId> pool = parents;
  pool.insert(pool.end(), offspring.begin(), offspring.end());
  set_population(std::move(pool), generation);
}

RunRecord Evolution::run() {
  try {
    initialize_population();
    for (std::size_t g = 1; g < config_.max_generations; ++g) step_generation();
    record_.completed = true;
  } catch (const llm::MissingTranscriptEntry& e) {
    record_.abort_reason = e.what();
  } catch (const llm::GlobalFailureCapExceeded& e) {
    record_.abort_reason = e.what();
  } catch (const llm::TransportError& e) {
    record_.abort_reason = e.what();
  }
  if (sink_) sink_->on_finish(record_);
  return record_;
}

}  // namespace ebg::engine

#include "ebg/offspring.hpp"

#include <algorithm>

namespace ebg::llm {

void RetryPolicy::validate() const {
  if (max_attempts_per_offspring < 1) throw std::invalid_argument("max_attempts_per_offspring must be at least 1");
}

void FailureBudget::charge(const std::string& reason) {
  if (++used_ > cap_)
    throw GlobalFailureCapExceeded("global failure cap of " + std::to_string(cap_) +
                                   " generation attempts exceeded (last failure: " + reason + ")");
}

OffspringResult generate_offspring(PromptKind kind, const std::vector<ParentRef>& parents, ChatBackend& client,
                                   const OperatorContext& context, const Prevalidator& prevalidate,
                                   FailureBudget& budget) {
  PromptSpec spec;
  spec.dimension = context.dimension;
  spec.a1_name = context.a1_name;
  spec.a2_name = context.a2_name;
  spec.operator_list_text = context.operator_list_text;
  spec.kind = kind;
  for (const ParentRef& p : parents) spec.examples.push_back(p.text);
  const std::string prompt = build_prompt(spec);

  OffspringResult result;
  auto fail = [&](std::string reason) {
    result.failures.push_back({reason});
    budget.charge(reason);
  };

  for (std::size_t attempt = 1; attempt <= context.policy.max_attempts_per_offspring; ++attempt) {
    std::string raw;
    try {
      raw = client.complete(prompt);
    } catch (const TransportError& e) {
      fail(std::string("transport: ") + e.what());
      continue;
    }

    Sanitized parsed = sanitize_response(raw, context.dimension, context.whitelist);
    if (const auto* rejection = std::get_if<Rejection>(&parsed)) {
      fail(std::string(to_string(rejection->cause)) + ": " + rejection->detail);
      continue;
    }
    expr::Expression child = std::get<expr::Expression>(std::move(parsed));
    if (!prevalidate(child)) {
      fail("prevalidation: invalid value at a sampled point");
      continue;
    }

    std::string text = expr::render(child);
    const bool identical =
        std::any_of(parents.begin(), parents.end(), [&](const ParentRef& p) { return p.text == text; });
    std::vector<std::int64_t> ids;
    for (const ParentRef& p : parents) ids.push_back(p.id);
    result.offspring = Offspring{std::move(child), std::move(text), kind, std::move(ids), attempt, identical};
    return result;
  }
  return result;
}

}  // namespace ebg::llm

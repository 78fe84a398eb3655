#pragma once

// Language-model variation operators with the regenerate-on-invalid loop.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ebg/chat_backend.hpp"
#include "ebg/expr.hpp"
#include "ebg/llm.hpp"

namespace ebg::llm {

struct RetryPolicy {
  std::size_t max_attempts_per_offspring = 10;
  bool reselect_parents_on_failure = true;
  /// Total failed attempts tolerated over a whole run.
  std::size_t global_failure_cap = 500;

  void validate() const;
};

class GlobalFailureCapExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Run-wide count of failed generation attempts.
class FailureBudget {
 public:
  explicit FailureBudget(std::size_t cap) : cap_(cap) {}
  /// Throws GlobalFailureCapExceeded once the count passes the cap.
  void charge(const std::string& reason);
  std::size_t used() const { return used_; }

 private:
  std::size_t cap_;
  std::size_t used_ = 0;
};

struct ParentRef {
  std::int64_t id;
  std::string text;  // canonical rendering
};

struct OperatorContext {
  std::size_t dimension = 5;
  std::string a1_name = "GA";
  std::string a2_name = "DE";
  std::string operator_list_text = std::string(kAdvertisedOperators);
  expr::FunctionWhitelist whitelist;
  RetryPolicy policy;
};

using Prevalidator = std::function<bool(const expr::Expression&)>;

struct Offspring {
  expr::Expression expression;
  std::string text;  // canonical rendering
  PromptKind kind;
  std::vector<std::int64_t> parent_ids;
  std::size_t attempts;
  /// Offspring text is byte-identical to one of the parents' texts.
  bool identical;
};

/// One rejected attempt, kept for diagnostics.
struct AttemptFailure {
  std::string reason;
};

struct OffspringResult {
  std::optional<Offspring> offspring;  // empty: attempts exhausted, caller reselects parents
  std::vector<AttemptFailure> failures;
};

/// build_prompt -> backend -> sanitize -> prevalidate, repeated up to
/// max_attempts_per_offspring times. Transport errors count as failed
/// attempts; MissingTranscriptEntry propagates. Every failure is charged to
/// `budget`. A returned offspring always passed `prevalidate`.
OffspringResult generate_offspring(PromptKind kind, const std::vector<ParentRef>& parents, ChatBackend& client,
                                   const OperatorContext& context, const Prevalidator& prevalidate,
                                   FailureBudget& budget);

}  // namespace ebg::llm

#pragma once

// Few-shot prompt construction and response sanitizing for the language
// model operators.

#include <cstddef>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ebg/expr.hpp"

namespace ebg::llm {

enum class PromptKind { init, crossover, mutation };

std::string_view to_string(PromptKind kind);

/// Operator list advertised to the model. The parser's whitelist is wider.
inline constexpr std::string_view kAdvertisedOperators = "[+,-,*,/,**,sqrt,sin,sinh,abs]";

struct PromptSpec {
  std::size_t dimension = 5;
  std::string a1_name = "GA";
  std::string a2_name = "DE";
  std::string operator_list_text = std::string(kAdvertisedOperators);
  /// Rendered expressions, in the order they are shown.
  std::vector<std::string> examples;
  PromptKind kind = PromptKind::init;
};

/// Instantiates the generator's prompt template. Initialization examples are
/// written as `f(x) = <expr>`; crossover and mutation examples as the bare
/// expression. Throws std::invalid_argument when the example count does not
/// fit the kind (crossover 2, mutation 1, init at least 1).
std::string build_prompt(const PromptSpec& spec);

/// 64-bit FNV-1a of the prompt bytes as 16 lowercase hex digits.
std::string prompt_digest(std::string_view prompt);

enum class RejectionCause { empty, unparseable, non_whitelisted, bad_index };

std::string_view to_string(RejectionCause cause);

struct Rejection {
  RejectionCause cause;
  std::string detail;
};

using Sanitized = std::variant<expr::Expression, Rejection>;

/// Extracts one candidate line from a raw model response and parses it.
///
/// Code fences, a leading `Problem:` and `f(x) =` are stripped. When the
/// response has a fenced block its first nonempty line is the candidate;
/// otherwise the first line carrying an `f(x) =` prefix; otherwise the first
/// nonempty line. Only that single line is parsed.
Sanitized sanitize_response(std::string_view raw, std::size_t dimension,
                            const expr::FunctionWhitelist& whitelist = expr::FunctionWhitelist());

}  // namespace ebg::llm

#include <array>
#include <cstdint>
#include <stdexcept>

#include "ebg/llm.hpp"

namespace ebg::llm {

std::string_view to_string(PromptKind kind) {
  switch (kind) {
    case PromptKind::init:
      return "init";
    case PromptKind::crossover:
      return "crossover";
    case PromptKind::mutation:
      return "mutation";
  }
  return "unknown";
}

std::string build_prompt(const PromptSpec& spec) {
  const std::size_t n = spec.examples.size();
  switch (spec.kind) {
    case PromptKind::crossover:
      if (n != 2) throw std::invalid_argument("crossover prompt needs exactly 2 examples");
      break;
    case PromptKind::mutation:
      if (n != 1) throw std::invalid_argument("mutation prompt needs exactly 1 example");
      break;
    case PromptKind::init:
      if (n < 1) throw std::invalid_argument("init prompt needs at least 1 example");
      break;
  }
  if (spec.dimension == 0) throw std::invalid_argument("prompt dimension must be positive");

  const std::string d = std::to_string(spec.dimension);
  std::string out;
  out += "You are an expert in generating optimization benchmark problems.\n";
  out += "Create a new " + d + "-dimensional problem that " + spec.a1_name + " outperforms " + spec.a2_name + ".\n";
  out += "\n";
  for (std::size_t k = 0; k < n; ++k) {
    out += "Example " + std::to_string(k + 1) + ":\n";
    if (spec.kind == PromptKind::init) out += "f(x) = ";
    out += spec.examples[k];
    out += '\n';
  }
  out += "\n";
  out += "### Instructions ###\n";
  out += "1. Generate one problem function `f(x)` in " + d + " dimensions.\n";
  out += "2. Use only the following operators:" + spec.operator_list_text + ".\n";
  out += "3. Write in a single line of Python code, starting with `Problem: f(x) = '.\n";
  out += "4. Output only the required Python code line. Do not provide any explanation, preamble, or concluding "
         "remarks.\n";
  out += "\n";
  out += "Problem: f(x) =";
  return out;
}

std::string prompt_digest(std::string_view prompt) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : prompt) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static constexpr std::array<char, 16> kHex{'0', '1', '2', '3', '4', '5', '6', '7',
                                             '8', '9', 'a', 'b', 'c', 'd', 'e', 'f'};
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kHex[h & 0xf];
    h >>= 4;
  }
  return out;
}

}  // namespace ebg::llm

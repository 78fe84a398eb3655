#pragma once

// Symbolic expression language for generated benchmarks.
//
// Surface syntax is the single-line Python form the generator exchanges with
// the language model: variables `x[i]`, binary `+ - * / **`, unary minus and
// function calls `name(expr)`. Expressions are immutable; evaluation runs on a
// flattened postfix program built once at construction.

#include <cstddef>
#include <memory>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace ebg::expr {

enum class UnaryOp { neg, sqrt, sin, cos, tan, sinh, cosh, tanh, abs };
enum class BinaryOp { add, sub, mul, div, pow };

/// Name used for `op` in function-call syntax and in whitelists ("neg" for unary minus).
std::string_view name_of(UnaryOp op);

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Constant {
  double value;
};
struct Variable {
  std::size_t index;
};
struct Unary {
  UnaryOp op;
  NodePtr child;
};
struct Binary {
  BinaryOp op;
  NodePtr lhs;
  NodePtr rhs;
};

struct Node {
  std::variant<Constant, Variable, Unary, Binary> data;
};

// Node builders. Constants must be finite and non-negative; negative literals
// are spelled as neg(constant), which is also what the parser produces.
NodePtr constant(double value);
NodePtr variable(std::size_t index);
NodePtr unary(UnaryOp op, NodePtr child);
NodePtr binary(BinaryOp op, NodePtr lhs, NodePtr rhs);

bool structurally_equal(const Node& a, const Node& b);

/// Set of allowed unary function names. Binary operators are always allowed.
class FunctionWhitelist {
 public:
  /// sqrt, sin, sinh, abs, cos, cosh, tan, tanh, neg
  FunctionWhitelist();
  explicit FunctionWhitelist(std::set<std::string> allowed);

  bool allows(UnaryOp op) const;
  bool allows(std::string_view name) const;
  const std::set<std::string>& names() const { return allowed_; }

 private:
  std::set<std::string> allowed_;
};

enum class Invalidity {
  nan,
  infinite,
  sqrt_of_negative,
  div_by_zero,
  fractional_power_of_negative,
  zero_to_negative_power,
};

std::string_view to_string(Invalidity cause);
bool is_domain_error(Invalidity cause);

/// Outcome of evaluating an expression at one point: a finite real or the
/// reason the evaluation left the real numbers.
class EvalResult {
 public:
  static EvalResult valid(double value) { return EvalResult(value, Invalidity::nan, true); }
  static EvalResult invalid(Invalidity cause) { return EvalResult(0.0, cause, false); }

  bool ok() const { return ok_; }
  explicit operator bool() const { return ok_; }
  double value() const;
  Invalidity cause() const;

  friend bool operator==(const EvalResult&, const EvalResult&) = default;

 private:
  EvalResult(double v, Invalidity c, bool ok) : value_(v), cause_(c), ok_(ok) {}
  double value_;
  Invalidity cause_;
  bool ok_;
};

class Expression {
 public:
  /// Throws std::invalid_argument if a variable index is >= dimension.
  Expression(NodePtr root, std::size_t dimension);

  const Node& root() const { return *root_; }
  const NodePtr& root_ptr() const { return root_; }
  std::size_t dimension() const { return dimension_; }

  /// Length of `x` must equal dimension().
  EvalResult evaluate(std::span<const double> x) const;

  std::set<std::size_t> free_variables() const;
  bool uses_only(const FunctionWhitelist& whitelist) const;

  friend bool operator==(const Expression& a, const Expression& b);

 private:
  struct Instr {
    enum class Code : unsigned char { constant, variable, unary, binary } code;
    unsigned char op;
    std::size_t index;
    double value;
  };

  NodePtr root_;
  std::size_t dimension_;
  std::vector<Instr> program_;
  std::size_t max_stack_ = 0;
};

class ParseError : public std::runtime_error {
 public:
  enum class Kind { syntax, unknown_function, index_out_of_range };

  ParseError(Kind kind, std::size_t position, std::string symbol, const std::string& message);

  Kind kind() const { return kind_; }
  /// Byte offset into the input where the problem was detected.
  std::size_t position() const { return position_; }
  /// Offending function name or index text, when applicable.
  const std::string& symbol() const { return symbol_; }

 private:
  Kind kind_;
  std::size_t position_;
  std::string symbol_;
};

/// Precedence: `**` (right-assoc, Python-style: binds tighter than a unary
/// minus on its left) > unary minus > `* /` > `+ -`.
Expression parse(std::string_view text, std::size_t dimension,
                 const FunctionWhitelist& whitelist = FunctionWhitelist());

std::string render(const Expression& expr);
std::string render(const Node& node);

/// Shortest decimal text that parses back to exactly `value`.
std::string format_number(double value);

}  // namespace ebg::expr

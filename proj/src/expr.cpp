#include "ebg/expr.hpp"

#include <algorithm>
#include <array>
#include <cassert>
#include <cctype>
#include <charconv>
#include <cmath>
#include <system_error>
#include <utility>

namespace ebg::expr {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr std::array<std::pair<std::string_view, UnaryOp>, 8> kFunctions{{
    {"sqrt", UnaryOp::sqrt},
    {"sin", UnaryOp::sin},
    {"cos", UnaryOp::cos},
    {"tan", UnaryOp::tan},
    {"sinh", UnaryOp::sinh},
    {"cosh", UnaryOp::cosh},
    {"tanh", UnaryOp::tanh},
    {"abs", UnaryOp::abs},
}};

// Rendering precedence levels; higher binds tighter.
enum Level : int { kSum = 1, kTerm = 2, kUnary = 3, kPower = 4, kAtom = 5 };

int level_of(const Node& node) {
  return std::visit(overloaded{
                        [](const Constant&) { return int{kAtom}; },
                        [](const Variable&) { return int{kAtom}; },
                        [](const Unary& u) { return u.op == UnaryOp::neg ? int{kUnary} : int{kAtom}; },
                        [](const Binary& b) {
                          switch (b.op) {
                            case BinaryOp::add:
                            case BinaryOp::sub:
                              return int{kSum};
                            case BinaryOp::mul:
                            case BinaryOp::div:
                              return int{kTerm};
                            case BinaryOp::pow:
                              return int{kPower};
                          }
                          return int{kAtom};
                        },
                    },
                    node.data);
}

void render_into(const Node& node, std::string& out);

void render_operand(const Node& node, bool parenthesize, std::string& out) {
  if (parenthesize) out += '(';
  render_into(node, out);
  if (parenthesize) out += ')';
}

void render_into(const Node& node, std::string& out) {
  std::visit(overloaded{
                 [&](const Constant& c) { out += format_number(c.value); },
                 [&](const Variable& v) {
                   out += "x[";
                   out += std::to_string(v.index);
                   out += ']';
                 },
                 [&](const Unary& u) {
                   if (u.op == UnaryOp::neg) {
                     out += '-';
                     render_operand(*u.child, level_of(*u.child) < kUnary, out);
                   } else {
                     out += name_of(u.op);
                     out += '(';
                     render_into(*u.child, out);
                     out += ')';
                   }
                 },
                 [&](const Binary& b) {
                   const int lhs = level_of(*b.lhs);
                   const int rhs = level_of(*b.rhs);
                   switch (b.op) {
                     case BinaryOp::add:
                     case BinaryOp::sub:
                       render_operand(*b.lhs, lhs < kSum, out);
                       out += b.op == BinaryOp::add ? " + " : " - ";
                       render_operand(*b.rhs, rhs <= kSum, out);
                       break;
                     case BinaryOp::mul:
                     case BinaryOp::div:
                       render_operand(*b.lhs, lhs < kTerm, out);
                       out += b.op == BinaryOp::mul ? "*" : "/";
                       render_operand(*b.rhs, rhs <= kTerm, out);
                       break;
                     case BinaryOp::pow:
                       render_operand(*b.lhs, lhs < kAtom, out);
                       out += "**";
                       render_operand(*b.rhs, rhs < kUnary, out);
                       break;
                   }
                 },
             },
             node.data);
}

// ---------------------------------------------------------------------------
// Parser

class Parser {
 public:
  Parser(std::string_view text, std::size_t dimension, const FunctionWhitelist& whitelist)
      : text_(text), dimension_(dimension), whitelist_(whitelist) {}

  NodePtr parse_all() {
    skip_space();
    if (pos_ == text_.size()) fail_syntax("empty expression");
    NodePtr root = parse_sum();
    skip_space();
    if (pos_ != text_.size()) fail_syntax("unexpected '" + std::string(1, text_[pos_]) + "'");
    return root;
  }

 private:
  std::string_view text_;
  std::size_t dimension_;
  const FunctionWhitelist& whitelist_;
  std::size_t pos_ = 0;

  [[noreturn]] void fail_syntax(const std::string& what) const {
    throw ParseError(ParseError::Kind::syntax, pos_, "",
                     "syntax error at position " + std::to_string(pos_) + ": " + what);
  }

  void skip_space() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\r' ||
                                   text_[pos_] == '\n'))
      ++pos_;
  }

  bool accept(std::string_view token) {
    skip_space();
    if (text_.substr(pos_, token.size()) == token) {
      pos_ += token.size();
      return true;
    }
    return false;
  }

  void expect(std::string_view token) {
    if (!accept(token)) fail_syntax("expected '" + std::string(token) + "'");
  }

  NodePtr parse_sum() {
    NodePtr lhs = parse_term();
    for (;;) {
      if (accept("+")) {
        lhs = binary(BinaryOp::add, lhs, parse_term());
      } else if (accept("-")) {
        lhs = binary(BinaryOp::sub, lhs, parse_term());
      } else {
        return lhs;
      }
    }
  }

  NodePtr parse_term() {
    NodePtr lhs = parse_unary();
    for (;;) {
      skip_space();
      // '*' but not '**'
      if (text_.substr(pos_, 1) == "*" && text_.substr(pos_, 2) != "**") {
        ++pos_;
        lhs = binary(BinaryOp::mul, lhs, parse_unary());
      } else if (accept("/")) {
        lhs = binary(BinaryOp::div, lhs, parse_unary());
      } else {
        return lhs;
      }
    }
  }

  NodePtr parse_unary() {
    skip_space();
    const std::size_t at = pos_;
    if (accept("-")) {
      if (!whitelist_.allows(UnaryOp::neg))
        throw ParseError(ParseError::Kind::unknown_function, at, "neg",
                         "unary minus is not in the function whitelist");
      return unary(UnaryOp::neg, parse_unary());
    }
    if (accept("+")) return parse_unary();
    return parse_power();
  }

  NodePtr parse_power() {
    NodePtr base = parse_primary();
    if (accept("**")) return binary(BinaryOp::pow, base, parse_unary());
    return base;
  }

  static bool is_name_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
  static bool is_name_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
  }

  NodePtr parse_primary() {
    skip_space();
    if (pos_ == text_.size()) fail_syntax("unexpected end of input");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr inner = parse_sum();
      expect(")");
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (is_name_start(c)) return parse_name();
    fail_syntax("unexpected '" + std::string(1, c) + "'");
  }

  NodePtr parse_number() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t p = pos_ + 1;
      if (p < text_.size() && (text_[p] == '+' || text_[p] == '-')) ++p;
      if (p < text_.size() && std::isdigit(static_cast<unsigned char>(text_[p]))) {
        pos_ = p;
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      }
    }
    const std::string_view literal = text_.substr(start, pos_ - start);
    double value = 0.0;
    const auto [end, ec] = std::from_chars(literal.data(), literal.data() + literal.size(), value);
    if (ec != std::errc() || end != literal.data() + literal.size() || !std::isfinite(value)) {
      pos_ = start;
      fail_syntax("malformed number '" + std::string(literal) + "'");
    }
    return constant(value);
  }

  NodePtr parse_name() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && is_name_char(text_[pos_])) ++pos_;
    std::string_view name = text_.substr(start, pos_ - start);

    if (name == "x") return parse_index(start);

    for (std::string_view prefix : {"math.", "numpy.", "np."}) {
      if (name.starts_with(prefix)) {
        name.remove_prefix(prefix.size());
        break;
      }
    }
    UnaryOp op{};
    bool known = false;
    for (const auto& [fname, fop] : kFunctions) {
      if (fname == name) {
        op = fop;
        known = true;
      }
    }
    if (!known || !whitelist_.allows(op))
      throw ParseError(ParseError::Kind::unknown_function, start, std::string(name),
                       "unknown function \"" + std::string(name) + "\" at position " + std::to_string(start));
    expect("(");
    NodePtr arg = parse_sum();
    expect(")");
    return unary(op, arg);
  }

  NodePtr parse_index(std::size_t start) {
    expect("[");
    skip_space();
    const std::size_t digits_at = pos_;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (pos_ == digits_at) fail_syntax("expected a non-negative integer index");
    const std::string_view digits = text_.substr(digits_at, pos_ - digits_at);
    std::size_t index = 0;
    const auto [end, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), index);
    if (ec != std::errc() || index >= dimension_)
      throw ParseError(ParseError::Kind::index_out_of_range, start, std::string(digits),
                       "variable index x[" + std::string(digits) + "] out of range for dimension " +
                           std::to_string(dimension_));
    expect("]");
    return variable(index);
  }
};

void collect_variables(const Node& node, std::set<std::size_t>& out) {
  std::visit(overloaded{
                 [](const Constant&) {},
                 [&](const Variable& v) { out.insert(v.index); },
                 [&](const Unary& u) { collect_variables(*u.child, out); },
                 [&](const Binary& b) {
                   collect_variables(*b.lhs, out);
                   collect_variables(*b.rhs, out);
                 },
             },
             node.data);
}

bool whitelisted(const Node& node, const FunctionWhitelist& whitelist) {
  return std::visit(overloaded{
                        [](const Constant&) { return true; },
                        [](const Variable&) { return true; },
                        [&](const Unary& u) { return whitelist.allows(u.op) && whitelisted(*u.child, whitelist); },
                        [&](const Binary& b) {
                          return whitelisted(*b.lhs, whitelist) && whitelisted(*b.rhs, whitelist);
                        },
                    },
                    node.data);
}

inline bool is_integral(double exponent, double& rounded) {
  rounded = std::round(exponent);
  return std::abs(exponent - rounded) <= 1e-9;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string_view name_of(UnaryOp op) {
  if (op == UnaryOp::neg) return "neg";
  for (const auto& [name, fop] : kFunctions)
    if (fop == op) return name;
  return "?";
}

NodePtr constant(double value) {
  if (!std::isfinite(value) || value < 0.0 || std::signbit(value))
    throw std::invalid_argument("constants must be finite and non-negative; use neg() for negative values");
  return std::make_shared<const Node>(Node{Constant{value}});
}

NodePtr variable(std::size_t index) { return std::make_shared<const Node>(Node{Variable{index}}); }

NodePtr unary(UnaryOp op, NodePtr child) {
  if (!child) throw std::invalid_argument("null child");
  return std::make_shared<const Node>(Node{Unary{op, std::move(child)}});
}

NodePtr binary(BinaryOp op, NodePtr lhs, NodePtr rhs) {
  if (!lhs || !rhs) throw std::invalid_argument("null child");
  return std::make_shared<const Node>(Node{Binary{op, std::move(lhs), std::move(rhs)}});
}

bool structurally_equal(const Node& a, const Node& b) {
  if (a.data.index() != b.data.index()) return false;
  return std::visit(overloaded{
                        [&](const Constant& c) { return c.value == std::get<Constant>(b.data).value; },
                        [&](const Variable& v) { return v.index == std::get<Variable>(b.data).index; },
                        [&](const Unary& u) {
                          const auto& o = std::get<Unary>(b.data);
                          return u.op == o.op && structurally_equal(*u.child, *o.child);
                        },
                        [&](const Binary& x) {
                          const auto& o = std::get<Binary>(b.data);
                          return x.op == o.op && structurally_equal(*x.lhs, *o.lhs) &&
                                 structurally_equal(*x.rhs, *o.rhs);
                        },
                    },
                    a.data);
}

FunctionWhitelist::FunctionWhitelist()
    : allowed_{"sqrt", "sin", "sinh", "abs", "cos", "cosh", "tan", "tanh", "neg"} {}

FunctionWhitelist::FunctionWhitelist(std::set<std::string> allowed) : allowed_(std::move(allowed)) {
  if (allowed_.empty()) throw std::invalid_argument("function whitelist must not be empty");
  for (const auto& name : allowed_) {
    bool known = name == "neg";
    for (const auto& [fname, op] : kFunctions) known = known || fname == name;
    if (!known) throw std::invalid_argument("whitelist names unsupported function \"" + name + "\"");
  }
}

bool FunctionWhitelist::allows(UnaryOp op) const { return allows(name_of(op)); }

bool FunctionWhitelist::allows(std::string_view name) const {
  return allowed_.find(std::string(name)) != allowed_.end();
}

std::string_view to_string(Invalidity cause) {
  switch (cause) {
    case Invalidity::nan:
      return "nan";
    case Invalidity::infinite:
      return "infinite";
    case Invalidity::sqrt_of_negative:
      return "sqrt-of-negative";
    case Invalidity::div_by_zero:
      return "div-by-zero";
    case Invalidity::fractional_power_of_negative:
      return "fractional-power-of-negative";
    case Invalidity::zero_to_negative_power:
      return "zero-to-negative-power";
  }
  return "unknown";
}

bool is_domain_error(Invalidity cause) { return cause != Invalidity::nan && cause != Invalidity::infinite; }

double EvalResult::value() const {
  if (!ok_) throw std::logic_error("EvalResult::value() on invalid result");
  return value_;
}

Invalidity EvalResult::cause() const {
  if (ok_) throw std::logic_error("EvalResult::cause() on valid result");
  return cause_;
}

ParseError::ParseError(Kind kind, std::size_t position, std::string symbol, const std::string& message)
    : std::runtime_error(message), kind_(kind), position_(position), symbol_(std::move(symbol)) {}

// ---------------------------------------------------------------------------

Expression::Expression(NodePtr root, std::size_t dimension) : root_(std::move(root)), dimension_(dimension) {
  if (!root_) throw std::invalid_argument("expression root must not be null");

  std::size_t depth = 0;
  auto emit = [&](auto&& self, const Node& node) -> void {
    std::visit(overloaded{
                   [&](const Constant& c) {
                     program_.push_back({Instr::Code::constant, 0, 0, c.value});
                     max_stack_ = std::max(max_stack_, ++depth);
                   },
                   [&](const Variable& v) {
                     if (v.index >= dimension_)
                       throw std::invalid_argument("variable x[" + std::to_string(v.index) +
                                                   "] out of range for dimension " + std::to_string(dimension_));
                     program_.push_back({Instr::Code::variable, 0, v.index, 0.0});
                     max_stack_ = std::max(max_stack_, ++depth);
                   },
                   [&](const Unary& u) {
                     self(self, *u.child);
                     program_.push_back({Instr::Code::unary, static_cast<unsigned char>(u.op), 0, 0.0});
                   },
                   [&](const Binary& b) {
                     self(self, *b.lhs);
                     self(self, *b.rhs);
                     program_.push_back({Instr::Code::binary, static_cast<unsigned char>(b.op), 0, 0.0});
                     --depth;
                   },
               },
               node.data);
  };
  emit(emit, *root_);
}

EvalResult Expression::evaluate(std::span<const double> x) const {
  assert(x.size() == dimension_);
  constexpr std::size_t kInline = 64;
  std::array<double, kInline> inline_stack;
  std::vector<double> heap_stack;
  double* stack = inline_stack.data();
  if (max_stack_ > kInline) {
    heap_stack.resize(max_stack_);
    stack = heap_stack.data();
  }
  std::size_t top = 0;

  for (const Instr& in : program_) {
    double r = 0.0;
    switch (in.code) {
      case Instr::Code::constant:
        stack[top++] = in.value;
        continue;
      case Instr::Code::variable:
        stack[top++] = x[in.index];
        continue;
      case Instr::Code::unary: {
        const double a = stack[top - 1];
        switch (static_cast<UnaryOp>(in.op)) {
          case UnaryOp::neg:
            r = -a;
            break;
          case UnaryOp::sqrt:
            if (a < 0.0) return EvalResult::invalid(Invalidity::sqrt_of_negative);
            r = std::sqrt(a);
            break;
          case UnaryOp::sin:
            r = std::sin(a);
            break;
          case UnaryOp::cos:
            r = std::cos(a);
            break;
          case UnaryOp::tan:
            r = std::tan(a);
            break;
          case UnaryOp::sinh:
            r = std::sinh(a);
            break;
          case UnaryOp::cosh:
            r = std::cosh(a);
            break;
          case UnaryOp::tanh:
            r = std::tanh(a);
            break;
          case UnaryOp::abs:
            r = std::abs(a);
            break;
        }
        stack[top - 1] = r;
        break;
      }
      case Instr::Code::binary: {
        const double b = stack[--top];
        const double a = stack[top - 1];
        switch (static_cast<BinaryOp>(in.op)) {
          case BinaryOp::add:
            r = a + b;
            break;
          case BinaryOp::sub:
            r = a - b;
            break;
          case BinaryOp::mul:
            r = a * b;
            break;
          case BinaryOp::div:
            if (b == 0.0) return EvalResult::invalid(Invalidity::div_by_zero);
            r = a / b;
            break;
          case BinaryOp::pow: {
            double rounded = 0.0;
            if (is_integral(b, rounded)) {
              if (a == 0.0 && rounded < 0.0) return EvalResult::invalid(Invalidity::zero_to_negative_power);
              r = std::pow(a, a < 0.0 ? rounded : b);
            } else {
              if (a < 0.0) return EvalResult::invalid(Invalidity::fractional_power_of_negative);
              if (a == 0.0 && b < 0.0) return EvalResult::invalid(Invalidity::zero_to_negative_power);
              r = std::pow(a, b);
            }
            break;
          }
        }
        stack[top - 1] = r;
        break;
      }
    }
    if (std::isnan(r)) return EvalResult::invalid(Invalidity::nan);
    if (std::isinf(r)) return EvalResult::invalid(Invalidity::infinite);
  }
  return EvalResult::valid(stack[0]);
}

std::set<std::size_t> Expression::free_variables() const {
  std::set<std::size_t> out;
  collect_variables(*root_, out);
  return out;
}

bool Expression::uses_only(const FunctionWhitelist& whitelist) const { return whitelisted(*root_, whitelist); }

bool operator==(const Expression& a, const Expression& b) {
  return a.dimension_ == b.dimension_ && structurally_equal(*a.root_, *b.root_);
}

Expression parse(std::string_view text, std::size_t dimension, const FunctionWhitelist& whitelist) {
  Parser parser(text, dimension, whitelist);
  return Expression(parser.parse_all(), dimension);
}

std::string render(const Node& node) {
  std::string out;
  render_into(node, out);
  return out;
}

std::string render(const Expression& expr) { return render(expr.root()); }

std::string format_number(double value) {
  std::array<char, 64> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  assert(ec == std::errc());
  return std::string(buf.data(), end);
}

}  // namespace ebg::expr

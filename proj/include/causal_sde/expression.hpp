#pragma once

// Coefficient expression language.
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' unary)?          right-associative, binds tighter than unary '-'
//   primary := number | x<k> | constant | func '(' expr (',' expr)* ')' | '(' expr ')'
//
// Coordinates are x1..xp (1-based). Named constants are bound at parse time.
// Functions: sqrt exp log abs sin cos (one argument), pow min max (two).

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "causal_sde/errors.hpp"

namespace causal_sde {

class ParseError : public ConfigError {
 public:
  ParseError(std::size_t offset, std::string message, std::vector<std::string> expected = {})
      : ConfigError(format(offset, message, expected)), offset_(offset), expected_(std::move(expected)) {}

  std::size_t offset() const { return offset_; }
  const std::vector<std::string>& expected() const { return expected_; }

 private:
  static std::string format(std::size_t offset, const std::string& message,
                            const std::vector<std::string>& expected) {
    std::string out = "syntax error at offset " + std::to_string(offset) + ": " + message;
    if (!expected.empty()) {
      out += " (expected one of:";
      for (const auto& e : expected) out += " " + e;
      out += ")";
    }
    return out;
  }
  std::size_t offset_;
  std::vector<std::string> expected_;
};

struct ParseOptions {
  /// Number of coordinates; identifiers x1..x<dimension> are accepted.
  /// Zero accepts any x<k>.
  std::size_t dimension = 0;
  std::map<std::string, double, std::less<>> constants;
};

enum class Func : std::uint8_t { sqrt, exp, log, abs, sin, cos, pow, min, max };

class Expression {
 public:
  enum class Op : std::uint8_t { number, constant, variable, neg, add, sub, mul, div, pow, call };

  struct Node {
    Op op = Op::number;
    double value = 0.0;       // number / constant
    std::size_t index = 0;    // variable (0-based) or index into names_ for constants
    Func func = Func::sqrt;   // call
    int lhs = -1;             // first operand / first argument
    int rhs = -1;             // second operand / second argument
  };

  Expression() = default;

  double operator()(std::span<const double> x) const {
    if (root_ < 0) return 0.0;
    return eval(root_, x);
  }

  /// Fully parenthesized source that parses back to the same tree.
  std::string to_string() const {
    std::string out;
    if (root_ >= 0) print(root_, out);
    return out;
  }

  /// 0-based coordinate indices referenced by the expression.
  std::set<std::size_t> variables() const {
    std::set<std::size_t> out;
    for (const auto& n : nodes_)
      if (n.op == Op::variable) out.insert(n.index);
    return out;
  }

  bool is_constant() const { return variables().empty(); }

  friend bool operator==(const Expression& a, const Expression& b) {
    if (a.root_ < 0 || b.root_ < 0) return a.root_ == b.root_;
    return equal_subtree(a, a.root_, b, b.root_);
  }

 private:
  friend class ExpressionParser;

  static bool equal_subtree(const Expression& a, int ia, const Expression& b, int ib) {
    if (ia < 0 || ib < 0) return ia == ib;
    const Node& x = a.nodes_[static_cast<std::size_t>(ia)];
    const Node& y = b.nodes_[static_cast<std::size_t>(ib)];
    if (x.op != y.op) return false;
    switch (x.op) {
      case Op::number:
        return x.value == y.value;
      case Op::constant:
        return a.names_[x.index] == b.names_[y.index] && x.value == y.value;
      case Op::variable:
        return x.index == y.index;
      case Op::call:
        if (x.func != y.func) return false;
        break;
      default:
        break;
    }
    return equal_subtree(a, x.lhs, b, y.lhs) && equal_subtree(a, x.rhs, b, y.rhs);
  }

  double eval(int i, std::span<const double> x) const {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    switch (n.op) {
      case Op::number:
      case Op::constant:
        return n.value;
      case Op::variable:
        return x[n.index];
      case Op::neg:
        return -eval(n.lhs, x);
      case Op::add:
        return eval(n.lhs, x) + eval(n.rhs, x);
      case Op::sub:
        return eval(n.lhs, x) - eval(n.rhs, x);
      case Op::mul:
        return eval(n.lhs, x) * eval(n.rhs, x);
      case Op::div:
        return eval(n.lhs, x) / eval(n.rhs, x);
      case Op::pow:
        return std::pow(eval(n.lhs, x), eval(n.rhs, x));
      case Op::call: {
        const double a = eval(n.lhs, x);
        switch (n.func) {
          case Func::sqrt: return std::sqrt(a);
          case Func::exp: return std::exp(a);
          case Func::log: return std::log(a);
          case Func::abs: return std::abs(a);
          case Func::sin: return std::sin(a);
          case Func::cos: return std::cos(a);
          case Func::pow: return std::pow(a, eval(n.rhs, x));
          case Func::min: return std::min(a, eval(n.rhs, x));
          case Func::max: return std::max(a, eval(n.rhs, x));
        }
      }
    }
    return 0.0;
  }

  static std::string_view func_name(Func f) {
    switch (f) {
      case Func::sqrt: return "sqrt";
      case Func::exp: return "exp";
      case Func::log: return "log";
      case Func::abs: return "abs";
      case Func::sin: return "sin";
      case Func::cos: return "cos";
      case Func::pow: return "pow";
      case Func::min: return "min";
      case Func::max: return "max";
    }
    return "?";
  }

  void print(int i, std::string& out) const {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    auto binary = [&](const char* op) {
      out += '(';
      print(n.lhs, out);
      out += op;
      print(n.rhs, out);
      out += ')';
    };
    switch (n.op) {
      case Op::number: {
        char buf[64];
        auto [end, ec] = std::to_chars(buf, buf + sizeof buf, n.value);
        out.append(buf, end);
        break;
      }
      case Op::constant:
        out += names_[n.index];
        break;
      case Op::variable:
        out += 'x';
        out += std::to_string(n.index + 1);
        break;
      case Op::neg:
        out += "(-";
        print(n.lhs, out);
        out += ')';
        break;
      case Op::add: binary(" + "); break;
      case Op::sub: binary(" - "); break;
      case Op::mul: binary(" * "); break;
      case Op::div: binary(" / "); break;
      case Op::pow: binary(" ^ "); break;
      case Op::call:
        out += func_name(n.func);
        out += '(';
        print(n.lhs, out);
        if (n.rhs >= 0) {
          out += ", ";
          print(n.rhs, out);
        }
        out += ')';
        break;
    }
  }

  std::vector<Node> nodes_;
  std::vector<std::string> names_;
  int root_ = -1;
};

class ExpressionParser {
 public:
  ExpressionParser(std::string_view source, const ParseOptions& options)
      : src_(source), options_(options) {}

  Expression parse() {
    next();
    const int root = parse_expr();
    if (tok_.kind != Kind::end)
      throw ParseError(tok_.offset, "unexpected " + describe(tok_), {"operator", "end of input"});
    out_.root_ = root;
    return std::move(out_);
  }

 private:
  enum class Kind { end, number, ident, plus, minus, star, slash, caret, lparen, rparen, comma };
  struct Token {
    Kind kind = Kind::end;
    std::size_t offset = 0;
    std::string_view text;
    double value = 0.0;
  };

  static std::vector<std::string> operand_expected() {
    return {"number", "identifier", "'('", "'-'"};
  }

  static std::string describe(const Token& t) {
    if (t.kind == Kind::end) return "end of input";
    return "'" + std::string(t.text) + "'";
  }

  void next() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    tok_ = Token{};
    tok_.offset = pos_;
    if (pos_ >= src_.size()) return;
    const char c = src_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      lex_number();
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t end = pos_;
      while (end < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[end])) || src_[end] == '_'))
        ++end;
      tok_.kind = Kind::ident;
      tok_.text = src_.substr(pos_, end - pos_);
      pos_ = end;
      return;
    }
    Kind k;
    switch (c) {
      case '+': k = Kind::plus; break;
      case '-': k = Kind::minus; break;
      case '*': k = Kind::star; break;
      case '/': k = Kind::slash; break;
      case '^': k = Kind::caret; break;
      case '(': k = Kind::lparen; break;
      case ')': k = Kind::rparen; break;
      case ',': k = Kind::comma; break;
      default:
        throw ParseError(pos_, std::string("invalid character '") + c + "'");
    }
    tok_.kind = k;
    tok_.text = src_.substr(pos_, 1);
    ++pos_;
  }

  void lex_number() {
    std::size_t end = pos_;
    auto digits = [&] {
      const std::size_t start = end;
      while (end < src_.size() && std::isdigit(static_cast<unsigned char>(src_[end]))) ++end;
      return end - start;
    };
    std::size_t n = digits();
    if (end < src_.size() && src_[end] == '.') {
      ++end;
      n += digits();
    }
    if (n == 0) throw ParseError(pos_, "malformed number", {"digit"});
    if (end < src_.size() && (src_[end] == 'e' || src_[end] == 'E')) {
      std::size_t save = end;
      ++end;
      if (end < src_.size() && (src_[end] == '+' || src_[end] == '-')) ++end;
      if (digits() == 0) throw ParseError(save, "malformed exponent", {"digit"});
    }
    tok_.kind = Kind::number;
    tok_.text = src_.substr(pos_, end - pos_);
    auto [ptr, ec] = std::from_chars(src_.data() + pos_, src_.data() + end, tok_.value);
    if (ec != std::errc{} || ptr != src_.data() + end)
      throw ParseError(pos_, "number out of range");
    pos_ = end;
  }

  int add(Expression::Node n) {
    out_.nodes_.push_back(n);
    return static_cast<int>(out_.nodes_.size() - 1);
  }
  int binary(Expression::Op op, int lhs, int rhs) {
    Expression::Node n;
    n.op = op;
    n.lhs = lhs;
    n.rhs = rhs;
    return add(n);
  }

  int parse_expr() {
    int lhs = parse_term();
    while (tok_.kind == Kind::plus || tok_.kind == Kind::minus) {
      const auto op = tok_.kind == Kind::plus ? Expression::Op::add : Expression::Op::sub;
      next();
      lhs = binary(op, lhs, parse_term());
    }
    return lhs;
  }

  int parse_term() {
    int lhs = parse_unary();
    while (tok_.kind == Kind::star || tok_.kind == Kind::slash) {
      const auto op = tok_.kind == Kind::star ? Expression::Op::mul : Expression::Op::div;
      next();
      lhs = binary(op, lhs, parse_unary());
    }
    return lhs;
  }

  int parse_unary() {
    if (tok_.kind == Kind::minus) {
      next();
      Expression::Node n;
      n.op = Expression::Op::neg;
      n.lhs = parse_unary();
      return add(n);
    }
    return parse_power();
  }

  int parse_power() {
    const int base = parse_primary();
    if (tok_.kind == Kind::caret) {
      next();
      return binary(Expression::Op::pow, base, parse_unary());
    }
    return base;
  }

  static bool lookup_func(std::string_view name, Func& f, int& arity) {
    static const std::pair<std::string_view, std::pair<Func, int>> table[] = {
        {"sqrt", {Func::sqrt, 1}}, {"exp", {Func::exp, 1}}, {"log", {Func::log, 1}},
        {"abs", {Func::abs, 1}},   {"sin", {Func::sin, 1}}, {"cos", {Func::cos, 1}},
        {"pow", {Func::pow, 2}},   {"min", {Func::min, 2}}, {"max", {Func::max, 2}},
    };
    for (const auto& [n, fa] : table) {
      if (n == name) {
        f = fa.first;
        arity = fa.second;
        return true;
      }
    }
    return false;
  }

  int parse_primary() {
    const Token t = tok_;
    switch (t.kind) {
      case Kind::number: {
        next();
        Expression::Node n;
        n.op = Expression::Op::number;
        n.value = t.value;
        return add(n);
      }
      case Kind::lparen: {
        next();
        const int inner = parse_expr();
        expect(Kind::rparen, "')'");
        return inner;
      }
      case Kind::ident:
        return parse_identifier(t);
      default:
        throw ParseError(t.offset, "unexpected " + describe(t), operand_expected());
    }
  }

  int parse_identifier(const Token& t) {
    next();
    Func f;
    int arity = 0;
    if (lookup_func(t.text, f, arity)) {
      expect(Kind::lparen, "'('");
      std::vector<int> args{parse_expr()};
      while (tok_.kind == Kind::comma) {
        next();
        args.push_back(parse_expr());
      }
      expect(Kind::rparen, "')'");
      if (static_cast<int>(args.size()) != arity)
        throw ParseError(t.offset, "function '" + std::string(t.text) + "' expects " +
                                       std::to_string(arity) + " argument(s), got " +
                                       std::to_string(args.size()));
      Expression::Node n;
      n.op = Expression::Op::call;
      n.func = f;
      n.lhs = args[0];
      if (arity == 2) n.rhs = args[1];
      return add(n);
    }
    if (auto it = options_.constants.find(t.text); it != options_.constants.end()) {
      Expression::Node n;
      n.op = Expression::Op::constant;
      n.value = it->second;
      n.index = out_.names_.size();
      out_.names_.emplace_back(t.text);
      return add(n);
    }
    if (t.text.size() >= 2 && t.text[0] == 'x') {
      std::size_t k = 0;
      const auto digits = t.text.substr(1);
      auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), k);
      if (ec == std::errc{} && ptr == digits.data() + digits.size() && digits[0] != '0') {
        if (k >= 1 && (options_.dimension == 0 || k <= options_.dimension)) {
          Expression::Node n;
          n.op = Expression::Op::variable;
          n.index = k - 1;
          return add(n);
        }
        throw ParseError(t.offset, "coordinate '" + std::string(t.text) +
                                       "' out of range for dimension " +
                                       std::to_string(options_.dimension));
      }
    }
    throw ParseError(t.offset, "unknown identifier '" + std::string(t.text) + "'");
  }

  void expect(Kind k, const char* what) {
    if (tok_.kind != k) throw ParseError(tok_.offset, "unexpected " + describe(tok_), {what});
    next();
  }

  std::string_view src_;
  const ParseOptions& options_;
  std::size_t pos_ = 0;
  Token tok_;
  Expression out_;
};

inline Expression parse_expression(std::string_view source, const ParseOptions& options = {}) {
  return ExpressionParser(source, options).parse();
}

}  // namespace causal_sde

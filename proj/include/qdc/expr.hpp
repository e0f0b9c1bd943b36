#pragma once

// Smooth scalar expressions with exact reverse-mode gradients.
//
// Grammar (infix, usual precedence, '^' right-associative):
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := ('-' | '+') unary | power
//   power   := primary ('^' unary)?
//   primary := number | var | const | func '(' args ')' | '(' expr ')'
// Variables are x0, x1, ... (or y0, y1, ... which name the same slots; a
// bare x or y means index 0). Constants: pi. Functions: exp, log, sqrt, sin,
// cos, tanh, huber(t, delta), scad(t, a, delta). The parameters of huber and
// scad must be constant subexpressions.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qdc/error.hpp"

namespace qdc {

enum class Op : std::uint8_t {
  Const, Var, Add, Sub, Mul, Div, Neg, Pow, PowConst,
  Exp, Log, Sqrt, Sin, Cos, Tanh, Huber, Scad,
};

// Huber loss: t^2/2 inside [-delta, delta], linear with slope delta outside.
inline double huber_value(double t, double delta) {
  const double at = std::abs(t);
  return at <= delta ? 0.5 * t * t : 0.5 * delta * delta + delta * (at - delta);
}

inline double huber_slope(double t, double delta) {
  return std::abs(t) <= delta ? t : (t > 0 ? delta : -delta);
}

// SCAD penalty for t >= 0. Below delta/a it continues linearly through 0 to
// negative t, which keeps the node C^1 on the whole line; composites feed it
// nonnegative arguments only.
inline double scad_node_value(double t, double a, double delta) {
  const double knee = delta / a;
  if (t <= knee) return 2.0 * a / ((a + 1.0) * delta) * t;
  if (t < delta) {
    const double r = delta - t;
    return 1.0 - r * r / ((1.0 - 1.0 / (a * a)) * delta * delta);
  }
  return 1.0;
}

inline double scad_node_slope(double t, double a, double delta) {
  const double knee = delta / a;
  if (t <= knee) return 2.0 * a / ((a + 1.0) * delta);
  if (t < delta) return 2.0 * (delta - t) / ((1.0 - 1.0 / (a * a)) * delta * delta);
  return 0.0;
}

class Expr {
 public:
  Expr() : Expr(constant(0.0)) {}

  static Expr constant(double c) {
    Expr e(0);
    e.tape_.push_back({Op::Const, -1, -1, c, 0.0});
    e.text_ = format_constant(c);
    return e;
  }

  static Expr parse(std::string_view text);

  double value(std::span<const double> x) const {
    auto& v = scratch_values();
    forward(x, v);
    return v.back();
  }

  // Writes d/dx into grad (first arity() entries; the rest are zeroed) and
  // returns the value.
  double gradient(std::span<const double> x, std::span<double> grad) const {
    auto& v = scratch_values();
    forward(x, v);
    auto& adj = scratch_adjoints();
    adj.assign(tape_.size(), 0.0);
    adj.back() = 1.0;
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t idx = tape_.size(); idx-- > 0;) {
      const Node& nd = tape_[idx];
      const double g = adj[idx];
      if (g == 0.0) continue;
      const double l = nd.lhs >= 0 ? v[nd.lhs] : 0.0;
      const double r = nd.rhs >= 0 ? v[nd.rhs] : 0.0;
      switch (nd.op) {
        case Op::Const: break;
        case Op::Var: grad[static_cast<std::size_t>(nd.a)] += g; break;
        case Op::Add: adj[nd.lhs] += g; adj[nd.rhs] += g; break;
        case Op::Sub: adj[nd.lhs] += g; adj[nd.rhs] -= g; break;
        case Op::Mul: adj[nd.lhs] += g * r; adj[nd.rhs] += g * l; break;
        case Op::Div: adj[nd.lhs] += g / r; adj[nd.rhs] -= g * l / (r * r); break;
        case Op::Neg: adj[nd.lhs] -= g; break;
        case Op::Pow:
          adj[nd.lhs] += g * r * std::pow(l, r - 1.0);
          adj[nd.rhs] += g * v[idx] * std::log(l);
          break;
        case Op::PowConst:
          if (nd.a != 0.0) adj[nd.lhs] += g * nd.a * std::pow(l, nd.a - 1.0);
          break;
        case Op::Exp: adj[nd.lhs] += g * v[idx]; break;
        case Op::Log: adj[nd.lhs] += g / l; break;
        case Op::Sqrt: adj[nd.lhs] += g / (2.0 * v[idx]); break;
        case Op::Sin: adj[nd.lhs] += g * std::cos(l); break;
        case Op::Cos: adj[nd.lhs] -= g * std::sin(l); break;
        case Op::Tanh: adj[nd.lhs] += g * (1.0 - v[idx] * v[idx]); break;
        case Op::Huber: adj[nd.lhs] += g * huber_slope(l, nd.a); break;
        case Op::Scad: adj[nd.lhs] += g * scad_node_slope(l, nd.a, nd.b); break;
      }
    }
    return v.back();
  }

  // Denominator values of every division node at x, in tape order.
  std::vector<double> denominators(std::span<const double> x) const {
    auto& v = scratch_values();
    forward(x, v);
    std::vector<double> out;
    for (const Node& nd : tape_)
      if (nd.op == Op::Div) out.push_back(v[nd.rhs]);
    return out;
  }

  bool has_division() const {
    return std::any_of(tape_.begin(), tape_.end(), [](const Node& n) { return n.op == Op::Div; });
  }

  bool is_constant() const { return arity_ == 0; }

  // One past the largest variable index used.
  std::size_t arity() const { return arity_; }

  const std::string& source() const { return text_; }

 private:
  struct Node {
    Op op;
    int lhs;
    int rhs;
    double a;  // constant value, variable index, or first parameter
    double b;  // second parameter (scad)
  };

  explicit Expr(int) {}

  static std::vector<double>& scratch_values() {
    thread_local std::vector<double> buf;
    return buf;
  }
  static std::vector<double>& scratch_adjoints() {
    thread_local std::vector<double> buf;
    return buf;
  }

  static std::string format_constant(double c);

  void forward(std::span<const double> x, std::vector<double>& v) const {
    v.resize(tape_.size());
    for (std::size_t idx = 0; idx < tape_.size(); ++idx) {
      const Node& nd = tape_[idx];
      const double l = nd.lhs >= 0 ? v[nd.lhs] : 0.0;
      const double r = nd.rhs >= 0 ? v[nd.rhs] : 0.0;
      double out = 0.0;
      switch (nd.op) {
        case Op::Const: out = nd.a; break;
        case Op::Var: out = x[static_cast<std::size_t>(nd.a)]; break;
        case Op::Add: out = l + r; break;
        case Op::Sub: out = l - r; break;
        case Op::Mul: out = l * r; break;
        case Op::Div: out = l / r; break;
        case Op::Neg: out = -l; break;
        case Op::Pow: out = std::pow(l, r); break;
        case Op::PowConst: out = std::pow(l, nd.a); break;
        case Op::Exp: out = std::exp(l); break;
        case Op::Log: out = std::log(l); break;
        case Op::Sqrt: out = std::sqrt(l); break;
        case Op::Sin: out = std::sin(l); break;
        case Op::Cos: out = std::cos(l); break;
        case Op::Tanh: out = std::tanh(l); break;
        case Op::Huber: out = huber_value(l, nd.a); break;
        case Op::Scad: out = scad_node_value(l, nd.a, nd.b); break;
      }
      v[idx] = out;
    }
  }

  friend class ExprParser;

  std::vector<Node> tape_;
  std::string text_;
  std::size_t arity_ = 0;
};

class ExprParser {
 public:
  explicit ExprParser(std::string_view text) : src_(text) {}

  Expr run() {
    Expr e(0);
    out_ = &e;
    skip_space();
    if (pos_ >= src_.size()) fail("empty expression");
    parse_expr();
    skip_space();
    if (pos_ != src_.size()) fail("unexpected trailing input");
    std::string trimmed(src_);
    trimmed.erase(0, trimmed.find_first_not_of(" \t\n\r"));
    trimmed.erase(trimmed.find_last_not_of(" \t\n\r") + 1);
    e.text_ = trimmed;
    return e;
  }

 private:
  using Node = Expr::Node;

  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(ErrorCode::ParseError,
                msg + " at offset " + std::to_string(pos_) + " in \"" + std::string(src_) + "\"");
  }

  void skip_space() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_space();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  const Node& node(int i) const { return out_->tape_[static_cast<std::size_t>(i)]; }

  bool is_const(int i) const { return node(i).op == Op::Const; }

  int push(Node n) {
    out_->tape_.push_back(n);
    return static_cast<int>(out_->tape_.size()) - 1;
  }

  // Appends a node, folding it to a constant when every child is constant.
  int emit(Op op, int lhs, int rhs = -1, double a = 0.0, double b = 0.0) {
    const bool foldable = (lhs < 0 || is_const(lhs)) && (rhs < 0 || is_const(rhs));
    if (!foldable) return push({op, lhs, rhs, a, b});
    Expr tmp(0);
    if (lhs >= 0) tmp.tape_.push_back({Op::Const, -1, -1, node(lhs).a, 0.0});
    if (rhs >= 0) tmp.tape_.push_back({Op::Const, -1, -1, node(rhs).a, 0.0});
    tmp.tape_.push_back({op, lhs >= 0 ? 0 : -1, rhs >= 0 ? (lhs >= 0 ? 1 : 0) : -1, a, b});
    const double val = tmp.value(std::span<const double>());
    // Children are the last nodes on the tape; fold by trimming them.
    const int first = std::min(lhs < 0 ? rhs : lhs, rhs < 0 ? lhs : rhs);
    if (first == static_cast<int>(out_->tape_.size()) - (lhs >= 0 && rhs >= 0 ? 2 : 1))
      out_->tape_.resize(static_cast<std::size_t>(first));
    return push({Op::Const, -1, -1, val, 0.0});
  }

  int parse_expr() {
    int lhs = parse_term();
    for (;;) {
      if (accept('+')) {
        lhs = emit(Op::Add, lhs, parse_term());
      } else if (accept('-')) {
        lhs = emit(Op::Sub, lhs, parse_term());
      } else {
        return lhs;
      }
    }
  }

  int parse_term() {
    int lhs = parse_unary();
    for (;;) {
      if (accept('*')) {
        lhs = emit(Op::Mul, lhs, parse_unary());
      } else if (accept('/')) {
        lhs = emit(Op::Div, lhs, parse_unary());
      } else {
        return lhs;
      }
    }
  }

  int parse_unary() {
    if (accept('-')) return emit(Op::Neg, parse_unary());
    if (accept('+')) return parse_unary();
    return parse_power();
  }

  int parse_power() {
    const int base = parse_primary();
    if (!accept('^')) return base;
    const int exponent = parse_unary();
    if (is_const(exponent)) {
      const double c = node(exponent).a;
      out_->tape_.pop_back();
      return emit(Op::PowConst, base, -1, c);
    }
    return emit(Op::Pow, base, exponent);
  }

  double constant_arg(int idx, const char* fname) {
    if (!is_const(idx)) fail(std::string(fname) + " parameters must be constants");
    const double c = node(idx).a;
    out_->tape_.pop_back();
    return c;
  }

  int parse_primary() {
    skip_space();
    if (pos_ >= src_.size()) fail("unexpected end of input");
    const char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      const int inner = parse_expr();
      expect(')');
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
        ++pos_;
      const std::string_view name = src_.substr(start, pos_ - start);
      return parse_identifier(name);
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  int parse_number() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.'))
      ++pos_;
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t p = pos_ + 1;
      if (p < src_.size() && (src_[p] == '+' || src_[p] == '-')) ++p;
      if (p < src_.size() && std::isdigit(static_cast<unsigned char>(src_[p]))) {
        pos_ = p;
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
      }
    }
    const std::string token(src_.substr(start, pos_ - start));
    std::size_t used = 0;
    double val = 0.0;
    try {
      val = std::stod(token, &used);
    } catch (const std::exception&) {
      fail("malformed number '" + token + "'");
    }
    if (used != token.size()) fail("malformed number '" + token + "'");
    return push({Op::Const, -1, -1, val, 0.0});
  }

  int parse_identifier(std::string_view name) {
    if ((name[0] == 'x' || name[0] == 'y') &&
        std::all_of(name.begin() + 1, name.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) {
      const std::size_t index = name.size() == 1 ? 0 : std::stoul(std::string(name.substr(1)));
      out_->arity_ = std::max(out_->arity_, index + 1);
      return push({Op::Var, -1, -1, static_cast<double>(index), 0.0});
    }
    if (name == "pi") return push({Op::Const, -1, -1, std::numbers::pi, 0.0});

    struct Unary {
      std::string_view name;
      Op op;
    };
    static constexpr Unary unary[] = {
        {"exp", Op::Exp}, {"log", Op::Log}, {"sqrt", Op::Sqrt},
        {"sin", Op::Sin}, {"cos", Op::Cos}, {"tanh", Op::Tanh},
    };
    for (const auto& u : unary) {
      if (name != u.name) continue;
      expect('(');
      const int arg = parse_expr();
      expect(')');
      return emit(u.op, arg);
    }
    if (name == "huber") {
      expect('(');
      const int t = parse_expr();
      expect(',');
      const double delta = constant_arg(parse_expr(), "huber");
      expect(')');
      if (!(delta > 0.0)) fail("huber requires delta > 0");
      return emit(Op::Huber, t, -1, delta);
    }
    if (name == "scad") {
      expect('(');
      const int t = parse_expr();
      expect(',');
      const double a = constant_arg(parse_expr(), "scad");
      expect(',');
      const double delta = constant_arg(parse_expr(), "scad");
      expect(')');
      if (!(a > 2.0) || !(delta > 0.0)) fail("scad requires a > 2 and delta > 0");
      return emit(Op::Scad, t, -1, a, delta);
    }
    fail("unknown identifier '" + std::string(name) + "'");
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  Expr* out_ = nullptr;
};

inline Expr Expr::parse(std::string_view text) { return ExprParser(text).run(); }

inline std::string Expr::format_constant(double c) {
  char buf[64];
  const int len = std::snprintf(buf, sizeof buf, "%.17g", c);
  std::string s(buf, static_cast<std::size_t>(len));
  return c < 0 ? "(" + s + ")" : s;
}

}  // namespace qdc

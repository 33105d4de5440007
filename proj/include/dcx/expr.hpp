#pragma once

#include <array>
#include <cctype>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <utility>

#include "dcx/core.hpp"

namespace dcx {

/**
 * Closed-form scalar expression in up to three angular variables
 * theta_0, theta_1, theta_2 (spelled x/y/z, x1/x2/x3, or t for theta_0).
 * Immutable tree; evaluation is pure, so sampled fields are deterministic.
 *
 * Built either from combinators (constant, variable, operator+, sin, ...)
 * or by parse_expression.
 */
class Expression {
 public:
  /** Default: the zero expression. */
  Expression() : root_(make(Op::constant)) {}

  double eval(const std::array<double, 3>& theta) const {
    return eval(*root_, theta);
  }

  /** Highest variable axis referenced, -1 for constant expressions. */
  int max_axis() const { return max_axis(*root_); }

  static Expression constant(double c) {
    NodePtr n = make(Op::constant);
    n->value = c;
    return Expression(std::move(n));
  }
  static Expression variable(int axis) {
    if (axis < 0 || axis > 2)
      throw InvalidSpec("expression variables are limited to axes 0..2");
    NodePtr n = make(Op::variable);
    n->axis = axis;
    return Expression(std::move(n));
  }

  friend Expression operator+(Expression a, Expression b) {
    return combine(Op::add, std::move(a), std::move(b));
  }
  friend Expression operator-(Expression a, Expression b) {
    return combine(Op::sub, std::move(a), std::move(b));
  }
  friend Expression operator*(Expression a, Expression b) {
    return combine(Op::mul, std::move(a), std::move(b));
  }
  friend Expression operator/(Expression a, Expression b) {
    return combine(Op::div, std::move(a), std::move(b));
  }
  friend Expression operator-(Expression a) {
    return unary(Op::neg, std::move(a));
  }
  friend Expression sin(Expression a) { return unary(Op::sin, std::move(a)); }
  friend Expression cos(Expression a) { return unary(Op::cos, std::move(a)); }
  friend Expression exp(Expression a) { return unary(Op::exp, std::move(a)); }
  friend Expression pow(Expression a, Expression b) {
    return combine(Op::pow, std::move(a), std::move(b));
  }

 private:
  enum class Op { constant, variable, add, sub, mul, div, pow, neg, sin, cos, exp };

  struct Node {
    Op op = Op::constant;
    double value = 0.0;  // constant payload
    int axis = 0;        // variable payload
    std::shared_ptr<const Node> a, b;
  };
  using NodePtr = std::shared_ptr<Node>;

  explicit Expression(std::shared_ptr<const Node> root)
      : root_(std::move(root)) {}

  static NodePtr make(Op op) {
    NodePtr n = std::make_shared<Node>();
    n->op = op;
    return n;
  }
  static Expression combine(Op op, Expression a, Expression b) {
    NodePtr n = make(op);
    n->a = std::move(a.root_);
    n->b = std::move(b.root_);
    return Expression(std::move(n));
  }
  static Expression unary(Op op, Expression a) {
    NodePtr n = make(op);
    n->a = std::move(a.root_);
    return Expression(std::move(n));
  }

  static double eval(const Node& n, const std::array<double, 3>& t) {
    switch (n.op) {
      case Op::constant: return n.value;
      case Op::variable: return t[static_cast<std::size_t>(n.axis)];
      case Op::add: return eval(*n.a, t) + eval(*n.b, t);
      case Op::sub: return eval(*n.a, t) - eval(*n.b, t);
      case Op::mul: return eval(*n.a, t) * eval(*n.b, t);
      case Op::div: return eval(*n.a, t) / eval(*n.b, t);
      case Op::pow: return std::pow(eval(*n.a, t), eval(*n.b, t));
      case Op::neg: return -eval(*n.a, t);
      case Op::sin: return std::sin(eval(*n.a, t));
      case Op::cos: return std::cos(eval(*n.a, t));
      case Op::exp: return std::exp(eval(*n.a, t));
    }
    throw InvalidSpec("corrupt expression node");
  }

  static int max_axis(const Node& n) {
    if (n.op == Op::variable) return n.axis;
    int m = -1;
    if (n.a) m = std::max(m, max_axis(*n.a));
    if (n.b) m = std::max(m, max_axis(*n.b));
    return m;
  }

  std::shared_ptr<const Node> root_;

  friend class ExpressionParser;
};

/**
 * Recursive-descent parser over the grammar
 *
 *   expression := term (('+'|'-') term)*
 *   term       := unary (('*'|'/') unary)*
 *   unary      := '-' unary | power
 *   power      := primary ('^' unary)?           -- right associative,
 *                                                   minus binds outside: -x^2 = -(x^2)
 *   primary    := NUMBER | 'pi' | VARIABLE | FUNC '(' expression ')'
 *               | '(' expression ')'
 *
 * with VARIABLE in {x, y, z, x1, x2, x3, t} and FUNC in {sin, cos, exp}.
 * Errors carry the character position.
 */
class ExpressionParser {
 public:
  explicit ExpressionParser(std::string text) : text_(std::move(text)) {}

  Expression parse() {
    Expression e = expression();
    skip_space();
    if (pos_ != text_.size())
      fail("unexpected trailing input '" + text_.substr(pos_) + "'");
    return e;
  }

 private:
  Expression expression() {
    Expression e = term();
    for (;;) {
      skip_space();
      if (accept('+'))
        e = std::move(e) + term();
      else if (accept('-'))
        e = std::move(e) - term();
      else
        return e;
    }
  }

  Expression term() {
    Expression e = unary();
    for (;;) {
      skip_space();
      if (accept('*'))
        e = std::move(e) * unary();
      else if (accept('/'))
        e = std::move(e) / unary();
      else
        return e;
    }
  }

  Expression unary() {
    skip_space();
    if (accept('-')) return -unary();
    return power();
  }

  Expression power() {
    Expression base = primary();
    skip_space();
    if (accept('^')) return pow(std::move(base), unary());
    return base;
  }

  Expression primary() {
    skip_space();
    if (pos_ >= text_.size()) fail("unexpected end of expression");
    const char c = text_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.')
      return number();
    if (std::isalpha(static_cast<unsigned char>(c))) return identifier();
    if (accept('(')) {
      Expression e = expression();
      expect(')');
      return e;
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  Expression number() {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(text_.substr(pos_), &used);
    } catch (const std::exception&) {
      fail("malformed number");
    }
    pos_ += used;
    return Expression::constant(v);
  }

  Expression identifier() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) ||
            text_[pos_] == '_'))
      ++pos_;
    const std::string name = text_.substr(start, pos_ - start);
    if (name == "pi") return Expression::constant(std::numbers::pi);
    if (name == "x" || name == "x1" || name == "t")
      return Expression::variable(0);
    if (name == "y" || name == "x2") return Expression::variable(1);
    if (name == "z" || name == "x3") return Expression::variable(2);
    if (name == "sin" || name == "cos" || name == "exp") {
      skip_space();
      expect('(');
      Expression arg = expression();
      expect(')');
      if (name == "sin") return sin(std::move(arg));
      if (name == "cos") return cos(std::move(arg));
      return exp(std::move(arg));
    }
    pos_ = start;
    fail("unknown identifier '" + name + "'");
  }

  void skip_space() {
    while (pos_ < text_.size() &&
           std::isspace(static_cast<unsigned char>(text_[pos_])))
      ++pos_;
  }
  bool accept(char c) {
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(char c) {
    skip_space();
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("expression: " + what + " at position " +
                     std::to_string(pos_));
  }

  std::string text_;
  std::size_t pos_ = 0;
};

inline Expression parse_expression(const std::string& text) {
  return ExpressionParser(text).parse();
}

}  // namespace dcx

#pragma once

// Immutable scalar expression trees over named real variables.
//
// Grammar accepted by parse_expression (whitespace is insignificant):
//
//   expr   := term (('+' | '-') term)*
//   term   := factor (('*' | '/') factor)*
//   factor := '-' factor | base ('^' INT)?
//   base   := NUMBER | VAR | FUNC '(' expr ')' | '(' expr ')'
//   FUNC   := sin | cos | exp | tanh | sqrt | abs | sign
//
// Unary minus binds looser than '^', so "-x^2" is -(x^2). Exponents are
// nonnegative integer literals only. Multiplication is always explicit.

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bcsynth {

enum class Op { Const, Var, Neg, Add, Sub, Mul, Div, Pow, Func };

// sign(x) is -1, 0 or 1; it appears as the derivative of abs.
enum class Fn { Sin, Cos, Exp, Tanh, Sqrt, Abs, Sign };

std::string_view fn_name(Fn f);
std::optional<Fn> fn_from_name(std::string_view name);
bool is_transcendental(Fn f);

struct ExprNode;

class Expr {
 public:
  Expr();  // constant 0

  static Expr constant(double v);
  static Expr variable(std::string name);
  static Expr neg(Expr a);
  static Expr add(Expr a, Expr b);
  static Expr sub(Expr a, Expr b);
  static Expr mul(Expr a, Expr b);
  static Expr div(Expr a, Expr b);
  static Expr pow(Expr base, int exponent);
  static Expr call(Fn f, Expr arg);

  Op op() const;
  double value() const;               // Const
  const std::string& name() const;    // Var
  Fn fn() const;                      // Func
  int exponent() const;               // Pow
  const Expr& lhs() const;            // Neg/Pow/Func operand, or binary left
  const Expr& rhs() const;            // binary right

  bool is_constant() const { return op() == Op::Const; }
  bool is_constant(double v) const { return is_constant() && value() == v; }

  std::string str() const;

  // Structural equality.
  friend bool operator==(const Expr& a, const Expr& b);

 private:
  explicit Expr(std::shared_ptr<const ExprNode> n) : node_(std::move(n)) {}
  static Expr binary(Op op, Expr a, Expr b);
  const ExprNode& node() const;

  std::shared_ptr<const ExprNode> node_;  // null means constant 0
};

struct ExprNode {
  Op op = Op::Const;
  double value = 0.0;
  std::string name;
  Fn fn = Fn::Sin;
  int exponent = 0;
  Expr a;
  Expr b;
};

Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);

Expr parse_expression(std::string_view text, std::span<const std::string> allowed_vars);

// Shortest decimal text that reads back to the same double.
std::string format_number(double v);

using Point = std::map<std::string, double>;

double evaluate(const Expr& e, const Point& point);

// Flattened evaluator over a fixed variable ordering; used in sampling loops.
class CompiledExpr {
 public:
  CompiledExpr() = default;
  CompiledExpr(const Expr& e, std::span<const std::string> vars);

  double operator()(std::span<const double> x) const;

 private:
  struct Instr {
    Op op;
    Fn fn;
    int arg;  // variable index, or exponent for Pow
    double value;
  };
  std::vector<Instr> code_;
  mutable std::vector<double> stack_;
};

// Constant folding on exact identities only: 0+e, e*1, e*0, e^1, e^0,
// const op const, double negation. Never reassociates.
Expr simplify(const Expr& e);

// d/dvar e. abs is differentiated as sign(u)*u' (sign(0) = 0).
Expr differentiate(const Expr& e, const std::string& var);

// Simultaneous substitution, followed by simplify.
Expr substitute(const Expr& e, const std::map<std::string, Expr>& bindings);

struct PolynomialInfo {
  bool is_polynomial = false;
  int degree = 0;  // meaningful only when is_polynomial

  friend bool operator==(const PolynomialInfo&, const PolynomialInfo&) = default;
};

PolynomialInfo classify(const Expr& e);

std::set<std::string> free_variables(const Expr& e);
bool contains_fn(const Expr& e, Fn f);
bool contains_transcendental(const Expr& e);
bool contains_division(const Expr& e);

// Term structure ignoring coefficients: the set of monomials (with function
// atoms keyed by their own skeleton) of the expanded expression.
std::set<std::string> term_skeleton(const Expr& e);

// Expanded polynomial with coefficients, for polynomial inputs.
// Keys are exponent vectors over `vars`.
using PolynomialTerms = std::map<std::vector<int>, double>;
std::optional<PolynomialTerms> expand_polynomial(const Expr& e, std::span<const std::string> vars);

}  // namespace bcsynth

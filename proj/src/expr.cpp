#include "bcsynth/expr.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <functional>
#include <charconv>
#include <cmath>
#include <utility>

#include "bcsynth/error.hpp"

namespace bcsynth {

namespace {

constexpr std::array<std::pair<std::string_view, Fn>, 7> kFunctions{{
    {"sin", Fn::Sin},
    {"cos", Fn::Cos},
    {"exp", Fn::Exp},
    {"tanh", Fn::Tanh},
    {"sqrt", Fn::Sqrt},
    {"abs", Fn::Abs},
    {"sign", Fn::Sign},
}};

double sign_of(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

double apply_fn(Fn f, double v) {
  switch (f) {
    case Fn::Sin: return std::sin(v);
    case Fn::Cos: return std::cos(v);
    case Fn::Exp: return std::exp(v);
    case Fn::Tanh: return std::tanh(v);
    case Fn::Sqrt:
      if (v < 0) throw EvaluationError("sqrt of negative value " + format_number(v));
      return std::sqrt(v);
    case Fn::Abs: return std::fabs(v);
    case Fn::Sign: return sign_of(v);
  }
  return 0.0;
}

double checked_div(double a, double b) {
  if (b == 0.0) throw EvaluationError("division by zero");
  return a / b;
}

double int_pow(double base, int n) {
  double r = 1.0;
  for (int i = 0; i < n; ++i) r *= base;
  return r;
}

double finite_or_throw(double v) {
  if (!std::isfinite(v)) throw EvaluationError("non-finite result");
  return v;
}

}  // namespace

std::string_view fn_name(Fn f) {
  for (const auto& [name, fn] : kFunctions)
    if (fn == f) return name;
  return "?";
}

std::optional<Fn> fn_from_name(std::string_view name) {
  for (const auto& [n, fn] : kFunctions)
    if (n == name) return fn;
  return std::nullopt;
}

bool is_transcendental(Fn f) {
  return f == Fn::Sin || f == Fn::Cos || f == Fn::Exp || f == Fn::Tanh;
}

// ---------------------------------------------------------------------------
// Construction and access

Expr::Expr() = default;

const ExprNode& Expr::node() const {
  static const ExprNode zero{};
  return node_ ? *node_ : zero;
}

Op Expr::op() const { return node().op; }
double Expr::value() const { return node().value; }
const std::string& Expr::name() const { return node().name; }
Fn Expr::fn() const { return node().fn; }
int Expr::exponent() const { return node().exponent; }
const Expr& Expr::lhs() const { return node().a; }
const Expr& Expr::rhs() const { return node().b; }

Expr Expr::constant(double v) {
  if (!std::isfinite(v)) throw EvaluationError("non-finite constant");
  auto n = std::make_shared<ExprNode>();
  n->op = Op::Const;
  n->value = v == 0.0 ? 0.0 : v;  // no negative zero
  return Expr(std::move(n));
}

Expr Expr::variable(std::string name) {
  auto n = std::make_shared<ExprNode>();
  n->op = Op::Var;
  n->name = std::move(name);
  return Expr(std::move(n));
}

Expr Expr::neg(Expr a) {
  if (a.is_constant()) return constant(-a.value());
  auto n = std::make_shared<ExprNode>();
  n->op = Op::Neg;
  n->a = std::move(a);
  return Expr(std::move(n));
}

Expr Expr::binary(Op op, Expr a, Expr b) {
  auto n = std::make_shared<ExprNode>();
  n->op = op;
  n->a = std::move(a);
  n->b = std::move(b);
  return Expr(std::move(n));
}

Expr Expr::add(Expr a, Expr b) { return binary(Op::Add, std::move(a), std::move(b)); }
Expr Expr::sub(Expr a, Expr b) { return binary(Op::Sub, std::move(a), std::move(b)); }
Expr Expr::mul(Expr a, Expr b) { return binary(Op::Mul, std::move(a), std::move(b)); }
Expr Expr::div(Expr a, Expr b) { return binary(Op::Div, std::move(a), std::move(b)); }

Expr Expr::pow(Expr base, int exponent) {
  if (exponent < 0) throw Error("negative exponent in pow");
  auto n = std::make_shared<ExprNode>();
  n->op = Op::Pow;
  n->exponent = exponent;
  n->a = std::move(base);
  return Expr(std::move(n));
}

Expr Expr::call(Fn f, Expr arg) {
  auto n = std::make_shared<ExprNode>();
  n->op = Op::Func;
  n->fn = f;
  n->a = std::move(arg);
  return Expr(std::move(n));
}

bool operator==(const Expr& a, const Expr& b) {
  if (a.node_ == b.node_) return true;
  if (a.op() != b.op()) return false;
  switch (a.op()) {
    case Op::Const: return a.value() == b.value();
    case Op::Var: return a.name() == b.name();
    case Op::Neg: return a.lhs() == b.lhs();
    case Op::Pow: return a.exponent() == b.exponent() && a.lhs() == b.lhs();
    case Op::Func: return a.fn() == b.fn() && a.lhs() == b.lhs();
    default: return a.lhs() == b.lhs() && a.rhs() == b.rhs();
  }
}

Expr operator+(const Expr& a, const Expr& b) { return Expr::add(a, b); }
Expr operator-(const Expr& a, const Expr& b) { return Expr::sub(a, b); }
Expr operator*(const Expr& a, const Expr& b) { return Expr::mul(a, b); }
Expr operator/(const Expr& a, const Expr& b) { return Expr::div(a, b); }
Expr operator-(const Expr& a) { return Expr::neg(a); }

// ---------------------------------------------------------------------------
// Printing

std::string format_number(double v) {
  std::array<char, 64> buf{};
  if (v == 0.0) v = 0.0;  // drop the sign of -0
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

namespace {

bool is_additive(const Expr& e) { return e.op() == Op::Add || e.op() == Op::Sub; }
bool is_multiplicative(const Expr& e) { return e.op() == Op::Mul || e.op() == Op::Div; }
bool is_negative_constant(const Expr& e) { return e.is_constant() && e.value() < 0; }

void print(const Expr& e, std::string& out);

void print_wrapped(const Expr& e, bool wrap, std::string& out) {
  if (wrap) out += '(';
  print(e, out);
  if (wrap) out += ')';
}

void print(const Expr& e, std::string& out) {
  switch (e.op()) {
    case Op::Const:
      out += format_number(e.value());
      return;
    case Op::Var:
      out += e.name();
      return;
    case Op::Neg: {
      const Expr& a = e.lhs();
      out += '-';
      print_wrapped(a, is_additive(a) || is_multiplicative(a) || a.op() == Op::Neg, out);
      return;
    }
    case Op::Add:
    case Op::Sub: {
      print(e.lhs(), out);
      out += e.op() == Op::Add ? " + " : " - ";
      const Expr& b = e.rhs();
      print_wrapped(b, is_additive(b) || b.op() == Op::Neg || is_negative_constant(b), out);
      return;
    }
    case Op::Mul:
    case Op::Div: {
      print_wrapped(e.lhs(), is_additive(e.lhs()), out);
      out += e.op() == Op::Mul ? '*' : '/';
      const Expr& b = e.rhs();
      print_wrapped(b, is_additive(b) || is_multiplicative(b) || b.op() == Op::Neg ||
                           is_negative_constant(b),
                    out);
      return;
    }
    case Op::Pow: {
      const Expr& a = e.lhs();
      bool atom = a.op() == Op::Var || a.op() == Op::Func || (a.is_constant() && a.value() >= 0);
      print_wrapped(a, !atom, out);
      out += '^';
      out += std::to_string(e.exponent());
      return;
    }
    case Op::Func:
      out += fn_name(e.fn());
      print_wrapped(e.lhs(), true, out);
      return;
  }
}

}  // namespace

std::string Expr::str() const {
  std::string out;
  print(*this, out);
  return out;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

class Parser {
 public:
  Parser(std::string_view text, std::span<const std::string> vars) : text_(text), vars_(vars) {}

  Expr parse() {
    skip_ws();
    if (pos_ >= text_.size()) throw ParseError("empty expression", pos_);
    Expr e = expr();
    skip_ws();
    if (pos_ < text_.size()) fail(std::string("unexpected '") + text_[pos_] + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, pos_); }

  void skip_ws() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t' ||
                                   text_[pos_] == '\n' || text_[pos_] == '\r'))
      ++pos_;
  }

  bool peek(char c) {
    skip_ws();
    return pos_ < text_.size() && text_[pos_] == c;
  }

  bool accept(char c) {
    if (!peek(c)) return false;
    ++pos_;
    return true;
  }

  Expr expr() {
    Expr e = term();
    for (;;) {
      if (accept('+')) e = Expr::add(e, term());
      else if (accept('-')) e = Expr::sub(e, term());
      else return e;
    }
  }

  Expr term() {
    Expr e = factor();
    for (;;) {
      if (accept('*')) e = Expr::mul(e, factor());
      else if (accept('/')) e = Expr::div(e, factor());
      else return e;
    }
  }

  Expr factor() {
    if (accept('-')) return Expr::neg(factor());
    Expr b = base();
    if (accept('^')) {
      skip_ws();
      std::size_t start = pos_;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      if (start == pos_) fail("expected nonnegative integer exponent");
      if (pos_ < text_.size() && (text_[pos_] == '.' || text_[pos_] == 'e' || text_[pos_] == 'E'))
        fail("exponent must be an integer");
      int n = 0;
      auto [p, ec] = std::from_chars(text_.data() + start, text_.data() + pos_, n);
      if (ec != std::errc{}) {
        pos_ = start;
        fail("exponent out of range");
      }
      return Expr::pow(std::move(b), n);
    }
    return b;
  }

  Expr base() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      Expr e = expr();
      if (!accept(')')) fail("expected ')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
        ++pos_;
      std::string ident(text_.substr(start, pos_ - start));
      if (auto f = fn_from_name(ident)) {
        if (!accept('(')) fail("expected '(' after " + ident);
        Expr arg = expr();
        if (!accept(')')) fail("expected ')'");
        return Expr::call(*f, std::move(arg));
      }
      if (std::find(vars_.begin(), vars_.end(), ident) == vars_.end())
        throw UnknownVariableError(ident);
      return Expr::variable(std::move(ident));
    }
    fail(std::string("unexpected '") + c + "'");
  }

  Expr number() {
    std::size_t start = pos_;
    auto digits = [&] {
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    };
    digits();
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      digits();
    }
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t save = pos_++;
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
      std::size_t exp_start = pos_;
      digits();
      if (exp_start == pos_) pos_ = save;  // "2e" is not a number
    }
    double v = 0;
    auto [p, ec] = std::from_chars(text_.data() + start, text_.data() + pos_, v);
    if (ec != std::errc{} || p != text_.data() + pos_) {
      pos_ = start;
      fail("malformed number");
    }
    return Expr::constant(v);
  }

  std::string_view text_;
  std::span<const std::string> vars_;
  std::size_t pos_ = 0;
};

}  // namespace

Expr parse_expression(std::string_view text, std::span<const std::string> allowed_vars) {
  return Parser(text, allowed_vars).parse();
}

// ---------------------------------------------------------------------------
// Evaluation

double evaluate(const Expr& e, const Point& point) {
  std::function<double(const Expr&)> eval = [&](const Expr& x) -> double {
    switch (x.op()) {
      case Op::Const: return x.value();
      case Op::Var: {
        auto it = point.find(x.name());
        if (it == point.end()) throw EvaluationError("unbound variable '" + x.name() + "'");
        return it->second;
      }
      case Op::Neg: return -eval(x.lhs());
      case Op::Add: return eval(x.lhs()) + eval(x.rhs());
      case Op::Sub: return eval(x.lhs()) - eval(x.rhs());
      case Op::Mul: return eval(x.lhs()) * eval(x.rhs());
      case Op::Div: return checked_div(eval(x.lhs()), eval(x.rhs()));
      case Op::Pow: return int_pow(eval(x.lhs()), x.exponent());
      case Op::Func: return apply_fn(x.fn(), eval(x.lhs()));
    }
    return 0.0;
  };
  return finite_or_throw(eval(e));
}

CompiledExpr::CompiledExpr(const Expr& e, std::span<const std::string> vars) {
  std::function<void(const Expr&)> emit = [&](const Expr& x) {
    switch (x.op()) {
      case Op::Const:
        code_.push_back({Op::Const, Fn::Sin, 0, x.value()});
        return;
      case Op::Var: {
        auto it = std::find(vars.begin(), vars.end(), x.name());
        if (it == vars.end()) throw EvaluationError("unbound variable '" + x.name() + "'");
        code_.push_back({Op::Var, Fn::Sin, static_cast<int>(it - vars.begin()), 0.0});
        return;
      }
      case Op::Neg:
        emit(x.lhs());
        code_.push_back({Op::Neg, Fn::Sin, 0, 0.0});
        return;
      case Op::Pow:
        emit(x.lhs());
        code_.push_back({Op::Pow, Fn::Sin, x.exponent(), 0.0});
        return;
      case Op::Func:
        emit(x.lhs());
        code_.push_back({Op::Func, x.fn(), 0, 0.0});
        return;
      default:
        emit(x.lhs());
        emit(x.rhs());
        code_.push_back({x.op(), Fn::Sin, 0, 0.0});
        return;
    }
  };
  emit(e);
  stack_.reserve(code_.size());
}

double CompiledExpr::operator()(std::span<const double> x) const {
  stack_.clear();
  for (const Instr& in : code_) {
    switch (in.op) {
      case Op::Const: stack_.push_back(in.value); break;
      case Op::Var: stack_.push_back(x[static_cast<std::size_t>(in.arg)]); break;
      case Op::Neg: stack_.back() = -stack_.back(); break;
      case Op::Pow: stack_.back() = int_pow(stack_.back(), in.arg); break;
      case Op::Func: stack_.back() = apply_fn(in.fn, stack_.back()); break;
      default: {
        double b = stack_.back();
        stack_.pop_back();
        double& a = stack_.back();
        switch (in.op) {
          case Op::Add: a += b; break;
          case Op::Sub: a -= b; break;
          case Op::Mul: a *= b; break;
          case Op::Div: a = checked_div(a, b); break;
          default: break;
        }
      }
    }
  }
  return finite_or_throw(stack_.empty() ? 0.0 : stack_.back());
}

// ---------------------------------------------------------------------------
// Rewriting

namespace {

Expr fold(Op op, const Expr& a, const Expr& b) {
  switch (op) {
    case Op::Add:
      if (a.is_constant(0)) return b;
      if (b.is_constant(0)) return a;
      if (a.is_constant() && b.is_constant()) return Expr::constant(a.value() + b.value());
      return Expr::add(a, b);
    case Op::Sub:
      if (b.is_constant(0)) return a;
      if (a.is_constant(0)) return b.op() == Op::Neg ? b.lhs() : Expr::neg(b);
      if (a.is_constant() && b.is_constant()) return Expr::constant(a.value() - b.value());
      return Expr::sub(a, b);
    case Op::Mul:
      if (a.is_constant(0) || b.is_constant(0)) return Expr::constant(0);
      if (a.is_constant(1)) return b;
      if (b.is_constant(1)) return a;
      if (a.is_constant(-1)) return b.op() == Op::Neg ? b.lhs() : Expr::neg(b);
      if (b.is_constant(-1)) return a.op() == Op::Neg ? a.lhs() : Expr::neg(a);
      if (a.is_constant() && b.is_constant()) return Expr::constant(a.value() * b.value());
      return Expr::mul(a, b);
    case Op::Div:
      if (b.is_constant(1)) return a;
      if (a.is_constant(0) && !b.is_constant(0)) return Expr::constant(0);
      if (a.is_constant() && b.is_constant() && b.value() != 0)
        return Expr::constant(a.value() / b.value());
      return Expr::div(a, b);
    default:
      break;
  }
  return Expr::add(a, b);
}

Expr fold_neg(const Expr& a) {
  if (a.op() == Op::Neg) return a.lhs();
  return Expr::neg(a);
}

Expr fold_pow(const Expr& a, int n) {
  if (n == 0) return Expr::constant(1);
  if (n == 1) return a;
  if (a.is_constant()) return Expr::constant(int_pow(a.value(), n));
  return Expr::pow(a, n);
}

Expr fold_call(Fn f, const Expr& a) {
  if (a.is_constant()) {
    double v = a.value();
    switch (f) {
      case Fn::Abs: return Expr::constant(std::fabs(v));
      case Fn::Sign: return Expr::constant(sign_of(v));
      case Fn::Sin:
      case Fn::Tanh:
        if (v == 0) return Expr::constant(0);
        break;
      case Fn::Cos:
      case Fn::Exp:
        if (v == 0) return Expr::constant(1);
        break;
      case Fn::Sqrt:
        if (v == 0 || v == 1) return Expr::constant(v);
        break;
    }
  }
  return Expr::call(f, a);
}

// Rebuilds a node from (possibly) new children, folding only when a child
// changed so untouched subtrees keep their exact shape.
Expr rebuild(const Expr& e, const Expr& a, const Expr& b, bool changed) {
  if (!changed) return e;
  switch (e.op()) {
    case Op::Neg: return fold_neg(a);
    case Op::Pow: return fold_pow(a, e.exponent());
    case Op::Func: return fold_call(e.fn(), a);
    default: return fold(e.op(), a, b);
  }
}


}  // namespace

Expr simplify(const Expr& e) {
  switch (e.op()) {
    case Op::Const:
    case Op::Var:
      return e;
    case Op::Neg: return fold_neg(simplify(e.lhs()));
    case Op::Pow: return fold_pow(simplify(e.lhs()), e.exponent());
    case Op::Func: return fold_call(e.fn(), simplify(e.lhs()));
    default: return fold(e.op(), simplify(e.lhs()), simplify(e.rhs()));
  }
}

Expr differentiate(const Expr& e, const std::string& var) {
  const Expr zero = Expr::constant(0);
  switch (e.op()) {
    case Op::Const: return zero;
    case Op::Var: return Expr::constant(e.name() == var ? 1 : 0);
    case Op::Neg: return fold_neg(differentiate(e.lhs(), var));
    case Op::Add:
    case Op::Sub:
      return fold(e.op(), differentiate(e.lhs(), var), differentiate(e.rhs(), var));
    case Op::Mul: {
      const Expr& a = e.lhs();
      const Expr& b = e.rhs();
      return fold(Op::Add, fold(Op::Mul, differentiate(a, var), b),
                  fold(Op::Mul, a, differentiate(b, var)));
    }
    case Op::Div: {
      const Expr& a = e.lhs();
      const Expr& b = e.rhs();
      Expr num = fold(Op::Sub, fold(Op::Mul, differentiate(a, var), b),
                      fold(Op::Mul, a, differentiate(b, var)));
      return fold(Op::Div, num, fold_pow(b, 2));
    }
    case Op::Pow: {
      int n = e.exponent();
      if (n == 0) return zero;
      const Expr& a = e.lhs();
      Expr outer = fold(Op::Mul, Expr::constant(n), fold_pow(a, n - 1));
      return fold(Op::Mul, outer, differentiate(a, var));
    }
    case Op::Func: {
      const Expr& a = e.lhs();
      Expr da = differentiate(a, var);
      if (da.is_constant(0)) return zero;
      Expr outer;
      switch (e.fn()) {
        case Fn::Sin: outer = fold_call(Fn::Cos, a); break;
        case Fn::Cos: outer = fold_neg(fold_call(Fn::Sin, a)); break;
        case Fn::Exp: outer = e; break;
        case Fn::Tanh:
          outer = fold(Op::Sub, Expr::constant(1), fold_pow(e, 2));
          break;
        case Fn::Sqrt:
          return fold(Op::Div, da, fold(Op::Mul, Expr::constant(2), e));
        case Fn::Abs: outer = fold_call(Fn::Sign, a); break;
        case Fn::Sign: return zero;
      }
      return fold(Op::Mul, outer, da);
    }
  }
  return zero;
}

Expr substitute(const Expr& e, const std::map<std::string, Expr>& bindings) {
  if (bindings.empty()) return e;
  switch (e.op()) {
    case Op::Const: return e;
    case Op::Var: {
      auto it = bindings.find(e.name());
      return it == bindings.end() ? e : it->second;
    }
    case Op::Neg:
    case Op::Pow:
    case Op::Func: {
      Expr a = substitute(e.lhs(), bindings);
      bool changed = !(a == e.lhs());
      return rebuild(e, a, Expr(), changed);
    }
    default: {
      Expr a = substitute(e.lhs(), bindings);
      Expr b = substitute(e.rhs(), bindings);
      bool changed = !(a == e.lhs()) || !(b == e.rhs());
      return rebuild(e, a, b, changed);
    }
  }
}

// ---------------------------------------------------------------------------
// Classification

PolynomialInfo classify(const Expr& e) {
  switch (e.op()) {
    case Op::Const: return {true, 0};
    case Op::Var: return {true, 1};
    case Op::Neg: return classify(e.lhs());
    case Op::Add:
    case Op::Sub: {
      auto a = classify(e.lhs());
      auto b = classify(e.rhs());
      if (!a.is_polynomial || !b.is_polynomial) return {false, 0};
      return {true, std::max(a.degree, b.degree)};
    }
    case Op::Mul: {
      auto a = classify(e.lhs());
      auto b = classify(e.rhs());
      if (!a.is_polynomial || !b.is_polynomial) return {false, 0};
      return {true, a.degree + b.degree};
    }
    case Op::Div: {
      // Division by a nonzero constant keeps polynomiality.
      if (!e.rhs().is_constant() || e.rhs().value() == 0) return {false, 0};
      return classify(e.lhs());
    }
    case Op::Pow: {
      auto a = classify(e.lhs());
      if (!a.is_polynomial) return {false, 0};
      return {true, a.degree * e.exponent()};
    }
    case Op::Func: return {false, 0};
  }
  return {false, 0};
}

namespace {

template <typename Visit>
void walk(const Expr& e, Visit&& visit) {
  visit(e);
  switch (e.op()) {
    case Op::Const:
    case Op::Var:
      return;
    case Op::Neg:
    case Op::Pow:
    case Op::Func:
      walk(e.lhs(), visit);
      return;
    default:
      walk(e.lhs(), visit);
      walk(e.rhs(), visit);
  }
}

}  // namespace

std::set<std::string> free_variables(const Expr& e) {
  std::set<std::string> out;
  walk(e, [&](const Expr& x) {
    if (x.op() == Op::Var) out.insert(x.name());
  });
  return out;
}

bool contains_fn(const Expr& e, Fn f) {
  bool found = false;
  walk(e, [&](const Expr& x) { found = found || (x.op() == Op::Func && x.fn() == f); });
  return found;
}

bool contains_transcendental(const Expr& e) {
  bool found = false;
  walk(e, [&](const Expr& x) { found = found || (x.op() == Op::Func && is_transcendental(x.fn())); });
  return found;
}

bool contains_division(const Expr& e) {
  bool found = false;
  walk(e, [&](const Expr& x) { found = found || x.op() == Op::Div; });
  return found;
}

// ---------------------------------------------------------------------------
// Expansion

namespace {

// Monomial over named factors (variables and opaque atoms) -> exponent.
using Monomial = std::map<std::string, int>;
using Terms = std::map<Monomial, double>;

Terms terms_mul(const Terms& a, const Terms& b) {
  Terms out;
  for (const auto& [ma, ca] : a)
    for (const auto& [mb, cb] : b) {
      Monomial m = ma;
      for (const auto& [k, n] : mb) m[k] += n;
      out[m] += ca * cb;
    }
  std::erase_if(out, [](const auto& kv) { return kv.second == 0.0; });
  return out;
}

Terms terms_add(Terms a, const Terms& b, double sign) {
  for (const auto& [m, c] : b) a[m] += sign * c;
  std::erase_if(a, [](const auto& kv) { return kv.second == 0.0; });
  return a;
}

std::string skeleton_key(const Terms& t);

Terms expand(const Expr& e) {
  switch (e.op()) {
    case Op::Const:
      if (e.value() == 0) return {};
      return {{Monomial{}, e.value()}};
    case Op::Var: return {{Monomial{{e.name(), 1}}, 1.0}};
    case Op::Neg: return terms_add({}, expand(e.lhs()), -1);
    case Op::Add: return terms_add(expand(e.lhs()), expand(e.rhs()), 1);
    case Op::Sub: return terms_add(expand(e.lhs()), expand(e.rhs()), -1);
    case Op::Mul: return terms_mul(expand(e.lhs()), expand(e.rhs()));
    case Op::Pow: {
      Terms base = expand(e.lhs());
      Terms out{{Monomial{}, 1.0}};
      for (int i = 0; i < e.exponent(); ++i) out = terms_mul(out, base);
      return out;
    }
    case Op::Div: {
      if (e.rhs().is_constant() && e.rhs().value() != 0) {
        Terms out = expand(e.lhs());
        for (auto& [m, c] : out) c /= e.rhs().value();
        return out;
      }
      std::string atom = "inv(" + skeleton_key(expand(e.rhs())) + ")";
      return terms_mul(expand(e.lhs()), {{Monomial{{atom, 1}}, 1.0}});
    }
    case Op::Func: {
      std::string atom =
          std::string(fn_name(e.fn())) + "(" + skeleton_key(expand(e.lhs())) + ")";
      return {{Monomial{{atom, 1}}, 1.0}};
    }
  }
  return {};
}

std::string monomial_key(const Monomial& m) {
  if (m.empty()) return "1";
  std::string s;
  for (const auto& [k, n] : m) {
    if (!s.empty()) s += '*';
    s += k;
    if (n != 1) s += "^" + std::to_string(n);
  }
  return s;
}

std::string skeleton_key(const Terms& t) {
  std::string s = "{";
  for (const auto& [m, c] : t) {
    if (s.size() > 1) s += ',';
    s += monomial_key(m);
  }
  return s + "}";
}

}  // namespace

std::set<std::string> term_skeleton(const Expr& e) {
  std::set<std::string> out;
  for (const auto& [m, c] : expand(e)) out.insert(monomial_key(m));
  return out;
}

std::optional<PolynomialTerms> expand_polynomial(const Expr& e,
                                                 std::span<const std::string> vars) {
  if (!classify(e).is_polynomial) return std::nullopt;
  PolynomialTerms out;
  for (const auto& [m, c] : expand(e)) {
    std::vector<int> exps(vars.size(), 0);
    for (const auto& [k, n] : m) {
      auto it = std::find(vars.begin(), vars.end(), k);
      if (it == vars.end()) return std::nullopt;
      exps[static_cast<std::size_t>(it - vars.begin())] = n;
    }
    out[exps] += c;
  }
  return out;
}

}  // namespace bcsynth

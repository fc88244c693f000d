#include "bcsynth/taylor.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "bcsynth/error.hpp"

namespace bcsynth {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double down(double v) { return std::isfinite(v) ? std::nextafter(v, -kInf) : v; }
double up(double v) { return std::isfinite(v) ? std::nextafter(v, kInf) : v; }

Interval widen(double lo, double hi) { return {down(lo), up(hi)}; }

// inf * 0 is taken as 0: a zero error stays zero whatever it multiplies.
double scale(double magnitude, double err) { return err == 0.0 ? 0.0 : up(magnitude * err); }

Interval iadd(Interval a, Interval b) { return widen(a.lo + b.lo, a.hi + b.hi); }
Interval isub(Interval a, Interval b) { return widen(a.lo - b.hi, a.hi - b.lo); }
Interval ineg(Interval a) { return {-a.hi, -a.lo}; }

double mul0(double a, double b) { return (a == 0.0 || b == 0.0) ? 0.0 : a * b; }

Interval imul(Interval a, Interval b) {
  double c[4] = {mul0(a.lo, b.lo), mul0(a.lo, b.hi), mul0(a.hi, b.lo), mul0(a.hi, b.hi)};
  return widen(*std::min_element(c, c + 4), *std::max_element(c, c + 4));
}

Interval ipow(Interval a, int n) {
  if (n == 0) return {1.0, 1.0};
  Interval r = a;
  for (int i = 1; i < n; ++i) r = imul(r, a);
  if (n % 2 == 0) r.lo = std::max(r.lo, 0.0);
  return r;
}

Interval idiv(Interval a, Interval b) {
  if (b.lo <= 0.0 && b.hi >= 0.0) return {};
  Interval inv = widen(1.0 / b.hi, 1.0 / b.lo);
  return imul(a, inv);
}

Interval ifn(Fn f, Interval a) {
  switch (f) {
    case Fn::Sin:
    case Fn::Cos:
      return {-1.0, 1.0};
    case Fn::Exp: return widen(std::exp(a.lo), std::exp(a.hi));
    case Fn::Tanh: return widen(std::tanh(a.lo), std::tanh(a.hi));
    case Fn::Sqrt: return widen(std::sqrt(std::max(a.lo, 0.0)), std::sqrt(std::max(a.hi, 0.0)));
    case Fn::Abs:
      if (a.lo >= 0) return a;
      if (a.hi <= 0) return ineg(a);
      return {0.0, std::max(-a.lo, a.hi)};
    case Fn::Sign:
      return {a.lo > 0 ? 1.0 : (a.lo == 0 ? 0.0 : -1.0), a.hi < 0 ? -1.0 : (a.hi == 0 ? 0.0 : 1.0)};
  }
  return {};
}

// k-th derivative of tanh as a polynomial in t = tanh(y), coefficients by power.
std::vector<double> tanh_derivative_poly(int k) {
  std::vector<double> p{0.0, 1.0};
  for (int i = 0; i < k; ++i) {
    // d/dy P(t) = P'(t) * (1 - t^2)
    std::vector<double> dp(p.size() > 1 ? p.size() - 1 : 1, 0.0);
    for (std::size_t j = 1; j < p.size(); ++j) dp[j - 1] = static_cast<double>(j) * p[j];
    std::vector<double> next(dp.size() + 2, 0.0);
    for (std::size_t j = 0; j < dp.size(); ++j) {
      next[j] += dp[j];
      next[j + 2] -= dp[j];
    }
    p = std::move(next);
  }
  return p;
}

double poly_at(const std::vector<double>& p, double t) {
  double r = 0.0;
  for (auto it = p.rbegin(); it != p.rend(); ++it) r = r * t + *it;
  return r;
}

// Value of the k-th derivative of f at y.
double derivative_at(Fn f, int k, double y) {
  switch (f) {
    case Fn::Sin: {
      switch (k % 4) {
        case 0: return std::sin(y);
        case 1: return std::cos(y);
        case 2: return -std::sin(y);
        default: return -std::cos(y);
      }
    }
    case Fn::Cos: {
      switch (k % 4) {
        case 0: return std::cos(y);
        case 1: return -std::sin(y);
        case 2: return -std::cos(y);
        default: return std::sin(y);
      }
    }
    case Fn::Exp: return std::exp(y);
    case Fn::Tanh: return poly_at(tanh_derivative_poly(k), std::tanh(y));
    default: return 0.0;
  }
}

// Upper bound of |f^(k)| over [lo, hi].
double derivative_bound(Fn f, int k, Interval range) {
  switch (f) {
    case Fn::Sin:
    case Fn::Cos:
      return 1.0;
    case Fn::Exp: return up(std::exp(range.hi));
    case Fn::Tanh: {
      double t = std::max(std::fabs(std::tanh(range.lo)), std::fabs(std::tanh(range.hi)));
      double s = 0.0, tp = 1.0;
      for (double c : tanh_derivative_poly(k)) {
        s += std::fabs(c) * tp;
        tp *= t;
      }
      return up(s);
    }
    default: return kInf;
  }
}

double factorial(int n) {
  double r = 1.0;
  for (int i = 2; i <= n; ++i) r *= i;
  return r;
}

double lagrange_bound(Fn f, int order, Interval range) {
  double r = range.radius();
  double y0 = range.mid();
  auto term = [&](int m) { return up(derivative_bound(f, m, range) * std::pow(r, m) / factorial(m)); };
  double bound = term(order + 1);
  // When the next Taylor coefficient vanishes the polynomial is also the
  // order+1 polynomial, so the order+2 remainder applies.
  if (derivative_at(f, order + 1, y0) == 0.0) bound = std::min(bound, term(order + 2));
  return up(bound * (1.0 + 1e-12));
}

Expr taylor_series(Fn f, const Expr& arg, double y0, int order) {
  Expr shifted = y0 == 0.0 ? arg : simplify(Expr::sub(arg, Expr::constant(y0)));
  Expr out;
  bool first = true;
  for (int k = 0; k <= order; ++k) {
    double c = derivative_at(f, k, y0) / factorial(k);
    if (c == 0.0) continue;
    double m = std::fabs(c);
    Expr term;
    if (k == 0) term = Expr::constant(m);
    else {
      Expr power = k == 1 ? shifted : Expr::pow(shifted, k);
      term = m == 1.0 ? power : Expr::mul(Expr::constant(m), power);
    }
    if (first) out = c < 0 ? Expr::neg(term) : term;
    else out = c < 0 ? Expr::sub(out, term) : Expr::add(out, term);
    first = false;
  }
  return first ? Expr::constant(0) : out;
}

struct Approx {
  Expr poly;
  Interval range;  // encloses the exact value
  double err = 0;  // |exact - poly| <= err
};

class Expander {
 public:
  Expander(int order, const Box& box) : order_(order), box_(box) {}

  Approx run(const Expr& e) {
    switch (e.op()) {
      case Op::Const: return {e, {e.value(), e.value()}, 0.0};
      case Op::Var: {
        auto it = box_.find(e.name());
        return {e, it == box_.end() ? Interval{} : it->second, 0.0};
      }
      case Op::Neg: {
        Approx a = run(e.lhs());
        return {Expr::neg(a.poly), ineg(a.range), a.err};
      }
      case Op::Add:
      case Op::Sub: {
        Approx a = run(e.lhs());
        Approx b = run(e.rhs());
        bool add = e.op() == Op::Add;
        return {add ? Expr::add(a.poly, b.poly) : Expr::sub(a.poly, b.poly),
                add ? iadd(a.range, b.range) : isub(a.range, b.range), up(a.err + b.err)};
      }
      case Op::Mul: {
        Approx a = run(e.lhs());
        Approx b = run(e.rhs());
        // ab - AB = a(b - B) + B(a - A), |B| <= |b| + eb
        double err = up(scale(a.range.magnitude(), b.err) +
                        scale(up(b.range.magnitude() + b.err), a.err));
        return {Expr::mul(a.poly, b.poly), imul(a.range, b.range), checked(err, e)};
      }
      case Op::Div: {
        Approx a = run(e.lhs());
        Approx b = run(e.rhs());
        if (b.err != 0.0) throw Error("Taylor error inside a denominator: " + e.str());
        Interval r = idiv(a.range, b.range);
        double err = 0.0;
        if (a.err != 0.0) {
          double m = std::min(std::fabs(b.range.lo), std::fabs(b.range.hi));
          if (b.range.contains(0.0) || m == 0.0)
            throw Error("denominator range contains zero: " + e.str());
          err = up(a.err / m);
        }
        return {Expr::div(a.poly, b.poly), r, err};
      }
      case Op::Pow: {
        Approx a = run(e.lhs());
        int n = e.exponent();
        double err = 0.0;
        if (a.err != 0.0 && n > 0) {
          double m = up(a.range.magnitude() + a.err);
          err = up(a.err * n * std::pow(m, n - 1));
        }
        return {Expr::pow(a.poly, n), ipow(a.range, n), checked(err, e)};
      }
      case Op::Func: return call(e);
    }
    return {e, {}, 0.0};
  }

 private:
  static double checked(double err, const Expr& e) {
    if (!std::isfinite(err))
      throw Error("cannot bound Taylor remainder of '" + e.str() +
                  "': a factor has no finite range");
    return err;
  }

  Approx call(const Expr& e) {
    const Expr& arg = e.lhs();
    Fn f = e.fn();
    if (!is_transcendental(f)) {
      Approx a = run(arg);
      if (f == Fn::Abs) return {Expr::call(f, a.poly), ifn(f, a.range), a.err};
      if (a.err != 0.0)
        throw Error(std::string("Taylor error inside ") + std::string(fn_name(f)) + ": " + e.str());
      return {Expr::call(f, a.poly), ifn(f, a.range), 0.0};
    }
    if (!classify(arg).is_polynomial)
      throw Error("unsupported nesting: non-polynomial argument in " + e.str());
    if (free_variables(arg).size() > 1)
      throw Error("unsupported nesting: multivariate argument in " + e.str());
    Interval range = enclose(arg, box_);
    if (!range.bounded())
      throw Error("unbounded argument range for " + e.str() + "; a bounded region is required");
    double y0 = range.mid();
    Interval sym{y0 - range.radius(), y0 + range.radius()};
    sym = widen(std::min(sym.lo, range.lo), std::max(sym.hi, range.hi));
    return {taylor_series(f, arg, y0, order_), ifn(f, range), lagrange_bound(f, order_, sym)};
  }

  int order_;
  const Box& box_;
};

}  // namespace

bool Interval::bounded() const { return std::isfinite(lo) && std::isfinite(hi); }

double Interval::magnitude() const { return std::max(std::fabs(lo), std::fabs(hi)); }

Interval enclose(const Expr& e, const Box& box) {
  switch (e.op()) {
    case Op::Const: return {e.value(), e.value()};
    case Op::Var: {
      auto it = box.find(e.name());
      return it == box.end() ? Interval{} : it->second;
    }
    case Op::Neg: return ineg(enclose(e.lhs(), box));
    case Op::Add: return iadd(enclose(e.lhs(), box), enclose(e.rhs(), box));
    case Op::Sub: return isub(enclose(e.lhs(), box), enclose(e.rhs(), box));
    case Op::Mul: return imul(enclose(e.lhs(), box), enclose(e.rhs(), box));
    case Op::Div: return idiv(enclose(e.lhs(), box), enclose(e.rhs(), box));
    case Op::Pow: return ipow(enclose(e.lhs(), box), e.exponent());
    case Op::Func: return ifn(e.fn(), enclose(e.lhs(), box));
  }
  return {};
}

TaylorResult taylor_expand(const Expr& e, int order, const Box& box) {
  if (order < 1) throw Error("Taylor order must be at least 1");
  if (!contains_transcendental(e)) return {e, 0.0};
  Approx a = Expander(order, box).run(e);
  return {a.poly, a.err};
}

TaylorResult taylor_polynomial(const Expr& e, const std::string& var, double center, int order,
                               double radius) {
  if (!(radius > 0)) throw Error("Taylor radius must be positive");
  return taylor_expand(e, order, Box{{var, Interval{center - radius, center + radius}}});
}

}  // namespace bcsynth

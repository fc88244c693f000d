#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "bcsynth/agents.hpp"
#include "bcsynth/bench.hpp"
#include "bcsynth/expr.hpp"
#include "bcsynth/llm.hpp"
#include "bcsynth/sampler.hpp"
#include "bcsynth/smt.hpp"
#include "bcsynth/system.hpp"

namespace testing_support {

using namespace bcsynth;

inline std::string source_path(const std::string& rel) { return std::string(BCS_SOURCE_DIR) + "/" + rel; }

inline DynamicalSystem seed_system(const std::string& stem) {
  return load_system(source_path("benchmarks/seed/" + stem + ".json"));
}

inline std::vector<std::string> find_seed_specs() { return find_specs(source_path("benchmarks/seed")); }

inline Expr px(const std::string& text, const DynamicalSystem& s) {
  auto vars = s.all_vars();
  return parse_expression(text, vars);
}

inline Expr px(const std::string& text, const std::vector<std::string>& vars) { return parse_expression(text, vars); }

inline BarrierCandidate candidate(const DynamicalSystem& s, const std::string& barrier,
                                  const std::vector<std::string>& controllers = {}) {
  BarrierCandidate c;
  c.barrier = px(barrier, s.state_vars);
  for (std::size_t i = 0; i < controllers.size(); ++i)
    c.controllers[s.control_vars[i]] = px(controllers[i], s.state_vars);
  return c;
}

// The published controllers for the 4D pendulum system.
inline const std::vector<std::string>& pendulum_controllers() {
  static const std::vector<std::string> u = {"-3*x1 - 1.5*x2", "-3*x2 + 0.8*sin(x1)", "-3*x3 - 0.05*x1",
                                             "-3*x4 - 0.02*x2"};
  return u;
}

inline const SolverRegistry& z3_registry() {
  static const SolverRegistry reg = [] {
    SolverKind z3[] = {SolverKind::Z3};
    return SolverRegistry::probe().restricted(z3);
  }();
  return reg;
}

// Smooth random expressions: every node is differentiable on all of R^n and
// stays finite for arguments in [-1, 1].
class ExprGen {
 public:
  ExprGen(std::vector<std::string> vars, std::uint64_t seed) : vars_(std::move(vars)), rng_(seed) {}

  Expr make(int depth) {
    if (depth <= 0 || pick(5) == 0) return leaf();
    switch (pick(11)) {
      case 0: return make(depth - 1) + make(depth - 1);
      case 1: return make(depth - 1) - make(depth - 1);
      case 2:
      case 3: return make(depth - 1) * make(depth - 1);
      case 4: return Expr::pow(make(depth - 1), 2 + pick(2));
      case 5: return Expr::call(Fn::Sin, make(depth - 1));
      case 6: return Expr::call(Fn::Cos, make(depth - 1));
      case 7: return Expr::call(Fn::Tanh, make(depth - 1));
      case 8: return Expr::call(Fn::Exp, Expr::call(Fn::Sin, make(depth - 1)));
      case 9: {
        Expr d = make(depth - 1);
        return make(depth - 1) / (Expr::constant(2.0) + d * d);
      }
      default: {
        Expr a = make(depth - 1);
        return Expr::call(Fn::Sqrt, Expr::constant(1.0) + a * a);
      }
    }
  }

  std::vector<double> point(double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> p(vars_.size());
    for (auto& v : p) v = u(rng_);
    return p;
  }

  std::mt19937_64& rng() { return rng_; }

 private:
  int pick(int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng_); }

  Expr leaf() {
    if (pick(3) == 0) {
      double c = std::round(std::uniform_real_distribution<double>(-3.0, 3.0)(rng_) * 100.0) / 100.0;
      return Expr::constant(c);
    }
    return Expr::variable(vars_[pick(static_cast<int>(vars_.size()))]);
  }

  std::vector<std::string> vars_;
  std::mt19937_64 rng_;
};

inline Point to_point(const std::vector<std::string>& vars, const std::vector<double>& x) {
  Point p;
  for (std::size_t i = 0; i < vars.size(); ++i) p[vars[i]] = x[i];
  return p;
}

struct GradientStats {
  int checks = 0;
  int failures = 0;
  std::string first_failure;
};

// Symbolic partials against central differences (h = 1e-5).
inline GradientStats gradient_suite(int expressions, int points, std::uint64_t seed) {
  const std::vector<std::string> vars = {"x1", "x2", "x3"};
  ExprGen gen(vars, seed);
  GradientStats st;
  const double h = 1e-5;
  for (int i = 0; i < expressions; ++i) {
    Expr e = gen.make(4);
    for (int j = 0; j < points; ++j) {
      auto x = gen.point();
      const std::string& v = vars[static_cast<std::size_t>(j) % vars.size()];
      Point p = to_point(vars, x);
      double sym = evaluate(differentiate(e, v), p);
      Point hi = p, lo = p;
      hi[v] += h;
      lo[v] -= h;
      double fd = (evaluate(e, hi) - evaluate(e, lo)) / (2 * h);
      ++st.checks;
      if (!(std::fabs(sym - fd) <= 1e-4 * (1.0 + std::fabs(sym)))) {
        if (st.failures++ == 0)
          st.first_failure = "d/d" + v + " " + e.str() + ": symbolic " + std::to_string(sym) + " vs " +
                             std::to_string(fd);
      }
    }
  }
  return st;
}

struct CexStats {
  int obligations = 0;
  int counterexamples = 0;
  int bad_margins = 0;
  int other = 0;  // proved, timeout or error on a falsifiable obligation
  double worst_margin = 0.0;
  std::string detail;
};

// Random falsifiable obligations over 2 and 3 dimensional systems. Each
// generated obligation has a known violating point, so unsat would be a bug.
inline CexStats counterexample_suite(int count, std::uint64_t seed, const SolverRegistry& registry,
                                    std::vector<std::string>* unresolved = nullptr) {
  CexStats st;
  st.worst_margin = 1.0;
  std::mt19937_64 rng(seed);
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto coef = [&](double lo, double hi) { return std::round(uni(lo, hi) * 100.0) / 100.0; };

  int attempts = 0;
  while (st.obligations < count && attempts < 20 * count) {
    ++attempts;
    const std::size_t n = 2 + (attempts % 2);
    DynamicalSystem s;
    s.name = "gen";
    s.time_domain = (attempts % 3 == 0) ? TimeDomain::Discrete : TimeDomain::Continuous;
    for (std::size_t i = 0; i < n; ++i) s.state_vars.push_back("x" + std::to_string(i + 1));
    for (std::size_t i = 0; i < n; ++i) {
      Expr fi = Expr::constant(0.0);
      for (std::size_t j = 0; j < n; ++j) fi = fi + Expr::constant(coef(-1.5, 1.5)) * Expr::variable(s.state_vars[j]);
      if (attempts % 4 == 1) fi = fi + Expr::constant(coef(-0.5, 0.5)) * Expr::pow(Expr::variable(s.state_vars[i]), 2);
      s.dynamics.push_back(simplify(fi));
    }
    Rect init{std::vector<double>(n), std::vector<double>(n)};
    for (std::size_t i = 0; i < n; ++i) {
      init.lo[i] = coef(-1.0, 0.5);
      init.hi[i] = init.lo[i] + coef(0.2, 1.0);
    }
    s.initial_set = init;
    Ball unsafe{std::vector<double>(n), coef(0.2, 0.8)};
    for (std::size_t i = 0; i < n; ++i) unsafe.center[i] = coef(1.5, 3.0);
    s.unsafe_set = unsafe;
    Rect space{std::vector<double>(n, -4.0), std::vector<double>(n, 4.0)};
    s.state_space = space;

    // A random positive definite quadratic shifted to a random level.
    Expr b = Expr::constant(-coef(0.1, 6.0));
    for (std::size_t i = 0; i < n; ++i) {
      Expr xi = Expr::variable(s.state_vars[i]);
      b = b + Expr::constant(coef(0.3, 2.0)) * Expr::pow(xi - Expr::constant(coef(-0.5, 0.5)), 2);
    }
    if (n == 3) b = b + Expr::constant(coef(-0.2, 0.2)) * Expr::variable("x1") * Expr::variable("x2");
    BarrierCandidate c;
    c.barrier = simplify(b);

    auto obligations = build_obligations(s, c);
    for (const auto& o : obligations) {
      if (st.obligations >= count) break;
      // Falsifiable when sampling finds a violating point.
      auto pts = sample_region(o.kind == ObligationKind::Init     ? s.initial_set
                               : o.kind == ObligationKind::Unsafe ? s.unsafe_set
                                                                  : s.state_space,
                               400, static_cast<std::uint64_t>(attempts), space);
      bool witness = false;
      if (!o.on_zero_of) {
        CompiledExpr lhs(o.lhs, o.vars);
        for (const auto& p : pts)
          if (!holds(o.relation, lhs(p))) {
            witness = true;
            break;
          }
      } else {
        // Bisect B between sample pairs of opposite sign and test L_f B there.
        CompiledExpr bb(c.barrier, o.vars), lf(o.lhs, o.vars);
        for (std::size_t i = 0; i + 1 < pts.size() && !witness; i += 2) {
          std::vector<double> a = pts[i], z = pts[i + 1];
          double fa = bb(a), fz = bb(z);
          if ((fa > 0) == (fz > 0)) continue;
          for (int it = 0; it < 80; ++it) {
            std::vector<double> m(n);
            for (std::size_t d = 0; d < n; ++d) m[d] = 0.5 * (a[d] + z[d]);
            if ((bb(m) > 0) == (fa > 0)) a = m; else z = m;
          }
          if (lf(a) > 1e-6) witness = true;
        }
      }
      if (!witness) continue;

      ++st.obligations;
      const std::string script = encode_obligation(o);
      SolverResult r = run_solver(script, SolverChoice{SolverKind::Z3, 30000}, o.vars, registry);
      if (r.status != SolverStatus::Counterexample || !r.model) {
        ++st.other;
        if (unresolved) unresolved->push_back(script);
        if (st.detail.empty()) st.detail = std::string(to_string(o.kind)) + ": " + std::string(to_string(r.status)) + " " + r.diagnostic;
        continue;
      }
      ++st.counterexamples;
      double m = counterexample_margin(o, *r.model);
      st.worst_margin = std::min(st.worst_margin, m);
      if (m < -1e-7) {
        ++st.bad_margins;
        if (st.detail.empty()) st.detail = std::string(to_string(o.kind)) + " margin " + std::to_string(m);
      }
    }
  }
  return st;
}

}  // namespace testing_support

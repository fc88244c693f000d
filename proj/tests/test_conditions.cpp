#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "bcsynth/conditions.hpp"
#include "bcsynth/error.hpp"
#include "support.hpp"

using namespace bcsynth;
using testing_support::candidate;
using testing_support::pendulum_controllers;
using testing_support::px;
using testing_support::seed_system;
using testing_support::to_point;

namespace {

std::vector<std::vector<double>> random_points(std::size_t dim, int n, std::uint64_t seed, double r = 3.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-r, r);
  std::vector<std::vector<double>> pts(static_cast<std::size_t>(n), std::vector<double>(dim));
  for (auto& p : pts)
    for (auto& v : p) v = u(rng);
  return pts;
}

DynamicalSystem toy(TimeDomain t, std::vector<std::string> dyn, std::vector<std::string> controls = {}) {
  nlohmann::json doc = {{"name", "toy"},
                        {"time_domain", t == TimeDomain::Discrete ? "discrete" : "continuous"},
                        {"state_vars", {"x1", "x2"}},
                        {"control_vars", controls},
                        {"dynamics", dyn},
                        {"state_space", {{"type", "all"}}},
                        {"initial_set", {{"type", "ball"}, {"center", {0, 0}}, {"radius", 0.5}}},
                        {"unsafe_set", {{"type", "rect"}, {"lo", {2, 2}}, {"hi", {3, 3}}}}};
  return parse_system(doc);
}

}  // namespace

TEST(CloseLoop, PendulumSecondComponent) {
  DynamicalSystem s = seed_system("ct4d_pendulum_ctrl");
  BarrierCandidate c = candidate(s, "x1^2 + x2^2 + x3^2 + x4^2 - 4.0", pendulum_controllers());
  DynamicalSystem cl = close_loop(s, c);
  EXPECT_TRUE(cl.control_vars.empty());
  Expr want = px("-0.15*sin(x1) - 3.02*x2 + 0.01*x3", s.state_vars);
  for (const auto& x : random_points(4, 100, 1)) {
    Point p = to_point(s.state_vars, x);
    // Two-stage oracle: evaluate u(x), then the open-loop field at (x, u).
    Point full = p;
    for (const auto& [u, e] : c.controllers) full[u] = evaluate(e, p);
    double two_stage = evaluate(s.dynamics[1], full);
    double closed = evaluate(cl.dynamics[1], p);
    EXPECT_NEAR(closed, two_stage, 1e-12 * (1 + std::fabs(two_stage)));
    EXPECT_NEAR(closed, evaluate(want, p), 1e-12 * (1 + std::fabs(two_stage)));
    for (std::size_t i = 0; i < 4; ++i) {
      for (const auto& v : free_variables(cl.dynamics[i])) EXPECT_EQ(v[0], 'x');
      EXPECT_NEAR(evaluate(cl.dynamics[i], p), evaluate(s.dynamics[i], full), 1e-12);
    }
  }
}

TEST(CloseLoop, AutonomousIdentity) {
  DynamicalSystem s = seed_system("dt2d_linear");
  DynamicalSystem cl = close_loop(s, candidate(s, "x1"));
  ASSERT_EQ(cl.dynamics.size(), s.dynamics.size());
  for (std::size_t i = 0; i < s.dynamics.size(); ++i) EXPECT_EQ(cl.dynamics[i], s.dynamics[i]);
}

TEST(CloseLoop, Cancellation) {
  DynamicalSystem s = toy(TimeDomain::Continuous, {"x2 + u0", "-x1"}, {"u0"});
  DynamicalSystem cl = close_loop(s, candidate(s, "x1^2", {"-x2"}));
  for (const auto& x : random_points(2, 20, 2)) EXPECT_EQ(evaluate(cl.dynamics[0], to_point(s.state_vars, x)), 0.0);
}

TEST(CloseLoop, MissingController) {
  DynamicalSystem s = seed_system("ct4d_pendulum_ctrl");
  BarrierCandidate c = candidate(s, "x1^2 - 1", {"-x1", "-x2", "-x3"});
  EXPECT_THROW(close_loop(s, c), CandidateError);
  EXPECT_THROW(build_obligations(s, c), CandidateError);
}

TEST(Validate, CandidateShape) {
  DynamicalSystem ct = toy(TimeDomain::Continuous, {"-x1", "-x2"});
  DynamicalSystem dt = toy(TimeDomain::Discrete, {"0.5*x1", "0.5*x2"});
  EXPECT_THROW(validate_candidate(ct, candidate(ct, "abs(x1) - 1")), CandidateError);
  EXPECT_NO_THROW(validate_candidate(dt, candidate(dt, "abs(x1) - 1")));
  BarrierCandidate stray;
  stray.barrier = Expr::variable("u0");
  EXPECT_THROW(validate_candidate(ct, stray), CandidateError);
}

TEST(Lie, QuadraticUnderContraction) {
  DynamicalSystem s = toy(TimeDomain::Continuous, {"-x1", "-x2"});
  Expr l = lie_derivative(px("x1^2 + x2^2", s.state_vars), s);
  Expr want = px("-2*x1^2 - 2*x2^2", s.state_vars);
  for (const auto& x : random_points(2, 50, 3)) {
    Point p = to_point(s.state_vars, x);
    EXPECT_NEAR(evaluate(l, p), evaluate(want, p), 1e-12);
  }
}

TEST(Lie, ZeroField) {
  DynamicalSystem s = toy(TimeDomain::Continuous, {"0", "0"});
  Expr l = lie_derivative(px("sin(x1)*x2^3 + exp(x2)", s.state_vars), s);
  for (const auto& x : random_points(2, 20, 4)) EXPECT_EQ(evaluate(l, to_point(s.state_vars, x)), 0.0);
}

TEST(Lie, FourDimensionalLinearSystem) {
  DynamicalSystem s = seed_system("ct4d_linear");
  Expr b = px("(x1 - 4.5)^2 + (x2 - 1.5)^2 + x3^2 + x4^2 - 25", s.state_vars);
  Expr l = lie_derivative(b, s);
  Expr closed_form = px("2*(x1 - 4.5)*(-x1 + 4.5) + 2*(x2 - 1.5)*(x1 - x2 - 3) - x3^2 - 0.6*x4^2", s.state_vars);
  const double h = 1e-6;
  for (const auto& x : random_points(4, 100, 5, 10.0)) {
    Point p = to_point(s.state_vars, x);
    // d/dt B(x + t f(x)) at t = 0 by central differences.
    Point fwd = p, bwd = p;
    for (std::size_t i = 0; i < 4; ++i) {
      double fi = evaluate(s.dynamics[i], p);
      fwd[s.state_vars[i]] += h * fi;
      bwd[s.state_vars[i]] -= h * fi;
    }
    double fd = (evaluate(b, fwd) - evaluate(b, bwd)) / (2 * h);
    double sym = evaluate(l, p);
    EXPECT_NEAR(sym, fd, 1e-5 * (1 + std::fabs(sym)));
    EXPECT_NEAR(sym, evaluate(closed_form, p), 1e-9 * (1 + std::fabs(sym)));
  }
}

TEST(Lie, RejectsDiscreteSystems) {
  DynamicalSystem s = seed_system("dt2d_linear");
  EXPECT_THROW(lie_derivative(px("x1", s.state_vars), s), Error);
}

TEST(Lie, Linearity) {
  DynamicalSystem s = toy(TimeDomain::Continuous, {"x2 - x1^3", "-sin(x1) - 0.5*x2"});
  Expr b1 = px("x1^2 + x1*x2", s.state_vars), b2 = px("cos(x2) - x1^4", s.state_vars);
  const double a = 1.7, c = -0.3;
  Expr combo = Expr::constant(a) * b1 + Expr::constant(c) * b2;
  Expr l = lie_derivative(combo, s), l1 = lie_derivative(b1, s), l2 = lie_derivative(b2, s);
  for (const auto& x : random_points(2, 100, 6)) {
    Point p = to_point(s.state_vars, x);
    double want = a * evaluate(l1, p) + c * evaluate(l2, p);
    EXPECT_NEAR(evaluate(l, p), want, 1e-9 * (1 + std::fabs(want)));
  }
}

TEST(Discrete, PublishedPoint) {
  DynamicalSystem s = seed_system("dt2d_linear");
  Expr d = discrete_difference(px("x1^2 + x2^2 - 0.5", s.state_vars), s);
  EXPECT_NEAR(evaluate(d, {{"x1", 0.1}, {"x2", 0.1}}), -0.019998, 1e-12);
}

TEST(Discrete, IdentityMapAndConstantBarrier) {
  DynamicalSystem id = toy(TimeDomain::Discrete, {"x1", "x2"});
  Expr d1 = discrete_difference(px("x1^2 + sin(x2)", id.state_vars), id);
  DynamicalSystem s = seed_system("dt2d_linear");
  Expr d2 = discrete_difference(Expr::constant(3.0), s);
  for (const auto& x : random_points(2, 50, 7)) {
    Point p = to_point(id.state_vars, x);
    EXPECT_EQ(evaluate(d1, p), 0.0);
    EXPECT_EQ(evaluate(d2, p), 0.0);
  }
}

TEST(Discrete, RejectsContinuousSystems) {
  DynamicalSystem s = seed_system("ct4d_linear");
  EXPECT_THROW(discrete_difference(px("x1", s.state_vars), s), Error);
}

TEST(Discrete, Compositionality) {
  DynamicalSystem s = toy(TimeDomain::Discrete, {"0.9*x1 + 0.1*sin(x2)", "x1*x2 - 0.2*x2^2"});
  Expr b = px("x1^2 + 2*x2^2 - x1*x2 + cos(x1)", s.state_vars);
  Expr d = discrete_difference(b, s);
  for (const auto& x : random_points(2, 100, 8, 2.0)) {
    Point p = to_point(s.state_vars, x);
    Point fx{{"x1", evaluate(s.dynamics[0], p)}, {"x2", evaluate(s.dynamics[1], p)}};
    double want = evaluate(b, fx) - evaluate(b, p);
    EXPECT_NEAR(evaluate(d, p), want, 1e-9 * (1 + std::fabs(want)));
  }
}

TEST(Obligations, ContinuousHasBoundaryCondition) {
  DynamicalSystem s = seed_system("ct4d_linear");
  auto obs = build_obligations(s, candidate(s, "(x1 - 4.5)^2 + (x2 - 1.5)^2 + x3^2 + x4^2 - 25"));
  ASSERT_EQ(obs.size(), 3u);
  EXPECT_EQ(obs[0].kind, ObligationKind::Init);
  EXPECT_EQ(obs[0].relation, Relation::Le);
  EXPECT_EQ(obs[1].kind, ObligationKind::Unsafe);
  EXPECT_EQ(obs[1].relation, Relation::Gt);
  EXPECT_EQ(obs[2].kind, ObligationKind::Invariance);
  EXPECT_EQ(obs[2].relation, Relation::Lt);
  ASSERT_TRUE(obs[2].on_zero_of.has_value());
  EXPECT_EQ(*obs[2].on_zero_of, obs[2].barrier);
  EXPECT_FALSE(obs[0].on_zero_of || obs[1].on_zero_of);
}

TEST(Obligations, DiscreteQuantifiesOverAllOfX) {
  DynamicalSystem s = seed_system("dt2d_linear");
  auto obs = build_obligations(s, candidate(s, "x1^2 + x2^2 - 0.5"));
  ASSERT_EQ(obs.size(), 3u);
  EXPECT_EQ(obs[2].kind, ObligationKind::Invariance);
  EXPECT_FALSE(obs[2].on_zero_of.has_value());
  EXPECT_EQ(obs[2].relation, Relation::Le);
  EXPECT_TRUE(std::holds_alternative<AllSpace>(obs[2].domain));
}

TEST(Obligations, ControlledObligationsAreClosedLoop) {
  DynamicalSystem s = seed_system("ct4d_pendulum_ctrl");
  auto obs = build_obligations(s, candidate(s, "x1^2 + x2^2 + x3^2 + x4^2 - 4.0", pendulum_controllers()));
  ASSERT_EQ(obs.size(), 3u);
  for (const auto& o : obs) {
    EXPECT_EQ(o.vars, s.state_vars);
    for (const auto& v : free_variables(o.lhs)) EXPECT_EQ(v[0], 'x') << v;
  }
}

TEST(Obligations, StrengthenedInvarianceOption) {
  DynamicalSystem s = seed_system("ct4d_linear");
  ObligationOptions opts;
  opts.lie_everywhere = true;
  auto obs = build_obligations(s, candidate(s, "x1^2 - 1"), opts);
  EXPECT_FALSE(obs[2].on_zero_of.has_value());
  EXPECT_EQ(obs[2].relation, Relation::Lt);
}

TEST(Relation, Holds) {
  EXPECT_TRUE(holds(Relation::Le, 0.0));
  EXPECT_FALSE(holds(Relation::Lt, 0.0));
  EXPECT_FALSE(holds(Relation::Gt, 0.0));
  EXPECT_TRUE(holds(Relation::Gt, 1e-300));
}

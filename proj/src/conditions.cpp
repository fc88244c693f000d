#include "bcsynth/conditions.hpp"

#include <algorithm>

#include "bcsynth/error.hpp"

namespace bcsynth {

std::string_view to_string(CandidateSource s) {
  switch (s) {
    case CandidateSource::Retrieval: return "retrieval";
    case CandidateSource::Fresh: return "fresh";
    case CandidateSource::Refined: return "refined";
  }
  return "?";
}

std::string_view to_string(ObligationKind k) {
  switch (k) {
    case ObligationKind::Init: return "init";
    case ObligationKind::Unsafe: return "unsafe";
    case ObligationKind::Invariance: return "invariance";
  }
  return "?";
}

std::string_view to_string(Relation r) {
  switch (r) {
    case Relation::Le: return "<=";
    case Relation::Lt: return "<";
    case Relation::Gt: return ">";
  }
  return "?";
}

bool holds(Relation r, double lhs) {
  switch (r) {
    case Relation::Le: return lhs <= 0.0;
    case Relation::Lt: return lhs < 0.0;
    case Relation::Gt: return lhs > 0.0;
  }
  return false;
}

namespace {

void only_state_vars(const DynamicalSystem& s, const Expr& e, const std::string& what) {
  for (const auto& v : free_variables(e))
    if (std::find(s.state_vars.begin(), s.state_vars.end(), v) == s.state_vars.end())
      throw CandidateError(what + " references '" + v + "', which is not a state variable");
}

}  // namespace

void validate_candidate(const DynamicalSystem& s, const BarrierCandidate& c) {
  only_state_vars(s, c.barrier, "barrier");
  if (s.time_domain == TimeDomain::Continuous &&
      (contains_fn(c.barrier, Fn::Abs) || contains_fn(c.barrier, Fn::Sign)))
    throw CandidateError("continuous-time barrier must be differentiable (no abs or sign)");
  for (const auto& u : s.control_vars)
    if (!c.controllers.count(u)) throw CandidateError("no controller given for '" + u + "'");
  for (const auto& [u, e] : c.controllers) {
    if (std::find(s.control_vars.begin(), s.control_vars.end(), u) == s.control_vars.end())
      throw CandidateError("controller for unknown control variable '" + u + "'");
    only_state_vars(s, e, "controller " + u);
  }
}

DynamicalSystem close_loop(const DynamicalSystem& s, const BarrierCandidate& c) {
  if (!s.controlled()) return s;
  std::map<std::string, Expr> bindings;
  for (const auto& u : s.control_vars) {
    auto it = c.controllers.find(u);
    if (it == c.controllers.end()) throw CandidateError("no controller given for '" + u + "'");
    bindings.emplace(u, it->second);
  }
  DynamicalSystem out = s;
  for (auto& f : out.dynamics) f = simplify(substitute(f, bindings));
  out.control_vars.clear();
  return out;
}

Expr lie_derivative(const Expr& barrier, const DynamicalSystem& s) {
  if (s.time_domain != TimeDomain::Continuous)
    throw Error("Lie derivative requested for a discrete-time system");
  if (s.controlled()) throw Error("Lie derivative requires a closed-loop system");
  Expr sum = Expr::constant(0);
  for (std::size_t i = 0; i < s.dimension(); ++i) {
    Expr d = simplify(differentiate(barrier, s.state_vars[i]));
    if (d.is_constant(0)) continue;
    sum = Expr::add(sum, Expr::mul(d, s.dynamics[i]));
  }
  return simplify(sum);
}

Expr discrete_difference(const Expr& barrier, const DynamicalSystem& s) {
  if (s.time_domain != TimeDomain::Discrete)
    throw Error("discrete difference requested for a continuous-time system");
  if (s.controlled()) throw Error("discrete difference requires a closed-loop system");
  std::map<std::string, Expr> next;
  for (std::size_t i = 0; i < s.dimension(); ++i) next.emplace(s.state_vars[i], s.dynamics[i]);
  return simplify(Expr::sub(substitute(barrier, next), barrier));
}

std::vector<ProofObligation> build_obligations(const DynamicalSystem& s, const BarrierCandidate& c,
                                               const ObligationOptions& opts) {
  DynamicalSystem closed = close_loop(s, c);
  const Expr& b = c.barrier;
  std::vector<ProofObligation> out;
  out.push_back({ObligationKind::Init, closed.state_vars, closed.initial_set, std::nullopt, b,
                 Relation::Le, b});
  out.push_back({ObligationKind::Unsafe, closed.state_vars, closed.unsafe_set, std::nullopt, b,
                 Relation::Gt, b});
  if (closed.time_domain == TimeDomain::Continuous) {
    std::optional<Expr> zero;
    if (!opts.lie_everywhere) zero = b;
    out.push_back({ObligationKind::Invariance, closed.state_vars, closed.state_space, zero,
                   lie_derivative(b, closed), Relation::Lt, b});
  } else {
    out.push_back({ObligationKind::Invariance, closed.state_vars, closed.state_space, std::nullopt,
                   discrete_difference(b, closed), Relation::Le, b});
  }
  return out;
}

}  // namespace bcsynth

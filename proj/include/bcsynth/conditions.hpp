#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bcsynth/expr.hpp"
#include "bcsynth/system.hpp"

namespace bcsynth {

enum class CandidateSource { Retrieval, Fresh, Refined };

std::string_view to_string(CandidateSource s);

struct Origin {
  int iteration = 0;
  int refinement = 0;
  CandidateSource source = CandidateSource::Fresh;
};

struct BarrierCandidate {
  Expr barrier;
  std::map<std::string, Expr> controllers;  // control var -> u(x)
  Origin origin;
};

// Throws CandidateError unless the candidate fits the system: barrier and
// controllers over state variables only, every control variable bound, and no
// abs/sign in a continuous-time barrier.
void validate_candidate(const DynamicalSystem& s, const BarrierCandidate& c);

enum class ObligationKind { Init, Unsafe, Invariance };

std::string_view to_string(ObligationKind k);

// The claim is `lhs rel 0`.
enum class Relation { Le, Lt, Gt };

std::string_view to_string(Relation r);

bool holds(Relation r, double lhs);

struct ProofObligation {
  ObligationKind kind = ObligationKind::Init;
  std::vector<std::string> vars;
  Region domain;
  std::optional<Expr> on_zero_of;  // continuous invariance: only where B = 0
  Expr lhs;
  Relation relation = Relation::Le;
  Expr barrier;
};

DynamicalSystem close_loop(const DynamicalSystem& s, const BarrierCandidate& c);

Expr lie_derivative(const Expr& barrier, const DynamicalSystem& s);
Expr discrete_difference(const Expr& barrier, const DynamicalSystem& s);

struct ObligationOptions {
  // Continuous time: demand L_f B < 0 on all of X instead of only on B = 0.
  bool lie_everywhere = false;
};

// Always three obligations, in the order init, unsafe, invariance.
std::vector<ProofObligation> build_obligations(const DynamicalSystem& s, const BarrierCandidate& c,
                                               const ObligationOptions& opts = {});

}  // namespace bcsynth

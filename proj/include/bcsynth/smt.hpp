#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "bcsynth/conditions.hpp"
#include "bcsynth/error.hpp"
#include "bcsynth/system.hpp"
#include "bcsynth/taylor.hpp"

namespace bcsynth {

enum class SolverKind { Z3, Cvc5, Yices };

std::string_view to_string(SolverKind k);
std::optional<SolverKind> solver_from_name(std::string_view name);

struct SolverChoice {
  SolverKind name = SolverKind::Z3;
  int timeout_ms = 30000;
};

// Binaries found at startup. Overridable through BCS_Z3, BCS_CVC5, BCS_YICES.
class SolverRegistry {
 public:
  static SolverRegistry probe();
  // Keep only the named solvers (others dropped even if installed).
  SolverRegistry restricted(std::span<const SolverKind> keep) const;

  void set(SolverKind k, std::string binary) { binaries_[k] = std::move(binary); }
  bool available(SolverKind k) const { return binaries_.count(k) != 0; }
  const std::string& binary(SolverKind k) const { return binaries_.at(k); }
  std::vector<SolverKind> kinds() const;
  bool empty() const { return binaries_.empty(); }

 private:
  std::map<SolverKind, std::string> binaries_;
};

// Thrown when an obligation cannot be put into QF_NRA soundly.
class EncodingError : public Error {
 public:
  using Error::Error;
};

// A transcendental obligation over an unbounded region with no usable box:
// the candidate can only be checked by sampling.
class SampleOnlyError : public EncodingError {
 public:
  using EncodingError::EncodingError;
};

enum class TranscendentalPolicy { Reject, Taylor };

struct EncodeOptions {
  TranscendentalPolicy policy = TranscendentalPolicy::Taylor;
  int taylor_order = 7;
};

// SMT-LIB decimal: 17 significant digits, no exponent, negatives as (- d).
std::string smt_number(double v);

std::string region_to_formula(const Region& r, std::span<const std::string> vars);

// A box enclosing every point the obligation quantifies over, when one is
// needed for Taylor bounds. `needs_confirmation` marks boxes derived from the
// level set of B that must still be checked by the solver.
struct AssumptionBox {
  Box box;
  bool needs_confirmation = false;
};

std::optional<AssumptionBox> assumption_box(const ProofObligation& o);

struct EncodedObligation {
  std::string script;
  double remainder_bound = 0.0;
  std::optional<AssumptionBox> box;
  std::string confirmation_script;  // nonempty when box->needs_confirmation
};

EncodedObligation encode(const ProofObligation& o, const EncodeOptions& opts = {});
std::string encode_obligation(const ProofObligation& o, const EncodeOptions& opts = {});

enum class SolverStatus { Proved, Counterexample, Timeout, Error };

std::string_view to_string(SolverStatus s);

struct SolverResult {
  SolverStatus status = SolverStatus::Error;
  std::optional<std::vector<double>> model;
  std::string diagnostic;
  std::vector<std::string> warnings;
  double wall_ms = 0.0;
};

// Parses a get-model response into values for vars (absent vars read as 0).
std::vector<double> parse_model(std::string_view text, std::span<const std::string> vars,
                                std::vector<std::string>* warnings = nullptr);

SolverResult run_solver(const std::string& script, const SolverChoice& choice,
                        std::span<const std::string> vars, const SolverRegistry& registry);

// How far `point` lies on the wrong side of the claim while inside the
// assumption (>= 0 for a genuine counterexample).
double counterexample_margin(const ProofObligation& o, std::span<const double> point);

struct SolverQuery {
  std::string dynamics;
  std::string barrier;
};

// Decision points during formal checking; the LLM-backed implementation lives
// in the llm module.
struct SolverHooks {
  std::function<SolverKind(const SolverQuery&, const std::vector<SolverKind>& available)> select_solver;
  // Multiplier for a retry, nullopt to give up.
  std::function<std::optional<double>(const SolverQuery&, SolverKind, int timeout_ms)> timeout_retry;
  std::function<SolverKind(const SolverQuery&, SolverKind failed, const SolverResult&,
                           const std::vector<SolverKind>& remaining)>
      next_solver;
};

// z3 first (else the first available), never retry, next = first remaining.
SolverHooks default_hooks();

struct FormalOptions {
  int timeout_ms = 30000;
  int max_retries = 2;
  double max_multiplier = 4.0;
  EncodeOptions encode;
  ObligationOptions obligations;
};

struct Attempt {
  SolverKind solver = SolverKind::Z3;
  int timeout_ms = 0;
  SolverStatus status = SolverStatus::Error;
};

struct ObligationReport {
  ObligationKind kind = ObligationKind::Init;
  SolverResult result;
  std::optional<SolverKind> solver;  // the one that produced result
  std::vector<Attempt> attempts;
  double remainder_bound = 0.0;
  std::optional<double> margin;  // for counterexamples
  bool sample_only = false;      // refused: no sound encoding
};

struct FormalReport {
  std::vector<std::string> vars;
  std::vector<ObligationReport> obligations;
  bool valid = false;
  int smt_calls = 0;
  std::string feedback;
};

FormalReport formal_check(const DynamicalSystem& s, const BarrierCandidate& c, const SolverHooks& hooks,
                          const SolverRegistry& registry, const FormalOptions& opts = {});

nlohmann::json formal_report_to_json(const FormalReport& r);

}  // namespace bcsynth

#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bcsynth/agents.hpp"

namespace bcsynth {

enum class OutcomeStatus { Valid, BestPartial, ExhaustedNoCandidate };

std::string_view to_string(OutcomeStatus s);

struct Counters {
  int llm_calls = 0;
  int retrieval_calls = 0;  // similarity-ranking prompts
  int synthesis_calls = 0;  // candidate requests, including refinements
  int sample_checks = 0;
  int formal_checks = 0;
  int smt_calls = 0;
};

struct SynthesisOutcome {
  OutcomeStatus status = OutcomeStatus::ExhaustedNoCandidate;
  std::optional<BarrierCandidate> candidate;
  double score = 0.0;
  int iteration = 0;   // of the returned candidate
  int refinement = 0;
  Counters counters;
  bool timed_out = false;
  std::optional<FormalReport> formal;
  double wall_ms = 0.0;
};

struct RunConfig {
  int K = 5;
  int R = 4;
  VerifyConfig verify;
  double global_timeout_s = 1200.0;
};

// Deterministic event stream of one run (no timestamps or durations).
class RunLog {
 public:
  void add(nlohmann::json event) { events_.push_back(std::move(event)); }
  const std::vector<nlohmann::json>& events() const { return events_; }
  std::string jsonl() const;

 private:
  std::vector<nlohmann::json> events_;
};

SynthesisOutcome run(const DynamicalSystem& s, const RunConfig& cfg, Database& db, Llm& llm,
                     const SolverRegistry& registry, RunLog* log = nullptr);

// Retrieval reads `lookup`; a valid certificate is stored into `store`.
SynthesisOutcome run(const DynamicalSystem& s, const RunConfig& cfg, const Database& lookup, Database& store,
                     Llm& llm, const SolverRegistry& registry, RunLog* log = nullptr);

// Result document; wall time is left out so that replays compare equal.
nlohmann::json outcome_to_json(const SynthesisOutcome& o, const DynamicalSystem& s);

}  // namespace bcsynth

#pragma once

#include <cstddef>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bcsynth/conditions.hpp"
#include "bcsynth/llm.hpp"
#include "bcsynth/sampler.hpp"
#include "bcsynth/smt.hpp"
#include "bcsynth/system.hpp"

namespace bcsynth {

struct SolvedRecord {
  ProblemFeatures features;
  std::string summary;  // dynamics and sets in prompt wording
  std::string barrier;
  std::vector<std::string> controllers;  // in control-variable order
  std::string timestamp;
  nlohmann::json system;
};

// "Dynamics: ...; Initial set: ...; Unsafe set: ..."
std::string system_summary(const DynamicalSystem& s);

SolvedRecord make_record(const DynamicalSystem& s, const BarrierCandidate& c, std::string timestamp = "");

nlohmann::json record_to_json(const SolvedRecord& r);
SolvedRecord record_from_json(const nlohmann::json& j);

// Append-only line-delimited store of solved problems. An empty path keeps
// everything in memory.
class Database {
 public:
  Database() = default;
  explicit Database(std::string path);
  explicit Database(std::vector<SolvedRecord> records) : records_(std::move(records)) {}  // in memory

  std::vector<SolvedRecord> records() const;
  std::vector<SolvedRecord> matching(const ProblemFeatures& f) const;
  void store(const SolvedRecord& r);
  std::size_t size() const;
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::vector<SolvedRecord> records_;
  mutable std::mutex mu_;
};

struct Retrieval {
  SolvedRecord record;
  std::string rationale;
};

std::optional<Retrieval> retrieve(const DynamicalSystem& s, const Database& db, Llm& llm);

enum class Phase { First, Next, RefineCoeff, RefineStruct };

std::string_view to_string(Phase p);

struct AttemptSummary {
  std::string barrier;
  std::string controller;  // comma-separated, empty when uncontrolled
  std::string failed_info;
};

struct SynthesisRequest {
  Phase phase = Phase::First;
  std::optional<RetrievedExample> context;       // First
  std::vector<AttemptSummary> previous;          // Next
  std::optional<BarrierCandidate> original;      // refinements
  std::string original_failed_info;              // refinements
  std::vector<AttemptSummary> refinements;       // earlier refinements of `original`
  Origin origin;
};

struct SynthesisResult {
  std::optional<BarrierCandidate> candidate;
  std::string error;  // why no candidate was produced
  PromptInstance prompt;
};

TemplateId template_for(Phase p, bool controlled);

PromptInstance synthesis_prompt(const DynamicalSystem& s, const SynthesisRequest& req);

// One re-ask on an unusable reply (unparseable, or a refine_coeff reply whose
// barrier changes the term structure).
SynthesisResult synthesize_candidate(const DynamicalSystem& s, const SynthesisRequest& req, Llm& llm);

std::string controller_text(const BarrierCandidate& c, const DynamicalSystem& s);

struct FeedbackPoint {
  ObligationKind kind = ObligationKind::Init;
  std::vector<double> point;
  double value = 0.0;
};

enum class FeedbackPhase { None, Sample, Formal };

std::string_view to_string(FeedbackPhase p);

struct Feedback {
  FeedbackPhase phase = FeedbackPhase::None;
  std::vector<std::string> failed;  // obligation names, or "unparseable"
  std::vector<FeedbackPoint> counterexamples;
  std::size_t counterexample_count = 0;
  double score = 0.0;
  std::string text;

  bool empty() const { return failed.empty(); }
  std::string failed_info() const;
};

Feedback unparseable_feedback(const std::string& error);

struct VerifyConfig {
  SampleOptions sample;
  FormalOptions formal;
};

struct Verification {
  SampleReport sample;
  std::optional<FormalReport> formal;
  Feedback feedback;
};

// Sample gate first; the formal stage runs only on a passing sample.
Verification verify_candidate(const DynamicalSystem& s, const BarrierCandidate& c, const VerifyConfig& cfg,
                              const SolverHooks& hooks, const SolverRegistry& registry);

// Fraction of obligations satisfied at the deepest stage reached.
double score(const SampleReport& sample, const std::optional<FormalReport>& formal);

}  // namespace bcsynth

#pragma once

#include <atomic>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "bcsynth/conditions.hpp"
#include "bcsynth/error.hpp"
#include "bcsynth/smt.hpp"
#include "bcsynth/system.hpp"

namespace bcsynth {

enum class TemplateId {
  SimilaritySelect,
  SynthFirst,
  SynthFirstCtrl,
  SynthNext,
  SynthNextCtrl,
  RefineCoeff,
  RefineCoeffCtrl,
  RefineStruct,
  RefineStructCtrl,
  SolverSelect,
  TimeoutRetry,
  SolverError,
};

inline constexpr TemplateId kAllTemplates[] = {
    TemplateId::SimilaritySelect, TemplateId::SynthFirst,      TemplateId::SynthFirstCtrl,
    TemplateId::SynthNext,        TemplateId::SynthNextCtrl,   TemplateId::RefineCoeff,
    TemplateId::RefineCoeffCtrl,  TemplateId::RefineStruct,    TemplateId::RefineStructCtrl,
    TemplateId::SolverSelect,     TemplateId::TimeoutRetry,    TemplateId::SolverError,
};

std::string_view to_string(TemplateId id);
std::optional<TemplateId> template_from_name(std::string_view name);

// Raw template text with {NAME} placeholders.
std::string_view template_text(TemplateId id);
std::vector<std::string> template_placeholders(TemplateId id);

class TemplateError : public Error {
 public:
  using Error::Error;
};

struct PromptInstance {
  TemplateId template_id = TemplateId::SynthFirst;
  std::string text;
  std::map<std::string, std::string> variables;
};

// Throws TemplateError when a placeholder has no value.
PromptInstance render(TemplateId id, const std::map<std::string, std::string>& variables);

std::string condition_3(TimeDomain t);

struct RetrievedExample {
  std::string problem;
  std::string barrier;
};

std::string context_text(const std::optional<RetrievedExample>& example);

// "failed: init, invariance (12 counter-examples)"
std::string failed_info(const std::vector<std::string>& failed, std::size_t counterexamples);

std::string sha256_hex(std::string_view text);

// "2026-01-31T12:00:00Z"
std::string utc_timestamp();

class LlmError : public Error {
 public:
  using Error::Error;
};

class CassetteMissError : public LlmError {
 public:
  explicit CassetteMissError(const std::string& hash)
      : LlmError("cassette has no response for prompt " + hash), hash_(hash) {}
  const std::string& hash() const noexcept { return hash_; }

 private:
  std::string hash_;
};

// A reply that does not follow the requested format.
class ReplyParseError : public LlmError {
 public:
  using LlmError::LlmError;
};

struct Completion {
  std::string text;
  std::string model;
};

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual Completion complete(const PromptInstance& p) = 0;
  // False when responses come from storage (wall time is then reported as 0).
  virtual bool live() const { return true; }
};

struct LiveConfig {
  std::string url;  // full chat-completions endpoint
  std::string api_key;
  std::string model;
  std::string flavor = "openai";  // or "anthropic"
  double temperature = 0.0;
  int timeout_s = 120;
  int max_tokens = 2048;

  // BCS_LLM_URL, BCS_LLM_API_KEY, BCS_LLM_MODEL, BCS_LLM_FLAVOR.
  static std::optional<LiveConfig> from_env();
};

std::unique_ptr<LlmClient> make_live_client(const LiveConfig& cfg);

// Canned replies per template, e.g.
//   {"model": "mock", "responses": {"synth_first": ["BARRIER: x1^2 - 1"], ...}}
// Each template's list is consumed in order; the last reply repeats once the
// list is exhausted.
class ScriptedClient : public LlmClient {
 public:
  explicit ScriptedClient(const nlohmann::json& script);
  static std::unique_ptr<ScriptedClient> from_file(const std::string& path);

  Completion complete(const PromptInstance& p) override;
  bool live() const override { return false; }

 private:
  std::string model_ = "scripted";
  std::map<TemplateId, std::vector<std::string>> replies_;
  std::map<TemplateId, std::size_t> cursor_;
  std::mutex mu_;
};

struct CassetteEntry {
  std::string prompt_sha256;
  std::string prompt;
  std::string response;
  std::string model;
  std::string timestamp;
};

// Line-delimited prompt/response store keyed by the SHA-256 of the prompt.
class Cassette {
 public:
  Cassette() = default;
  explicit Cassette(std::string path);  // loads the file if it exists

  // Successive lookups of one hash walk its recorded responses in order and
  // repeat the last one when they run out.
  std::optional<CassetteEntry> next(const std::string& hash);
  void append(const CassetteEntry& e);  // in memory and, with a path, on disk
  std::size_t size() const;
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::vector<CassetteEntry> entries_;
  std::map<std::string, std::vector<std::size_t>> index_;
  std::map<std::string, std::size_t> cursor_;
  mutable std::mutex mu_;
};

class ReplayClient : public LlmClient {
 public:
  explicit ReplayClient(std::shared_ptr<Cassette> cassette) : cassette_(std::move(cassette)) {}
  Completion complete(const PromptInstance& p) override;
  bool live() const override { return false; }

 private:
  std::shared_ptr<Cassette> cassette_;
};

class RecordingClient : public LlmClient {
 public:
  RecordingClient(std::unique_ptr<LlmClient> inner, std::shared_ptr<Cassette> cassette)
      : inner_(std::move(inner)), cassette_(std::move(cassette)) {}
  Completion complete(const PromptInstance& p) override;
  bool live() const override { return inner_->live(); }

 private:
  std::unique_ptr<LlmClient> inner_;
  std::shared_ptr<Cassette> cassette_;
};

struct TranscriptEntry {
  TemplateId template_id = TemplateId::SynthFirst;
  std::string prompt_sha256;
  std::string prompt;
  std::string response;
  std::string model;
  double wall_ms = 0.0;
};

class Transcript {
 public:
  void append(TranscriptEntry e);
  std::vector<TranscriptEntry> entries() const;
  std::size_t size() const;

 private:
  std::vector<TranscriptEntry> entries_;
  mutable std::mutex mu_;
};

nlohmann::json transcript_to_json(const Transcript& t);

// Client plus the per-run transcript and call counter.
class Llm {
 public:
  explicit Llm(std::shared_ptr<LlmClient> client) : client_(std::move(client)) {}

  std::string ask(const PromptInstance& p);
  int calls() const { return calls_.load(); }
  const Transcript& transcript() const { return transcript_; }

 private:
  std::shared_ptr<LlmClient> client_;
  Transcript transcript_;
  std::atomic<int> calls_{0};
};

// Reads BARRIER:/CONTROLLER: (REFINED_BARRIER:/REFINED_CONTROLLER: when
// refined). Throws ReplyParseError.
BarrierCandidate parse_candidate(std::string_view response, const DynamicalSystem& s, bool refined);

// "BARRIER: ...\nCONTROLLER: ..." in the form parse_candidate reads back.
std::string print_candidate(const BarrierCandidate& c, const DynamicalSystem& s, bool refined = false);

int parse_candidate_number(std::string_view response);
SolverKind parse_solver_name(std::string_view response, std::string_view tag,
                             const std::vector<SolverKind>& allowed);

struct RetryDecision {
  bool retry = false;
  std::optional<double> multiplier;
};

RetryDecision parse_retry_decision(std::string_view response);

// Solver decisions made by asking the model (Prompt texts solver_select,
// timeout_retry, solver_error), one re-ask before each fallback.
SolverHooks llm_solver_hooks(Llm& llm);

}  // namespace bcsynth

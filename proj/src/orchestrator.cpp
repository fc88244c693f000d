#include "bcsynth/orchestrator.hpp"

#include <chrono>

namespace bcsynth {

std::string_view to_string(OutcomeStatus s) {
  switch (s) {
    case OutcomeStatus::Valid: return "valid";
    case OutcomeStatus::BestPartial: return "best_partial";
    case OutcomeStatus::ExhaustedNoCandidate: return "exhausted_no_candidate";
  }
  return "?";
}

std::string RunLog::jsonl() const {
  std::string out;
  for (const auto& e : events_) out += e.dump() + "\n";
  return out;
}

namespace {

nlohmann::json candidate_json(const BarrierCandidate& c) {
  nlohmann::json ctrl = nlohmann::json::object();
  for (const auto& [u, e] : c.controllers) ctrl[u] = e.str();
  return {{"barrier", c.barrier.str()}, {"controllers", ctrl}};
}

class Runner {
 public:
  Runner(const DynamicalSystem& s, const RunConfig& cfg, const Database& lookup, Database& store, Llm& llm,
         const SolverRegistry& registry, RunLog* log)
      : s_(s), cfg_(cfg), lookup_(lookup), store_(store), llm_(llm), registry_(registry), log_(log), hooks_(llm_solver_hooks(llm)),
        start_(std::chrono::steady_clock::now()), llm_calls0_(llm.calls()) {}

  SynthesisOutcome run() {
    emit({{"event", "start"}, {"system", s_.name}, {"K", cfg_.K}, {"R", cfg_.R},
          {"seed", cfg_.verify.sample.seed}, {"samples", cfg_.verify.sample.n}});
    std::vector<AttemptSummary> history;
    for (int k = 1; k <= cfg_.K && !done_; ++k) {
      if (out_of_time()) break;
      SynthesisRequest req;
      req.origin = {k, 0, CandidateSource::Fresh};
      if (k == 1) {
        req.phase = Phase::First;
        int before = llm_.calls();
        auto found = retrieve(s_, lookup_, llm_);
        out_.counters.retrieval_calls += llm_.calls() - before;
        emit({{"event", "retrieval"}, {"k", k}, {"found", found.has_value()},
              {"rationale", found ? found->rationale : "no record with matching features"}});
        if (found) {
          req.context = RetrievedExample{found->record.summary, found->record.barrier};
          req.origin.source = CandidateSource::Retrieval;
        }
      } else {
        req.phase = Phase::Next;
        req.previous = history;
      }

      auto main = attempt(req, k, 0);
      if (done_) break;
      if (main.summary) history.push_back(*main.summary);
      if (!main.formal_failed) continue;

      std::vector<AttemptSummary> refinements;
      for (int r = 1; r <= cfg_.R && !done_; ++r) {
        if (out_of_time()) break;
        SynthesisRequest ref;
        ref.phase = r <= 2 ? Phase::RefineCoeff : Phase::RefineStruct;
        ref.original = main.candidate;
        ref.original_failed_info = main.summary->failed_info;
        ref.refinements = refinements;
        ref.origin = {k, r, CandidateSource::Refined};
        auto res = attempt(ref, k, r);
        if (res.summary) {
          refinements.push_back(*res.summary);
          history.push_back(*res.summary);
        }
      }
      if (out_of_time()) break;
    }
    return finish();
  }

 private:
  struct AttemptResult {
    std::optional<BarrierCandidate> candidate;
    std::optional<AttemptSummary> summary;
    bool formal_failed = false;
  };

  AttemptResult attempt(const SynthesisRequest& req, int k, int r) {
    AttemptResult res;
    ++out_.counters.synthesis_calls;
    auto syn = synthesize_candidate(s_, req, llm_);
    if (!syn.candidate) {
      Feedback f = unparseable_feedback(syn.error);
      emit({{"event", "unparseable"}, {"k", k}, {"r", r}, {"phase", to_string(req.phase)}, {"error", syn.error}});
      res.summary = AttemptSummary{"(unparseable reply)", "", f.failed_info()};
      return res;
    }
    const BarrierCandidate& c = *syn.candidate;
    res.candidate = c;
    nlohmann::json ev = {{"event", "candidate"}, {"k", k}, {"r", r}, {"phase", to_string(req.phase)},
                         {"source", to_string(c.origin.source)}};
    ev.update(candidate_json(c));
    emit(ev);

    ++out_.counters.sample_checks;
    Verification v = verify_candidate(s_, c, cfg_.verify, hooks_, registry_);
    double sc = score(v.sample, v.formal);
    std::vector<std::string> failed;
    for (const auto& o : v.sample.obligations)
      if (!o.passed) failed.emplace_back(to_string(o.kind));
    emit({{"event", "sample"}, {"k", k}, {"r", r}, {"passed", v.sample.passed()},
          {"score", score(v.sample, std::nullopt)}, {"failed", failed}});
    if (v.formal) {
      ++out_.counters.formal_checks;
      out_.counters.smt_calls += v.formal->smt_calls;
      nlohmann::json statuses = nlohmann::json::object();
      for (const auto& o : v.formal->obligations) statuses[std::string(to_string(o.kind))] = to_string(o.result.status);
      emit({{"event", "formal"}, {"k", k}, {"r", r}, {"valid", v.formal->valid}, {"score", sc},
            {"smt_calls", v.formal->smt_calls}, {"status", statuses}});
    }
    const Feedback& f = v.feedback;
    if (!f.text.empty()) emit({{"event", "feedback"}, {"k", k}, {"r", r}, {"text", f.text}});

    consider(c, sc, k, r, v.formal);
    if (v.formal && v.formal->valid) {
      store_.store(make_record(s_, c, utc_timestamp()));
      out_.status = OutcomeStatus::Valid;
      out_.candidate = c;
      out_.score = 1.0;
      out_.iteration = k;
      out_.refinement = r;
      out_.formal = v.formal;
      done_ = true;
      return res;
    }
    res.summary = AttemptSummary{c.barrier.str(), controller_text(c, s_), f.failed_info()};
    res.formal_failed = v.formal.has_value();
    return res;
  }

  void consider(const BarrierCandidate& c, double sc, int k, int r, const std::optional<FormalReport>& formal) {
    if (best_ && sc <= best_score_) return;
    best_ = c;
    best_score_ = sc;
    best_k_ = k;
    best_r_ = r;
    best_formal_ = formal;
  }

  bool out_of_time() {
    if (out_.timed_out) return true;
    double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    if (elapsed <= cfg_.global_timeout_s) return false;
    out_.timed_out = true;
    emit({{"event", "global_timeout"}, {"limit_s", cfg_.global_timeout_s}});
    return true;
  }

  SynthesisOutcome finish() {
    if (!done_) {
      if (best_) {
        out_.status = OutcomeStatus::BestPartial;
        out_.candidate = best_;
        out_.score = best_score_;
        out_.iteration = best_k_;
        out_.refinement = best_r_;
        out_.formal = best_formal_;
      } else {
        out_.status = OutcomeStatus::ExhaustedNoCandidate;
      }
    }
    out_.counters.llm_calls = llm_.calls() - llm_calls0_;
    out_.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
    nlohmann::json ev = {{"event", "result"}, {"system", s_.name}, {"status", to_string(out_.status)},
                         {"score", out_.score}, {"k", out_.iteration}, {"r", out_.refinement},
                         {"timed_out", out_.timed_out}};
    if (out_.candidate) ev.update(candidate_json(*out_.candidate));
    emit(ev);
    return out_;
  }

  void emit(nlohmann::json ev) {
    if (log_) log_->add(std::move(ev));
  }

  const DynamicalSystem& s_;
  const RunConfig& cfg_;
  const Database& lookup_;
  Database& store_;
  Llm& llm_;
  const SolverRegistry& registry_;
  RunLog* log_;
  SolverHooks hooks_;
  std::chrono::steady_clock::time_point start_;
  int llm_calls0_;

  SynthesisOutcome out_;
  bool done_ = false;
  std::optional<BarrierCandidate> best_;
  double best_score_ = -1.0;
  int best_k_ = 0, best_r_ = 0;
  std::optional<FormalReport> best_formal_;
};

}  // namespace

SynthesisOutcome run(const DynamicalSystem& s, const RunConfig& cfg, Database& db, Llm& llm,
                     const SolverRegistry& registry, RunLog* log) {
  return run(s, cfg, db, db, llm, registry, log);
}

SynthesisOutcome run(const DynamicalSystem& s, const RunConfig& cfg, const Database& lookup, Database& store,
                     Llm& llm, const SolverRegistry& registry, RunLog* log) {
  if (cfg.K < 1 || cfg.R < 0) throw ConfigError("K must be at least 1 and R nonnegative");
  return Runner(s, cfg, lookup, store, llm, registry, log).run();
}

nlohmann::json outcome_to_json(const SynthesisOutcome& o, const DynamicalSystem& s) {
  nlohmann::json j = {{"system", s.name},
                      {"status", to_string(o.status)},
                      {"score", o.score},
                      {"iteration", o.iteration},
                      {"refinement", o.refinement},
                      {"timed_out", o.timed_out},
                      {"counters",
                       {{"llm_calls", o.counters.llm_calls},
                        {"retrieval_calls", o.counters.retrieval_calls},
                        {"synthesis_calls", o.counters.synthesis_calls},
                        {"sample_checks", o.counters.sample_checks},
                        {"formal_checks", o.counters.formal_checks},
                        {"smt_calls", o.counters.smt_calls}}}};
  if (o.candidate) {
    j["barrier"] = o.candidate->barrier.str();
    nlohmann::json ctrl = nlohmann::json::object();
    for (const auto& [u, e] : o.candidate->controllers) ctrl[u] = e.str();
    j["controllers"] = ctrl;
    j["source"] = to_string(o.candidate->origin.source);
  }
  if (o.formal) j["formal"] = formal_report_to_json(*o.formal);
  return j;
}

}  // namespace bcsynth

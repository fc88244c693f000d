#include "bcsynth/agents.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace bcsynth {

std::string system_summary(const DynamicalSystem& s) {
  return "Dynamics: " + describe_dynamics(s) + "; Initial set: " + describe_region(s.initial_set) +
         "; Unsafe set: " + describe_region(s.unsafe_set);
}

std::string controller_text(const BarrierCandidate& c, const DynamicalSystem& s) {
  std::string out;
  for (const auto& u : s.control_vars) {
    if (!out.empty()) out += ", ";
    auto it = c.controllers.find(u);
    out += it == c.controllers.end() ? "?" : it->second.str();
  }
  return out;
}

SolvedRecord make_record(const DynamicalSystem& s, const BarrierCandidate& c, std::string timestamp) {
  SolvedRecord r;
  r.features = extract_features(s);
  r.summary = system_summary(s);
  r.barrier = c.barrier.str();
  for (const auto& u : s.control_vars) r.controllers.push_back(c.controllers.at(u).str());
  r.timestamp = std::move(timestamp);
  r.system = system_to_json(s);
  return r;
}

nlohmann::json record_to_json(const SolvedRecord& r) {
  return {{"features", features_to_json(r.features)},
          {"summary", r.summary},
          {"barrier", r.barrier},
          {"controllers", r.controllers},
          {"timestamp", r.timestamp},
          {"system", r.system}};
}

SolvedRecord record_from_json(const nlohmann::json& j) {
  SolvedRecord r;
  try {
    r.system = j.at("system");
    DynamicalSystem s = parse_system(r.system);
    r.features = features_from_json(j.at("features"));
    if (!(r.features == extract_features(s)))
      throw SchemaError("/features", "stored features do not match the stored system");
    r.summary = j.value("summary", system_summary(s));
    r.barrier = j.at("barrier").get<std::string>();
    parse_expression(r.barrier, s.state_vars);
    r.controllers = j.value("controllers", std::vector<std::string>{});
    if (r.controllers.size() != s.control_vars.size())
      throw SchemaError("/controllers", "expected " + std::to_string(s.control_vars.size()) + " controllers");
    for (const auto& c : r.controllers) parse_expression(c, s.state_vars);
    r.timestamp = j.value("timestamp", "");
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("/", std::string("bad record: ") + e.what());
  }
  return r;
}

Database::Database(std::string path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (!in) return;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      records_.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path_ + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw ConfigError(path_ + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::vector<SolvedRecord> Database::records() const {
  std::lock_guard lock(mu_);
  return records_;
}

std::vector<SolvedRecord> Database::matching(const ProblemFeatures& f) const {
  std::lock_guard lock(mu_);
  std::vector<SolvedRecord> out;
  for (const auto& r : records_)
    if (r.features == f) out.push_back(r);
  return out;
}

void Database::store(const SolvedRecord& r) {
  std::lock_guard lock(mu_);
  if (!path_.empty()) {
    std::ofstream out(path_, std::ios::app);
    if (!out) throw Error("cannot write database " + path_);
    out << record_to_json(r).dump() << "\n";
  }
  records_.push_back(r);
}

std::size_t Database::size() const {
  std::lock_guard lock(mu_);
  return records_.size();
}

std::optional<Retrieval> retrieve(const DynamicalSystem& s, const Database& db, Llm& llm) {
  auto shortlist = db.matching(extract_features(s));
  if (shortlist.empty()) return std::nullopt;
  if (shortlist.size() == 1) return Retrieval{shortlist.front(), "only record with matching features"};

  std::string candidates;
  for (std::size_t i = 0; i < shortlist.size(); ++i) {
    if (i) candidates += "\n";
    candidates += "Candidate " + std::to_string(i + 1) + ": " + shortlist[i].summary;
  }
  auto p = render(TemplateId::SimilaritySelect, {{"SYSTEM_DYNAMICS", describe_dynamics(s)},
                                                 {"INITIAL_SET", describe_region(s.initial_set)},
                                                 {"UNSAFE_SET", describe_region(s.unsafe_set)},
                                                 {"CANDIDATES_TEXT", candidates}});
  for (int attempt = 0; attempt < 2; ++attempt) {
    try {
      int k = parse_candidate_number(llm.ask(p));
      if (static_cast<std::size_t>(k) > shortlist.size())
        throw ReplyParseError("candidate " + std::to_string(k) + " out of range");
      return Retrieval{shortlist[static_cast<std::size_t>(k - 1)],
                       "ranked " + std::to_string(k) + " of " + std::to_string(shortlist.size())};
    } catch (const ReplyParseError&) {
    }
  }
  return Retrieval{shortlist.front(), "no usable ranking reply; first of " + std::to_string(shortlist.size())};
}

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::First: return "first";
    case Phase::Next: return "next";
    case Phase::RefineCoeff: return "refine_coeff";
    case Phase::RefineStruct: return "refine_struct";
  }
  return "?";
}

TemplateId template_for(Phase p, bool controlled) {
  switch (p) {
    case Phase::First: return controlled ? TemplateId::SynthFirstCtrl : TemplateId::SynthFirst;
    case Phase::Next: return controlled ? TemplateId::SynthNextCtrl : TemplateId::SynthNext;
    case Phase::RefineCoeff: return controlled ? TemplateId::RefineCoeffCtrl : TemplateId::RefineCoeff;
    case Phase::RefineStruct: return controlled ? TemplateId::RefineStructCtrl : TemplateId::RefineStruct;
  }
  return TemplateId::SynthFirst;
}

PromptInstance synthesis_prompt(const DynamicalSystem& s, const SynthesisRequest& req) {
  const bool ctrl = s.controlled();
  std::map<std::string, std::string> v{{"SYSTEM_DYNAMICS", describe_dynamics(s)},
                                       {"INITIAL_SET", describe_region(s.initial_set)},
                                       {"UNSAFE_SET", describe_region(s.unsafe_set)},
                                       {"CONDITION_3", condition_3(s.time_domain)}};
  if (ctrl) {
    std::string params;
    for (const auto& u : s.control_vars) params += (params.empty() ? "" : ", ") + u;
    v["CONTROLLER_PARAMETERS"] = params;
  }
  switch (req.phase) {
    case Phase::First:
      v["CONTEXT"] = context_text(req.context);
      break;
    case Phase::Next: {
      std::string lines;
      for (const auto& a : req.previous) {
        if (!lines.empty()) lines += "\n";
        lines += ctrl ? "- Barrier: " + a.barrier + ", Controller: " + a.controller + ", " + a.failed_info
                      : "- Tried: " + a.barrier + " " + a.failed_info;
      }
      v["PREVIOUS_ATTEMPTS"] = lines;
      break;
    }
    case Phase::RefineCoeff:
    case Phase::RefineStruct: {
      if (!req.original) throw Error("refinement requested without an original candidate");
      v["BARRIER"] = req.original->barrier.str();
      if (ctrl) v["CONTROLLER"] = controller_text(*req.original, s);
      v["FAILED_INFO"] = req.original_failed_info;
      std::string hist;
      for (std::size_t i = 0; i < req.refinements.size(); ++i) {
        const auto& a = req.refinements[i];
        if (!hist.empty()) hist += "\n";
        hist += "Refinement " + std::to_string(i + 1) + ": " + a.barrier +
                (ctrl ? ", Controller: " + a.controller + "," : "") + " " + a.failed_info;
      }
      v["REFINEMENT_HISTORY"] = hist;
      break;
    }
  }
  return render(template_for(req.phase, ctrl), v);
}

SynthesisResult synthesize_candidate(const DynamicalSystem& s, const SynthesisRequest& req, Llm& llm) {
  SynthesisResult out;
  out.prompt = synthesis_prompt(s, req);
  const bool refined = req.phase == Phase::RefineCoeff || req.phase == Phase::RefineStruct;
  for (int attempt = 0; attempt < 2; ++attempt) {
    std::string reply = llm.ask(out.prompt);
    try {
      BarrierCandidate c = parse_candidate(reply, s, refined);
      if (req.phase == Phase::RefineCoeff && term_skeleton(c.barrier) != term_skeleton(req.original->barrier))
        throw ReplyParseError("coefficient refinement changed the barrier structure");
      c.origin = req.origin;
      out.candidate = std::move(c);
      out.error.clear();
      return out;
    } catch (const ReplyParseError& e) {
      out.error = e.what();
    }
  }
  return out;
}

std::string_view to_string(FeedbackPhase p) {
  switch (p) {
    case FeedbackPhase::None: return "none";
    case FeedbackPhase::Sample: return "sample";
    case FeedbackPhase::Formal: return "formal";
  }
  return "?";
}

std::string Feedback::failed_info() const { return bcsynth::failed_info(failed, counterexample_count); }

Feedback unparseable_feedback(const std::string& error) {
  Feedback f;
  f.failed = {"unparseable"};
  f.text = "unparseable: " + error;
  return f;
}

double score(const SampleReport& sample, const std::optional<FormalReport>& formal) {
  int ok = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    bool pass;
    if (formal && i < formal->obligations.size())
      pass = formal->obligations[i].result.status == SolverStatus::Proved;
    else
      pass = i < sample.obligations.size() && sample.obligations[i].passed;
    if (pass) ++ok;
  }
  return ok / 3.0;
}

namespace {

std::string point_text(const std::vector<std::string>& vars, const std::vector<double>& p) {
  std::string out;
  for (std::size_t i = 0; i < vars.size() && i < p.size(); ++i)
    out += (i ? ", " : "") + vars[i] + " = " + format_number(p[i]);
  return out;
}

}  // namespace

Verification verify_candidate(const DynamicalSystem& s, const BarrierCandidate& c, const VerifyConfig& cfg,
                              const SolverHooks& hooks, const SolverRegistry& registry) {
  Verification v;
  v.sample = sample_check(s, c, cfg.sample);
  Feedback& f = v.feedback;
  if (!v.sample.passed()) {
    f.phase = FeedbackPhase::Sample;
    for (const auto& o : v.sample.obligations) {
      if (o.passed) continue;
      std::string name(to_string(o.kind));
      f.failed.push_back(name);
      f.counterexample_count += o.violation_count;
      std::string line = name + ": " + std::to_string(o.violation_count) + " of " + std::to_string(o.checked) +
                         " sampled points violate the condition";
      if (!o.violations.empty()) {
        const auto& w = o.violations.front();
        line += ", e.g. " + point_text(v.sample.vars, w.point) + " (value " +
                (std::isfinite(w.value) ? format_number(w.value) : std::string("undefined")) + ")";
      }
      for (const auto& w : o.violations) f.counterexamples.push_back({o.kind, w.point, w.value});
      f.text += (f.text.empty() ? "" : "\n") + line;
    }
    f.score = score(v.sample, std::nullopt);
    return v;
  }

  v.formal = formal_check(s, c, hooks, registry, cfg.formal);
  if (!v.formal->valid) {
    f.phase = FeedbackPhase::Formal;
    auto obligations = build_obligations(s, c, cfg.formal.obligations);
    for (std::size_t i = 0; i < v.formal->obligations.size(); ++i) {
      const auto& o = v.formal->obligations[i];
      if (o.result.status == SolverStatus::Proved) continue;
      f.failed.emplace_back(to_string(o.kind));
      if (o.result.status == SolverStatus::Counterexample && o.result.model) {
        ++f.counterexample_count;
        double value = std::numeric_limits<double>::quiet_NaN();
        Point p;
        for (std::size_t j = 0; j < s.state_vars.size(); ++j) p[s.state_vars[j]] = (*o.result.model)[j];
        try {
          value = evaluate(obligations[i].lhs, p);
        } catch (const EvaluationError&) {
        }
        f.counterexamples.push_back({o.kind, *o.result.model, value});
      }
    }
    f.text = v.formal->feedback;
  }
  f.score = score(v.sample, v.formal);
  return v;
}

}  // namespace bcsynth

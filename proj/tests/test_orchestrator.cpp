#include <gtest/gtest.h>

#include "support.hpp"

using namespace bcsynth;
using testing_support::seed_system;
using testing_support::z3_registry;

namespace {

std::shared_ptr<ScriptedClient> script(const nlohmann::json& responses) {
  return std::make_shared<ScriptedClient>(nlohmann::json{{"model", "mock"}, {"responses", responses}});
}

nlohmann::json every_phase(const std::string& barrier) {
  return {{"synth_first", {"BARRIER: " + barrier}},
          {"synth_next", {"BARRIER: " + barrier}},
          {"refine_coeff", {"REFINED_BARRIER: " + barrier}},
          {"refine_struct", {"REFINED_BARRIER: " + barrier}},
          {"similarity_select", {"1"}},
          {"solver_select", {"SOLVER: z3"}},
          {"timeout_retry", {"RETRY: no"}},
          {"solver_error", {"NEXT_SOLVER: z3"}}};
}

struct Run {
  SynthesisOutcome outcome;
  RunLog log;
  int llm_calls = 0;
};

Run run_script(const DynamicalSystem& s, const nlohmann::json& responses, Database& db, RunConfig cfg = {}) {
  Llm llm(script(responses));
  Run r;
  r.outcome = run(s, cfg, db, llm, z3_registry(), &r.log);
  r.llm_calls = llm.calls();
  return r;
}

int count_events(const RunLog& log, const std::string& name) {
  int n = 0;
  for (const auto& e : log.events()) n += e.at("event") == name;
  return n;
}

}  // namespace

TEST(Orchestrator, AlwaysSampleFail) {
  Database db;
  auto r = run_script(seed_system("dt2d_linear"), every_phase("-1"), db);
  const auto& c = r.outcome.counters;
  EXPECT_EQ(c.synthesis_calls, 5);
  EXPECT_EQ(c.sample_checks, 5);
  EXPECT_EQ(c.formal_checks, 0);
  EXPECT_EQ(c.smt_calls, 0);
  EXPECT_EQ(r.outcome.status, OutcomeStatus::BestPartial);
  EXPECT_DOUBLE_EQ(r.outcome.score, 2.0 / 3.0);
  EXPECT_EQ(r.outcome.iteration, 1);
  EXPECT_EQ(r.outcome.refinement, 0);
  EXPECT_EQ(db.size(), 0u);
  EXPECT_EQ(count_events(r.log, "candidate"), 5);
}

TEST(Orchestrator, SamplePassFormalFail) {
  if (z3_registry().empty()) GTEST_SKIP() << "no solver";
  Database db;
  auto r = run_script(seed_system("dt2d_linear"), every_phase("x1^2 + x2^2 - 0.462"), db);
  const auto& c = r.outcome.counters;
  EXPECT_EQ(c.synthesis_calls, 25);
  EXPECT_EQ(c.formal_checks, 25);
  EXPECT_EQ(c.sample_checks, 25);
  EXPECT_EQ(c.smt_calls, 75);
  EXPECT_EQ(count_events(r.log, "candidate"), 25);
  EXPECT_EQ(r.outcome.status, OutcomeStatus::BestPartial);
  EXPECT_DOUBLE_EQ(r.outcome.score, 2.0 / 3.0);
  EXPECT_EQ(db.size(), 0u);

  // Phases in order: main candidate, then two coefficient and two structure refinements.
  std::vector<std::string> phases;
  for (const auto& e : r.log.events())
    if (e.at("event") == "candidate") phases.push_back(e.at("phase"));
  ASSERT_EQ(phases.size(), 25u);
  EXPECT_EQ(phases[0], "first");
  EXPECT_EQ(phases[1], "refine_coeff");
  EXPECT_EQ(phases[2], "refine_coeff");
  EXPECT_EQ(phases[3], "refine_struct");
  EXPECT_EQ(phases[4], "refine_struct");
  EXPECT_EQ(phases[5], "next");
  EXPECT_EQ(phases[24], "refine_struct");
}

TEST(Orchestrator, ValidOnFirst) {
  if (z3_registry().empty()) GTEST_SKIP() << "no solver";
  Database db;
  auto r = run_script(seed_system("dt2d_linear"), every_phase("x1^2 + x2^2 - 0.5"), db);
  EXPECT_EQ(r.outcome.status, OutcomeStatus::Valid);
  EXPECT_EQ(r.outcome.counters.synthesis_calls, 1);
  EXPECT_EQ(r.outcome.counters.formal_checks, 1);
  EXPECT_EQ(r.outcome.iteration, 1);
  EXPECT_EQ(r.outcome.refinement, 0);
  EXPECT_DOUBLE_EQ(r.outcome.score, 1.0);
  ASSERT_EQ(db.size(), 1u);
  EXPECT_EQ(db.records()[0].barrier, "x1^2 + x2^2 - 0.5");
  // The one solver_select prompt per obligation goes to the model too.
  EXPECT_EQ(r.llm_calls, 1 + 3);

  // A second run retrieves the stored record as context.
  auto again = run_script(seed_system("dt2d_linear"), every_phase("x1^2 + x2^2 - 0.5"), db);
  EXPECT_EQ(again.outcome.candidate->origin.source, CandidateSource::Retrieval);
  EXPECT_EQ(db.size(), 2u);
}

TEST(Orchestrator, ControlledPublishedPair) {
  if (z3_registry().empty()) GTEST_SKIP() << "no solver";
  Database db;
  nlohmann::json responses = every_phase("unused");
  responses["synth_first_ctrl"] = {
      "BARRIER: x1^2 + x2^2 + x3^2 + x4^2 - 4.0\n"
      "CONTROLLER: -3*x1 - 1.5*x2, -3*x2 + 0.8*sin(x1), -3*x3 - 0.05*x1, -3*x4 - 0.02*x2"};
  auto r = run_script(seed_system("ct4d_pendulum_ctrl"), responses, db);
  EXPECT_EQ(r.outcome.status, OutcomeStatus::Valid);
  ASSERT_EQ(db.size(), 1u);
  EXPECT_EQ(db.records()[0].controllers.size(), 4u);
}

TEST(Orchestrator, UnparseableRepliesCountAsCandidates) {
  Database db;
  nlohmann::json responses = every_phase("x1 + c");
  auto r = run_script(seed_system("dt2d_linear"), responses, db);
  EXPECT_EQ(r.outcome.status, OutcomeStatus::ExhaustedNoCandidate);
  EXPECT_EQ(r.outcome.counters.synthesis_calls, 5);
  EXPECT_EQ(r.outcome.counters.sample_checks, 0);
  EXPECT_EQ(r.llm_calls, 10);  // each request is asked twice
  EXPECT_EQ(count_events(r.log, "unparseable"), 5);
  EXPECT_FALSE(r.outcome.candidate);
}

TEST(Orchestrator, HigherScoreReplacesBestTiesKeepEarliest) {
  Database db;
  nlohmann::json responses = every_phase("-1");
  // 1/3: init fails everywhere, invariance fails (B grows along -x1 - 0.01*x2 < 0).
  responses["synth_first"] = {"BARRIER: 100 - x1"};
  responses["synth_next"] = {"BARRIER: -1", "BARRIER: 1", "BARRIER: -2"};
  auto r = run_script(seed_system("dt2d_linear"), responses, db);
  EXPECT_EQ(r.outcome.status, OutcomeStatus::BestPartial);
  EXPECT_DOUBLE_EQ(r.outcome.score, 2.0 / 3.0);
  EXPECT_EQ(r.outcome.iteration, 2);
  EXPECT_EQ(r.outcome.candidate->barrier.str(), "-1");
}

TEST(Orchestrator, NextPromptListsEveryFailedAttempt) {
  Database db;
  Llm llm(script(every_phase("-1")));
  RunConfig cfg;
  cfg.K = 3;
  run(seed_system("dt2d_linear"), cfg, db, llm, z3_registry());
  auto entries = llm.transcript().entries();
  ASSERT_EQ(entries.size(), 3u);
  EXPECT_EQ(entries[2].template_id, TemplateId::SynthNext);
  const std::string& p = entries[2].prompt;
  std::string line = "- Tried: -1 failed: unsafe (5000 counter-examples)";
  auto first = p.find(line);
  ASSERT_NE(first, std::string::npos);
  EXPECT_NE(p.find(line, first + 1), std::string::npos);
}

TEST(Orchestrator, LogIsDeterministic) {
  if (z3_registry().empty()) GTEST_SKIP() << "no solver";
  RunConfig cfg;
  cfg.K = 2;
  cfg.R = 1;
  Database a, b;
  auto r1 = run_script(seed_system("dt2d_linear"), every_phase("x1^2 + x2^2 - 0.462"), a, cfg);
  auto r2 = run_script(seed_system("dt2d_linear"), every_phase("x1^2 + x2^2 - 0.462"), b, cfg);
  EXPECT_EQ(r1.log.jsonl(), r2.log.jsonl());
  auto s = seed_system("dt2d_linear");
  EXPECT_EQ(outcome_to_json(r1.outcome, s).dump(), outcome_to_json(r2.outcome, s).dump());
  EXPECT_EQ(r1.outcome.counters.synthesis_calls, 4);
}

TEST(Orchestrator, GlobalTimeout) {
  Database db;
  RunConfig cfg;
  cfg.global_timeout_s = 0.0;
  auto r = run_script(seed_system("dt2d_linear"), every_phase("-1"), db, cfg);
  EXPECT_TRUE(r.outcome.timed_out);
  EXPECT_EQ(r.outcome.counters.synthesis_calls, 0);
  EXPECT_EQ(r.outcome.status, OutcomeStatus::ExhaustedNoCandidate);
  EXPECT_EQ(count_events(r.log, "global_timeout"), 1);
  EXPECT_EQ(r.log.events().back().at("event"), "result");
}

TEST(Orchestrator, RejectsBadBudgets) {
  Database db;
  RunConfig cfg;
  cfg.K = 0;
  Llm llm(script(every_phase("-1")));
  EXPECT_THROW(run(seed_system("dt2d_linear"), cfg, db, llm, z3_registry()), ConfigError);
}

TEST(Orchestrator, ResultEventFields) {
  Database db;
  auto r = run_script(seed_system("dt2d_linear"), every_phase("-1"), db);
  const auto& e = r.log.events().back();
  EXPECT_EQ(e.at("event"), "result");
  EXPECT_EQ(e.at("system"), "dt2d_linear");
  EXPECT_EQ(e.at("status"), "best_partial");
  EXPECT_EQ(e.at("k"), 1);
  EXPECT_EQ(e.at("r"), 0);
  EXPECT_EQ(e.at("timed_out"), false);
  EXPECT_EQ(r.log.events().front().at("event"), "start");
}

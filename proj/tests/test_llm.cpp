#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "bcsynth/llm.hpp"
#include "support.hpp"

using namespace bcsynth;
using testing_support::candidate;
using testing_support::pendulum_controllers;
using testing_support::seed_system;

namespace {

std::map<std::string, std::string> markers(TemplateId id) {
  std::map<std::string, std::string> v;
  for (const auto& name : template_placeholders(id)) v[name] = "<<" + name + ">>";
  return v;
}

bool contains(const std::string& hay, const std::string& needle) { return hay.find(needle) != std::string::npos; }

std::string temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "bcsynth_test_llm";
  std::filesystem::create_directories(dir);
  auto p = dir / name;
  std::filesystem::remove(p);
  return p.string();
}

class EchoClient : public LlmClient {
 public:
  Completion complete(const PromptInstance& p) override {
    ++n;
    return {"reply " + std::to_string(n) + " to " + std::string(to_string(p.template_id)), "echo"};
  }
  int n = 0;
};

}  // namespace

TEST(Render, SynthFirstWithContext) {
  auto v = markers(TemplateId::SynthFirst);
  v["CONTEXT"] = context_text(RetrievedExample{"Dynamics: [-x1]", "x1^2 - 1"});
  auto p = render(TemplateId::SynthFirst, v);
  EXPECT_EQ(p.text.rfind("Related problem found:", 0), 0u);
  EXPECT_TRUE(contains(p.text, "WARNING: This is just an example"));
  EXPECT_TRUE(contains(p.text, "Please don't copy it."));
  EXPECT_TRUE(contains(p.text, "B(x): x1^2 - 1"));
}

TEST(Render, SynthFirstWithoutContext) {
  auto v = markers(TemplateId::SynthFirst);
  v["CONTEXT"] = context_text(std::nullopt);
  auto p = render(TemplateId::SynthFirst, v);
  EXPECT_TRUE(contains(p.text, "No similar problems found. Analyze this problem fresh."));
}

TEST(Render, RefineStructControlled) {
  auto p = render(TemplateId::RefineStructCtrl, markers(TemplateId::RefineStructCtrl));
  EXPECT_TRUE(contains(p.text, "Previous coefficient adjustments failed."));
}

TEST(Render, SynthNextGoal) {
  auto p = render(TemplateId::SynthNext, markers(TemplateId::SynthNext));
  EXPECT_TRUE(contains(p.text,
                       "In this step, the goal is to improve the structure of the templates, not refine the parameters."));
}

TEST(Render, ConditionThreeByTimeDomain) {
  EXPECT_EQ(condition_3(TimeDomain::Discrete), "B(f(x)) - B(x) ≤ 0 for all x in the state space");
  EXPECT_EQ(condition_3(TimeDomain::Continuous), "∇B(x) · f(x) < 0 on the boundary");
}

TEST(Render, FailedInfoFormat) {
  EXPECT_EQ(failed_info({"init", "invariance"}, 12), "failed: init, invariance (12 counter-examples)");
}

TEST(Render, MissingPlaceholderThrows) {
  for (TemplateId id : kAllTemplates) {
    auto v = markers(id);
    ASSERT_FALSE(v.empty()) << to_string(id);
    v.erase(v.begin());
    EXPECT_THROW(render(id, v), TemplateError) << to_string(id);
  }
}

TEST(Render, NoPlaceholderLeftAndOnlyPlaceholderSitesDiffer) {
  for (TemplateId id : kAllTemplates) {
    auto v = markers(id);
    auto p = render(id, v);
    for (const auto& [name, _] : v) EXPECT_FALSE(contains(p.text, "{" + name + "}")) << to_string(id);
    // Putting the placeholders back gives the raw template text.
    std::string back = p.text;
    for (const auto& [name, marker] : v) {
      for (std::size_t at = back.find(marker); at != std::string::npos; at = back.find(marker, at))
        back.replace(at, marker.size(), "{" + name + "}");
    }
    EXPECT_EQ(back, template_text(id)) << to_string(id);
    EXPECT_EQ(p.variables, v);
  }
}

TEST(Render, TemplateNamesRoundTrip) {
  for (TemplateId id : kAllTemplates) EXPECT_EQ(template_from_name(to_string(id)), id);
  EXPECT_FALSE(template_from_name("nope"));
}

// Cassettes are keyed by prompt hashes, so any template edit invalidates them.
TEST(Render, TemplateTextsFrozen) {
  const std::map<std::string, std::string> expected = {
      {"similarity_select", "c4015ba2ab7d92428456648d5126ad536ded34ebcbd50d9054f2474acbe5ed52"},
      {"synth_first", "034fe394b55e0203022556dae7a5ddef5af72c7c68394c7991241296fde6ebee"},
      {"synth_first_ctrl", "8a7624c2c6ed548eb9ddf78ba3034ab04f2e65ef099f3bbb5211aaa14ea13284"},
      {"synth_next", "18954a5a358bea9b92314d12a15f0d4a59bcafc132d6dab12b742075a36678ab"},
      {"synth_next_ctrl", "0ea0c5f86bf3e80c94d3afb9179b406de57b7933d7c77eeadcc1d2f47075b265"},
      {"refine_coeff", "8874e0496ccde3c31665249fbd304193696c07d5ea889f884ea0625e8450af9d"},
      {"refine_coeff_ctrl", "7a89a2112c9bd677b872329a13b62cb4572d6cc5bec9e11a03a9982d847498d1"},
      {"refine_struct", "a428845516b3698948b875bb726c25df340d477740b779f8f56a81984c1d72f7"},
      {"refine_struct_ctrl", "4ec01390d30cacaf94bf2d7fa067003fc2eb2bd106e7de453c61ae9ac0910ef7"},
      {"solver_select", "92b911c49b2b9e19e9696980ce57b0b1f79ee0c639f9c4d4e7fdadbc1652accc"},
      {"timeout_retry", "bad9df3eab8d9ffd8d742ad5786970e097bc4a375658d30a63e815bd99029967"},
      {"solver_error", "4c2ea94500d3a20f13ccee8624d5e3f0bded5b8327bb12e5f353cdffc42e11f7"},
  };
  for (TemplateId id : kAllTemplates)
    EXPECT_EQ(sha256_hex(template_text(id)), expected.at(std::string(to_string(id)))) << to_string(id);
}

TEST(Hash, KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(ParseCandidate, PlainBarrier) {
  auto s = seed_system("dt2d_linear");
  auto c = parse_candidate("BARRIER: x1^2 + x2^2 - 0.5", s, false);
  EXPECT_EQ(c.barrier, testing_support::px("x1^2 + x2^2 - 0.5", s));
  EXPECT_TRUE(c.controllers.empty());
}

TEST(ParseCandidate, SymbolicConstantRejected) {
  auto s = seed_system("ct4d_linear");
  try {
    parse_candidate("BARRIER: (x1-4.5)^2 + c", s, false);
    FAIL();
  } catch (const ReplyParseError& e) {
    EXPECT_TRUE(contains(e.what(), "symbolic constant 'c' forbidden")) << e.what();
  }
}

TEST(ParseCandidate, RefinedControllers) {
  auto s = seed_system("ct4d_pendulum_ctrl");
  auto c = parse_candidate(
      "REFINED_BARRIER: x1^2+x2^2-4.0\nREFINED_CONTROLLER: -3*x1-1.5*x2, -3*x2+0.8*sin(x1), -3*x3-0.05*x1, "
      "-3*x4-0.02*x2",
      s, true);
  ASSERT_EQ(c.controllers.size(), 4u);
  auto expect = candidate(s, "x1^2+x2^2-4.0", pendulum_controllers());
  EXPECT_EQ(c.barrier, expect.barrier);
  for (const auto& u : s.control_vars) EXPECT_EQ(c.controllers.at(u), expect.controllers.at(u)) << u;
}

TEST(ParseCandidate, MarkdownAndProse) {
  auto s = seed_system("dt2d_linear");
  auto c = parse_candidate(
      "Looking at the dynamics, a ball works.\n\n```\n**BARRIER:** `x1**2 + x2**2 - 0.5`\n```\n", s, false);
  EXPECT_EQ(c.barrier, testing_support::px("x1^2 + x2^2 - 0.5", s));
  auto d = parse_candidate("BARRIER: B(x) = x1^2 + x2^2 - 0.5.", s, false);
  EXPECT_EQ(d.barrier, c.barrier);
}

TEST(ParseCandidate, Errors) {
  auto s = seed_system("dt2d_linear");
  EXPECT_THROW(parse_candidate("x1^2 - 1", s, false), ReplyParseError);
  EXPECT_THROW(parse_candidate("BARRIER: x1^^2", s, false), ReplyParseError);
  auto p = seed_system("ct4d_pendulum_ctrl");
  EXPECT_THROW(parse_candidate("BARRIER: x1^2 - 1\nCONTROLLER: -x1, -x2", p, false), ReplyParseError);
  EXPECT_THROW(parse_candidate("BARRIER: x1^2 - 1", p, false), ReplyParseError);
  EXPECT_THROW(parse_candidate("BARRIER: x1^2 - u1\nCONTROLLER: 0, 0, 0, 0", p, false), ReplyParseError);
}

TEST(ParseCandidate, PrintRoundTrip) {
  auto s = seed_system("ct4d_pendulum_ctrl");
  testing_support::ExprGen gen(s.state_vars, 77);
  for (int i = 0; i < 200; ++i) {
    BarrierCandidate c;
    c.barrier = gen.make(3);
    for (const auto& u : s.control_vars) c.controllers[u] = gen.make(2);
    for (bool refined : {false, true}) {
      auto back = parse_candidate(print_candidate(c, s, refined), s, refined);
      EXPECT_EQ(back.barrier, c.barrier) << print_candidate(c, s, refined);
      EXPECT_EQ(back.controllers, c.controllers);
    }
  }
  auto d = seed_system("dt2d_linear");
  auto c = candidate(d, "x1^2 + x2^2 - 0.5");
  EXPECT_EQ(print_candidate(c, d), "BARRIER: x1^2 + x2^2 - 0.5");
}

TEST(ParseScalar, CandidateNumber) {
  EXPECT_EQ(parse_candidate_number("2"), 2);
  EXPECT_EQ(parse_candidate_number("Candidate 3 is closest."), 3);
  EXPECT_THROW(parse_candidate_number("none of them"), ReplyParseError);
  EXPECT_THROW(parse_candidate_number("0"), ReplyParseError);
}

TEST(ParseScalar, SolverName) {
  const std::vector<SolverKind> all = {SolverKind::Z3, SolverKind::Cvc5, SolverKind::Yices};
  EXPECT_EQ(parse_solver_name("SOLVER: z3", "SOLVER", all), SolverKind::Z3);
  EXPECT_EQ(parse_solver_name("NEXT_SOLVER: cvc5", "NEXT_SOLVER", all), SolverKind::Cvc5);
  EXPECT_THROW(parse_solver_name("SOLVER: mathsat", "SOLVER", all), ReplyParseError);
  EXPECT_THROW(parse_solver_name("SOLVER: yices", "SOLVER", {SolverKind::Z3}), ReplyParseError);
}

TEST(ParseScalar, RetryDecision) {
  auto d = parse_retry_decision("RETRY: yes\nTIMEOUT_MULTIPLIER: 2.0");
  EXPECT_TRUE(d.retry);
  ASSERT_TRUE(d.multiplier);
  EXPECT_DOUBLE_EQ(*d.multiplier, 2.0);
  auto n = parse_retry_decision("RETRY: no");
  EXPECT_FALSE(n.retry);
  EXPECT_FALSE(parse_retry_decision("RETRY: yes").multiplier);
  EXPECT_THROW(parse_retry_decision("RETRY: maybe"), ReplyParseError);
  EXPECT_THROW(parse_retry_decision("RETRY: yes\nTIMEOUT_MULTIPLIER: 0.5"), ReplyParseError);
  EXPECT_THROW(parse_retry_decision("sure"), ReplyParseError);
}

TEST(Cassette, RecordThenReplay) {
  auto path = temp_file("record.jsonl");
  auto cassette = std::make_shared<Cassette>(path);
  auto echo = std::make_unique<EchoClient>();
  RecordingClient rec(std::move(echo), cassette);
  std::vector<PromptInstance> prompts;
  for (TemplateId id : {TemplateId::SynthFirst, TemplateId::SynthNext, TemplateId::SolverSelect}) {
    prompts.push_back(render(id, markers(id)));
  }
  std::vector<std::string> replies;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    replies.push_back(rec.complete(prompts[i]).text);
    EXPECT_EQ(cassette->size(), i + 1);
  }

  ReplayClient replay(std::make_shared<Cassette>(path));
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    auto c = replay.complete(prompts[i]);
    EXPECT_EQ(c.text, replies[i]);
    EXPECT_EQ(c.model, "echo");
  }
}

TEST(Cassette, MissNamesHash) {
  ReplayClient replay(std::make_shared<Cassette>());
  auto p = render(TemplateId::SolverSelect, markers(TemplateId::SolverSelect));
  try {
    replay.complete(p);
    FAIL();
  } catch (const CassetteMissError& e) {
    EXPECT_EQ(e.hash(), sha256_hex(p.text));
    EXPECT_TRUE(contains(e.what(), e.hash()));
  }
}

TEST(Cassette, RepeatedPromptWalksResponses) {
  auto cassette = std::make_shared<Cassette>();
  auto p = render(TemplateId::SolverSelect, markers(TemplateId::SolverSelect));
  auto h = sha256_hex(p.text);
  cassette->append({h, p.text, "SOLVER: z3", "m", ""});
  cassette->append({h, p.text, "SOLVER: cvc5", "m", ""});
  ReplayClient replay(cassette);
  EXPECT_EQ(replay.complete(p).text, "SOLVER: z3");
  EXPECT_EQ(replay.complete(p).text, "SOLVER: cvc5");
  EXPECT_EQ(replay.complete(p).text, "SOLVER: cvc5");
}

TEST(Cassette, CorruptLineIsConfigError) {
  auto path = temp_file("corrupt.jsonl");
  std::ofstream(path) << "{not json\n";
  EXPECT_THROW(Cassette{path}, ConfigError);
}

TEST(Scripted, ConsumesInOrderAndRepeatsLast) {
  ScriptedClient c(nlohmann::json{{"responses", {{"synth_first", {"BARRIER: 1", "BARRIER: 2"}}}}});
  auto p = render(TemplateId::SynthFirst, markers(TemplateId::SynthFirst));
  EXPECT_EQ(c.complete(p).text, "BARRIER: 1");
  EXPECT_EQ(c.complete(p).text, "BARRIER: 2");
  EXPECT_EQ(c.complete(p).text, "BARRIER: 2");
  EXPECT_THROW(c.complete(render(TemplateId::SynthNext, markers(TemplateId::SynthNext))), LlmError);
}

TEST(Llm, TranscriptAndCounter) {
  auto client = std::make_shared<ScriptedClient>(nlohmann::json{{"responses", {{"solver_select", {"SOLVER: z3"}}}}});
  Llm llm(client);
  auto p = render(TemplateId::SolverSelect, markers(TemplateId::SolverSelect));
  llm.ask(p);
  llm.ask(p);
  EXPECT_EQ(llm.calls(), 2);
  auto entries = llm.transcript().entries();
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(entries[0].prompt_sha256, sha256_hex(p.text));
  EXPECT_EQ(entries[0].response, "SOLVER: z3");
  EXPECT_EQ(entries[0].wall_ms, 0.0);
  EXPECT_EQ(transcript_to_json(llm.transcript()).size(), 2u);
}

TEST(SolverHooks, FollowsValidReplies) {
  auto client = std::make_shared<ScriptedClient>(nlohmann::json{
      {"responses",
       {{"solver_select", {"SOLVER: cvc5"}},
        {"timeout_retry", {"RETRY: yes\nTIMEOUT_MULTIPLIER: 3"}},
        {"solver_error", {"NEXT_SOLVER: yices"}}}}});
  Llm llm(client);
  auto h = llm_solver_hooks(llm);
  SolverQuery q{"[-x1]", "x1^2 - 1"};
  const std::vector<SolverKind> all = {SolverKind::Z3, SolverKind::Cvc5, SolverKind::Yices};
  EXPECT_EQ(h.select_solver(q, all), SolverKind::Cvc5);
  EXPECT_EQ(h.timeout_retry(q, SolverKind::Cvc5, 1000), 3.0);
  SolverResult r;
  EXPECT_EQ(h.next_solver(q, SolverKind::Cvc5, r, {SolverKind::Z3, SolverKind::Yices}), SolverKind::Yices);
  EXPECT_EQ(llm.calls(), 3);
  EXPECT_TRUE(contains(llm.transcript().entries()[1].prompt, "1000"));
}

TEST(SolverHooks, FallbacksAfterOneReask) {
  auto client = std::make_shared<ScriptedClient>(nlohmann::json{
      {"responses", {{"solver_select", {"no idea"}}, {"timeout_retry", {"hmm"}}, {"solver_error", {"?"}}}}});
  Llm llm(client);
  auto h = llm_solver_hooks(llm);
  SolverQuery q{"[-x1]", "x1^2 - 1"};
  EXPECT_EQ(h.select_solver(q, {SolverKind::Cvc5, SolverKind::Z3}), SolverKind::Z3);
  EXPECT_EQ(llm.calls(), 2);
  EXPECT_EQ(h.select_solver(q, {SolverKind::Yices, SolverKind::Cvc5}), SolverKind::Yices);
  EXPECT_FALSE(h.timeout_retry(q, SolverKind::Z3, 1000));
  SolverResult r;
  EXPECT_EQ(h.next_solver(q, SolverKind::Z3, r, {SolverKind::Cvc5, SolverKind::Yices}), SolverKind::Cvc5);
  EXPECT_EQ(llm.calls(), 8);
}

TEST(SolverHooks, RetryWithoutMultiplierDefaultsToTwo) {
  auto client =
      std::make_shared<ScriptedClient>(nlohmann::json{{"responses", {{"timeout_retry", {"RETRY: yes"}}}}});
  Llm llm(client);
  auto h = llm_solver_hooks(llm);
  EXPECT_EQ(h.timeout_retry(SolverQuery{"[-x1]", "x1"}, SolverKind::Z3, 500), 2.0);
}

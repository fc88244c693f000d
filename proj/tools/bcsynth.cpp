#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "bcsynth/bench.hpp"

using namespace bcsynth;
namespace fs = std::filesystem;

namespace {

struct CommonFlags {
  std::string solvers;
  int timeout_ms = 30000;
  int taylor_order = 7;
  std::size_t samples = 5000;
  std::uint64_t seed = 0;
  std::string box;
};

struct LlmFlags {
  std::string cassette;  // record:PATH or replay:PATH
  std::string script;
  bool live = false;
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--solvers", f.solvers, "Comma-separated subset of z3,cvc5,yices");
  app->add_option("--timeout", f.timeout_ms, "Per-obligation solver timeout in ms")->check(CLI::PositiveNumber);
  app->add_option("--taylor-order", f.taylor_order, "Taylor order for transcendental terms")->check(CLI::Range(1, 15));
  app->add_option("--samples", f.samples, "Sample points per set")->check(CLI::PositiveNumber);
  app->add_option("--seed", f.seed, "Sampling seed");
  app->add_option("--box", f.box, "Fallback sampling box, e.g. -3:3,-3:3");
}

void add_llm(CLI::App* app, LlmFlags& f) {
  app->add_option("--cassette", f.cassette, "record:PATH or replay:PATH");
  app->add_option("--llm-script", f.script, "Canned replies per prompt template (JSON)");
  app->add_flag("--live", f.live, "Use the endpoint from BCS_LLM_URL / BCS_LLM_API_KEY / BCS_LLM_MODEL");
}

SolverRegistry make_registry(const CommonFlags& f) {
  SolverRegistry reg = SolverRegistry::probe();
  if (!f.solvers.empty()) {
    std::vector<SolverKind> keep;
    std::stringstream ss(f.solvers);
    for (std::string name; std::getline(ss, name, ',');) {
      auto k = solver_from_name(name);
      if (!k) throw ConfigError("unknown solver '" + name + "'");
      keep.push_back(*k);
    }
    reg = reg.restricted(keep);
  }
  if (reg.empty())
    throw ConfigError("no SMT solver found (install z3, cvc5 or yices-smt2, or set BCS_Z3 / BCS_CVC5 / BCS_YICES)");
  return reg;
}

std::optional<Rect> parse_box(const std::string& text, std::size_t dim) {
  if (text.empty()) return std::nullopt;
  Rect r;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ',');) {
    auto colon = part.find(':');
    if (colon == std::string::npos) throw ConfigError("--box wants lo:hi per dimension, got '" + part + "'");
    try {
      r.lo.push_back(std::stod(part.substr(0, colon)));
      r.hi.push_back(std::stod(part.substr(colon + 1)));
    } catch (const std::exception&) {
      throw ConfigError("--box: bad bound in '" + part + "'");
    }
    if (!(r.lo.back() < r.hi.back())) throw ConfigError("--box: empty interval '" + part + "'");
  }
  if (r.lo.size() != dim)
    throw ConfigError("--box has " + std::to_string(r.lo.size()) + " intervals, system has dimension " +
                      std::to_string(dim));
  return r;
}

VerifyConfig verify_config(const CommonFlags& f, const DynamicalSystem& s) {
  VerifyConfig v;
  v.sample.n = f.samples;
  v.sample.seed = f.seed;
  v.sample.box = parse_box(f.box, s.dimension());
  v.formal.timeout_ms = f.timeout_ms;
  v.formal.encode.taylor_order = f.taylor_order;
  return v;
}

DynamicalSystem load_with_warnings(const std::string& path) {
  std::vector<std::string> warnings;
  DynamicalSystem s = load_system(path, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << path << ": " << w << "\n";
  return s;
}

std::pair<std::string, std::string> split_mode(const std::string& spec) {
  auto colon = spec.find(':');
  std::string mode = colon == std::string::npos ? "" : spec.substr(0, colon);
  if (mode != "record" && mode != "replay") throw ConfigError("--cassette wants record:PATH or replay:PATH");
  return {mode, spec.substr(colon + 1)};
}

std::unique_ptr<LlmClient> live_client() {
  auto cfg = LiveConfig::from_env();
  if (!cfg) throw ConfigError("live LLM needs BCS_LLM_URL and BCS_LLM_MODEL (and usually BCS_LLM_API_KEY)");
  return make_live_client(*cfg);
}

// Clients come from --llm-script, --cassette or --live; record mode wraps the
// script when one is given, else the live endpoint. For bench, the script and
// cassette paths are directories holding <problem>.json / <problem>.jsonl.
ClientFactory client_factory(const LlmFlags& f, bool per_problem) {
  if (f.script.empty() && f.cassette.empty() && !f.live)
    throw ConfigError("no LLM configured: pass --cassette replay:PATH, --llm-script PATH or --live");
  auto per = [per_problem](const std::string& where, const std::string& problem, const char* ext) {
    return per_problem ? (fs::path(where) / (problem + ext)).string() : where;
  };
  auto inner = [f, per](const std::string& problem) -> std::unique_ptr<LlmClient> {
    if (!f.script.empty()) return ScriptedClient::from_file(per(f.script, problem, ".json"));
    return live_client();
  };
  if (f.cassette.empty()) return [inner](const std::string& problem) -> std::shared_ptr<LlmClient> { return inner(problem); };

  auto [mode, where] = split_mode(f.cassette);
  if (mode == "replay" && (!f.script.empty() || f.live))
    throw ConfigError("replay cassettes cannot be combined with --llm-script or --live");
  if (per_problem && mode == "record") fs::create_directories(where);
  return [mode, where, per, inner](const std::string& problem) -> std::shared_ptr<LlmClient> {
    std::string path = per(where, problem, ".jsonl");
    if (mode == "replay") {
      if (!fs::exists(path)) throw ConfigError("cassette not found: " + path);
      return std::make_shared<ReplayClient>(std::make_shared<Cassette>(path));
    }
    return std::make_shared<RecordingClient>(inner(problem), std::make_shared<Cassette>(path));
  };
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << text;
}

std::string describe_obligation(const ObligationReport& o, const std::vector<std::string>& vars) {
  std::string line = std::string(to_string(o.kind)) + ": ";
  switch (o.result.status) {
    case SolverStatus::Proved: line += "proved"; break;
    case SolverStatus::Counterexample: {
      line += "counterexample";
      if (o.result.model)
        for (std::size_t i = 0; i < vars.size(); ++i)
          line += (i ? ", " : " ") + vars[i] + " = " + format_number((*o.result.model)[i]);
      break;
    }
    case SolverStatus::Timeout: line += "timeout"; break;
    case SolverStatus::Error: line += "error"; break;
  }
  if (o.solver) line += " [" + std::string(to_string(*o.solver)) + "]";
  if (o.result.status != SolverStatus::Proved && o.result.status != SolverStatus::Counterexample &&
      !o.result.diagnostic.empty())
    line += " (" + o.result.diagnostic + ")";
  return line;
}

BarrierCandidate candidate_from_flags(const DynamicalSystem& s, const std::string& barrier,
                                      const std::vector<std::string>& controllers) {
  std::string reply = "BARRIER: " + barrier;
  if (!controllers.empty()) {
    reply += "\nCONTROLLER: ";
    for (std::size_t i = 0; i < controllers.size(); ++i) reply += (i ? ", " : "") + controllers[i];
  }
  try {
    return parse_candidate(reply, s, false);
  } catch (const ReplyParseError& e) {
    throw ConfigError(e.what());
  }
}

int cmd_verify(const std::string& spec, const std::string& barrier, const std::vector<std::string>& controllers,
               const CommonFlags& f, bool with_sample, const std::string& out) {
  DynamicalSystem s = load_with_warnings(spec);
  BarrierCandidate c = candidate_from_flags(s, barrier, controllers);
  VerifyConfig cfg = verify_config(f, s);
  SolverRegistry reg = make_registry(f);
  nlohmann::json doc = {{"system", s.name}, {"barrier", c.barrier.str()}};
  if (with_sample) {
    auto sr = sample_check(s, c, cfg.sample);
    std::cout << "sample: " << (sr.passed() ? "pass" : "fail") << " (score " << format_number(sr.score) << ")\n";
    doc["sample"] = sample_report_to_json(sr);
  }
  auto t0 = std::chrono::steady_clock::now();
  FormalReport r = formal_check(s, c, default_hooks(), reg, cfg.formal);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (const auto& o : r.obligations) std::cout << describe_obligation(o, s.state_vars) << "\n";
  std::cout << (r.valid ? "valid" : "not valid") << " (" << r.smt_calls << " solver calls, " << secs << " s)\n";
  if (!r.valid && !r.feedback.empty()) std::cout << r.feedback << "\n";
  doc["formal"] = formal_report_to_json(r);
  if (!out.empty()) write_text(out, doc.dump(2) + "\n");
  return r.valid ? 0 : 1;
}

RunConfig run_config(const CommonFlags& f, const DynamicalSystem* s, int k, int r, double global_timeout_s) {
  RunConfig rc;
  rc.K = k;
  rc.R = r;
  rc.global_timeout_s = global_timeout_s;
  if (s) {
    rc.verify = verify_config(f, *s);
  } else {
    rc.verify.sample.n = f.samples;
    rc.verify.sample.seed = f.seed;
    rc.verify.formal.timeout_ms = f.timeout_ms;
    rc.verify.formal.encode.taylor_order = f.taylor_order;
  }
  return rc;
}

int cmd_synthesize(const std::string& spec, const CommonFlags& f, const LlmFlags& lf, int k, int r,
                   double global_timeout_s, const std::string& db_path, const std::string& out,
                   const std::string& log_path, const std::string& transcript_path) {
  DynamicalSystem s = load_with_warnings(spec);
  RunConfig rc = run_config(f, &s, k, r, global_timeout_s);
  SolverRegistry reg = make_registry(f);
  auto factory = client_factory(lf, false);
  Llm llm(factory(s.name));
  Database db(db_path);
  RunLog log;
  auto outcome = run(s, rc, db, llm, reg, &log);

  std::cout << "status: " << to_string(outcome.status) << "\n";
  if (outcome.candidate) {
    std::cout << "barrier: " << outcome.candidate->barrier.str() << "\n";
    for (const auto& [u, e] : outcome.candidate->controllers) std::cout << u << " = " << e.str() << "\n";
    std::cout << "score: " << format_number(outcome.score) << " at iteration " << outcome.iteration
              << ", refinement " << outcome.refinement << "\n";
  }
  const auto& cn = outcome.counters;
  std::cout << "llm calls: " << cn.llm_calls << ", candidates: " << cn.synthesis_calls
            << ", formal checks: " << cn.formal_checks << ", solver calls: " << cn.smt_calls << "\n";
  if (outcome.timed_out) std::cout << "global timeout reached\n";

  if (!out.empty()) write_text(out, outcome_to_json(outcome, s).dump(2) + "\n");
  if (!log_path.empty()) write_text(log_path, log.jsonl());
  if (!transcript_path.empty()) write_text(transcript_path, transcript_to_json(llm.transcript()).dump(2) + "\n");
  return outcome.status == OutcomeStatus::Valid ? 0 : 1;
}

int cmd_bench(const std::string& dir, const CommonFlags& f, const LlmFlags& lf, int k, int r,
              double global_timeout_s, int jobs, const std::string& db_path, const std::string& out) {
  auto specs = find_specs(dir);
  BenchConfig bc;
  bc.run = run_config(f, nullptr, k, r, global_timeout_s);
  bc.jobs = jobs;
  bc.out_dir = out;
  if (!f.box.empty()) throw ConfigError("--box is per system; set it in verify or synthesize");
  SolverRegistry reg = make_registry(f);
  Database db(db_path);
  auto t0 = std::chrono::steady_clock::now();
  BenchReport rep = run_bench(specs, bc, db, client_factory(lf, true), reg);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (const auto& row : rep.rows) {
    std::cout << row.problem << ": " << row.status;
    if (row.status == "valid") std::cout << " (I" << row.iteration << ", R" << row.refinement << ")";
    if (!row.error.empty()) std::cout << " - " << row.error;
    std::cout << "\n";
  }
  std::cout << "\n" << render_table(rep) << "wall time " << secs << " s\n";
  return rep.solved == rep.total ? 0 : 1;
}

int cmd_report(const std::vector<std::string>& logs, const std::string& out) {
  std::stringstream all;
  for (const auto& p : logs) {
    std::ifstream in(p);
    if (!in) throw ConfigError("cannot open " + p);
    all << in.rdbuf() << "\n";
  }
  BenchReport rep = report_from_log(all);
  std::cout << render_table(rep);
  if (!out.empty()) write_text(out, report_to_json(rep).dump(2) + "\n");
  return 0;
}

int cmd_db_list(const std::string& db_path) {
  Database db(db_path);
  auto recs = db.records();
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& r = recs[i];
    std::cout << i + 1 << ". " << features_to_json(r.features).dump() << "\n   " << r.summary
              << "\n   B(x) = " << r.barrier << "\n";
    for (const auto& c : r.controllers) std::cout << "   controller: " << c << "\n";
  }
  std::cout << recs.size() << " record(s)\n";
  return 0;
}

int cmd_db_add(const std::string& db_path, const std::string& spec, const std::string& barrier,
               const std::vector<std::string>& controllers) {
  DynamicalSystem s = load_with_warnings(spec);
  BarrierCandidate c = candidate_from_flags(s, barrier, controllers);
  Database db(db_path);
  db.store(make_record(s, c, utc_timestamp()));
  std::cout << "stored; database has " << db.size() << " record(s)\n";
  return 0;
}

// Input: JSON array of {"spec": path relative to the file, "barrier": ..., "controllers": [...]}.
int cmd_db_seed(const std::string& db_path, const std::string& seed_file) {
  std::ifstream in(seed_file);
  if (!in) throw ConfigError("cannot open " + seed_file);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(seed_file + ": " + e.what());
  }
  if (!doc.is_array()) throw ConfigError(seed_file + ": expected an array of entries");
  Database db(db_path);
  fs::path base = fs::path(seed_file).parent_path();
  int added = 0;
  for (const auto& e : doc) {
    DynamicalSystem s = load_with_warnings((base / e.at("spec").get<std::string>()).string());
    auto controllers = e.value("controllers", std::vector<std::string>{});
    db.store(make_record(s, candidate_from_flags(s, e.at("barrier").get<std::string>(), controllers),
                         utc_timestamp()));
    ++added;
  }
  std::cout << "added " << added << " record(s); database has " << db.size() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Barrier certificate synthesis and verification"};
  app.require_subcommand(1);

  CommonFlags common;
  LlmFlags llm_flags;
  int k = 5, r = 4, jobs = 1;
  double global_timeout = 1200.0;
  std::string db_path, out, log_path, transcript_path, spec, barrier, dir, seed_file;
  std::vector<std::string> controllers, logs;
  bool with_sample = false;

  auto* verify = app.add_subcommand("verify", "Formally check a barrier (and controllers) for a system");
  verify->add_option("spec", spec, "System spec (JSON)")->required();
  verify->add_option("barrier", barrier, "Barrier expression")->required();
  verify->add_option("controllers", controllers, "Controller expressions, one per control input");
  verify->add_flag("--sample", with_sample, "Also run the sampling stage");
  verify->add_option("--out", out, "Write the report as JSON");
  add_common(verify, common);

  auto* synth = app.add_subcommand("synthesize", "Search for a barrier certificate with the LLM loop");
  synth->add_option("spec", spec, "System spec (JSON)")->required();
  synth->add_option("--k", k, "Main iterations")->check(CLI::PositiveNumber);
  synth->add_option("--r", r, "Refinements per iteration")->check(CLI::NonNegativeNumber);
  synth->add_option("--global-timeout", global_timeout, "Overall budget in seconds");
  synth->add_option("--db", db_path, "Solved-problem database (JSONL)");
  synth->add_option("--out", out, "Result file");
  synth->add_option("--log", log_path, "Run log (JSONL)");
  synth->add_option("--transcript", transcript_path, "LLM transcript (JSON)");
  add_common(synth, common);
  add_llm(synth, llm_flags);

  auto* bench = app.add_subcommand("bench", "Run every spec in a directory and tabulate the results");
  bench->add_option("dir", dir, "Directory of spec files")->required();
  bench->add_option("--k", k, "Main iterations")->check(CLI::PositiveNumber);
  bench->add_option("--r", r, "Refinements per iteration")->check(CLI::NonNegativeNumber);
  bench->add_option("--global-timeout", global_timeout, "Per-problem budget in seconds");
  bench->add_option("--jobs", jobs, "Problems run in parallel")->check(CLI::PositiveNumber);
  bench->add_option("--db", db_path, "Solved-problem database (JSONL)");
  bench->add_option("--out", out, "Output directory");
  add_common(bench, common);
  add_llm(bench, llm_flags);
  bench->footer("For bench, --cassette and --llm-script name directories with one <problem>.jsonl / <problem>.json each.");

  auto* report = app.add_subcommand("report", "Tabulate result events from run logs");
  report->add_option("logs", logs, "Run logs (JSONL)")->required();
  report->add_option("--out", out, "Write the report as JSON");

  auto* db = app.add_subcommand("db", "Inspect or extend the solved-problem database");
  db->require_subcommand(1);
  auto* db_list = db->add_subcommand("list", "Print all records");
  db_list->add_option("--db", db_path, "Database file")->required();
  auto* db_add = db->add_subcommand("add", "Store one solved system");
  db_add->add_option("--db", db_path, "Database file")->required();
  db_add->add_option("spec", spec, "System spec (JSON)")->required();
  db_add->add_option("barrier", barrier, "Barrier expression")->required();
  db_add->add_option("controllers", controllers, "Controller expressions");
  auto* db_seed = db->add_subcommand("seed", "Store every entry of a seed list");
  db_seed->add_option("--db", db_path, "Database file")->required();
  db_seed->add_option("file", seed_file, "JSON list of {spec, barrier, controllers}")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*verify) return cmd_verify(spec, barrier, controllers, common, with_sample, out);
    if (*synth)
      return cmd_synthesize(spec, common, llm_flags, k, r, global_timeout, db_path, out, log_path, transcript_path);
    if (*bench) return cmd_bench(dir, common, llm_flags, k, r, global_timeout, jobs, db_path, out);
    if (*report) return cmd_report(logs, out);
    if (*db_list) return cmd_db_list(db_path);
    if (*db_add) return cmd_db_add(db_path, spec, barrier, controllers);
    if (*db_seed) return cmd_db_seed(db_path, seed_file);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

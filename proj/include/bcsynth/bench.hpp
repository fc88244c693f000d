#pragma once

#include <array>
#include <functional>
#include <istream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "bcsynth/orchestrator.hpp"

namespace bcsynth {

struct BenchRow {
  std::string problem;
  std::string status;  // outcome status, or "error" when the run crashed
  double score = 0.0;
  int iteration = 0;
  int refinement = 0;
  std::string error;
};

// Rows I1, I2, I3+; columns R0, R1-2, R3-4.
using SolveMatrix = std::array<std::array<int, 3>, 3>;

struct BenchReport {
  std::vector<BenchRow> rows;
  SolveMatrix matrix{};
  int total = 0;
  int solved = 0;

  double success_rate() const { return total ? static_cast<double>(solved) / total : 0.0; }
};

int iteration_band(int k);
int refinement_band(int r);

BenchReport make_report(std::vector<BenchRow> rows);

// Builds a report from the "result" events of concatenated run logs.
BenchReport report_from_log(std::istream& in);

std::string render_table(const BenchReport& r);
nlohmann::json report_to_json(const BenchReport& r);

struct BenchConfig {
  RunConfig run;
  int jobs = 1;
  std::string out_dir;  // per-problem results, logs and the report; empty to skip writing
};

// Per-problem LLM client, keyed by the spec's file stem.
using ClientFactory = std::function<std::shared_ptr<LlmClient>(const std::string& problem)>;

// Spec files (*.json) directly inside `dir`, sorted by name.
std::vector<std::string> find_specs(const std::string& dir);

// Retrieval reads a snapshot of `db` taken before the first problem starts, so
// results do not depend on scheduling; solved records are still appended to
// `db`.
BenchReport run_bench(const std::vector<std::string>& specs, const BenchConfig& cfg, Database& db,
                      const ClientFactory& clients, const SolverRegistry& registry);

}  // namespace bcsynth

#include "bcsynth/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

namespace bcsynth {

namespace fs = std::filesystem;

int iteration_band(int k) { return k <= 1 ? 0 : k == 2 ? 1 : 2; }

int refinement_band(int r) { return r <= 0 ? 0 : r <= 2 ? 1 : 2; }

BenchReport make_report(std::vector<BenchRow> rows) {
  BenchReport rep;
  rep.rows = std::move(rows);
  rep.total = static_cast<int>(rep.rows.size());
  for (const auto& row : rep.rows) {
    if (row.status != "valid") continue;
    ++rep.solved;
    ++rep.matrix[iteration_band(row.iteration)][refinement_band(row.refinement)];
  }
  return rep;
}

BenchReport report_from_log(std::istream& in) {
  std::vector<BenchRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json ev;
    try {
      ev = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("log line " + std::to_string(lineno) + ": " + e.what());
    }
    if (ev.value("event", "") != "result") continue;
    BenchRow row;
    row.problem = ev.value("system", "");
    row.status = ev.value("status", "");
    row.score = ev.value("score", 0.0);
    row.iteration = ev.value("k", 0);
    row.refinement = ev.value("r", 0);
    rows.push_back(std::move(row));
  }
  return make_report(std::move(rows));
}

namespace {

std::string cell(int n, int solved, bool pct) {
  if (!pct) return std::to_string(n);
  char buf[32];
  if (solved == 0)
    std::snprintf(buf, sizeof buf, "%d (-)", n);
  else if (n == solved)
    std::snprintf(buf, sizeof buf, "%d (100%%)", n);
  else
    std::snprintf(buf, sizeof buf, "%d (%.1f%%)", n, 100.0 * n / solved);
  return buf;
}

std::string pad(const std::string& s, std::size_t w) { return s + std::string(w > s.size() ? w - s.size() : 1, ' '); }

}  // namespace

std::string render_table(const BenchReport& r) {
  const char* rows[] = {"I1", "I2", "I3+"};
  const char* cols[] = {"R0", "R1-2", "R3-4"};
  std::array<int, 3> col_total{};
  std::vector<std::vector<std::string>> grid;
  grid.push_back({"", cols[0], cols[1], cols[2], "Total"});
  for (int i = 0; i < 3; ++i) {
    int row_total = 0;
    std::vector<std::string> line{rows[i]};
    for (int j = 0; j < 3; ++j) {
      line.push_back(cell(r.matrix[i][j], r.solved, false));
      row_total += r.matrix[i][j];
      col_total[j] += r.matrix[i][j];
    }
    line.push_back(cell(row_total, r.solved, true));
    grid.push_back(line);
  }
  std::vector<std::string> last{"Total"};
  for (int j = 0; j < 3; ++j) last.push_back(cell(col_total[j], r.solved, true));
  last.push_back(cell(r.solved, r.solved, true));
  grid.push_back(last);

  std::array<std::size_t, 5> width{};
  for (const auto& line : grid)
    for (std::size_t j = 0; j < line.size(); ++j) width[j] = std::max(width[j], line[j].size() + 2);

  std::string out;
  for (const auto& line : grid) {
    std::string text;
    for (std::size_t j = 0; j < line.size(); ++j) text += pad(line[j], width[j]);
    while (!text.empty() && text.back() == ' ') text.pop_back();
    out += text + "\n";
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "Solved %d of %d (%.1f%%)\n", r.solved, r.total, 100.0 * r.success_rate());
  out += buf;
  return out;
}

nlohmann::json report_to_json(const BenchReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    nlohmann::json j = {{"problem", row.problem}, {"status", row.status}, {"score", row.score},
                        {"iteration", row.iteration}, {"refinement", row.refinement}};
    if (!row.error.empty()) j["error"] = row.error;
    rows.push_back(j);
  }
  nlohmann::json matrix = nlohmann::json::array();
  for (const auto& line : r.matrix) matrix.push_back(line);
  return {{"total", r.total},
          {"solved", r.solved},
          {"success_rate", r.success_rate()},
          {"matrix", {{"rows", {"I1", "I2", "I3+"}}, {"columns", {"R0", "R1-2", "R3-4"}}, {"counts", matrix}}},
          {"problems", rows}};
}

std::vector<std::string> find_specs(const std::string& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw ConfigError("not a directory: " + dir);
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json") out.push_back(e.path().string());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw ConfigError("no specs found in " + dir);
  return out;
}

namespace {

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
}

}  // namespace

BenchReport run_bench(const std::vector<std::string>& specs, const BenchConfig& cfg, Database& db,
                      const ClientFactory& clients, const SolverRegistry& registry) {
  if (!cfg.out_dir.empty()) fs::create_directories(cfg.out_dir);
  const Database snapshot(db.records());
  std::vector<BenchRow> rows(specs.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < specs.size(); i = next++) {
      std::string stem = fs::path(specs[i]).stem().string();
      BenchRow& row = rows[i];
      row.problem = stem;
      try {
        DynamicalSystem s = load_system(specs[i]);
        Llm llm(clients(stem));
        RunLog log;
        auto outcome = run(s, cfg.run, snapshot, db, llm, registry, &log);
        row.status = std::string(to_string(outcome.status));
        row.score = outcome.score;
        row.iteration = outcome.iteration;
        row.refinement = outcome.refinement;
        if (!cfg.out_dir.empty()) {
          write_file(fs::path(cfg.out_dir) / (stem + ".result.json"), outcome_to_json(outcome, s).dump(2) + "\n");
          write_file(fs::path(cfg.out_dir) / (stem + ".log.jsonl"), log.jsonl());
        }
      } catch (const std::exception& e) {
        row.status = "error";
        row.error = e.what();
      }
    }
  };

  int jobs = std::max(1, std::min<int>(cfg.jobs, static_cast<int>(specs.size())));
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  BenchReport rep = make_report(std::move(rows));
  if (!cfg.out_dir.empty()) {
    write_file(fs::path(cfg.out_dir) / "report.json", report_to_json(rep).dump(2) + "\n");
    write_file(fs::path(cfg.out_dir) / "report.txt", render_table(rep));
  }
  return rep;
}

}  // namespace bcsynth

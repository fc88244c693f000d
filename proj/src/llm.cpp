#include "bcsynth/llm.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <ctime>
#include <fstream>
#include <regex>
#include <sstream>

namespace bcsynth {

namespace {

constexpr std::pair<TemplateId, std::string_view> kNames[] = {
    {TemplateId::SimilaritySelect, "similarity_select"},
    {TemplateId::SynthFirst, "synth_first"},
    {TemplateId::SynthFirstCtrl, "synth_first_ctrl"},
    {TemplateId::SynthNext, "synth_next"},
    {TemplateId::SynthNextCtrl, "synth_next_ctrl"},
    {TemplateId::RefineCoeff, "refine_coeff"},
    {TemplateId::RefineCoeffCtrl, "refine_coeff_ctrl"},
    {TemplateId::RefineStruct, "refine_struct"},
    {TemplateId::RefineStructCtrl, "refine_struct_ctrl"},
    {TemplateId::SolverSelect, "solver_select"},
    {TemplateId::TimeoutRetry, "timeout_retry"},
    {TemplateId::SolverError, "solver_error"},
};

bool is_placeholder_char(char c) {
  return (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

// Calls f(name, begin, end) for each {NAME} in text, in order.
template <class F>
void scan_placeholders(std::string_view text, F&& f) {
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '{') {
      std::size_t j = i + 1;
      while (j < text.size() && is_placeholder_char(text[j])) ++j;
      if (j > i + 1 && j < text.size() && text[j] == '}') {
        f(text.substr(i + 1, j - i - 1), i, j + 1);
        i = j + 1;
        continue;
      }
    }
    ++i;
  }
}

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size())
    s.replace(pos, from.size(), to);
}

}  // namespace

std::string utc_timestamp() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace {

// Markdown-free lines: code fences dropped, emphasis and backticks removed,
// Python-style ** powers turned into ^.
std::vector<std::string> clean_lines(std::string_view response) {
  std::vector<std::string> out;
  std::istringstream in{std::string(response)};
  std::string line;
  while (std::getline(in, line)) {
    std::string t = trim(line);
    if (t.rfind("```", 0) == 0) continue;
    static const std::regex py_pow(R"(([A-Za-z0-9_.)])\s*\*\*\s*(\d))");
    t = std::regex_replace(t, py_pow, "$1^$2");
    replace_all(t, "**", "");
    replace_all(t, "__", "");
    replace_all(t, "`", "");
    replace_all(t, "$", "");
    replace_all(t, "−", "-");
    replace_all(t, "·", "*");
    replace_all(t, "×", "*");
    t = trim(t);
    while (!t.empty() && (t[0] == '#' || t[0] == '>')) t = trim(t.substr(1));
    if (t.size() >= 2 && (t[0] == '-' || t[0] == '*') && t[1] == ' ') t = trim(t.substr(2));
    out.push_back(t);
  }
  return out;
}

// Value of the last line starting with `tag:`; an empty value continues on
// the following nonblank lines up to the next blank line or tag.
std::optional<std::string> tagged_value(const std::vector<std::string>& lines, std::string_view tag) {
  const std::string prefix = std::string(tag) + ":";
  std::optional<std::size_t> at;
  for (std::size_t i = 0; i < lines.size(); ++i)
    if (upper(lines[i]).rfind(prefix, 0) == 0) at = i;
  if (!at) return std::nullopt;
  std::string v = trim(std::string_view(lines[*at]).substr(prefix.size()));
  if (!v.empty()) return v;
  std::vector<std::string> parts;
  static const std::regex other_tag(R"(^[A-Z_]+:)");
  for (std::size_t i = *at + 1; i < lines.size(); ++i) {
    if (lines[i].empty()) {
      if (parts.empty()) continue;
      break;
    }
    if (std::regex_search(lines[i], other_tag)) break;
    parts.push_back(lines[i]);
  }
  std::string joined;
  for (const auto& p : parts) {
    if (!joined.empty() && joined.back() != ',') joined += ",";
    joined += " " + p;
  }
  return trim(joined);
}

std::string strip_expression(std::string v) {
  v = trim(v);
  if (v.size() >= 2 && v.front() == '[' && v.back() == ']') v = trim(v.substr(1, v.size() - 2));
  while (!v.empty() && (v.back() == '.' || v.back() == ';' || v.back() == ',')) v.pop_back();
  return trim(v);
}

// Drops an "lhs =" prefix and returns the lhs when there was one.
std::optional<std::string> split_assignment(std::string& v) {
  auto eq = v.find('=');
  if (eq == std::string::npos) return std::nullopt;
  std::string lhs = trim(std::string_view(v).substr(0, eq));
  v = trim(std::string_view(v).substr(eq + 1));
  return lhs;
}

Expr parse_reply_expression(const std::string& text, const DynamicalSystem& s, const std::string& what) {
  try {
    return parse_expression(text, s.state_vars);
  } catch (const UnknownVariableError& e) {
    if (std::find(s.control_vars.begin(), s.control_vars.end(), e.name()) != s.control_vars.end())
      throw ReplyParseError(what + " refers to control input '" + e.name() + "'");
    throw ReplyParseError("symbolic constant '" + e.name() + "' forbidden in " + what);
  } catch (const ParseError& e) {
    throw ReplyParseError("cannot parse " + what + " '" + text + "': " + e.what());
  }
}

std::vector<std::string> split_top_level(const std::string& v) {
  std::vector<std::string> out;
  int depth = 0;
  std::string cur;
  for (char c : v) {
    if (c == '(' || c == '[') ++depth;
    if (c == ')' || c == ']') --depth;
    if (c == ',' && depth == 0) {
      out.push_back(trim(cur));
      cur.clear();
      continue;
    }
    cur += c;
  }
  if (!trim(cur).empty()) out.push_back(trim(cur));
  return out;
}

}  // namespace

std::string_view to_string(TemplateId id) {
  for (const auto& [k, n] : kNames)
    if (k == id) return n;
  return "?";
}

std::optional<TemplateId> template_from_name(std::string_view name) {
  for (const auto& [k, n] : kNames)
    if (n == name) return k;
  return std::nullopt;
}

std::vector<std::string> template_placeholders(TemplateId id) {
  std::vector<std::string> out;
  scan_placeholders(template_text(id), [&](std::string_view name, std::size_t, std::size_t) {
    if (std::find(out.begin(), out.end(), name) == out.end()) out.emplace_back(name);
  });
  return out;
}

PromptInstance render(TemplateId id, const std::map<std::string, std::string>& variables) {
  std::string_view t = template_text(id);
  PromptInstance p;
  p.template_id = id;
  std::size_t last = 0;
  scan_placeholders(t, [&](std::string_view name, std::size_t b, std::size_t e) {
    auto it = variables.find(std::string(name));
    if (it == variables.end())
      throw TemplateError("template " + std::string(to_string(id)) + ": no value for {" +
                          std::string(name) + "}");
    p.text.append(t.substr(last, b - last));
    p.text += it->second;
    p.variables[it->first] = it->second;
    last = e;
  });
  p.text.append(t.substr(last));
  return p;
}

std::string condition_3(TimeDomain t) {
  if (t == TimeDomain::Discrete) return "B(f(x)) - B(x) ≤ 0 for all x in the state space";
  return "∇B(x) · f(x) < 0 on the boundary";
}

std::string context_text(const std::optional<RetrievedExample>& example) {
  if (!example) return "No similar problems found. Analyze this problem fresh.";
  return "Related problem found:\nEXAMPLE: " + example->problem + "\nB(x): " + example->barrier +
         "\n\nWARNING: This is just an example - your solution may be completely different NOT ONLY "
         "in terms of coefficients, BUT ALSO in format and structure. You may make mistakes, so do "
         "not consider this as a solution. Please don't copy it.";
}

std::string failed_info(const std::vector<std::string>& failed, std::size_t counterexamples) {
  std::string names;
  for (const auto& f : failed) names += (names.empty() ? "" : ", ") + f;
  return "failed: " + names + " (" + std::to_string(counterexamples) + " counter-examples)";
}

std::string sha256_hex(std::string_view text) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr))
    throw Error("SHA-256 computation failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::optional<LiveConfig> LiveConfig::from_env() {
  auto get = [](const char* k) -> std::string {
    const char* v = std::getenv(k);
    return v ? v : "";
  };
  LiveConfig c;
  c.url = get("BCS_LLM_URL");
  c.api_key = get("BCS_LLM_API_KEY");
  c.model = get("BCS_LLM_MODEL");
  if (auto f = get("BCS_LLM_FLAVOR"); !f.empty()) c.flavor = f;
  if (c.url.empty() || c.model.empty()) return std::nullopt;
  return c;
}

ScriptedClient::ScriptedClient(const nlohmann::json& script) {
  if (!script.is_object() || !script.contains("responses") || !script["responses"].is_object())
    throw ConfigError("LLM script must be an object with a \"responses\" object");
  if (script.contains("model")) model_ = script["model"].get<std::string>();
  for (const auto& [name, list] : script["responses"].items()) {
    auto id = template_from_name(name);
    if (!id) throw ConfigError("LLM script: unknown template '" + name + "'");
    std::vector<std::string> replies;
    if (list.is_string()) {
      replies.push_back(list.get<std::string>());
    } else if (list.is_array() && !list.empty()) {
      for (const auto& r : list) replies.push_back(r.get<std::string>());
    } else {
      throw ConfigError("LLM script: replies for '" + name + "' must be a string or nonempty list");
    }
    replies_[*id] = std::move(replies);
  }
}

std::unique_ptr<ScriptedClient> ScriptedClient::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open LLM script " + path);
  try {
    return std::make_unique<ScriptedClient>(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("LLM script " + path + ": " + e.what());
  }
}

Completion ScriptedClient::complete(const PromptInstance& p) {
  std::lock_guard lock(mu_);
  auto it = replies_.find(p.template_id);
  if (it == replies_.end())
    throw LlmError("LLM script has no replies for " + std::string(to_string(p.template_id)));
  std::size_t& k = cursor_[p.template_id];
  std::size_t i = std::min(k, it->second.size() - 1);
  ++k;
  return {it->second[i], model_};
}

Cassette::Cassette(std::string path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (!in) return;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      CassetteEntry e{j.at("prompt_sha256").get<std::string>(), j.at("prompt").get<std::string>(),
                      j.at("response").get<std::string>(), j.value("model", ""), j.value("timestamp", "")};
      index_[e.prompt_sha256].push_back(entries_.size());
      entries_.push_back(std::move(e));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path_ + ":" + std::to_string(lineno) + ": bad cassette record: " + e.what());
    }
  }
}

std::optional<CassetteEntry> Cassette::next(const std::string& hash) {
  std::lock_guard lock(mu_);
  auto it = index_.find(hash);
  if (it == index_.end()) return std::nullopt;
  std::size_t& k = cursor_[hash];
  std::size_t i = std::min(k, it->second.size() - 1);
  ++k;
  return entries_[it->second[i]];
}

void Cassette::append(const CassetteEntry& e) {
  std::lock_guard lock(mu_);
  if (!path_.empty()) {
    std::ofstream out(path_, std::ios::app);
    if (!out) throw Error("cannot write cassette " + path_);
    nlohmann::json j = {{"prompt_sha256", e.prompt_sha256}, {"prompt", e.prompt}, {"response", e.response},
                        {"model", e.model}, {"timestamp", e.timestamp}};
    out << j.dump() << "\n";
  }
  index_[e.prompt_sha256].push_back(entries_.size());
  entries_.push_back(e);
}

std::size_t Cassette::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

Completion ReplayClient::complete(const PromptInstance& p) {
  std::string hash = sha256_hex(p.text);
  auto e = cassette_->next(hash);
  if (!e) throw CassetteMissError(hash);
  return {e->response, e->model};
}

Completion RecordingClient::complete(const PromptInstance& p) {
  Completion c = inner_->complete(p);
  cassette_->append({sha256_hex(p.text), p.text, c.text, c.model, utc_timestamp()});
  return c;
}

void Transcript::append(TranscriptEntry e) {
  std::lock_guard lock(mu_);
  entries_.push_back(std::move(e));
}

std::vector<TranscriptEntry> Transcript::entries() const {
  std::lock_guard lock(mu_);
  return entries_;
}

std::size_t Transcript::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

nlohmann::json transcript_to_json(const Transcript& t) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : t.entries())
    out.push_back({{"template", to_string(e.template_id)},
                   {"prompt_sha256", e.prompt_sha256},
                   {"prompt", e.prompt},
                   {"response", e.response},
                   {"model", e.model},
                   {"wall_ms", e.wall_ms}});
  return out;
}

std::string Llm::ask(const PromptInstance& p) {
  auto t0 = std::chrono::steady_clock::now();
  Completion c = client_->complete(p);
  double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  ++calls_;
  transcript_.append({p.template_id, sha256_hex(p.text), p.text, c.text, c.model, client_->live() ? ms : 0.0});
  return c.text;
}

BarrierCandidate parse_candidate(std::string_view response, const DynamicalSystem& s, bool refined) {
  auto lines = clean_lines(response);
  auto pick = [&](std::string_view plain) {
    std::string refined_tag = "REFINED_" + std::string(plain);
    auto v = tagged_value(lines, refined ? std::string_view(refined_tag) : plain);
    if (!v) v = tagged_value(lines, refined ? plain : std::string_view(refined_tag));
    return v;
  };

  BarrierCandidate c;
  auto bv = pick("BARRIER");
  if (!bv) throw ReplyParseError(std::string("reply has no ") + (refined ? "REFINED_BARRIER:" : "BARRIER:") + " line");
  std::string btext = strip_expression(*bv);
  if (auto lhs = split_assignment(btext); lhs && lhs->find('B') == std::string::npos)
    throw ReplyParseError("barrier line is an assignment to '" + *lhs + "'");
  c.barrier = parse_reply_expression(strip_expression(btext), s, "barrier");

  if (s.controlled()) {
    auto cv = pick("CONTROLLER");
    if (!cv) throw ReplyParseError(std::string("reply has no ") + (refined ? "REFINED_CONTROLLER:" : "CONTROLLER:") + " line");
    auto parts = split_top_level(strip_expression(*cv));
    if (parts.size() != s.control_vars.size())
      throw ReplyParseError("expected " + std::to_string(s.control_vars.size()) + " controller expressions, got " +
                            std::to_string(parts.size()));
    for (std::size_t i = 0; i < parts.size(); ++i) {
      std::string text = strip_expression(parts[i]);
      std::string target = s.control_vars[i];
      if (auto lhs = split_assignment(text)) {
        std::string name = trim(lhs->substr(0, lhs->find('(')));
        if (std::find(s.control_vars.begin(), s.control_vars.end(), name) == s.control_vars.end())
          throw ReplyParseError("controller assigned to unknown input '" + *lhs + "'");
        target = name;
      }
      if (c.controllers.count(target)) throw ReplyParseError("controller for '" + target + "' given twice");
      c.controllers.emplace(target, parse_reply_expression(text, s, "controller " + target));
    }
  }

  try {
    validate_candidate(s, c);
  } catch (const CandidateError& e) {
    throw ReplyParseError(e.what());
  }
  return c;
}

std::string print_candidate(const BarrierCandidate& c, const DynamicalSystem& s, bool refined) {
  std::string pre = refined ? "REFINED_" : "";
  std::string out = pre + "BARRIER: " + c.barrier.str();
  if (!s.control_vars.empty()) {
    out += "\n" + pre + "CONTROLLER: ";
    for (std::size_t i = 0; i < s.control_vars.size(); ++i) {
      if (i) out += ", ";
      auto it = c.controllers.find(s.control_vars[i]);
      out += it == c.controllers.end() ? "0" : it->second.str();
    }
  }
  return out;
}

int parse_candidate_number(std::string_view response) {
  static const std::regex num(R"((^|[^0-9.])(\d+)(?![0-9.]))");
  std::string text;
  for (const auto& l : clean_lines(response)) text += l + "\n";
  std::smatch m;
  if (!std::regex_search(text, m, num)) throw ReplyParseError("no candidate number in reply");
  int k = 0;
  try {
    k = std::stoi(m[2].str());
  } catch (const std::exception&) {
    throw ReplyParseError("candidate number out of range");
  }
  if (k < 1) throw ReplyParseError("candidate number must be positive");
  return k;
}

SolverKind parse_solver_name(std::string_view response, std::string_view tag,
                             const std::vector<SolverKind>& allowed) {
  auto lines = clean_lines(response);
  auto v = tagged_value(lines, tag);
  std::string name;
  if (v) {
    name = *v;
  } else {
    std::string whole;
    for (const auto& l : lines)
      if (!l.empty()) whole += (whole.empty() ? "" : " ") + l;
    name = whole;
  }
  name = lower(strip_expression(name));
  auto k = solver_from_name(name);
  if (!k) throw ReplyParseError("unknown solver '" + name + "'");
  if (std::find(allowed.begin(), allowed.end(), *k) == allowed.end())
    throw ReplyParseError("solver '" + name + "' is not available here");
  return *k;
}

RetryDecision parse_retry_decision(std::string_view response) {
  auto lines = clean_lines(response);
  auto r = tagged_value(lines, "RETRY");
  if (!r) throw ReplyParseError("reply has no RETRY: line");
  std::string word = lower(strip_expression(*r));
  RetryDecision d;
  if (word.rfind("yes", 0) == 0) {
    d.retry = true;
  } else if (word.rfind("no", 0) != 0) {
    throw ReplyParseError("RETRY must be yes or no, got '" + word + "'");
  }
  if (!d.retry) return d;
  if (auto m = tagged_value(lines, "TIMEOUT_MULTIPLIER")) {
    static const std::regex num(R"([0-9]+(\.[0-9]*)?)");
    std::smatch sm;
    if (!std::regex_search(*m, sm, num)) throw ReplyParseError("TIMEOUT_MULTIPLIER is not a number");
    double x = std::stod(sm.str());
    if (x < 1.0) throw ReplyParseError("TIMEOUT_MULTIPLIER must be at least 1");
    d.multiplier = x;
  }
  return d;
}

namespace {

template <class T, class Parse>
std::optional<T> ask_parsed(Llm& llm, const PromptInstance& p, Parse&& parse) {
  for (int attempt = 0; attempt < 2; ++attempt) {
    try {
      return parse(llm.ask(p));
    } catch (const ReplyParseError&) {
    }
  }
  return std::nullopt;
}

std::map<std::string, std::string> problem_vars(const SolverQuery& q) {
  return {{"SYSTEM_DYNAMICS", q.dynamics}, {"BARRIER_EXPRESSION", q.barrier}};
}

}  // namespace

SolverHooks llm_solver_hooks(Llm& llm) {
  SolverHooks h;
  h.select_solver = [&llm](const SolverQuery& q, const std::vector<SolverKind>& available) {
    auto p = render(TemplateId::SolverSelect, problem_vars(q));
    auto k = ask_parsed<SolverKind>(llm, p, [&](const std::string& r) {
      return parse_solver_name(r, "SOLVER", available);
    });
    if (k) return *k;
    if (std::find(available.begin(), available.end(), SolverKind::Z3) != available.end()) return SolverKind::Z3;
    return available.front();
  };
  h.timeout_retry = [&llm](const SolverQuery& q, SolverKind solver, int timeout_ms) -> std::optional<double> {
    auto vars = problem_vars(q);
    vars["SOLVER_NAME"] = std::string(to_string(solver));
    vars["TIMEOUT_MS"] = std::to_string(timeout_ms);
    auto d = ask_parsed<RetryDecision>(llm, render(TemplateId::TimeoutRetry, vars), parse_retry_decision);
    if (!d || !d->retry) return std::nullopt;
    return d->multiplier.value_or(2.0);
  };
  h.next_solver = [&llm](const SolverQuery& q, SolverKind failed, const SolverResult& result,
                         const std::vector<SolverKind>& remaining) {
    auto vars = problem_vars(q);
    vars["SOLVER_NAME"] = std::string(to_string(failed));
    vars["ERROR_TYPE"] = std::string(to_string(result.status));
    vars["ERROR_MESSAGE"] = result.diagnostic.empty() ? "(none)" : result.diagnostic;
    std::string list;
    for (auto k : remaining) list += (list.empty() ? "- " : "\n- ") + std::string(to_string(k));
    vars["REMAINING_SOLVERS_LIST"] = list;
    auto k = ask_parsed<SolverKind>(llm, render(TemplateId::SolverError, vars), [&](const std::string& r) {
      return parse_solver_name(r, "NEXT_SOLVER", remaining);
    });
    return k ? *k : remaining.front();
  };
  return h;
}

}  // namespace bcsynth

#include "bcsynth/smt.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <set>
#include <sstream>

#include <Eigen/Dense>

#include "bcsynth/process.hpp"

namespace bcsynth {

std::string_view to_string(SolverKind k) {
  switch (k) {
    case SolverKind::Z3: return "z3";
    case SolverKind::Cvc5: return "cvc5";
    case SolverKind::Yices: return "yices";
  }
  return "?";
}

std::optional<SolverKind> solver_from_name(std::string_view name) {
  for (SolverKind k : {SolverKind::Z3, SolverKind::Cvc5, SolverKind::Yices})
    if (to_string(k) == name) return k;
  return std::nullopt;
}

std::string_view to_string(SolverStatus s) {
  switch (s) {
    case SolverStatus::Proved: return "proved";
    case SolverStatus::Counterexample: return "counterexample";
    case SolverStatus::Timeout: return "timeout";
    case SolverStatus::Error: return "error";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Registry

SolverRegistry SolverRegistry::probe() {
  SolverRegistry r;
  struct Entry {
    SolverKind kind;
    const char* env;
    const char* binary;
  };
  for (const Entry& e : {Entry{SolverKind::Z3, "BCS_Z3", "z3"}, Entry{SolverKind::Cvc5, "BCS_CVC5", "cvc5"},
                         Entry{SolverKind::Yices, "BCS_YICES", "yices-smt2"}}) {
    const char* over = std::getenv(e.env);
    std::string path = find_executable(over && *over ? over : e.binary);
    if (!path.empty()) r.binaries_[e.kind] = path;
  }
  return r;
}

SolverRegistry SolverRegistry::restricted(std::span<const SolverKind> keep) const {
  SolverRegistry r;
  for (SolverKind k : keep)
    if (available(k)) r.binaries_[k] = binary(k);
  return r;
}

std::vector<SolverKind> SolverRegistry::kinds() const {
  std::vector<SolverKind> out;
  for (const auto& [k, _] : binaries_) out.push_back(k);
  return out;
}

// ---------------------------------------------------------------------------
// Encoding

std::string smt_number(double v) {
  if (!std::isfinite(v)) throw EncodingError("non-finite constant in obligation");
  if (v < 0) return "(- " + smt_number(-v) + ")";
  if (v == 0) return "0.0";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.16e", v);
  std::string s = buf;
  auto epos = s.find('e');
  int exp = std::atoi(s.c_str() + epos + 1);
  std::string digits;
  for (std::size_t i = 0; i < epos; ++i)
    if (s[i] != '.') digits += s[i];
  std::string ip, fp;
  if (exp >= 0) {
    std::size_t cut = static_cast<std::size_t>(exp) + 1;
    if (cut >= digits.size()) {
      ip = digits + std::string(cut - digits.size(), '0');
    } else {
      ip = digits.substr(0, cut);
      fp = digits.substr(cut);
    }
  } else {
    ip = "0";
    fp = std::string(static_cast<std::size_t>(-exp - 1), '0') + digits;
  }
  while (!fp.empty() && fp.back() == '0') fp.pop_back();
  return ip + "." + (fp.empty() ? "0" : fp);
}

namespace {

const std::set<std::string>& reserved_symbols() {
  static const std::set<std::string> words = {
      "and", "or", "not", "ite", "let", "true", "false", "distinct", "assert", "forall", "exists",
      "par", "as", "Real", "Int", "Bool", "abs", "div", "mod", "root-obj", "define-fun", "model"};
  return words;
}

std::string symbol(const std::string& name) {
  return reserved_symbols().count(name) ? "|" + name + "|" : name;
}

std::string nary(const std::string& op, const std::vector<std::string>& args, const std::string& unit) {
  if (args.empty()) return unit;
  if (args.size() == 1) return args.front();
  std::string s = "(" + op;
  for (const auto& a : args) s += " " + a;
  return s + ")";
}

class Writer {
 public:
  std::string term(const Expr& e) {
    switch (e.op()) {
      case Op::Const: return smt_number(e.value());
      case Op::Var: return symbol(e.name());
      case Op::Neg: return "(- " + term(e.lhs()) + ")";
      case Op::Add: return "(+ " + term(e.lhs()) + " " + term(e.rhs()) + ")";
      case Op::Sub: return "(- " + term(e.lhs()) + " " + term(e.rhs()) + ")";
      case Op::Mul: return "(* " + term(e.lhs()) + " " + term(e.rhs()) + ")";
      case Op::Div: {
        std::string a = term(e.lhs());
        std::string b = term(e.rhs());
        add_guard("(not (= " + b + " 0.0))");
        return "(/ " + a + " " + b + ")";
      }
      case Op::Pow: {
        int n = e.exponent();
        if (n == 0) return "1.0";
        std::string a = term(e.lhs());
        return nary("*", std::vector<std::string>(static_cast<std::size_t>(n), a), "1.0");
      }
      case Op::Func: return call(e);
    }
    return "0.0";
  }

  const std::vector<std::string>& aux() const { return aux_; }
  const std::vector<std::string>& guards() const { return guards_; }

 private:
  std::string call(const Expr& e) {
    std::string a = term(e.lhs());
    switch (e.fn()) {
      case Fn::Abs: return "(ite (>= " + a + " 0.0) " + a + " (- " + a + "))";
      case Fn::Sign: return "(ite (> " + a + " 0.0) 1.0 (ite (< " + a + " 0.0) (- 1.0) 0.0))";
      case Fn::Sqrt: {
        auto it = sqrt_names_.find(a);
        if (it != sqrt_names_.end()) return it->second;
        std::string s = "sqrt_" + std::to_string(aux_.size());
        aux_.push_back(s);
        sqrt_names_.emplace(a, s);
        add_guard("(>= " + s + " 0.0)");
        add_guard("(= (* " + s + " " + s + ") " + a + ")");
        return s;
      }
      default:
        throw EncodingError("transcendental function '" + std::string(fn_name(e.fn())) +
                            "' has no QF_NRA encoding; use the Taylor policy");
    }
  }

  void add_guard(const std::string& g) {
    if (std::find(guards_.begin(), guards_.end(), g) == guards_.end()) guards_.push_back(g);
  }

  std::vector<std::string> aux_;
  std::vector<std::string> guards_;
  std::map<std::string, std::string> sqrt_names_;
};

std::string squared_distance(std::span<const std::string> vars, const std::vector<double>& c) {
  std::vector<std::string> terms;
  for (std::size_t i = 0; i < vars.size(); ++i) {
    std::string d = c[i] == 0.0 ? symbol(vars[i]) : "(- " + symbol(vars[i]) + " " + smt_number(c[i]) + ")";
    terms.push_back("(* " + d + " " + d + ")");
  }
  return nary("+", terms, "0.0");
}

std::string rect_formula(const Rect& r, std::span<const std::string> vars) {
  std::vector<std::string> parts;
  for (std::size_t i = 0; i < vars.size(); ++i) {
    parts.push_back("(<= " + smt_number(r.lo[i]) + " " + symbol(vars[i]) + ")");
    parts.push_back("(<= " + symbol(vars[i]) + " " + smt_number(r.hi[i]) + ")");
  }
  return nary("and", parts, "true");
}

void check_vars(const Region& r, std::span<const std::string> vars) {
  auto d = region_dimension(r);
  if (d && *d != vars.size())
    throw DimensionError("region of dimension " + std::to_string(*d) + " encoded over " +
                         std::to_string(vars.size()) + " variables");
}

}  // namespace

std::string region_to_formula(const Region& r, std::span<const std::string> vars) {
  check_vars(r, vars);
  if (const auto* b = std::get_if<Ball>(&r))
    return "(<= " + squared_distance(vars, b->center) + " " + smt_number(b->radius * b->radius) + ")";
  if (const auto* q = std::get_if<Rect>(&r)) return rect_formula(*q, vars);
  if (const auto* u = std::get_if<UnionOfRects>(&r)) {
    std::vector<std::string> parts;
    for (const auto& m : u->members) parts.push_back(rect_formula(m, vars));
    return nary("or", parts, "false");
  }
  if (const auto* c = std::get_if<ComplementOfBall>(&r))
    return "(>= " + squared_distance(vars, c->center) + " " + smt_number(c->radius * c->radius) + ")";
  return "true";
}

std::optional<AssumptionBox> assumption_box(const ProofObligation& o) {
  if (auto rect = bounding_box(o.domain)) {
    AssumptionBox ab;
    for (std::size_t i = 0; i < o.vars.size(); ++i) ab.box[o.vars[i]] = Interval{rect->lo[i], rect->hi[i]};
    return ab;
  }
  if (!o.on_zero_of) return std::nullopt;

  // B = x'Qx + b'x + c with Q positive definite: B = 0 is an ellipsoid.
  auto terms = expand_polynomial(*o.on_zero_of, o.vars);
  if (!terms) return std::nullopt;
  const auto n = static_cast<Eigen::Index>(o.vars.size());
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  double c = 0.0;
  for (const auto& [mono, coeff] : *terms) {
    int deg = 0;
    std::vector<Eigen::Index> idx;
    for (std::size_t i = 0; i < mono.size(); ++i) {
      deg += mono[i];
      for (int k = 0; k < mono[i]; ++k) idx.push_back(static_cast<Eigen::Index>(i));
    }
    if (deg > 2) return std::nullopt;
    if (deg == 0) c += coeff;
    else if (deg == 1) b(idx[0]) += coeff;
    else if (idx[0] == idx[1]) Q(idx[0], idx[0]) += coeff;
    else {
      Q(idx[0], idx[1]) += 0.5 * coeff;
      Q(idx[1], idx[0]) += 0.5 * coeff;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Q);
  if (eig.info() != Eigen::Success || eig.eigenvalues().minCoeff() <= 1e-12) return std::nullopt;
  Eigen::MatrixXd Qinv = Q.inverse();
  Eigen::VectorXd x0 = -0.5 * Qinv * b;
  double k = std::max(0.0, x0.dot(Q * x0) - c);
  AssumptionBox ab;
  ab.needs_confirmation = true;
  for (Eigen::Index i = 0; i < n; ++i) {
    double h = std::sqrt(k * Qinv(i, i)) * (1.0 + 1e-6) + 1e-9;
    ab.box[o.vars[static_cast<std::size_t>(i)]] = Interval{x0(i) - h, x0(i) + h};
  }
  return ab;
}

namespace {

std::string header(std::span<const std::string> vars, const std::vector<std::string>& aux) {
  std::string s = "(set-option :produce-models true)\n(set-logic QF_NRA)\n";
  for (const auto& v : vars) s += "(declare-const " + symbol(v) + " Real)\n";
  for (const auto& v : aux) s += "(declare-const " + v + " Real)\n";
  return s;
}

std::string box_formula(const Box& box, std::span<const std::string> vars) {
  std::vector<std::string> parts;
  for (const auto& v : vars) {
    auto it = box.find(v);
    if (it == box.end()) continue;
    parts.push_back("(<= " + smt_number(it->second.lo) + " " + symbol(v) + ")");
    parts.push_back("(<= " + symbol(v) + " " + smt_number(it->second.hi) + ")");
  }
  return nary("and", parts, "true");
}

TaylorResult polynomialize(const Expr& e, const EncodeOptions& opts, const Box& box) {
  try {
    return taylor_expand(e, opts.taylor_order, box);
  } catch (const EncodingError&) {
    throw;
  } catch (const Error& err) {
    throw EncodingError(err.what());
  }
}

}  // namespace

EncodedObligation encode(const ProofObligation& o, const EncodeOptions& opts) {
  check_vars(o.domain, o.vars);
  EncodedObligation out;
  bool transcendental = contains_transcendental(o.lhs) || (o.on_zero_of && contains_transcendental(*o.on_zero_of));

  Expr lhs = o.lhs;
  std::optional<Expr> zero = o.on_zero_of;
  double zero_bound = 0.0;
  if (transcendental) {
    if (opts.policy == TranscendentalPolicy::Reject)
      throw EncodingError("obligation contains transcendental functions and the policy rejects them");
    out.box = assumption_box(o);
    if (!out.box)
      throw SampleOnlyError(
          "sample-verified only: transcendental obligation over an unbounded region with no enclosing box");
    auto t = polynomialize(o.lhs, opts, out.box->box);
    lhs = t.polynomial;
    out.remainder_bound = t.remainder_bound;
    if (zero && contains_transcendental(*zero)) {
      auto tz = polynomialize(*zero, opts, out.box->box);
      zero = tz.polynomial;
      zero_bound = tz.remainder_bound;
    }
  }

  Writer w;
  std::string region = region_to_formula(o.domain, o.vars);
  std::string zero_term = zero ? w.term(*zero) : std::string();
  std::string lhs_term = w.term(lhs);
  const double d = out.remainder_bound;

  std::string negated;
  switch (o.relation) {
    case Relation::Le: negated = "(> " + lhs_term + " " + smt_number(-d) + ")"; break;
    case Relation::Lt: negated = "(>= " + lhs_term + " " + smt_number(-d) + ")"; break;
    case Relation::Gt: negated = "(<= " + lhs_term + " " + smt_number(d) + ")"; break;
  }

  std::string s = header(o.vars, w.aux());
  if (region != "true") s += "(assert " + region + ")\n";
  if (out.box) s += "(assert " + box_formula(out.box->box, o.vars) + ")\n";
  for (const auto& g : w.guards()) s += "(assert " + g + ")\n";
  if (zero) {
    if (zero_bound > 0.0)
      s += "(assert (and (<= " + smt_number(-zero_bound) + " " + zero_term + ") (<= " + zero_term + " " +
           smt_number(zero_bound) + ")))\n";
    else
      s += "(assert (= " + zero_term + " 0.0))\n";
  }
  s += "(assert " + negated + ")\n(check-sat)\n(get-model)\n";
  out.script = std::move(s);

  if (out.box && out.box->needs_confirmation) {
    Writer cw;
    std::string zt = cw.term(*o.on_zero_of);
    std::vector<std::string> outside;
    for (const auto& v : o.vars) {
      const auto& iv = out.box->box.at(v);
      outside.push_back("(< " + symbol(v) + " " + smt_number(iv.lo) + ")");
      outside.push_back("(> " + symbol(v) + " " + smt_number(iv.hi) + ")");
    }
    std::string cs = header(o.vars, cw.aux());
    if (region != "true") cs += "(assert " + region + ")\n";
    for (const auto& g : cw.guards()) cs += "(assert " + g + ")\n";
    cs += "(assert (= " + zt + " 0.0))\n";
    cs += "(assert " + nary("or", outside, "false") + ")\n(check-sat)\n(get-model)\n";
    out.confirmation_script = std::move(cs);
  }
  return out;
}

std::string encode_obligation(const ProofObligation& o, const EncodeOptions& opts) {
  return encode(o, opts).script;
}

// ---------------------------------------------------------------------------
// Model parsing

namespace {

struct Sexp {
  std::string atom;
  std::vector<Sexp> list;
  bool is_list = false;
};

class SexpReader {
 public:
  explicit SexpReader(std::string_view t) : t_(t) {}

  bool at_end() {
    skip();
    return pos_ >= t_.size();
  }

  Sexp read() {
    skip();
    if (pos_ >= t_.size()) throw Error("unexpected end of solver output");
    char ch = t_[pos_];
    if (ch == '(') {
      ++pos_;
      Sexp s;
      s.is_list = true;
      for (;;) {
        skip();
        if (pos_ >= t_.size()) throw Error("unbalanced parentheses in solver output");
        if (t_[pos_] == ')') {
          ++pos_;
          return s;
        }
        s.list.push_back(read());
      }
    }
    if (ch == ')') throw Error("unexpected ')' in solver output");
    Sexp s;
    if (ch == '|') {
      auto end = t_.find('|', pos_ + 1);
      if (end == std::string_view::npos) throw Error("unterminated quoted symbol");
      s.atom = std::string(t_.substr(pos_ + 1, end - pos_ - 1));
      pos_ = end + 1;
      return s;
    }
    if (ch == '"') {
      std::size_t end = pos_ + 1;
      while (end < t_.size() && !(t_[end] == '"' && (end + 1 >= t_.size() || t_[end + 1] != '"')))
        end += t_[end] == '"' ? 2 : 1;
      s.atom = std::string(t_.substr(pos_, end + 1 - pos_));
      pos_ = end + 1;
      return s;
    }
    std::size_t start = pos_;
    while (pos_ < t_.size() && !std::isspace(static_cast<unsigned char>(t_[pos_])) && t_[pos_] != '(' &&
           t_[pos_] != ')')
      ++pos_;
    s.atom = std::string(t_.substr(start, pos_ - start));
    return s;
  }

 private:
  void skip() {
    while (pos_ < t_.size()) {
      if (std::isspace(static_cast<unsigned char>(t_[pos_]))) ++pos_;
      else if (t_[pos_] == ';') {
        while (pos_ < t_.size() && t_[pos_] != '\n') ++pos_;
      } else break;
    }
  }

  std::string_view t_;
  std::size_t pos_ = 0;
};

std::optional<double> number_atom(std::string a) {
  while (!a.empty() && (a.back() == '?' || a.back() == ',')) a.pop_back();
  if (a.empty()) return std::nullopt;
  auto slash = a.find('/');
  try {
    std::size_t used = 0;
    if (slash != std::string::npos) {
      double p = std::stod(a.substr(0, slash), &used);
      if (used != slash) return std::nullopt;
      std::string qs = a.substr(slash + 1);
      double q = std::stod(qs, &used);
      if (used != qs.size() || q == 0) return std::nullopt;
      return p / q;
    }
    double v = std::stod(a, &used);
    if (used != a.size()) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

using Poly = std::vector<double>;  // coefficients by ascending power

Poly padd(Poly a, const Poly& b, double sign) {
  if (a.size() < b.size()) a.resize(b.size(), 0.0);
  for (std::size_t i = 0; i < b.size(); ++i) a[i] += sign * b[i];
  return a;
}

Poly pmul(const Poly& a, const Poly& b) {
  Poly r(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
  return r;
}

Poly poly_of(const Sexp& s) {
  if (!s.is_list) {
    if (auto v = number_atom(s.atom)) return {*v};
    return {0.0, 1.0};  // the polynomial's variable
  }
  if (s.list.empty()) throw Error("empty term in root-obj");
  const std::string& op = s.list[0].atom;
  if (op == "+") {
    Poly r{0.0};
    for (std::size_t i = 1; i < s.list.size(); ++i) r = padd(r, poly_of(s.list[i]), 1.0);
    return r;
  }
  if (op == "-") {
    if (s.list.size() == 2) return padd({0.0}, poly_of(s.list[1]), -1.0);
    Poly r = poly_of(s.list[1]);
    for (std::size_t i = 2; i < s.list.size(); ++i) r = padd(r, poly_of(s.list[i]), -1.0);
    return r;
  }
  if (op == "*") {
    Poly r{1.0};
    for (std::size_t i = 1; i < s.list.size(); ++i) r = pmul(r, poly_of(s.list[i]));
    return r;
  }
  if (op == "^" && s.list.size() == 3) {
    auto n = number_atom(s.list[2].atom);
    if (!n || *n < 0) throw Error("bad exponent in root-obj");
    Poly base = poly_of(s.list[1]), r{1.0};
    for (int i = 0; i < static_cast<int>(*n); ++i) r = pmul(r, base);
    return r;
  }
  if (op == "/" && s.list.size() == 3) {
    Poly q = poly_of(s.list[2]);
    if (q.size() != 1 || q[0] == 0) throw Error("non-constant divisor in root-obj");
    Poly r = poly_of(s.list[1]);
    for (auto& c : r) c /= q[0];
    return r;
  }
  throw Error("unsupported operator '" + op + "' in root-obj");
}

double poly_eval(const Poly& p, double x) {
  double r = 0.0;
  for (auto it = p.rbegin(); it != p.rend(); ++it) r = r * x + *it;
  return r;
}

// The idx-th (1-based, ascending) real root of p.
double real_root(Poly p, int idx) {
  while (p.size() > 1 && p.back() == 0.0) p.pop_back();
  const auto deg = static_cast<Eigen::Index>(p.size()) - 1;
  if (deg < 1) throw Error("constant polynomial in root-obj");
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(deg, deg);
  for (Eigen::Index i = 1; i < deg; ++i) companion(i, i - 1) = 1.0;
  for (Eigen::Index i = 0; i < deg; ++i) companion(i, deg - 1) = -p[static_cast<std::size_t>(i)] / p.back();
  Eigen::EigenSolver<Eigen::MatrixXd> es(companion, false);
  std::vector<double> roots;
  for (Eigen::Index i = 0; i < deg; ++i) {
    auto z = es.eigenvalues()(i);
    if (std::fabs(z.imag()) <= 1e-7 * std::max(1.0, std::abs(z))) roots.push_back(z.real());
  }
  std::sort(roots.begin(), roots.end());
  if (idx < 1 || static_cast<std::size_t>(idx) > roots.size()) throw Error("root-obj index out of range");
  double x = roots[static_cast<std::size_t>(idx - 1)];
  Poly dp;
  for (std::size_t i = 1; i < p.size(); ++i) dp.push_back(static_cast<double>(i) * p[i]);
  for (int it = 0; it < 20; ++it) {
    double d = poly_eval(dp, x);
    if (d == 0.0) break;
    double step = poly_eval(p, x) / d;
    x -= step;
    if (std::fabs(step) <= 1e-16 * std::max(1.0, std::fabs(x))) break;
  }
  return x;
}

void collect_numbers(const Sexp& s, std::vector<double>& out) {
  if (!s.is_list) {
    if (auto v = number_atom(s.atom)) out.push_back(*v);
    return;
  }
  for (const auto& c : s.list) collect_numbers(c, out);
}

double value_of(const Sexp& s, std::vector<std::string>* warnings) {
  if (!s.is_list) {
    if (auto v = number_atom(s.atom)) return *v;
    throw Error("unrecognised model value '" + s.atom + "'");
  }
  if (s.list.empty()) throw Error("empty model value");
  const Sexp& head = s.list[0];
  if (head.is_list) throw Error("unrecognised model value");
  const std::string& op = head.atom;
  if (op == "-" && s.list.size() == 2) return -value_of(s.list[1], warnings);
  if (op == "-" && s.list.size() >= 3) {
    double r = value_of(s.list[1], warnings);
    for (std::size_t i = 2; i < s.list.size(); ++i) r -= value_of(s.list[i], warnings);
    return r;
  }
  if (op == "+" || op == "*") {
    double r = op == "+" ? 0.0 : 1.0;
    for (std::size_t i = 1; i < s.list.size(); ++i) {
      double v = value_of(s.list[i], warnings);
      r = op == "+" ? r + v : r * v;
    }
    return r;
  }
  if (op == "/" && s.list.size() == 3) return value_of(s.list[1], warnings) / value_of(s.list[2], warnings);
  if (op == "root-obj" && s.list.size() == 3) {
    auto idx = number_atom(s.list[2].atom);
    if (!idx) throw Error("bad root-obj index");
    return real_root(poly_of(s.list[1]), static_cast<int>(*idx));
  }
  if (op == "_" && s.list.size() >= 2 && s.list[1].atom == "real_algebraic_number") {
    std::vector<double> nums;
    for (std::size_t i = 2; i < s.list.size(); ++i) collect_numbers(s.list[i], nums);
    if (nums.size() < 2) throw Error("unrecognised algebraic number");
    double mid = 0.5 * (nums[nums.size() - 2] + nums.back());
    if (warnings) warnings->push_back("algebraic model value approximated by its isolating interval midpoint");
    return mid;
  }
  throw Error("unrecognised model value operator '" + op + "'");
}

}  // namespace

std::vector<double> parse_model(std::string_view text, std::span<const std::string> vars,
                                std::vector<std::string>* warnings) {
  std::vector<double> point(vars.size(), 0.0);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < vars.size(); ++i) index[vars[i]] = i;

  std::function<void(const Sexp&)> visit = [&](const Sexp& s) {
    if (!s.is_list || s.list.empty()) return;
    const Sexp& head = s.list[0];
    if (!head.is_list && head.atom == "define-fun" && s.list.size() == 5) {
      const Sexp& params = s.list[2];
      if (params.is_list && params.list.empty()) {
        auto it = index.find(s.list[1].atom);
        if (it != index.end()) point[it->second] = value_of(s.list[4], warnings);
      }
      return;
    }
    if (!head.is_list && head.atom == "=" && s.list.size() == 3 && !s.list[1].is_list) {
      auto it = index.find(s.list[1].atom);
      if (it != index.end()) {
        point[it->second] = value_of(s.list[2], warnings);
        return;
      }
    }
    for (const auto& c : s.list) visit(c);
  };

  SexpReader reader(text);
  while (!reader.at_end()) visit(reader.read());
  return point;
}

// ---------------------------------------------------------------------------
// Running solvers

namespace {

// z3's default QF_NRA strategy spends a long fixed slice in preprocessing on
// the Taylor-expanded obligations, which its smt core settles in milliseconds;
// the smt core in turn can stall on satisfiable polynomial queries that the
// default strategy answers. `fast` selects the smt core under a resource
// limit, which keeps its answers independent of machine load.
constexpr int kFastRlimit = 500000;
constexpr int kFastWallMs = 5000;

std::vector<std::string> solver_argv(SolverKind k, const std::string& binary, bool fast) {
  switch (k) {
    case SolverKind::Z3:
      if (fast) return {binary, "-in", "-smt2", "tactic.default_tactic=smt", "rlimit=" + std::to_string(kFastRlimit)};
      return {binary, "-in", "-smt2"};
    case SolverKind::Cvc5: return {binary, "--lang", "smt2"};
    case SolverKind::Yices: return {binary};
  }
  return {binary};
}

bool decisive(const ProcessResult& p) {
  if (!p.started || p.timed_out) return false;
  std::istringstream in(p.out);
  std::string first;
  in >> first;
  return first == "sat" || first == "unsat";
}

// The smt core first; the default strategy gets whatever budget is left.
ProcessResult run_z3(const std::string& binary, const std::string& script, int timeout_ms) {
  ProcessResult fast = run_process(solver_argv(SolverKind::Z3, binary, true), script,
                                   std::min(timeout_ms, kFastWallMs));
  if (decisive(fast) || !fast.started) return fast;
  int left = timeout_ms - static_cast<int>(fast.wall_ms);
  if (left <= 0) return fast;
  ProcessResult plain = run_process(solver_argv(SolverKind::Z3, binary, false), script, left);
  plain.wall_ms += fast.wall_ms;
  return plain;
}

std::string excerpt(const std::string& s, std::size_t n = 400) {
  std::string t = s.substr(0, n);
  while (!t.empty() && std::isspace(static_cast<unsigned char>(t.back()))) t.pop_back();
  return t;
}

}  // namespace

SolverResult run_solver(const std::string& script, const SolverChoice& choice, std::span<const std::string> vars,
                        const SolverRegistry& registry) {
  SolverResult res;
  if (choice.timeout_ms <= 0) throw ConfigError("solver timeout must be positive");
  if (!registry.available(choice.name)) {
    res.diagnostic = "solver binary missing: " + std::string(to_string(choice.name));
    return res;
  }
  const std::string& binary = registry.binary(choice.name);
  ProcessResult p = choice.name == SolverKind::Z3 ? run_z3(binary, script, choice.timeout_ms)
                                                  : run_process(solver_argv(choice.name, binary, true), script,
                                                                choice.timeout_ms);
  res.wall_ms = p.wall_ms;
  if (!p.started) {
    res.diagnostic = p.err.empty() ? "solver binary missing" : p.err;
    return res;
  }
  if (p.timed_out) {
    res.status = SolverStatus::Timeout;
    res.diagnostic = "timed out after " + std::to_string(choice.timeout_ms) + "ms";
    return res;
  }
  std::istringstream lines(p.out);
  std::string first;
  while (std::getline(lines, first)) {
    while (!first.empty() && std::isspace(static_cast<unsigned char>(first.back()))) first.pop_back();
    if (!first.empty()) break;
  }
  if (first == "unsat") {
    res.status = SolverStatus::Proved;
    return res;
  }
  if (first == "sat") {
    std::string rest((std::istreambuf_iterator<char>(lines)), std::istreambuf_iterator<char>());
    try {
      res.model = parse_model(rest, vars, &res.warnings);
      res.status = SolverStatus::Counterexample;
    } catch (const Error& e) {
      res.diagnostic = std::string("malformed model: ") + e.what();
    }
    return res;
  }
  if (first == "unknown") {
    res.diagnostic = "solver returned unknown";
    if (!p.err.empty()) res.diagnostic += ": " + excerpt(p.err);
    return res;
  }
  if (first == "timeout") {
    res.status = SolverStatus::Timeout;
    res.diagnostic = "solver reported timeout";
    return res;
  }
  res.diagnostic = "exit code " + std::to_string(p.exit_code);
  std::string detail = excerpt(p.err.empty() ? p.out : p.err);
  if (!detail.empty()) res.diagnostic += ": " + detail;
  return res;
}

double counterexample_margin(const ProofObligation& o, std::span<const double> point) {
  Point p;
  for (std::size_t i = 0; i < o.vars.size(); ++i) p[o.vars[i]] = point[i];
  try {
    double v = evaluate(o.lhs, p);
    double claim = o.relation == Relation::Gt ? -v : v;
    double m = std::min(claim, region_margin(o.domain, point));
    if (o.on_zero_of) m = std::min(m, -std::fabs(evaluate(*o.on_zero_of, p)));
    return m;
  } catch (const EvaluationError&) {
    return -std::numeric_limits<double>::infinity();
  }
}

// ---------------------------------------------------------------------------
// Formal check

SolverHooks default_hooks() {
  SolverHooks h;
  h.select_solver = [](const SolverQuery&, const std::vector<SolverKind>& available) {
    if (std::find(available.begin(), available.end(), SolverKind::Z3) != available.end()) return SolverKind::Z3;
    return available.front();
  };
  h.timeout_retry = [](const SolverQuery&, SolverKind, int) -> std::optional<double> { return std::nullopt; };
  h.next_solver = [](const SolverQuery&, SolverKind, const SolverResult&, const std::vector<SolverKind>& remaining) {
    return remaining.front();
  };
  return h;
}

namespace {

std::string point_text(std::span<const std::string> vars, std::span<const double> p) {
  std::string s;
  for (std::size_t i = 0; i < vars.size(); ++i) {
    if (i) s += ", ";
    s += vars[i] + " = " + format_number(p[i]);
  }
  return s;
}

std::string claim_text(const ProofObligation& o) {
  switch (o.kind) {
    case ObligationKind::Init: return "B(x) <= 0 on the initial set";
    case ObligationKind::Unsafe: return "B(x) > 0 on the unsafe set";
    case ObligationKind::Invariance:
      return o.relation == Relation::Lt ? (o.on_zero_of ? "dB/dt < 0 where B(x) = 0" : "dB/dt < 0")
                                        : "B(f(x)) - B(x) <= 0";
  }
  return "";
}

bool contains(const std::vector<SolverKind>& v, SolverKind k) { return std::find(v.begin(), v.end(), k) != v.end(); }

}  // namespace

FormalReport formal_check(const DynamicalSystem& s, const BarrierCandidate& c, const SolverHooks& hooks,
                          const SolverRegistry& registry, const FormalOptions& opts) {
  FormalReport report;
  report.vars = s.state_vars;
  auto obligations = build_obligations(s, c, opts.obligations);
  SolverQuery query{describe_dynamics(s), c.barrier.str()};
  const std::vector<SolverKind> available = registry.kinds();

  std::vector<std::string> failed_lines;
  std::vector<std::string> failed_names;
  for (const auto& o : obligations) {
    ObligationReport rep;
    rep.kind = o.kind;

    EncodedObligation enc;
    try {
      enc = encode(o, opts.encode);
      rep.remainder_bound = enc.remainder_bound;
    } catch (const SampleOnlyError& e) {
      rep.sample_only = true;
      rep.result.diagnostic = e.what();
    } catch (const EncodingError& e) {
      rep.result.diagnostic = e.what();
    }
    bool encoded = !enc.script.empty();
    if (encoded && available.empty()) {
      rep.result.diagnostic = "no SMT solver available";
      encoded = false;
    }

    if (encoded) {
      SolverKind solver = hooks.select_solver ? hooks.select_solver(query, available) : available.front();
      if (!contains(available, solver)) solver = available.front();
      std::vector<SolverKind> tried;
      int timeout = opts.timeout_ms;
      int retries = 0;
      bool confirmed = enc.confirmation_script.empty();
      for (;;) {
        SolverResult r;
        if (!confirmed) {
          r = run_solver(enc.confirmation_script, {solver, timeout}, o.vars, registry);
          ++report.smt_calls;
          if (r.status == SolverStatus::Proved) {
            confirmed = true;
            continue;
          }
          if (r.status == SolverStatus::Counterexample) {
            rep.sample_only = true;
            r.status = SolverStatus::Error;
            r.model.reset();
            r.diagnostic = "sample-verified only: the level set B = 0 is not inside the derived box";
            rep.result = r;
            rep.solver = solver;
            rep.attempts.push_back({solver, timeout, r.status});
            break;
          }
        } else {
          r = run_solver(enc.script, {solver, timeout}, o.vars, registry);
          ++report.smt_calls;
        }
        rep.attempts.push_back({solver, timeout, r.status});
        rep.result = r;
        rep.solver = solver;
        if (r.status == SolverStatus::Timeout && retries < opts.max_retries && hooks.timeout_retry) {
          auto mult = hooks.timeout_retry(query, solver, timeout);
          if (mult) {
            double m = std::clamp(*mult, 1.0, opts.max_multiplier);
            timeout = static_cast<int>(std::min<double>(timeout * m, std::numeric_limits<int>::max()));
            ++retries;
            continue;
          }
        }
        if (r.status == SolverStatus::Error) {
          tried.push_back(solver);
          std::vector<SolverKind> remaining;
          for (SolverKind k : available)
            if (!contains(tried, k)) remaining.push_back(k);
          if (!remaining.empty()) {
            SolverKind next = hooks.next_solver ? hooks.next_solver(query, solver, r, remaining) : remaining.front();
            if (!contains(remaining, next)) next = remaining.front();
            solver = next;
            timeout = opts.timeout_ms;
            retries = 0;
            continue;
          }
        }
        break;
      }
    }

    const auto& r = rep.result;
    std::string name(to_string(o.kind));
    if (r.status == SolverStatus::Counterexample && r.model) {
      rep.margin = counterexample_margin(o, *r.model);
      Point p;
      for (std::size_t i = 0; i < o.vars.size(); ++i) p[o.vars[i]] = (*r.model)[i];
      std::string value;
      try {
        value = format_number(evaluate(o.lhs, p));
      } catch (const EvaluationError&) {
        value = "undefined";
      }
      failed_lines.push_back(name + ": counterexample " + point_text(o.vars, *r.model) + " violates " +
                             claim_text(o) + " (value " + value + ")");
      failed_names.push_back(name);
    } else if (r.status != SolverStatus::Proved) {
      failed_lines.push_back(name + ": " + std::string(to_string(r.status)) +
                             (r.diagnostic.empty() ? "" : " (" + r.diagnostic + ")"));
      failed_names.push_back(name);
    }
    report.obligations.push_back(std::move(rep));
  }

  report.valid = std::all_of(report.obligations.begin(), report.obligations.end(),
                             [](const auto& o) { return o.result.status == SolverStatus::Proved; });
  for (const auto& line : failed_lines) {
    if (!report.feedback.empty()) report.feedback += "\n";
    report.feedback += line;
  }
  return report;
}

nlohmann::json formal_report_to_json(const FormalReport& r) {
  nlohmann::json obs = nlohmann::json::array();
  for (const auto& o : r.obligations) {
    nlohmann::json j{{"kind", to_string(o.kind)}, {"status", to_string(o.result.status)}};
    if (o.solver) j["solver"] = to_string(*o.solver);
    if (o.result.model) j["model"] = *o.result.model;
    if (o.margin) j["margin"] = *o.margin;
    if (!o.result.diagnostic.empty()) j["diagnostic"] = o.result.diagnostic;
    if (o.remainder_bound > 0) j["remainder_bound"] = o.remainder_bound;
    if (o.sample_only) j["sample_only"] = true;
    nlohmann::json attempts = nlohmann::json::array();
    for (const auto& a : o.attempts)
      attempts.push_back({{"solver", to_string(a.solver)}, {"timeout_ms", a.timeout_ms}, {"status", to_string(a.status)}});
    j["attempts"] = attempts;
    obs.push_back(j);
  }
  return {{"vars", r.vars}, {"valid", r.valid}, {"smt_calls", r.smt_calls}, {"obligations", obs},
          {"feedback", r.feedback}};
}

}  // namespace bcsynth

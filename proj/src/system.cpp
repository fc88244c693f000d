#include "bcsynth/system.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "bcsynth/error.hpp"

namespace bcsynth {

using nlohmann::json;

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double sq_dist(std::span<const double> p, const std::vector<double>& c) {
  double s = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) s += (p[i] - c[i]) * (p[i] - c[i]);
  return s;
}

void check_dim(std::size_t expected, std::size_t got) {
  if (expected != got)
    throw DimensionError("point has dimension " + std::to_string(got) + ", region expects " +
                         std::to_string(expected));
}

double rect_margin(const Rect& r, std::span<const double> p) {
  check_dim(r.lo.size(), p.size());
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p.size(); ++i) m = std::min({m, p[i] - r.lo[i], r.hi[i] - p[i]});
  return m;
}

std::string vec_text(const std::vector<double>& v) {
  std::string s = "(";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    s += format_number(v[i]);
  }
  return s + ")";
}

std::string rect_text(const Rect& r) {
  std::string s;
  for (std::size_t i = 0; i < r.lo.size(); ++i) {
    if (i) s += " x ";
    s += "[" + format_number(r.lo[i]) + ", " + format_number(r.hi[i]) + "]";
  }
  return s;
}

}  // namespace

std::string_view region_kind(const Region& r) {
  return std::visit(overloaded{
                        [](const Ball&) { return std::string_view("ball"); },
                        [](const Rect&) { return std::string_view("rect"); },
                        [](const UnionOfRects&) { return std::string_view("union_rects"); },
                        [](const ComplementOfBall&) { return std::string_view("complement_ball"); },
                        [](const AllSpace&) { return std::string_view("all"); },
                    },
                    r);
}

std::optional<std::size_t> region_dimension(const Region& r) {
  return std::visit(overloaded{
                        [](const Ball& b) -> std::optional<std::size_t> { return b.center.size(); },
                        [](const Rect& b) -> std::optional<std::size_t> { return b.lo.size(); },
                        [](const UnionOfRects& u) -> std::optional<std::size_t> {
                          return u.members.front().lo.size();
                        },
                        [](const ComplementOfBall& b) -> std::optional<std::size_t> {
                          return b.center.size();
                        },
                        [](const AllSpace&) -> std::optional<std::size_t> { return std::nullopt; },
                    },
                    r);
}

double region_margin(const Region& r, std::span<const double> p) {
  return std::visit(
      overloaded{
          [&](const Ball& b) {
            check_dim(b.center.size(), p.size());
            return b.radius * b.radius - sq_dist(p, b.center);
          },
          [&](const Rect& b) { return rect_margin(b, p); },
          [&](const UnionOfRects& u) {
            double m = -std::numeric_limits<double>::infinity();
            for (const auto& member : u.members) m = std::max(m, rect_margin(member, p));
            return m;
          },
          [&](const ComplementOfBall& b) {
            check_dim(b.center.size(), p.size());
            return sq_dist(p, b.center) - b.radius * b.radius;
          },
          [&](const AllSpace&) { return std::numeric_limits<double>::infinity(); },
      },
      r);
}

bool region_contains(const Region& r, std::span<const double> point) {
  return region_margin(r, point) >= 0.0;
}

std::optional<Rect> bounding_box(const Region& r) {
  return std::visit(overloaded{
                        [](const Ball& b) -> std::optional<Rect> {
                          Rect out{b.center, b.center};
                          for (std::size_t i = 0; i < b.center.size(); ++i) {
                            out.lo[i] -= b.radius;
                            out.hi[i] += b.radius;
                          }
                          return out;
                        },
                        [](const Rect& b) -> std::optional<Rect> { return b; },
                        [](const UnionOfRects& u) -> std::optional<Rect> {
                          Rect out = u.members.front();
                          for (const auto& m : u.members)
                            for (std::size_t i = 0; i < m.lo.size(); ++i) {
                              out.lo[i] = std::min(out.lo[i], m.lo[i]);
                              out.hi[i] = std::max(out.hi[i], m.hi[i]);
                            }
                          return out;
                        },
                        [](const ComplementOfBall&) -> std::optional<Rect> { return std::nullopt; },
                        [](const AllSpace&) -> std::optional<Rect> { return std::nullopt; },
                    },
                    r);
}

std::string describe_region(const Region& r) {
  return std::visit(
      overloaded{
          [](const Ball& b) {
            return "ball with center " + vec_text(b.center) + " and radius " +
                   format_number(b.radius);
          },
          [](const Rect& b) { return "rectangle " + rect_text(b); },
          [](const UnionOfRects& u) {
            std::string s = "union of rectangles: ";
            for (std::size_t i = 0; i < u.members.size(); ++i) {
              if (i) s += "; ";
              s += rect_text(u.members[i]);
            }
            return s;
          },
          [](const ComplementOfBall& b) {
            return "complement of ball with center " + vec_text(b.center) + " and radius " +
                   format_number(b.radius);
          },
          [](const AllSpace&) { return std::string("entire state space"); },
      },
      r);
}

std::string_view to_string(TimeDomain t) {
  return t == TimeDomain::Continuous ? "continuous" : "discrete";
}

std::vector<std::string> DynamicalSystem::all_vars() const {
  std::vector<std::string> v = state_vars;
  v.insert(v.end(), control_vars.begin(), control_vars.end());
  return v;
}

std::string describe_dynamics(const DynamicalSystem& s) {
  std::string out;
  for (std::size_t i = 0; i < s.dynamics.size(); ++i) {
    if (i) out += ", ";
    if (s.time_domain == TimeDomain::Continuous) out += "d" + s.state_vars[i] + "/dt = ";
    else out += s.state_vars[i] + "[k+1] = ";
    out += s.dynamics[i].str();
  }
  return out;
}

std::string_view to_string(Topology t) {
  switch (t) {
    case Topology::Ball: return "ball";
    case Topology::Rect: return "rect";
    case Topology::UnionRects: return "union_rects";
    case Topology::ComplementBall: return "complement_ball";
  }
  return "?";
}

namespace {

Topology topology_of(const Region& r) {
  if (std::holds_alternative<Ball>(r)) return Topology::Ball;
  if (std::holds_alternative<Rect>(r)) return Topology::Rect;
  if (std::holds_alternative<UnionOfRects>(r)) return Topology::UnionRects;
  if (std::holds_alternative<ComplementOfBall>(r)) return Topology::ComplementBall;
  throw Error("region kind 'all' has no topology feature");
}

Topology topology_from_string(const std::string& s) {
  for (Topology t : {Topology::Ball, Topology::Rect, Topology::UnionRects, Topology::ComplementBall})
    if (to_string(t) == s) return t;
  throw SchemaError("/topology", "unknown topology '" + s + "'");
}

}  // namespace

ProblemFeatures extract_features(const DynamicalSystem& s) {
  ProblemFeatures f;
  f.dimension = s.dimension();
  f.time_domain = s.time_domain;
  f.controlled = s.controlled();
  f.is_linear = std::all_of(s.dynamics.begin(), s.dynamics.end(), [](const Expr& e) {
    auto info = classify(e);
    return info.is_polynomial && info.degree <= 1;
  });
  f.init_topology = topology_of(s.initial_set);
  f.unsafe_topology = topology_of(s.unsafe_set);
  return f;
}

json features_to_json(const ProblemFeatures& f) {
  return json{{"dimension", f.dimension},
              {"time_domain", to_string(f.time_domain)},
              {"is_linear", f.is_linear},
              {"controlled", f.controlled},
              {"init_topology", to_string(f.init_topology)},
              {"unsafe_topology", to_string(f.unsafe_topology)}};
}

ProblemFeatures features_from_json(const json& j) {
  ProblemFeatures f;
  f.dimension = j.at("dimension").get<std::size_t>();
  f.time_domain = j.at("time_domain").get<std::string>() == "discrete" ? TimeDomain::Discrete
                                                                        : TimeDomain::Continuous;
  f.is_linear = j.at("is_linear").get<bool>();
  f.controlled = j.at("controlled").get<bool>();
  f.init_topology = topology_from_string(j.at("init_topology").get<std::string>());
  f.unsafe_topology = topology_from_string(j.at("unsafe_topology").get<std::string>());
  return f;
}

// ---------------------------------------------------------------------------
// Document parsing

namespace {

const json& field(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw SchemaError(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(path + "/" + key, "missing field");
  return *it;
}

double number_at(const json& j, const std::string& path) {
  if (!j.is_number()) throw SchemaError(path, "expected a number");
  double v = j.get<double>();
  if (!std::isfinite(v)) throw SchemaError(path, "expected a finite number");
  return v;
}

std::vector<double> vector_at(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw SchemaError(path, "expected a nonempty array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number_at(j[i], path + "/" + std::to_string(i)));
  return out;
}

std::vector<std::string> names_at(const json& j, const std::string& path) {
  if (!j.is_array()) throw SchemaError(path, "expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_string()) throw SchemaError(path + "/" + std::to_string(i), "expected a string");
    out.push_back(j[i].get<std::string>());
  }
  return out;
}

Rect rect_from_json(const json& j, const std::string& path) {
  Rect r{vector_at(field(j, "lo", path), path + "/lo"), vector_at(field(j, "hi", path), path + "/hi")};
  if (r.lo.size() != r.hi.size()) throw SchemaError(path, "lo and hi differ in length");
  for (std::size_t i = 0; i < r.lo.size(); ++i)
    if (r.lo[i] > r.hi[i]) throw SchemaError(path + "/lo/" + std::to_string(i), "lo exceeds hi");
  return r;
}

void check_identifier(const std::string& name, const std::string& path) {
  bool ok = !name.empty() && (std::isalpha(static_cast<unsigned char>(name[0])) || name[0] == '_');
  for (char c : name) ok = ok && (std::isalnum(static_cast<unsigned char>(c)) || c == '_');
  if (!ok || fn_from_name(name)) throw SchemaError(path, "invalid variable name '" + name + "'");
}

void check_region_dim(const Region& r, std::size_t n, const std::string& path) {
  auto d = region_dimension(r);
  if (d && *d != n)
    throw DimensionError(path + ": region has dimension " + std::to_string(*d) +
                         ", system has " + std::to_string(n));
  if (auto* u = std::get_if<UnionOfRects>(&r))
    for (const auto& m : u->members)
      if (m.lo.size() != n) throw DimensionError(path + ": union member dimension mismatch");
}

// Uniform points of a ball or rect, for the overlap warning only.
std::vector<std::vector<double>> probe_points(const Region& r, std::size_t n, std::size_t count) {
  std::mt19937_64 rng(12345);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::vector<double>> out;
  for (std::size_t k = 0; k < count; ++k) {
    std::vector<double> p(n);
    if (const auto* b = std::get_if<Ball>(&r)) {
      double norm = 0;
      for (auto& v : p) {
        v = gauss(rng);
        norm += v * v;
      }
      norm = std::sqrt(norm);
      double rad = b->radius * std::pow(unit(rng), 1.0 / static_cast<double>(n));
      for (std::size_t i = 0; i < n; ++i) p[i] = b->center[i] + (norm > 0 ? p[i] / norm * rad : 0.0);
    } else if (const auto* q = std::get_if<Rect>(&r)) {
      for (std::size_t i = 0; i < n; ++i) p[i] = q->lo[i] + unit(rng) * (q->hi[i] - q->lo[i]);
    } else {
      return {};
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

Region region_from_json(const json& j, const std::string& path) {
  const json& type = field(j, "type", path);
  if (!type.is_string()) throw SchemaError(path + "/type", "expected a string");
  std::string kind = type.get<std::string>();
  if (kind == "ball" || kind == "complement_ball") {
    std::vector<double> c = vector_at(field(j, "center", path), path + "/center");
    double r = number_at(field(j, "radius", path), path + "/radius");
    if (!(r > 0)) throw SchemaError(path + "/radius", "radius must be positive");
    if (kind == "ball") return Ball{std::move(c), r};
    return ComplementOfBall{std::move(c), r};
  }
  if (kind == "rect") return rect_from_json(j, path);
  if (kind == "union_rects") {
    const json& members = field(j, "members", path);
    if (!members.is_array() || members.empty())
      throw SchemaError(path + "/members", "expected a nonempty array of rects");
    UnionOfRects u;
    for (std::size_t i = 0; i < members.size(); ++i) {
      std::string mp = path + "/members/" + std::to_string(i);
      const json& m = members[i];
      if (m.is_object() && m.contains("type") && m["type"] != "rect")
        throw SchemaError(mp + "/type", "union members must be rects");
      u.members.push_back(rect_from_json(m, mp));
    }
    for (const auto& m : u.members)
      if (m.lo.size() != u.members.front().lo.size())
        throw SchemaError(path + "/members", "members differ in dimension");
    return u;
  }
  if (kind == "all") return AllSpace{};
  throw SchemaError(path + "/type", "unknown region type '" + kind + "'");
}

json region_to_json(const Region& r) {
  return std::visit(
      overloaded{
          [](const Ball& b) { return json{{"type", "ball"}, {"center", b.center}, {"radius", b.radius}}; },
          [](const Rect& b) { return json{{"type", "rect"}, {"lo", b.lo}, {"hi", b.hi}}; },
          [](const UnionOfRects& u) {
            json members = json::array();
            for (const auto& m : u.members) members.push_back(json{{"type", "rect"}, {"lo", m.lo}, {"hi", m.hi}});
            return json{{"type", "union_rects"}, {"members", members}};
          },
          [](const ComplementOfBall& b) {
            return json{{"type", "complement_ball"}, {"center", b.center}, {"radius", b.radius}};
          },
          [](const AllSpace&) { return json{{"type", "all"}}; },
      },
      r);
}

DynamicalSystem parse_system(const json& doc, std::vector<std::string>* warnings) {
  if (!doc.is_object()) throw SchemaError("", "expected a JSON object");
  DynamicalSystem s;
  const json& name = field(doc, "name", "");
  if (!name.is_string()) throw SchemaError("/name", "expected a string");
  s.name = name.get<std::string>();

  const json& td = field(doc, "time_domain", "");
  if (td == "continuous") s.time_domain = TimeDomain::Continuous;
  else if (td == "discrete") s.time_domain = TimeDomain::Discrete;
  else throw SchemaError("/time_domain", "expected \"continuous\" or \"discrete\"");

  s.state_vars = names_at(field(doc, "state_vars", ""), "/state_vars");
  if (s.state_vars.empty()) throw SchemaError("/state_vars", "at least one state variable required");
  s.control_vars = names_at(field(doc, "control_vars", ""), "/control_vars");

  std::set<std::string> seen;
  for (std::size_t i = 0; i < s.state_vars.size(); ++i) {
    check_identifier(s.state_vars[i], "/state_vars/" + std::to_string(i));
    if (!seen.insert(s.state_vars[i]).second)
      throw SchemaError("/state_vars/" + std::to_string(i), "duplicate variable");
  }
  for (std::size_t i = 0; i < s.control_vars.size(); ++i) {
    check_identifier(s.control_vars[i], "/control_vars/" + std::to_string(i));
    if (!seen.insert(s.control_vars[i]).second)
      throw SchemaError("/control_vars/" + std::to_string(i), "duplicate variable");
  }

  const json& dyn = field(doc, "dynamics", "");
  if (!dyn.is_array()) throw SchemaError("/dynamics", "expected an array of expression strings");
  if (dyn.size() != s.state_vars.size())
    throw DimensionError("/dynamics: " + std::to_string(dyn.size()) + " entries for " +
                         std::to_string(s.state_vars.size()) + " state variables");
  std::vector<std::string> vars = s.all_vars();
  for (std::size_t i = 0; i < dyn.size(); ++i) {
    std::string path = "/dynamics/" + std::to_string(i);
    if (!dyn[i].is_string()) throw SchemaError(path, "expected an expression string");
    try {
      s.dynamics.push_back(parse_expression(dyn[i].get<std::string>(), vars));
    } catch (const Error& e) {
      throw SchemaError(path, e.what());
    }
  }

  const std::size_t n = s.dimension();
  s.state_space = region_from_json(field(doc, "state_space", ""), "/state_space");
  s.initial_set = region_from_json(field(doc, "initial_set", ""), "/initial_set");
  s.unsafe_set = region_from_json(field(doc, "unsafe_set", ""), "/unsafe_set");
  check_region_dim(s.state_space, n, "/state_space");
  check_region_dim(s.initial_set, n, "/initial_set");
  check_region_dim(s.unsafe_set, n, "/unsafe_set");
  if (!std::holds_alternative<Ball>(s.initial_set) && !std::holds_alternative<Rect>(s.initial_set))
    throw SchemaError("/initial_set/type", "initial set must be a ball or a rect");
  if (std::holds_alternative<AllSpace>(s.unsafe_set))
    throw SchemaError("/unsafe_set/type", "unsafe set cannot be the whole space");

  if (warnings) {
    for (const auto& p : probe_points(s.initial_set, n, 1000))
      if (region_contains(s.unsafe_set, p)) {
        warnings->push_back("initial and unsafe sets overlap (sampled point in both)");
        break;
      }
  }
  return s;
}

DynamicalSystem parse_system_text(std::string_view text, std::vector<std::string>* warnings) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError("", std::string("malformed JSON: ") + e.what());
  }
  return parse_system(doc, warnings);
}

DynamicalSystem load_system(const std::string& path, std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open system file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_system_text(ss.str(), warnings);
}

json system_to_json(const DynamicalSystem& s) {
  json dyn = json::array();
  for (const auto& e : s.dynamics) dyn.push_back(e.str());
  json j;
  j["name"] = s.name;
  j["time_domain"] = to_string(s.time_domain);
  j["state_vars"] = s.state_vars;
  j["control_vars"] = s.control_vars;
  j["dynamics"] = dyn;
  j["state_space"] = region_to_json(s.state_space);
  j["initial_set"] = region_to_json(s.initial_set);
  j["unsafe_set"] = region_to_json(s.unsafe_set);
  return j;
}

}  // namespace bcsynth

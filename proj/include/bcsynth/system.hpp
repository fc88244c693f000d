#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "bcsynth/expr.hpp"
#include "bcsynth/taylor.hpp"

namespace bcsynth {

struct Ball {
  std::vector<double> center;
  double radius = 1.0;
};

struct Rect {
  std::vector<double> lo;
  std::vector<double> hi;
};

struct UnionOfRects {
  std::vector<Rect> members;
};

struct ComplementOfBall {
  std::vector<double> center;
  double radius = 1.0;
};

// The whole of R^n.
struct AllSpace {};

using Region = std::variant<Ball, Rect, UnionOfRects, ComplementOfBall, AllSpace>;

std::string_view region_kind(const Region& r);

// Dimension implied by the region's fields; nullopt for AllSpace.
std::optional<std::size_t> region_dimension(const Region& r);

bool region_contains(const Region& r, std::span<const double> point);

// Signed slack of membership: >= 0 inside, < 0 outside.
double region_margin(const Region& r, std::span<const double> point);

// Axis-aligned bounding box, when the region is bounded.
std::optional<Rect> bounding_box(const Region& r);

std::string describe_region(const Region& r);

enum class TimeDomain { Continuous, Discrete };

std::string_view to_string(TimeDomain t);

struct DynamicalSystem {
  std::string name;
  TimeDomain time_domain = TimeDomain::Continuous;
  std::vector<std::string> state_vars;
  std::vector<std::string> control_vars;
  std::vector<Expr> dynamics;  // one per state variable
  Region state_space = AllSpace{};
  Region initial_set = AllSpace{};
  Region unsafe_set = AllSpace{};

  std::size_t dimension() const { return state_vars.size(); }
  bool controlled() const { return !control_vars.empty(); }
  std::vector<std::string> all_vars() const;
};

// "dx1/dt = ..., dx2/dt = ..." or "x1[k+1] = ..., ..."
std::string describe_dynamics(const DynamicalSystem& s);

enum class Topology { Ball, Rect, UnionRects, ComplementBall };

std::string_view to_string(Topology t);

struct ProblemFeatures {
  std::size_t dimension = 0;
  TimeDomain time_domain = TimeDomain::Continuous;
  bool is_linear = false;
  bool controlled = false;
  Topology init_topology = Topology::Ball;
  Topology unsafe_topology = Topology::Ball;

  friend bool operator==(const ProblemFeatures&, const ProblemFeatures&) = default;
};

ProblemFeatures extract_features(const DynamicalSystem& s);

nlohmann::json features_to_json(const ProblemFeatures& f);
ProblemFeatures features_from_json(const nlohmann::json& j);

// Parses and validates a system document. Non-fatal findings (a sampled point
// lying in both the initial and the unsafe set) are appended to `warnings`.
DynamicalSystem parse_system(const nlohmann::json& doc, std::vector<std::string>* warnings = nullptr);
DynamicalSystem parse_system_text(std::string_view text, std::vector<std::string>* warnings = nullptr);
DynamicalSystem load_system(const std::string& path, std::vector<std::string>* warnings = nullptr);

nlohmann::json system_to_json(const DynamicalSystem& s);
nlohmann::json region_to_json(const Region& r);
Region region_from_json(const nlohmann::json& j, const std::string& path);

}  // namespace bcsynth

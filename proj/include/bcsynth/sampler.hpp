#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "bcsynth/conditions.hpp"
#include "bcsynth/system.hpp"

namespace bcsynth {

// n points of r, deterministic in seed. Ball: uniform by norm rescaling;
// Rect: uniform per axis; UnionOfRects: volume-weighted member choice;
// ComplementOfBall and AllSpace: rejection inside fallback_box.
std::vector<std::vector<double>> sample_region(const Region& r, std::size_t n, std::uint64_t seed,
                                               const Rect& fallback_box);

// X's box when X is bounded, otherwise the box of X_I and X_U doubled about
// its centre (a complement of a ball contributes the ball's box).
Rect default_sampling_box(const DynamicalSystem& s);

struct SampleOptions {
  std::size_t n = 5000;  // per set
  std::uint64_t seed = 0;
  std::optional<Rect> box;
  double tolerance = 1e-9;
  double band_fraction = 0.05;
  int bisection_steps = 50;
  std::size_t bisection_pairs = 100;
  std::size_t max_stored = 10;
  ObligationOptions obligations;
};

struct Violation {
  std::size_t index = 0;  // position in the sample sequence
  std::vector<double> point;
  double value = 0.0;  // NaN when evaluation faulted
};

struct ObligationSample {
  ObligationKind kind = ObligationKind::Init;
  bool passed = true;
  bool vacuous = false;  // no point on B = 0 was found
  std::size_t checked = 0;
  std::size_t violation_count = 0;
  std::vector<Violation> violations;  // first max_stored, by index
};

struct SampleReport {
  std::vector<std::string> vars;
  std::vector<ObligationSample> obligations;
  double score = 0.0;
  std::uint64_t seed = 0;
  std::size_t n_points = 0;

  bool passed() const;
};

SampleReport sample_check(const DynamicalSystem& s, const BarrierCandidate& c,
                          const SampleOptions& opts = {});

nlohmann::json sample_report_to_json(const SampleReport& r);

}  // namespace bcsynth

#include "bcsynth/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "bcsynth/error.hpp"

namespace bcsynth {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::vector<double> uniform_in(const Rect& r, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> p(r.lo.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = r.lo[i] + unit(rng) * (r.hi[i] - r.lo[i]);
  return p;
}

double volume(const Rect& r) {
  double v = 1.0;
  for (std::size_t i = 0; i < r.lo.size(); ++i) v *= r.hi[i] - r.lo[i];
  return v;
}

std::vector<double> in_ball(const Ball& b, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t n = b.center.size();
  for (;;) {
    std::vector<double> d(n);
    double norm = 0.0;
    for (auto& v : d) {
      v = gauss(rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    double r = b.radius * std::pow(unit(rng), 1.0 / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) d[i] = b.center[i] + d[i] / norm * r;
    if (region_contains(b, d)) return d;
  }
}

}  // namespace

std::vector<std::vector<double>> sample_region(const Region& r, std::size_t n, std::uint64_t seed,
                                               const Rect& fallback_box) {
  if (n == 0) throw Error("sample count must be at least 1");
  std::mt19937_64 rng(seed);
  std::vector<std::vector<double>> out;
  out.reserve(n);
  if (const auto* b = std::get_if<Ball>(&r)) {
    while (out.size() < n) out.push_back(in_ball(*b, rng));
  } else if (const auto* q = std::get_if<Rect>(&r)) {
    while (out.size() < n) out.push_back(uniform_in(*q, rng));
  } else if (const auto* u = std::get_if<UnionOfRects>(&r)) {
    std::vector<double> weights;
    for (const auto& m : u->members) weights.push_back(volume(m));
    if (std::all_of(weights.begin(), weights.end(), [](double w) { return w <= 0.0; }))
      std::fill(weights.begin(), weights.end(), 1.0);
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    while (out.size() < n) out.push_back(uniform_in(u->members[pick(rng)], rng));
  } else {
    const std::size_t max_attempts = 1000 * n + 100000;
    std::size_t attempts = 0;
    while (out.size() < n) {
      if (++attempts > max_attempts)
        throw Error("rejection sampling failed: " + describe_region(r) +
                    " does not meet the sampling box");
      auto p = uniform_in(fallback_box, rng);
      if (region_contains(r, p)) out.push_back(std::move(p));
    }
  }
  return out;
}

Rect default_sampling_box(const DynamicalSystem& s) {
  if (auto box = bounding_box(s.state_space)) return *box;
  auto box_of = [](const Region& r) -> std::optional<Rect> {
    if (const auto* c = std::get_if<ComplementOfBall>(&r)) return bounding_box(Ball{c->center, c->radius});
    return bounding_box(r);
  };
  std::optional<Rect> acc;
  for (const Region* r : {&s.initial_set, &s.unsafe_set}) {
    auto b = box_of(*r);
    if (!b) continue;
    if (!acc) {
      acc = b;
      continue;
    }
    for (std::size_t i = 0; i < acc->lo.size(); ++i) {
      acc->lo[i] = std::min(acc->lo[i], b->lo[i]);
      acc->hi[i] = std::max(acc->hi[i], b->hi[i]);
    }
  }
  if (!acc) return Rect{std::vector<double>(s.dimension(), -1.0), std::vector<double>(s.dimension(), 1.0)};
  for (std::size_t i = 0; i < acc->lo.size(); ++i) {
    double c = 0.5 * (acc->lo[i] + acc->hi[i]);
    double h = 0.5 * (acc->hi[i] - acc->lo[i]);
    if (h <= 0.0) h = 0.5;
    acc->lo[i] = c - 2.0 * h;
    acc->hi[i] = c + 2.0 * h;
  }
  return *acc;
}

bool SampleReport::passed() const {
  return std::all_of(obligations.begin(), obligations.end(), [](const auto& o) { return o.passed; });
}

namespace {

class Checker {
 public:
  Checker(const ProofObligation& o, const SampleOptions& opts) : o_(o), opts_(opts) {
    lhs_ = CompiledExpr(o.lhs, o.vars);
    result_.kind = o.kind;
  }

  void check(std::size_t index, const std::vector<double>& p) {
    ++result_.checked;
    double v;
    try {
      v = lhs_(p);
    } catch (const EvaluationError&) {
      record(index, p, std::numeric_limits<double>::quiet_NaN());
      return;
    }
    if (!std::isfinite(v) || !satisfied(v)) record(index, p, v);
  }

  void fault(std::size_t index, const std::vector<double>& p) {
    ++result_.checked;
    record(index, p, std::numeric_limits<double>::quiet_NaN());
  }

  ObligationSample finish() {
    result_.passed = result_.violation_count == 0;
    return std::move(result_);
  }

 private:
  bool satisfied(double v) const {
    switch (o_.relation) {
      case Relation::Le: return v <= opts_.tolerance;
      case Relation::Gt: return v > -opts_.tolerance;
      case Relation::Lt: return v < 0.0;
    }
    return false;
  }

  void record(std::size_t index, const std::vector<double>& p, double v) {
    ++result_.violation_count;
    if (result_.violations.size() < opts_.max_stored) result_.violations.push_back({index, p, v});
  }

  const ProofObligation& o_;
  const SampleOptions& opts_;
  CompiledExpr lhs_;
  ObligationSample result_;
};

double safe_eval(const CompiledExpr& f, std::span<const double> p) {
  try {
    return f(p);
  } catch (const EvaluationError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

// Newton steps x <- x - B(x) grad / |grad|^2 towards B = 0.
std::optional<std::vector<double>> project(const CompiledExpr& b, const std::vector<CompiledExpr>& grad,
                                           std::vector<double> x, double scale) {
  for (int it = 0; it < 30; ++it) {
    double v = safe_eval(b, x);
    if (!std::isfinite(v)) return std::nullopt;
    if (std::fabs(v) <= 1e-12 * std::max(1.0, scale)) return x;
    std::vector<double> g(x.size());
    double g2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      g[i] = safe_eval(grad[i], x);
      if (!std::isfinite(g[i])) return std::nullopt;
      g2 += g[i] * g[i];
    }
    if (g2 == 0.0) return std::nullopt;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] -= v * g[i] / g2;
  }
  double v = safe_eval(b, x);
  if (std::isfinite(v) && std::fabs(v) <= 1e-9 * std::max(1.0, scale)) return x;
  return std::nullopt;
}

ObligationSample check_boundary(const ProofObligation& o, const std::vector<std::vector<double>>& pts,
                                const SampleOptions& opts, std::uint64_t seed) {
  Checker checker(o, opts);
  CompiledExpr b(*o.on_zero_of, o.vars);
  std::vector<CompiledExpr> grad;
  for (const auto& v : o.vars) grad.emplace_back(simplify(differentiate(*o.on_zero_of, v)), o.vars);

  std::vector<double> values(pts.size());
  double max_abs = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    values[i] = safe_eval(b, pts[i]);
    if (std::isfinite(values[i])) max_abs = std::max(max_abs, std::fabs(values[i]));
  }
  const double band = opts.band_fraction * max_abs;

  bool found = false;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!std::isfinite(values[i])) {
      checker.fault(i, pts[i]);
      found = true;
      continue;
    }
    if (std::fabs(values[i]) > band) continue;
    auto q = project(b, grad, pts[i], max_abs);
    if (!q || !region_contains(o.domain, *q)) continue;
    found = true;
    checker.check(i, *q);
  }

  if (!found) {
    std::vector<std::size_t> neg, pos;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (!std::isfinite(values[i])) continue;
      (values[i] < 0 ? neg : pos).push_back(i);
    }
    if (!neg.empty() && !pos.empty()) {
      std::mt19937_64 rng(splitmix(seed ^ 0x5bd1e995ULL));
      std::uniform_int_distribution<std::size_t> pn(0, neg.size() - 1), pp(0, pos.size() - 1);
      for (std::size_t k = 0; k < opts.bisection_pairs; ++k) {
        std::vector<double> lo = pts[neg[pn(rng)]], hi = pts[pos[pp(rng)]];
        std::vector<double> mid(lo.size());
        for (int step = 0; step < opts.bisection_steps; ++step) {
          for (std::size_t i = 0; i < mid.size(); ++i) mid[i] = 0.5 * (lo[i] + hi[i]);
          double v = safe_eval(b, mid);
          if (!std::isfinite(v)) break;
          (v < 0 ? lo : hi) = mid;
        }
        if (!region_contains(o.domain, mid)) continue;
        found = true;
        checker.check(pts.size() + k, mid);
      }
    }
  }

  ObligationSample out = checker.finish();
  out.vacuous = !found;
  return out;
}

}  // namespace

SampleReport sample_check(const DynamicalSystem& s, const BarrierCandidate& c, const SampleOptions& opts) {
  auto obligations = build_obligations(s, c, opts.obligations);
  Rect box = opts.box ? *opts.box : default_sampling_box(s);
  SampleReport report;
  report.vars = s.state_vars;
  report.seed = opts.seed;
  report.n_points = opts.n;
  int passed = 0;
  for (std::size_t k = 0; k < obligations.size(); ++k) {
    const auto& o = obligations[k];
    std::uint64_t seed = splitmix(opts.seed * 3 + k);
    auto pts = sample_region(o.domain, opts.n, seed, box);
    ObligationSample r;
    if (o.on_zero_of) {
      r = check_boundary(o, pts, opts, seed);
    } else {
      Checker checker(o, opts);
      for (std::size_t i = 0; i < pts.size(); ++i) checker.check(i, pts[i]);
      r = checker.finish();
    }
    if (r.passed) ++passed;
    report.obligations.push_back(std::move(r));
  }
  report.score = passed / 3.0;
  return report;
}

nlohmann::json sample_report_to_json(const SampleReport& r) {
  nlohmann::json obs = nlohmann::json::array();
  for (const auto& o : r.obligations) {
    nlohmann::json vs = nlohmann::json::array();
    for (const auto& v : o.violations) {
      nlohmann::json val = std::isfinite(v.value) ? nlohmann::json(v.value) : nlohmann::json("fault");
      vs.push_back({{"index", v.index}, {"point", v.point}, {"value", val}});
    }
    obs.push_back({{"kind", to_string(o.kind)},
                   {"passed", o.passed},
                   {"vacuous", o.vacuous},
                   {"checked", o.checked},
                   {"violation_count", o.violation_count},
                   {"violations", vs}});
  }
  return {{"vars", r.vars}, {"seed", r.seed}, {"n_points", r.n_points}, {"score", r.score},
          {"obligations", obs}};
}

}  // namespace bcsynth

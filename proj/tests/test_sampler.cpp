#include <cmath>

#include <gtest/gtest.h>

#include "bcsynth/error.hpp"
#include "bcsynth/sampler.hpp"
#include "support.hpp"

using namespace bcsynth;
using testing_support::candidate;
using testing_support::pendulum_controllers;
using testing_support::seed_system;
using testing_support::to_point;

namespace {

double norm(const std::vector<double>& p) {
  double s = 0;
  for (double v : p) s += v * v;
  return std::sqrt(s);
}

const Rect kBox4{{-5, -5, -5, -5}, {5, 5, 5, 5}};

SampleOptions opts(std::uint64_t seed, std::size_t n = 5000) {
  SampleOptions o;
  o.seed = seed;
  o.n = n;
  return o;
}

const ObligationSample& ob(const SampleReport& r, ObligationKind k) {
  for (const auto& o : r.obligations)
    if (o.kind == k) return o;
  throw std::logic_error("missing obligation");
}

}  // namespace

TEST(SampleRegion, RectInsideBounds) {
  Rect r{{1.75, 1.75, -0.1, -0.1}, {2.25, 2.25, 0.1, 0.1}};
  auto pts = sample_region(r, 100, 1, kBox4);
  ASSERT_EQ(pts.size(), 100u);
  for (const auto& p : pts)
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_GE(p[i], r.lo[i]);
      EXPECT_LE(p[i], r.hi[i]);
    }
}

TEST(SampleRegion, BallNorms) {
  auto pts = sample_region(Ball{{0, 0, 0, 0}, 0.3}, 100, 2, kBox4);
  ASSERT_EQ(pts.size(), 100u);
  double max_norm = 0;
  for (const auto& p : pts) max_norm = std::max(max_norm, norm(p));
  EXPECT_LE(max_norm, 0.3);
  EXPECT_GT(max_norm, 0.2);  // uniform in volume: most mass near the surface
}

TEST(SampleRegion, ComplementOfBallInsideBox) {
  auto pts = sample_region(ComplementOfBall{{0, 0, 0, 0}, 2.5}, 100, 3, kBox4);
  ASSERT_EQ(pts.size(), 100u);
  for (const auto& p : pts) {
    EXPECT_GE(norm(p), 2.5);
    EXPECT_TRUE(region_contains(kBox4, p));
  }
}

TEST(SampleRegion, UnionIsVolumeWeighted) {
  UnionOfRects u{{Rect{{0, 0}, {1, 1}}, Rect{{5, 5}, {8, 8}}}};
  auto pts = sample_region(u, 2000, 4, Rect{{-10, -10}, {10, 10}});
  int small = 0;
  for (const auto& p : pts) {
    EXPECT_TRUE(region_contains(u, p));
    small += p[0] <= 1.0;
  }
  EXPECT_NEAR(small / 2000.0, 0.1, 0.03);
}

TEST(SampleRegion, AllUsesFallbackBox) {
  Rect box{{-1, 2}, {1, 3}};
  for (const auto& p : sample_region(AllSpace{}, 200, 5, box)) EXPECT_TRUE(region_contains(box, p));
}

TEST(SampleRegion, Deterministic) {
  Ball b{{0.5, -0.5, 1.0}, 0.7};
  Rect box{{-3, -3, -3}, {3, 3, 3}};
  EXPECT_EQ(sample_region(b, 50, 9, box), sample_region(b, 50, 9, box));
  EXPECT_NE(sample_region(b, 50, 9, box), sample_region(b, 50, 10, box));
}

TEST(SampleRegion, EmptyIntersectionReported) {
  Rect box{{-1, -1}, {1, 1}};
  EXPECT_THROW(sample_region(ComplementOfBall{{0, 0}, 5.0}, 10, 1, box), Error);
}

TEST(SamplingBox, UnboundedStateSpace) {
  Rect box = default_sampling_box(seed_system("dt2d_linear"));
  // Box of X_I and X_U is [0.1,0.5]x[0.1,1.0]; doubled about its centre.
  EXPECT_NEAR(box.lo[0], -0.1, 1e-12);
  EXPECT_NEAR(box.hi[0], 0.7, 1e-12);
  EXPECT_NEAR(box.lo[1], -0.35, 1e-12);
  EXPECT_NEAR(box.hi[1], 1.45, 1e-12);
}

TEST(SampleCheck, PublishedDiscretePairAnySeed) {
  DynamicalSystem s = seed_system("dt2d_linear");
  BarrierCandidate c = candidate(s, "x1^2 + x2^2 - 0.5");
  for (std::uint64_t seed : {0u, 1u, 7u, 12345u}) {
    SampleReport r = sample_check(s, c, opts(seed));
    EXPECT_TRUE(r.passed());
    EXPECT_EQ(r.score, 1.0);
    for (const auto& o : r.obligations) EXPECT_EQ(o.checked, 5000u);
  }
}

TEST(SampleCheck, ConstantMinusOne) {
  DynamicalSystem s = seed_system("dt2d_linear");
  SampleReport r = sample_check(s, candidate(s, "-1"), opts(0));
  EXPECT_TRUE(ob(r, ObligationKind::Init).passed);
  EXPECT_FALSE(ob(r, ObligationKind::Unsafe).passed);
  EXPECT_TRUE(ob(r, ObligationKind::Invariance).passed);
  EXPECT_DOUBLE_EQ(r.score, 2.0 / 3.0);
  const auto& u = ob(r, ObligationKind::Unsafe);
  EXPECT_EQ(u.violation_count, 5000u);
  EXPECT_EQ(u.violations.size(), 10u);
  for (std::size_t i = 1; i < u.violations.size(); ++i) EXPECT_LT(u.violations[i - 1].index, u.violations[i].index);
}

TEST(SampleCheck, ConstantPlusOne) {
  DynamicalSystem s = seed_system("dt2d_linear");
  SampleReport r = sample_check(s, candidate(s, "1"), opts(0));
  EXPECT_FALSE(ob(r, ObligationKind::Init).passed);
  EXPECT_TRUE(ob(r, ObligationKind::Unsafe).passed);
  EXPECT_TRUE(ob(r, ObligationKind::Invariance).passed);
  EXPECT_DOUBLE_EQ(r.score, 2.0 / 3.0);
}

TEST(SampleCheck, Deterministic) {
  DynamicalSystem s = seed_system("ct4d_linear");
  BarrierCandidate c = candidate(s, "(x1 - 4)^2 + x2^2 - 20");
  auto a = sample_report_to_json(sample_check(s, c, opts(3, 2000)));
  auto b = sample_report_to_json(sample_check(s, c, opts(3, 2000)));
  EXPECT_EQ(a.dump(), b.dump());
}

TEST(SampleCheck, StoredViolationsReallyViolate) {
  for (const char* stem : {"ct4d_linear", "dt2d_linear", "ct2d_damped_union"}) {
    DynamicalSystem s = seed_system(stem);
    BarrierCandidate c = candidate(s, "x1^2 + 0.5*x2 - 0.3");
    SampleReport r = sample_check(s, c, opts(11, 3000));
    auto obligations = build_obligations(s, c);
    int seen = 0;
    for (std::size_t i = 0; i < 3; ++i) {
      const auto& o = obligations[i];
      for (const auto& v : r.obligations[i].violations) {
        ++seen;
        Point p = to_point(r.vars, v.point);
        double lhs = evaluate(o.lhs, p);
        EXPECT_EQ(lhs, v.value);
        EXPECT_TRUE(region_contains(o.domain, v.point) || std::holds_alternative<AllSpace>(o.domain));
        switch (o.relation) {
          case Relation::Le: EXPECT_GT(lhs, 1e-9); break;
          case Relation::Gt: EXPECT_LE(lhs, -1e-9); break;
          case Relation::Lt: EXPECT_GE(lhs, 0.0); break;
        }
      }
    }
    EXPECT_GT(seen, 0) << stem;
  }
}

TEST(SampleCheck, ContinuousBoundaryBand) {
  DynamicalSystem s = seed_system("ct1d_decay");
  // B = x1^2 - 1 has zeros at +-1 where L_f B = 2*x1*(-x1 - 0.2*x1^3) < 0.
  SampleReport good = sample_check(s, candidate(s, "x1^2 - 1"), opts(0));
  EXPECT_TRUE(good.passed());
  EXPECT_FALSE(ob(good, ObligationKind::Invariance).vacuous);
  EXPECT_GT(ob(good, ObligationKind::Invariance).checked, 0u);
  // B = 1 - x1^2 flips the field direction on the same level set.
  SampleReport bad = sample_check(s, candidate(s, "0.25 - x1^2"), opts(0));
  EXPECT_FALSE(ob(bad, ObligationKind::Invariance).passed);
}

TEST(SampleCheck, VacuousWhenNoBoundary) {
  DynamicalSystem s = seed_system("ct1d_decay");
  SampleReport r = sample_check(s, candidate(s, "x1^2 + 1"), opts(0, 500));
  EXPECT_TRUE(ob(r, ObligationKind::Invariance).passed);
  EXPECT_TRUE(ob(r, ObligationKind::Invariance).vacuous);
}

TEST(SampleCheck, EvaluationFaultIsViolation) {
  DynamicalSystem s = seed_system("ct1d_decay");  // init ball of radius 0.5 about 0
  SampleReport r = sample_check(s, candidate(s, "sqrt(x1) - 10"), opts(0, 500));
  const auto& init = ob(r, ObligationKind::Init);
  EXPECT_FALSE(init.passed);
  ASSERT_FALSE(init.violations.empty());
  EXPECT_TRUE(std::isnan(init.violations[0].value));
  EXPECT_LT(init.violations[0].point[0], 0.0);
}

TEST(SampleCheck, PublishedPairsPassEverySeed) {
  struct Case {
    const char* stem;
    const char* barrier;
    std::vector<std::string> ctrl;
  };
  std::vector<Case> cases = {
      {"ct4d_linear", "(x1 - 4.5)^2 + (x2 - 1.5)^2 + x3^2 + x4^2 - 25", {}},
      {"dt2d_linear", "x1^2 + x2^2 - 0.5", {}},
      {"ct4d_pendulum_ctrl", "x1^2 + x2^2 + x3^2 + x4^2 - 4.0", pendulum_controllers()},
  };
  for (const auto& cs : cases) {
    DynamicalSystem s = seed_system(cs.stem);
    BarrierCandidate c = candidate(s, cs.barrier, cs.ctrl);
    for (std::uint64_t seed = 100; seed < 120; ++seed) {
      SampleReport r = sample_check(s, c, opts(seed, 2000));
      EXPECT_TRUE(r.passed()) << cs.stem << " seed " << seed;
    }
  }
}

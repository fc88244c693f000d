#pragma once

// Polynomial replacement of transcendental subterms with a sound bound on the
// introduced error, and the interval arithmetic that backs the bound.

#include <limits>
#include <map>
#include <string>

#include "bcsynth/expr.hpp"

namespace bcsynth {

struct Interval {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();

  bool bounded() const;
  double magnitude() const;  // max |v| over the interval
  double mid() const { return 0.5 * (lo + hi); }
  double radius() const { return 0.5 * (hi - lo); }
  bool contains(double v) const { return lo <= v && v <= hi; }
};

// Variables missing from a Box are unbounded.
using Box = std::map<std::string, Interval>;

// Outward-rounded enclosure of the range of e over the box.
Interval enclose(const Expr& e, const Box& box);

struct TaylorResult {
  Expr polynomial;
  double remainder_bound = 0.0;  // |e - polynomial| <= bound on the box
};

// Replace every sin/cos/exp/tanh node by its Taylor polynomial of the given
// order around the midpoint of its argument's range, propagating Lagrange
// remainders through the surrounding arithmetic. Arguments must be
// polynomials in a single variable. Throws Error when a bound cannot be
// established (unbounded factor, nested transcendental, multivariate
// argument, error inside a denominator).
TaylorResult taylor_expand(const Expr& e, int order, const Box& box);

// Single-variable form: var ranges over [center - radius, center + radius].
TaylorResult taylor_polynomial(const Expr& e, const std::string& var, double center, int order,
                               double radius);

}  // namespace bcsynth

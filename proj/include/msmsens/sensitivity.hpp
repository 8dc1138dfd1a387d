#pragma once

#include <string>
#include <vector>

namespace msmsens {

// Propensity sensitivity: the true weight ratio lies in [1/gamma, gamma].
struct GammaSpec {
  double gamma = 1.0;

  explicit GammaSpec(double g);
  double tau_lower() const { return 1.0 / (1.0 + gamma); }
  double tau_upper() const { return gamma / (1.0 + gamma); }
  double c_lower() const { return 1.0 / gamma; }
  double c_upper() const { return gamma; }
};

// Outcome sensitivity: |E[Y | U, X, A] - E[Y | X, A]| <= delta.
struct DeltaSpec {
  double delta = 0.0;
  explicit DeltaSpec(double d);
};

// Subset sensitivity: confounding confined to a fraction epsilon of units.
struct EpsilonSpec {
  double epsilon = 0.0;
  explicit EpsilonSpec(double e);
};

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
  double width() const { return upper - lower; }
};

// Bounds traced over a sensitivity grid. `ci_*` are empty when no interval
// was requested; `valid` is false where the numerical solve failed.
struct BoundCurve {
  std::string parameter;  // "gamma", "delta" or "epsilon"
  std::vector<double> grid;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<double> ci_lower;
  std::vector<double> ci_upper;
  std::vector<bool> valid;

  std::size_t size() const { return grid.size(); }
  void push(double g, double lo, double hi, bool ok = true);
};

// 1, 1 + step, ..., up to and including `max` (within rounding).
std::vector<double> gamma_grid(double max, double step = 0.05);

}  // namespace msmsens

#include "msmsens/sensitivity.hpp"

#include <cmath>

#include "msmsens/error.hpp"

namespace msmsens {

GammaSpec::GammaSpec(double g) : gamma(g) {
  if (!(g >= 1.0) || !std::isfinite(g)) fail(ErrorKind::UsageError, "gamma must be finite and >= 1");
}

DeltaSpec::DeltaSpec(double d) : delta(d) {
  if (!(d >= 0.0) || !std::isfinite(d)) fail(ErrorKind::UsageError, "delta must be finite and >= 0");
}

EpsilonSpec::EpsilonSpec(double e) : epsilon(e) {
  if (!(e >= 0.0 && e <= 1.0)) fail(ErrorKind::UsageError, "epsilon must lie in [0, 1]");
}

void BoundCurve::push(double g, double lo, double hi, bool ok) {
  grid.push_back(g);
  lower.push_back(lo);
  upper.push_back(hi);
  valid.push_back(ok);
}

std::vector<double> gamma_grid(double max, double step) {
  if (!(step > 0.0) || !(max >= 1.0)) fail(ErrorKind::UsageError, "need step > 0 and max >= 1");
  std::vector<double> out;
  for (std::size_t k = 0;; ++k) {
    const double g = 1.0 + static_cast<double>(k) * step;
    if (g > max + 1e-9 * step) break;
    out.push_back(g);
  }
  return out;
}

}  // namespace msmsens

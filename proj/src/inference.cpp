#include "msmsens/inference.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <numeric>
#include <random>

#include "msmsens/data.hpp"
#include "msmsens/error.hpp"
#include "msmsens/parallel.hpp"

namespace msmsens {

std::size_t HulcSpec::subsamples() const {
  if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorKind::UsageError, "alpha must lie in (0, 1)");
  // log2(2/alpha) computed exactly enough that integral values do not round up
  const double b = std::log(2.0 / alpha) / std::log(2.0);
  return static_cast<std::size_t>(std::ceil(b - 1e-12));
}

std::vector<std::vector<std::size_t>> hulc_partition(std::size_t n, std::size_t b, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<std::size_t>> groups(b);
  const std::size_t m = n / b;
  for (std::size_t g = 0; g < b; ++g)
    groups[g].assign(perm.begin() + static_cast<std::ptrdiff_t>(g * m),
                     perm.begin() + static_cast<std::ptrdiff_t>((g + 1) * m));
  for (std::size_t r = b * m; r < n; ++r) groups[r - b * m].push_back(perm[r]);
  for (auto& g : groups) std::sort(g.begin(), g.end());
  return groups;
}

ConfidenceInterval hulc_ci(std::size_t n, const SubsampleEstimator& estimator, const HulcSpec& spec,
                           std::size_t min_n) {
  const std::size_t b = spec.subsamples();
  if (n / b < std::max<std::size_t>(min_n, 1))
    fail(ErrorKind::SubsampleTooSmall, "n = " + std::to_string(n) + " gives subsamples of " +
                                           std::to_string(n / b) + " units; need " + std::to_string(min_n));
  const auto groups = hulc_partition(n, b, spec.seed);
  std::vector<double> est(b);
  parallel_for(b, spec.workers, [&](std::size_t g) { est[g] = estimator(groups[g]); });
  const auto [lo, hi] = std::minmax_element(est.begin(), est.end());
  return {*lo, *hi, CiMethod::Hulc, 1.0 - spec.alpha};
}

double normal_quantile(double p) { return boost::math::quantile(boost::math::normal_distribution<double>(), p); }

ConfidenceInterval wald_ci(double estimate, double variance, std::size_t n, double alpha) {
  if (variance < 0.0) fail(ErrorKind::NegativeVariance, "variance " + format_number(variance) + " is negative");
  if (n == 0) fail(ErrorKind::UsageError, "wald_ci needs n > 0");
  if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorKind::UsageError, "alpha must lie in (0, 1)");
  const double half = normal_quantile(1.0 - alpha / 2.0) * std::sqrt(variance / static_cast<double>(n));
  return {estimate - half, estimate + half, CiMethod::Wald, 1.0 - alpha};
}

void band_over_grid(BoundCurve& curve, const std::vector<ConfidenceInterval>& lower,
                    const std::vector<ConfidenceInterval>& upper) {
  if (lower.size() != curve.size() || upper.size() != curve.size())
    fail(ErrorKind::UsageError, "one interval per grid point is required");
  curve.ci_lower.resize(curve.size());
  curve.ci_upper.resize(curve.size());
  for (std::size_t j = 0; j < curve.size(); ++j) {
    curve.ci_lower[j] = lower[j].low;
    curve.ci_upper[j] = upper[j].high;
  }
}

}  // namespace msmsens

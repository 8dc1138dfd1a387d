#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "msmsens/sensitivity.hpp"

namespace msmsens {

struct HulcSpec {
  double alpha = 0.05;
  std::uint64_t seed = 1;
  std::size_t workers = 1;

  // ceil(log(2/alpha) / log 2)
  std::size_t subsamples() const;
};

enum class CiMethod { Hulc, Wald };

struct ConfidenceInterval {
  double low = 0.0;
  double high = 0.0;
  CiMethod method = CiMethod::Wald;
  double level = 0.95;
};

// Estimator evaluated on a subset of unit indices.
using SubsampleEstimator = std::function<double(std::span<const std::size_t>)>;

// Equal-size random partition of 0..n-1 into b groups; the n % b leftover
// units go round-robin to the first groups.
std::vector<std::vector<std::size_t>> hulc_partition(std::size_t n, std::size_t b, std::uint64_t seed);

// [min, max] of the estimator over the disjoint subsamples. Each subsample
// must hold at least `min_n` units.
ConfidenceInterval hulc_ci(std::size_t n, const SubsampleEstimator& estimator, const HulcSpec& spec,
                           std::size_t min_n = 1);

// Standard normal quantile.
double normal_quantile(double p);

// estimate +- z_{1-alpha/2} sqrt(variance / n); `variance` is the asymptotic
// variance of sqrt(n) times the estimate.
ConfidenceInterval wald_ci(double estimate, double variance, std::size_t n, double alpha = 0.05);

// Attaches pointwise intervals: ci_lower from the lower bound's interval,
// ci_upper from the upper bound's.
void band_over_grid(BoundCurve& curve, const std::vector<ConfidenceInterval>& lower,
                    const std::vector<ConfidenceInterval>& upper);

}  // namespace msmsens

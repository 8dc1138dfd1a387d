#include "msmsens/quantile.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "msmsens/error.hpp"

namespace msmsens {

std::size_t type1_rank(std::size_t n, double tau) {
  if (n == 0) fail(ErrorKind::BadTau, "quantile of an empty set");
  const double x = static_cast<double>(n) * tau;
  const double r = std::ceil(x - 1e-9 * std::max(1.0, std::abs(x)));
  return static_cast<std::size_t>(std::clamp(r, 1.0, static_cast<double>(n)));
}

double type1_quantile(std::span<const double> values, double tau) {
  if (values.empty()) fail(ErrorKind::BadTau, "quantile of an empty set");
  std::vector<double> v(values.begin(), values.end());
  const auto r = type1_rank(v.size(), tau) - 1;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(r), v.end());
  return v[r];
}

double type1_quantile(const Eigen::VectorXd& values, double tau) {
  return type1_quantile(std::span<const double>(values.data(), static_cast<std::size_t>(values.size())), tau);
}

std::vector<std::size_t> order_by_value(const Eigen::VectorXd& values) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(values.size()));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t l, std::size_t r) {
    return values[static_cast<Eigen::Index>(l)] < values[static_cast<Eigen::Index>(r)];
  });
  return idx;
}

Eigen::VectorXd box_threshold_weights(const Eigen::VectorXd& d, double lo, double hi, Sense sense) {
  const auto n = static_cast<std::size_t>(d.size());
  Eigen::VectorXd v = Eigen::VectorXd::Ones(d.size());
  if (n == 0 || hi - lo <= 0.0) return v;
  const double p = (1.0 - lo) / (hi - lo);  // share of units at `hi`
  const auto order = order_by_value(d);
  const double nd = static_cast<double>(n);
  if (sense == Sense::Upper) {
    const std::size_t r = type1_rank(n, 1.0 - p);
    for (std::size_t k = 0; k < n; ++k) {
      const auto i = static_cast<Eigen::Index>(order[k]);
      if (k + 1 < r) v[i] = lo;
      else if (k + 1 > r) v[i] = hi;
    }
    const double vf = nd - static_cast<double>(n - r) * hi - static_cast<double>(r - 1) * lo;
    v[static_cast<Eigen::Index>(order[r - 1])] = std::clamp(vf, lo, hi);
  } else {
    const std::size_t r = type1_rank(n, p);
    for (std::size_t k = 0; k < n; ++k) {
      const auto i = static_cast<Eigen::Index>(order[k]);
      if (k + 1 < r) v[i] = hi;
      else if (k + 1 > r) v[i] = lo;
    }
    const double vf = nd - static_cast<double>(r - 1) * hi - static_cast<double>(n - r) * lo;
    v[static_cast<Eigen::Index>(order[r - 1])] = std::clamp(vf, lo, hi);
  }
  return v;
}

}  // namespace msmsens

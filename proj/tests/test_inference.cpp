#include <doctest.h>

#include <numeric>
#include <set>

#include "msmsens/inference.hpp"
#include "support.hpp"

using namespace msmsens;
using msmsens::testing::error_kind;

TEST_CASE("number of subsamples") {
  CHECK(HulcSpec{}.subsamples() == 6);
  HulcSpec s;
  s.alpha = 0.1;
  CHECK(s.subsamples() == 5);
  s.alpha = 0.5;
  CHECK(s.subsamples() == 2);  // log2(4) is exact
  s.alpha = 0.01;
  CHECK(s.subsamples() == 8);
}

TEST_CASE("partition is disjoint, exhaustive and seeded") {
  const auto p = hulc_partition(23, 6, 4);
  CHECK(p.size() == 6);
  std::set<std::size_t> all;
  std::size_t total = 0;
  for (const auto& g : p) {
    CHECK((g.size() == 3 || g.size() == 4));
    total += g.size();
    all.insert(g.begin(), g.end());
  }
  CHECK(total == 23);
  CHECK(all.size() == 23);
  CHECK(hulc_partition(23, 6, 4) == p);
  CHECK(hulc_partition(23, 6, 5) != p);
}

TEST_CASE("HulC interval") {
  std::vector<double> data(60, 2.5);
  auto mean = [&](std::span<const std::size_t> idx) {
    double s = 0;
    for (auto i : idx) s += data[i];
    return s / static_cast<double>(idx.size());
  };
  const auto ci = hulc_ci(60, mean, HulcSpec{});
  CHECK(ci.low == 2.5);
  CHECK(ci.high == 2.5);
  CHECK(ci.method == CiMethod::Hulc);

  std::iota(data.begin(), data.end(), 0.0);
  HulcSpec spec;
  spec.workers = 3;
  const auto a = hulc_ci(60, mean, spec);
  spec.workers = 1;
  const auto b = hulc_ci(60, mean, spec);
  CHECK(a.low == b.low);
  CHECK(a.high == b.high);
  CHECK(a.low <= a.high);
  CHECK(error_kind([&] { hulc_ci(20, mean, HulcSpec{}, 5); }) == ErrorKind::SubsampleTooSmall);
}

TEST_CASE("Wald interval") {
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959964).epsilon(5e-7));
  CHECK(std::round(normal_quantile(0.975) * 1e6) / 1e6 == 1.959964);
  const auto zero = wald_ci(1.5, 0.0, 100);
  CHECK(zero.low == 1.5);
  CHECK(zero.high == 1.5);
  const auto w1 = wald_ci(0.0, 4.0, 100);
  const auto w4 = wald_ci(0.0, 4.0, 400);
  CHECK(w1.high - w1.low == doctest::Approx(2 * (w4.high - w4.low)).epsilon(1e-14));
  CHECK(w1.high == doctest::Approx(normal_quantile(0.975) * 0.2).epsilon(1e-15));
  CHECK(error_kind([] { wald_ci(0.0, -1.0, 10); }) == ErrorKind::NegativeVariance);
}

TEST_CASE("band over a grid") {
  BoundCurve c;
  c.push(1.0, 2.0, 2.0);
  c.push(1.5, 1.0, 3.0);
  const std::vector<ConfidenceInterval> lo{wald_ci(2.0, 1.0, 25), wald_ci(1.0, 1.0, 25)};
  const std::vector<ConfidenceInterval> hi{wald_ci(2.0, 1.0, 25), wald_ci(3.0, 1.0, 25)};
  band_over_grid(c, lo, hi);
  CHECK(c.ci_lower[0] == lo[0].low);
  CHECK(c.ci_upper[0] == hi[0].high);
  for (std::size_t j = 0; j < c.size(); ++j) {
    CHECK(c.ci_lower[j] <= c.lower[j]);
    CHECK(c.ci_upper[j] >= c.upper[j]);
  }
  BoundCurve single;
  single.push(1.0, 0.0, 0.0);
  const auto ci = wald_ci(0.0, 1.0, 16);
  band_over_grid(single, {ci}, {ci});
  CHECK(single.ci_lower[0] == ci.low);
  CHECK(single.ci_upper[0] == ci.high);
}

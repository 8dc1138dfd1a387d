#include <doctest.h>

#include <numeric>

#include "msmsens/subset_bounds.hpp"
#include "msmsens/synth.hpp"
#include "support.hpp"

using namespace msmsens;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using msmsens::testing::intercept_model;
using msmsens::testing::line_model;

namespace {

CrossFit fitted(std::size_t n, std::uint64_t seed) {
  return CrossFit::fit(msmsens::testing::confounded_data(n, seed), split_folds(n, 2, seed), NuisanceRecipes{});
}

double mean_mu(const CrossFit& cf, double a0) {
  double s = 0;
  for (std::size_t i = 0; i < cf.size(); ++i) s += cf.mu(i, a0, cf.data().x().row(static_cast<Eigen::Index>(i)).transpose());
  return s / static_cast<double>(cf.size());
}

}  // namespace

TEST_CASE("selection sizes match the calibration rule") {
  const VectorXd r = VectorXd::LinSpaced(10, -1, 1);
  for (double eps : {0.0, 0.1, 0.25, 0.5, 1.0}) {
    const auto lo = subset_selection(r, eps, Sense::Lower);
    const auto hi = subset_selection(r, eps, Sense::Upper);
    const double nlo = std::accumulate(lo.begin(), lo.end(), 0.0);
    const double nhi = std::accumulate(hi.begin(), hi.end(), 0.0);
    CHECK(std::fabs(nlo / 10 - eps) <= 0.1 + 1e-12);
    CHECK(std::fabs(nhi / 10 - eps) <= 0.1 + 1e-12);
    if (eps > 0) CHECK(lo[0] == 1);   // smallest value is picked first
    if (eps > 0) CHECK(hi[9] == 1);   // largest value is picked first
  }
}

TEST_CASE("theta bounds endpoints") {
  const CrossFit cf = fitted(100, 1);
  const BoundNuisance nu = bound_nuisance(cf, GammaSpec(2.0));
  for (double a0 : {-0.5, 0.8}) {
    const auto zero = subset_theta_bounds(cf, nu, EpsilonSpec(0.0), a0);
    CHECK(zero.lower == doctest::Approx(mean_mu(cf, a0)).epsilon(1e-12));
    CHECK(zero.upper == doctest::Approx(mean_mu(cf, a0)).epsilon(1e-12));
    const auto full = subset_theta_bounds(cf, nu, EpsilonSpec(1.0), a0);
    double lo = 0, hi = 0;
    for (std::size_t i = 0; i < cf.size(); ++i) {
      const VectorXd x = cf.data().x().row(static_cast<Eigen::Index>(i)).transpose();
      lo += nu.kappa(Sense::Lower, i, a0, x);
      hi += nu.kappa(Sense::Upper, i, a0, x);
    }
    CHECK(full.lower == doctest::Approx(lo / 100).epsilon(1e-12));
    CHECK(full.upper == doctest::Approx(hi / 100).epsilon(1e-12));
  }
  const BoundNuisance flat = bound_nuisance(cf, GammaSpec(1.0));
  const auto g1 = subset_theta_bounds(cf, flat, EpsilonSpec(0.5), 0.2);
  CHECK(g1.upper - g1.lower == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("parametric endpoints") {
  const CrossFit cf = fitted(80, 2);
  const BoundNuisance nu = bound_nuisance(cf, GammaSpec(1.5));
  const auto dr = fit_dr_msm(cf, line_model());
  const auto zero = subset_parametric_bounds(cf, line_model(), nu, EpsilonSpec(0.0));
  CHECK((zero.lower.beta - dr.beta).lpNorm<Eigen::Infinity>() < 1e-10);
  CHECK((zero.upper.beta - dr.beta).lpNorm<Eigen::Infinity>() < 1e-10);
  const auto one = subset_parametric_bounds(cf, line_model(), nu, EpsilonSpec(1.0));
  const auto full = fit_gbounds_parametric(cf, line_model(), nu);
  CHECK((one.lower.beta - full.lower.beta).lpNorm<Eigen::Infinity>() < 1e-8);
  CHECK((one.upper.beta - full.upper.beta).lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("linear beta bounds") {
  const CrossFit cf = fitted(100, 3);
  const BoundNuisance nu = bound_nuisance(cf, GammaSpec(2.0));
  const auto zero = subset_linear_beta_bounds(cf, line_model(), nu, EpsilonSpec(0.0), 1);
  CHECK(zero.width() == doctest::Approx(0.0).epsilon(1e-12));

  // b = 1: the min/max of the two theta bounds at each sample treatment, averaged.
  const auto ib = subset_linear_beta_bounds(cf, intercept_model(), nu, EpsilonSpec(0.4), 0);
  double lo = 0, hi = 0;
  for (Eigen::Index i = 0; i < 100; ++i) {
    const auto t = subset_theta_bounds(cf, nu, EpsilonSpec(0.4), cf.data().a()[i]);
    lo += std::min(t.lower, t.upper);
    hi += std::max(t.lower, t.upper);
  }
  CHECK(ib.lower == doctest::Approx(lo / 100).epsilon(1e-12));
  CHECK(ib.upper == doctest::Approx(hi / 100).epsilon(1e-12));
}

TEST_CASE("widths are monotone in epsilon and gamma and intervals nest") {
  const CrossFit cf = fitted(120, 4);
  std::vector<BoundNuisance> nus;
  for (double g : {1.0, 1.5, 2.0, 3.0}) nus.push_back(bound_nuisance(cf, GammaSpec(g)));
  Interval prev_eps{};
  for (double eps : {0.0, 0.2, 0.5, 0.8, 1.0}) {
    double prev_w = -1;
    for (const auto& nu : nus) {
      const auto b = subset_linear_beta_bounds(cf, line_model(), nu, EpsilonSpec(eps), 1);
      CHECK(b.width() >= prev_w - 1e-10);
      prev_w = b.width();
    }
    const auto t = subset_theta_bounds(cf, nus[2], EpsilonSpec(eps), 0.3);
    if (eps > 0) {
      CHECK(t.lower <= prev_eps.lower + 1e-8);
      CHECK(t.upper >= prev_eps.upper - 1e-8);
    }
    prev_eps = t;
  }
}

TEST_CASE("effective box for the independent-subset remark") {
  const auto [lo, hi] = subset_effective_box(3.0, 0.5);
  CHECK(lo == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(hi == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(subset_effective_box(2.0, 0.0) == std::pair<double, double>{1.0, 1.0});
}

TEST_CASE("independent-subset remark endpoints and substitution") {
  const Dataset d = generate({"a1", {}, 5}, 60);
  const MsmSample s(d, VectorXd::Ones(60));
  HomotopyOptions o;
  o.coord = 1;
  const auto grid = gamma_grid(2.0, 0.1);
  const auto zero = subset_independent_remark_bounds(line_model(), s, grid, EpsilonSpec(0.0), o);
  const double point = solve_msm(line_model(), s)[1];
  for (std::size_t j = 0; j < grid.size(); ++j) {
    CHECK(zero.lower[j] == doctest::Approx(point).epsilon(1e-12));
    CHECK(zero.upper[j] == doctest::Approx(point).epsilon(1e-12));
  }
  const auto one = subset_independent_remark_bounds(line_model(), s, grid, EpsilonSpec(1.0), o);
  const auto base = homotopy_bounds(line_model(), s, grid, o);
  CHECK(one.upper == base.upper);
  CHECK(one.lower == base.lower);

  HomotopyOptions sub = o;
  sub.box = [](double g) { return subset_effective_box(g, 0.5); };
  const auto half = subset_independent_remark_bounds(line_model(), s, grid, EpsilonSpec(0.5), o);
  const auto manual = homotopy_bounds(line_model(), s, grid, sub);
  CHECK(half.upper == manual.upper);
  CHECK(half.lower == manual.lower);
}

TEST_CASE("outcome-flavoured subset bounds") {
  const CrossFit cf = fitted(100, 6);
  const auto zero = subset_outcome_beta_bounds(cf, line_model(), EpsilonSpec(0.0), DeltaSpec(1.0), 1);
  CHECK(zero.width() == doctest::Approx(0.0));
  const auto nod = subset_outcome_beta_bounds(cf, line_model(), EpsilonSpec(0.7), DeltaSpec(0.0), 1);
  CHECK(nod.width() == doctest::Approx(0.0));

  // Half-width eps * delta * E_n|f(A)| with f the coord row of Omega^{-1} applied to b.
  const Dataset& d = cf.data();
  MatrixXd B(100, 2);
  for (int i = 0; i < 100; ++i) B.row(i) << 1, d.a()[i];
  const MatrixXd omega = B.transpose() * cf.weights().asDiagonal() * B / 100.0;
  const VectorXd r = omega.inverse().row(1).transpose();
  const double half = 0.3 * 0.8 * (B * r).cwiseAbs().mean();
  const auto b = subset_outcome_beta_bounds(cf, line_model(), EpsilonSpec(0.3), DeltaSpec(0.8), 1);
  CHECK(b.width() == doctest::Approx(2 * half).epsilon(1e-12));

  // No covariates: the propensity equals its marginal and W = 1, so the half-width is eps * delta.
  const Dataset indep = generate({"a1", {}, 7}, 50);
  const CrossFit ci = CrossFit::in_sample(indep, NuisanceRecipes{});
  CHECK(ci.weights().cwiseAbs().maxCoeff() == doctest::Approx(1.0).epsilon(1e-14));
  const auto ib = subset_outcome_beta_bounds(ci, intercept_model(), EpsilonSpec(0.4), DeltaSpec(0.5), 0);
  CHECK(ib.width() == doctest::Approx(2 * 0.4 * 0.5).epsilon(1e-12));
}

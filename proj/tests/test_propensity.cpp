#include <doctest.h>

#include <random>

#include "msmsens/homotopy.hpp"
#include "msmsens/oracle.hpp"
#include "msmsens/propensity_bounds.hpp"
#include "msmsens/synth.hpp"
#include "support.hpp"

using namespace msmsens;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using msmsens::testing::intercept_model;
using msmsens::testing::line_model;

namespace {

MsmSample values_sample(const VectorXd& f) {
  return MsmSample(MatrixXd::Zero(f.size(), 1), f, VectorXd::Ones(f.size()));
}

CrossFit fitted(std::size_t n, std::uint64_t seed) {
  return CrossFit::fit(msmsens::testing::confounded_data(n, seed), split_folds(n, 2, seed), NuisanceRecipes{});
}

double u_mean(const PseudoKernel& k) {
  double s = 0;
  for (std::size_t i = 0; i < k.size(); ++i)
    for (std::size_t j = 0; j < k.size(); ++j)
      if (i != j) s += k(i, j);
  const double n = static_cast<double>(k.size());
  return s / (n * (n - 1));
}

}  // namespace

TEST_CASE("gamma spec") {
  for (double g : {1.0, 1.5, 3.0}) {
    const GammaSpec s(g);
    CHECK(s.tau_lower() + s.tau_upper() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(s.c_lower() * s.c_upper() == doctest::Approx(1.0).epsilon(1e-15));
  }
  CHECK(GammaSpec(1.0).tau_upper() == 0.5);
  CHECK(gamma_grid(1.2, 0.05).size() == 5);
  CHECK(gamma_grid(1.2, 0.05).back() == 1.2);
}

TEST_CASE("transformed outcome") {
  CHECK(s_transform(3.0, 1.0, 2.0) == 5.0);   // above q: q + (y - q) c
  CHECK(s_transform(0.0, 1.0, 2.0) == 0.5);   // below q: q + (y - q) / c
  CHECK(s_transform(1.0, 1.0, 2.0) == 1.0);
  CHECK(s_transform(7.0, 2.0, 1.0) == 7.0);
}

TEST_CASE("closed-form F2 bound on f = (1, 2, 3, 4), gamma = 3") {
  const VectorXd f = Eigen::Vector4d(1, 2, 3, 4);
  const auto b = lemma6_F2_bounds(intercept_model(), values_sample(f), GammaSpec(3.0), 0);
  const auto lp = oracle::linear_box_mean(f, 3.0, oracle::Goal::Max);
  CHECK(lp.value == doctest::Approx(3.5).epsilon(1e-15));
  CHECK(b.bounds.upper == doctest::Approx(3.5).epsilon(1e-15));
  CHECK(b.bounds.lower == doctest::Approx(oracle::linear_box_mean(f, 3.0, oracle::Goal::Min).value).epsilon(1e-14));
  CHECK(b.v_upper.mean() == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("closed-form F2 bound equals the LP and is feasible") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> z;
  for (int inst = 0; inst < 40; ++inst) {
    const int n = 3 + inst;
    const double g = 1.0 + 0.1 * (inst % 25);
    VectorXd f(n);
    for (auto& e : f) e = z(rng);
    const auto b = lemma6_F2_bounds(intercept_model(), values_sample(f), GammaSpec(g), 0);
    CHECK(b.bounds.upper == doctest::Approx(oracle::linear_box_mean(f, g, oracle::Goal::Max).value).epsilon(1e-12));
    CHECK(b.bounds.lower == doctest::Approx(oracle::linear_box_mean(f, g, oracle::Goal::Min).value).epsilon(1e-12));
    for (const VectorXd* v : {&b.v_upper, &b.v_lower}) {
      CHECK(v->minCoeff() >= 1.0 / g - 1e-15);
      CHECK(v->maxCoeff() <= g + 1e-15);
      CHECK(std::fabs(v->mean() - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("constant functional is immune to gamma") {
  const VectorXd f = VectorXd::Constant(9, 2.5);
  for (double g : {1.0, 2.0, 7.0}) {
    const auto b = lemma6_F2_bounds(intercept_model(), values_sample(f), GammaSpec(g), 0);
    CHECK(b.bounds.lower == doctest::Approx(2.5).epsilon(1e-14));
    CHECK(b.bounds.upper == doctest::Approx(2.5).epsilon(1e-14));
  }
}

TEST_CASE("conditional mean bounds") {
  const CrossFit cf = fitted(120, 3);
  VectorXd x(1);
  x << 0.2;
  const auto [lo1, hi1] = conditional_bounds_m(cf, GammaSpec(1.0), 0.4, x);
  double mu = 0;
  for (std::size_t k = 0; k < cf.fold_count(); ++k) mu += cf.outcome(k)(0.4, x);
  mu /= static_cast<double>(cf.fold_count());
  CHECK(lo1 == doctest::Approx(mu).epsilon(1e-10));
  CHECK(hi1 == doctest::Approx(mu).epsilon(1e-10));
  const auto [lo2, hi2] = conditional_bounds_m(cf, GammaSpec(2.0), 0.4, x);
  CHECK(lo2 <= lo1 + 1e-12);
  CHECK(hi2 >= hi1 - 1e-12);

  // Degenerate outcome: nothing to exploit.
  const Dataset base = msmsens::testing::confounded_data(80, 4);
  const Dataset flat(base.x(), base.a(), VectorXd::Constant(80, 1.25), {"x"});
  const CrossFit cflat = CrossFit::in_sample(flat, NuisanceRecipes{});
  const auto [lo3, hi3] = conditional_bounds_m(cflat, GammaSpec(3.0), 0.0, x);
  CHECK(lo3 == doctest::Approx(1.25).epsilon(1e-9));
  CHECK(hi3 == doctest::Approx(1.25).epsilon(1e-9));
}

TEST_CASE("no-confounding collapse for every closed-form routine") {
  const CrossFit cf = fitted(150, 5);
  const MsmModel m = line_model();
  const MsmSample s(cf.data(), cf.weights());
  const auto dr = fit_dr_msm(cf, m);
  const auto ipw = fit_msm(m, s);

  const auto par = fit_gbounds_parametric(cf, m, GammaSpec(1.0));
  CHECK((par.lower.beta - dr.beta).lpNorm<Eigen::Infinity>() < 1e-8);
  CHECK((par.upper.beta - dr.beta).lpNorm<Eigen::Infinity>() < 1e-8);

  const auto cp = linear_curve_bounds(cf, m, GammaSpec(1.0), 0.3);
  CHECK(cp.lower == doctest::Approx(m.g(0.3, dr.beta)).epsilon(1e-8));
  CHECK(cp.upper == doctest::Approx(m.g(0.3, dr.beta)).epsilon(1e-8));

  const auto l5 = lemma5_beta1_bounds(cf, m, GammaSpec(1.0), 1);
  CHECK(l5.lower == doctest::Approx(ipw.beta[1]).epsilon(1e-8));
  CHECK(l5.upper == doctest::Approx(ipw.beta[1]).epsilon(1e-8));

  const auto l6 = lemma6_F2_bounds(m, s, GammaSpec(1.0), 1);
  CHECK(l6.bounds.width() == doctest::Approx(0.0));
  CHECK(l6.bounds.lower == doctest::Approx(ipw.beta[1]).epsilon(1e-10));

  const auto loc = local_bounds(m, s, {1.0}, 1);
  CHECK(loc.lower[0] == loc.upper[0]);
}

TEST_CASE("intercept-only kernels reduce to U-statistics") {
  const CrossFit cf = fitted(60, 6);
  const BoundNuisance nu = bound_nuisance(cf, GammaSpec(2.0));
  const auto par = fit_gbounds_parametric(cf, intercept_model(), nu);
  CHECK(par.upper.beta[0] == doctest::Approx(u_mean(phi_kernel(cf, nu, Sense::Upper))).epsilon(1e-12));
  CHECK(par.lower.beta[0] == doctest::Approx(u_mean(phi_kernel(cf, nu, Sense::Lower))).epsilon(1e-12));
  const auto cp = linear_curve_bounds(cf, intercept_model(), nu, 0.0);
  CHECK(cp.upper == doctest::Approx(par.upper.beta[0]).epsilon(1e-12));
  CHECK(cp.lower == doctest::Approx(par.lower.beta[0]).epsilon(1e-12));
}

TEST_CASE("doubly robust kernel at gamma = 1") {
  const CrossFit cf = fitted(40, 7);
  const BoundNuisance nu = bound_nuisance(cf, GammaSpec(1.0));
  const PseudoKernel phi = phi_kernel(cf, nu, Sense::Upper);
  const PseudoKernel dr = dr_kernel(cf);
  double gap = 0;
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t j = 0; j < 40; ++j) gap = std::max(gap, std::fabs(phi(i, j) - dr(i, j)));
  CHECK(gap < 1e-10);
}

TEST_CASE("parametric covariance is four times the projection variance") {
  const CrossFit cf = fitted(50, 8);
  const BoundNuisance nu = bound_nuisance(cf, GammaSpec(1.5));
  const PseudoKernel phi = phi_kernel(cf, nu, Sense::Upper);
  const auto fit = fit_pseudo_msm(intercept_model(), MatrixXd(cf.data().a()), phi);
  MatrixXd K(50, 50);
  for (int i = 0; i < 50; ++i)
    for (int j = 0; j < 50; ++j) K(i, j) = phi(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  CHECK(fit.covariance(0, 0) == doctest::Approx(4.0 * u_projection_variance(matrix_kernel(K))(0, 0)).epsilon(1e-10));
}

TEST_CASE("widths grow with gamma") {
  const CrossFit cf = fitted(200, 9);
  const MsmModel m = line_model();
  const MsmSample s(cf.data(), cf.weights());
  double w6 = 0, w5 = 0, wc = 0, wi = 0;
  for (double g : gamma_grid(2.5, 0.25)) {
    const double n6 = lemma6_F2_bounds(m, s, GammaSpec(g), 1).bounds.width();
    const double n5 = lemma5_beta1_bounds(cf, m, GammaSpec(g), 1).width();
    const auto cp = linear_curve_bounds(cf, m, GammaSpec(g), 0.5);
    const auto par = fit_gbounds_parametric(cf, intercept_model(), GammaSpec(g));
    CHECK(n6 >= w6 - 1e-12);
    CHECK(n5 >= w5 - 1e-12);
    CHECK(cp.upper - cp.lower >= wc - 1e-12);
    CHECK(par.upper.beta[0] - par.lower.beta[0] >= wi - 1e-12);
    CHECK(cp.lower <= cp.upper);
    w6 = n6;
    w5 = n5;
    wc = cp.upper - cp.lower;
    wi = par.upper.beta[0] - par.lower.beta[0];
  }
}

TEST_CASE("local bounds follow their formula") {
  const Dataset d = generate({"a1", {}, 3}, 100);
  const MsmSample s(d, VectorXd::Ones(100));
  const MsmModel m = line_model();
  const VectorXd beta = solve_msm(m, s);
  const VectorXd dv = derivative_F1(m, s, beta, VectorXd::Ones(100), 1);
  const auto curve = local_bounds(m, s, {1.0, 1.5, 2.0}, 1);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(curve.upper[j] - curve.lower[j] ==
          doctest::Approx(2 * std::log(curve.grid[j]) * dv.cwiseAbs().mean()).epsilon(1e-12));
    CHECK(0.5 * (curve.upper[j] + curve.lower[j]) == doctest::Approx(beta[1]).epsilon(1e-12));
  }
}

TEST_CASE("conditional class is nested in the marginal class") {
  // Same weights, same functional: the V_small interval sits inside the V_large one.
  const Dataset d = generate({"discrete", {{"atoms", 3}}, 12}, 400);
  const CrossFit cf = CrossFit::in_sample(d, msmsens::testing::cell_recipes());
  const MsmModel m = line_model();
  const MsmSample s(d, cf.weights());
  for (double g : {1.5, 2.0, 3.0}) {
    const auto small = lemma5_beta1_bounds(cf, m, GammaSpec(g), 1);
    const auto large = lemma6_F2_bounds(m, s, GammaSpec(g), 1).bounds;
    CHECK(small.lower >= large.lower - 1e-10);
    CHECK(small.upper <= large.upper + 1e-10);
  }
}

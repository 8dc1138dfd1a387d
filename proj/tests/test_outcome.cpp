#include <doctest.h>

#include "msmsens/outcome_bounds.hpp"
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

// E_n|c' Q^{-1} b(A)| with Q = E_n[b b'].
double mean_abs_projection(const MsmModel& m, const VectorXd& a, const VectorXd& c) {
  MatrixXd B(a.size(), static_cast<Eigen::Index>(m.dim()));
  for (Eigen::Index i = 0; i < a.size(); ++i) B.row(i) = m.basis(a[i]).transpose();
  const MatrixXd Q = B.transpose() * B / static_cast<double>(a.size());
  return (B * Q.ldlt().solve(c)).cwiseAbs().mean();
}

}  // namespace

TEST_CASE("delta = 0 collapses to the doubly robust fit") {
  const CrossFit cf = fitted(100, 1);
  const auto dr = fit_dr_msm(cf, line_model());
  const auto c = outcome_curve_bounds(cf, line_model(), DeltaSpec(0.0), 0.7);
  CHECK(c.lower == doctest::Approx(line_model().g(0.7, dr.beta)).epsilon(1e-10));
  CHECK(c.upper == doctest::Approx(c.lower).epsilon(1e-14));
  const auto b = outcome_beta_bounds_linear(cf, line_model(), DeltaSpec(0.0), 1);
  CHECK(b.lower == doctest::Approx(dr.beta[1]).epsilon(1e-10));
  CHECK(b.width() == doctest::Approx(0.0));
  const auto p = outcome_parametric_bounds(cf, line_model(), DeltaSpec(0.0));
  CHECK((p.lower.beta - dr.beta).lpNorm<Eigen::Infinity>() < 1e-10);
  CHECK((p.upper.beta - dr.beta).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("width identities") {
  const CrossFit cf = fitted(150, 2);
  const VectorXd& a = cf.data().a();
  for (double delta : {0.1, 0.5, 2.0}) {
    for (double a0 : {-1.0, 0.0, 1.3}) {
      const auto c = outcome_curve_bounds(cf, line_model(), DeltaSpec(delta), a0);
      CHECK(c.upper - c.lower ==
            doctest::Approx(2 * delta * mean_abs_projection(line_model(), a, line_model().basis(a0))).epsilon(1e-10));
    }
    const auto b = outcome_beta_bounds_linear(cf, line_model(), DeltaSpec(delta), 1);
    CHECK(b.width() == doctest::Approx(2 * delta * mean_abs_projection(line_model(), a, Eigen::Vector2d(0, 1))).epsilon(1e-10));

    const auto i = outcome_curve_bounds(cf, intercept_model(), DeltaSpec(delta), 0.0);
    CHECK(i.upper - i.lower == doctest::Approx(2 * delta).epsilon(1e-12));
    const auto p = outcome_parametric_bounds(cf, intercept_model(), DeltaSpec(delta));
    CHECK(p.upper.beta[0] - p.lower.beta[0] == doctest::Approx(2 * delta).epsilon(1e-12));
  }
}

TEST_CASE("orthonormal basis gives width 2 delta E|b_2(A)|") {
  // Centre and scale a so that Q = E_n[b b'] is the identity for b = (1, a).
  const Dataset raw = msmsens::testing::confounded_data(90, 3);
  VectorXd a = raw.a().array() - raw.a().mean();
  a /= std::sqrt(a.squaredNorm() / 90.0);
  const Dataset d(raw.x(), a, raw.y(), {"x"});
  const CrossFit cf = CrossFit::in_sample(d, NuisanceRecipes{});
  const auto b = outcome_beta_bounds_linear(cf, line_model(), DeltaSpec(0.3), 1);
  CHECK(b.width() == doctest::Approx(2 * 0.3 * a.cwiseAbs().mean()).epsilon(1e-12));
}

TEST_CASE("width is linear in delta and bounds contain the point estimate") {
  const CrossFit cf = fitted(120, 4);
  const auto one = outcome_curve_bounds(cf, line_model(), DeltaSpec(0.4), std::vector<double>{-0.5, 0.5});
  const auto two = outcome_curve_bounds(cf, line_model(), DeltaSpec(0.8), std::vector<double>{-0.5, 0.5});
  const auto zero = outcome_curve_bounds(cf, line_model(), DeltaSpec(0.0), std::vector<double>{-0.5, 0.5});
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(two[k].upper - two[k].lower == doctest::Approx(2 * (one[k].upper - one[k].lower)).epsilon(1e-12));
    CHECK(one[k].lower <= zero[k].lower);
    CHECK(one[k].upper >= zero[k].upper);
  }
}

TEST_CASE("grid method: collapse, linear agreement, one dimension") {
  const CrossFit cf = fitted(120, 5);
  const auto g0 = outcome_nonlinear_grid_bounds(cf, line_model(), DeltaSpec(0.0), 1);
  const MsmSample s(MatrixXd(cf.data().a()), cf.mu_hat(), cf.weights());
  const double ref = solve_msm(line_model(), s)[1];
  CHECK(g0.bounds.lower == doctest::Approx(ref).epsilon(1e-10));
  CHECK(g0.bounds.upper == doctest::Approx(ref).epsilon(1e-10));

  // Intercept only: t ranges over [-delta, delta] exactly and beta shifts by the matching amount.
  const auto g1 = outcome_nonlinear_grid_bounds(cf, intercept_model(), DeltaSpec(0.5), 0, GridOptions{3, false});
  const MsmSample one(MatrixXd(cf.data().a()), cf.mu_hat(), cf.weights());
  const double w = cf.weights().mean();
  const double base = solve_msm(intercept_model(), one)[0];
  CHECK(g1.bounds.upper == doctest::Approx(base + 0.5 / w).epsilon(1e-10));
  CHECK(g1.bounds.lower == doctest::Approx(base - 0.5 / w).epsilon(1e-10));
}

TEST_CASE("grid refinement only widens on nested grids") {
  const CrossFit cf = fitted(100, 6);
  const auto coarse = outcome_nonlinear_grid_bounds(cf, line_model(), DeltaSpec(0.3), 1, GridOptions{3, false});
  const auto fine = outcome_nonlinear_grid_bounds(cf, line_model(), DeltaSpec(0.3), 1, GridOptions{5, false});
  CHECK(fine.bounds.lower <= coarse.bounds.lower + 1e-12);
  CHECK(fine.bounds.upper >= coarse.bounds.upper - 1e-12);
}

TEST_CASE("confounding set membership") {
  MatrixXd h(2, 1);
  h << 1, 1;
  CHECK(in_confounding_set(h, VectorXd::Constant(1, 0.5), 1.0));
  CHECK(!in_confounding_set(h, VectorXd::Constant(1, 1.5), 1.0));
  MatrixXd h2(2, 2);
  h2 << 1, 1, 1, -1;
  // E_n[h xi] = ((xi1 + xi2)/2, (xi1 - xi2)/2): the corner (1, 1) needs xi1 = 2.
  CHECK(!in_confounding_set(h2, Eigen::Vector2d(1, 1), 1.0));
  CHECK(in_confounding_set(h2, Eigen::Vector2d(0.5, 0.5), 1.0));
}

TEST_CASE("grid method limits") {
  const CrossFit cf = fitted(60, 7);
  const MsmModel big = MsmModel::linear(basis::polynomial(4));
  CHECK(msmsens::testing::error_kind([&] { outcome_nonlinear_grid_bounds(cf, big, DeltaSpec(0.1), 1); }) ==
        ErrorKind::TooLarge);
}

#include <doctest.h>

#include <algorithm>
#include <random>

#include "msmsens/nuisance.hpp"
#include "msmsens/quantile.hpp"
#include "support.hpp"

using namespace msmsens;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using msmsens::testing::error_kind;

namespace {

Dataset independent_binary(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  const auto m = static_cast<Eigen::Index>(n);
  MatrixXd x(m, 1);
  VectorXd a(m), y(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    x(i, 0) = z(rng);
    a[i] = static_cast<double>(i % 2);
    y[i] = a[i] + z(rng);
  }
  return Dataset(x, a, y, {"x"});
}

}  // namespace

TEST_CASE("constant outcome gives a constant fit") {
  Dataset base = msmsens::testing::confounded_data(40, 1);
  const Dataset d(base.x(), base.a(), VectorXd::Constant(40, 5.0), {"x"});
  for (auto method : {OutcomeMethod::Linear, OutcomeMethod::Kernel}) {
    OutcomeRecipe r;
    r.method = method;
    const OutcomeFit f = fit_outcome(d, r);
    VectorXd x(1);
    x << 0.3;
    CHECK(f(0.7, x) == doctest::Approx(5.0).epsilon(1e-12));
  }
}

TEST_CASE("noiseless linear outcome is recovered") {
  const Dataset base = msmsens::testing::confounded_data(30, 2);
  const VectorXd y = (2.0 * base.a()).array() + 1.0;
  const Dataset d(base.x(), base.a(), y, {"x"});
  const OutcomeFit f = fit_outcome(d, OutcomeRecipe{});
  VectorXd x(1);
  for (double a : {-1.0, 0.0, 2.5}) {
    x << a / 2;
    CHECK(std::fabs(f(a, x) - (2 * a + 1)) < 1e-10);
  }
}

TEST_CASE("rank-deficient outcome design") {
  const Dataset base = msmsens::testing::confounded_data(30, 2);
  MatrixXd x(30, 2);
  x << base.x(), base.x();
  const Dataset d(x, base.a(), base.y(), {"x1", "x2"});
  CHECK(error_kind([&] { fit_outcome(d, OutcomeRecipe{}); }) == ErrorKind::SingularDesign);
}

TEST_CASE("propensity under independence") {
  const Dataset d = independent_binary(400, 5);
  PropensityRecipe r;
  r.method = PropensityMethod::Discrete;
  const PropensityFit p = fit_propensity(d, r);
  for (Eigen::Index i = 0; i < 10; ++i) {
    CHECK(p.conditional(d.a()[i], d.x().row(i).transpose()) == doctest::Approx(0.5).epsilon(0.15));
    CHECK(p.marginal(d.a()[i]) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(p.weight(d.a()[i], d.x().row(i).transpose()) == doctest::Approx(1.0).epsilon(0.2));
  }
}

TEST_CASE("discrete masses sum to one") {
  const Dataset base = msmsens::testing::confounded_data(300, 3);
  VectorXd a = base.a().unaryExpr([](double v) { return std::round(std::clamp(v, -2.0, 2.0)); });
  const Dataset d(base.x(), a, base.y(), {"x"});
  PropensityRecipe r;
  r.method = PropensityMethod::Discrete;
  const PropensityFit p = fit_propensity(d, r);
  CHECK(p.levels().size() == 5);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z;
  for (int k = 0; k < 50; ++k) {
    VectorXd x(1);
    x << 3 * z(rng);
    const VectorXd m = p.masses(x);
    CHECK(std::fabs(m.sum() - 1.0) < 1e-8);
    CHECK(m.minCoeff() >= r.floor - 1e-15);
  }
}

TEST_CASE("propensity contract errors") {
  const Dataset base = msmsens::testing::confounded_data(50, 4);
  const Dataset same(base.a(), base.a(), base.y(), {"x"});
  CHECK(error_kind([&] { fit_propensity(same, PropensityRecipe{}); }) == ErrorKind::DegenerateVariance);
  PropensityRecipe r;
  r.method = PropensityMethod::Discrete;
  CHECK(error_kind([&] { fit_propensity(base, r); }) == ErrorKind::TooManyLevels);
}

TEST_CASE("weights are clipped, finite and positive") {
  const Dataset d = msmsens::testing::confounded_data(200, 9);
  PropensityRecipe r;
  r.floor = 1e-3;
  const PropensityFit p = fit_propensity(d, r);
  for (Eigen::Index i = 0; i < 200; ++i) {
    const double w = p.weight(d.a()[i], d.x().row(i).transpose());
    CHECK(std::isfinite(w));
    CHECK(w > 0);
    CHECK(w <= p.marginal(d.a()[i]) * 1e3 * (1 + 1e-12));
  }
  r.stabilized = false;
  const PropensityFit u = fit_propensity(d, r);
  CHECK(u.weight(d.a()[0], d.x().row(0).transpose()) ==
        doctest::Approx(1.0 / u.conditional(d.a()[0], d.x().row(0).transpose())));
}

TEST_CASE("quantile fits") {
  const Dataset base = msmsens::testing::confounded_data(60, 4);
  const Dataset flat(base.x(), base.a(), VectorXd::Constant(60, 2.0), {"x"});
  const std::vector<double> taus{0.25, 0.5, 0.75};
  for (auto method : {QuantileMethod::Pinball, QuantileMethod::Empirical}) {
    QuantileRecipe r;
    r.method = method;
    const QuantileFit q = fit_quantile(flat, taus, r);
    VectorXd x(1);
    x << 0.1;
    for (double t : taus) CHECK(q(t, flat.a()[0], x) == doctest::Approx(2.0).epsilon(1e-12));
  }
  CHECK(error_kind([&] { fit_quantile(base, {1.2}, QuantileRecipe{}); }) == ErrorKind::BadTau);
}

TEST_CASE("empirical quantile by treatment level is the per-level type-1 median") {
  const Dataset d = independent_binary(41, 8);
  QuantileRecipe r;
  r.method = QuantileMethod::Empirical;
  const QuantileFit q = fit_quantile(d, {0.5}, r);
  for (double level : {0.0, 1.0}) {
    std::vector<double> ys;
    for (Eigen::Index i = 0; i < 41; ++i)
      if (d.a()[i] == level) ys.push_back(d.y()[i]);
    std::sort(ys.begin(), ys.end());
    const std::size_t rank = (ys.size() + 1) / 2;  // ceil(n/2)
    CHECK(q(0.5, level, d.x().row(0).transpose()) == ys[rank - 1]);
  }
}

TEST_CASE("pinball quantiles are monotone in tau after rearrangement") {
  const Dataset d = msmsens::testing::confounded_data(150, 6);
  const std::vector<double> taus{0.1, 0.3, 0.5, 0.7, 0.9};
  QuantileRecipe r;
  r.interactions = true;
  const QuantileFit q = fit_quantile(d, taus, r);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> z;
  for (int k = 0; k < 200; ++k) {
    VectorXd x(1);
    x << 4 * z(rng);
    const double a = 4 * z(rng);
    for (std::size_t t = 1; t < taus.size(); ++t) CHECK(q(taus[t - 1], a, x) <= q(taus[t], a, x));
  }
}

TEST_CASE("type-1 quantile convention") {
  VectorXd v(4);
  v << 4, 1, 3, 2;
  CHECK(type1_quantile(v, 0.5) == 2.0);
  CHECK(type1_quantile(v, 0.51) == 3.0);
  CHECK(type1_quantile(v, 1.0) == 4.0);
  CHECK(type1_rank(4, 0.75) == 3);
  CHECK(type1_rank(10, 0.3) == 3);  // 10 * .3 is not exactly 3 in binary
}

TEST_CASE("cross-fitting uses out-of-fold bundles") {
  const Dataset d = msmsens::testing::confounded_data(60, 11);
  const auto folds = split_folds(60, 2, 3);
  const CrossFit cf = CrossFit::fit(d, folds, NuisanceRecipes{});
  CHECK(cf.fold_count() == 2);
  for (std::size_t i = 0; i < 60; ++i) {
    const auto& train = cf.training(cf.fold_of(i));
    CHECK(std::find(train.begin(), train.end(), i) == train.end());
  }

  // Perturbing unit 0's outcome only moves the bundle trained on it.
  VectorXd y = d.y();
  y[0] += 100.0;
  const CrossFit moved = CrossFit::fit(Dataset(d.x(), d.a(), y, {"x"}), folds, NuisanceRecipes{});
  const std::size_t own = folds.fold_of[0];
  VectorXd x(1);
  x << 0.2;
  CHECK(moved.outcome(own)(0.5, x) == cf.outcome(own)(0.5, x));
  CHECK(moved.outcome(1 - own)(0.5, x) != cf.outcome(1 - own)(0.5, x));
}

TEST_CASE("identical folds give identical bundles") {
  const Dataset half = msmsens::testing::confounded_data(30, 12);
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t i = 0; i < 30; ++i) rows.push_back(i);
  const Dataset doubled = half.subset(rows);
  FoldAssignment folds;
  folds.k = 2;
  for (std::size_t i = 0; i < 60; ++i) folds.fold_of.push_back(i / 30);
  const CrossFit cf = CrossFit::fit(doubled, folds, NuisanceRecipes{});
  VectorXd x(1);
  x << -0.4;
  CHECK(cf.outcome(0)(0.3, x) == doctest::Approx(cf.outcome(1)(0.3, x)).epsilon(1e-12));
  CHECK(cf.propensity(0).conditional(0.3, x) == doctest::Approx(cf.propensity(1).conditional(0.3, x)).epsilon(1e-12));
}

#include <doctest.h>

#include <random>

#include "msmsens/oracle.hpp"
#include "msmsens/synth.hpp"
#include "support.hpp"

using namespace msmsens;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using msmsens::testing::error_kind;

TEST_CASE("generators are seeded and registered") {
  const Dataset a = generate({"a1", {}, 9}, 100);
  const Dataset b = generate({"a1", {}, 9}, 100);
  CHECK(a.a() == b.a());
  CHECK(a.y() == b.y());
  CHECK(generate({"a1", {}, 10}, 100).a() != a.a());
  CHECK(error_kind([] { generate({"nope", {}, 1}, 10); }) == ErrorKind::UnknownDgp);
  CHECK(error_kind([] { generate({"panel", {}, 1}, 10); }) == ErrorKind::UsageError);
  CHECK(error_kind([] { generate_panel({"a1", {}, 1}, 10); }) == ErrorKind::UsageError);
  for (const auto& name : dgp_names()) {
    if (is_panel_dgp(name)) CHECK(generate_panel({name, {}, 1}, 5).size() == 5);
    else CHECK(generate({name, {}, 1}, 5).size() == 5);
  }
}

TEST_CASE("a1 moments") {
  const std::size_t n = 100;
  const Dataset d = generate({"a1", {}, 3}, n);
  const double tol = 4 / std::sqrt(static_cast<double>(n));
  CHECK(std::fabs(d.a().mean()) < tol);
  const double var = (d.a().array() - d.a().mean()).square().mean();
  CHECK(std::fabs(var - 1) < tol);
  CHECK(d.dim() == 0);
}

TEST_CASE("f6b treatment range") {
  const Dataset d = generate({"f6b", {}, 4}, 500);
  CHECK(d.a().minCoeff() >= 2.0);
  CHECK(d.a().maxCoeff() <= 2.5);
}

TEST_CASE("box mean oracle") {
  const VectorXd f = Eigen::Vector4d(1, 2, 3, 4);
  const auto r = oracle::linear_box_mean(f, 3.0, oracle::Goal::Max);
  CHECK(r.value == doctest::Approx(3.5).epsilon(1e-15));
  CHECK(r.method == "lp-knapsack");
  CHECK(r.certificate.isApprox(Eigen::Vector4d(1 / 3., 1 / 3., 1 / 3., 3), 1e-15));

  CHECK(oracle::linear_box_mean(f, 1.0, oracle::Goal::Max).value == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(oracle::linear_box_mean(VectorXd::Constant(5, 2.0), 4.0, oracle::Goal::Min).value ==
        doctest::Approx(2.0).epsilon(1e-15));

  std::mt19937_64 rng(2);
  std::normal_distribution<double> z;
  for (int k = 0; k < 30; ++k) {
    VectorXd g(5 + k);
    for (auto& e : g) e = z(rng);
    const double gamma = 1.2 + 0.1 * k;
    for (auto goal : {oracle::Goal::Min, oracle::Goal::Max}) {
      const auto res = oracle::linear_box_mean(g, gamma, goal);
      CHECK(res.certificate.minCoeff() >= 1 / gamma - 1e-10);
      CHECK(res.certificate.maxCoeff() <= gamma + 1e-10);
      CHECK(std::fabs(res.certificate.mean() - 1) < 1e-10);
      CHECK(std::fabs(g.dot(res.certificate) / static_cast<double>(g.size()) - res.value) < 1e-10);
    }
    CHECK(oracle::linear_box_mean(g, gamma, oracle::Goal::Max).value >=
          oracle::linear_box_mean(g, gamma, oracle::Goal::Min).value);
  }
}

TEST_CASE("conditional oracle") {
  oracle::Cell c{{1, 2, 5}, {0.2, 0.5, 0.3}, 1.0};
  CHECK(oracle::conditional_box_mean({c}, 1.0, oracle::Goal::Max).value == doctest::Approx(2.7).epsilon(1e-14));
  // gamma = 2, max: the top 1/3 of mass gets weight 2. Mass .3 at 5 and .0333 at 2.
  const double expect = (5 * 0.3 * 2 + 2 * (1.0 / 3 - 0.3) * 2 + 2 * (0.5 - (1.0 / 3 - 0.3)) * 0.5 + 1 * 0.2 * 0.5);
  CHECK(oracle::conditional_box_mean({c}, 2.0, oracle::Goal::Max).value == doctest::Approx(expect).epsilon(1e-13));

  oracle::Cell d{{0, 3}, {0.5, 0.5}, -2.0};
  const auto one = oracle::conditional_box_mean({c}, 2.0, oracle::Goal::Max).value;
  const auto two = oracle::conditional_box_mean({d}, 2.0, oracle::Goal::Min).value;
  const auto both = oracle::conditional_box_mean({c, d}, 2.0, {oracle::Goal::Max, oracle::Goal::Min});
  CHECK(both.value == doctest::Approx(one + two).epsilon(1e-14));
  CHECK(both.cell_values.size() == 2);
}

TEST_CASE("exhaustive F1 oracle") {
  const Dataset d = generate({"a1", {}, 5}, 6);
  MatrixXd H(6, 2);
  H.col(0).setOnes();
  H.col(1) = d.a();
  const VectorXd w = VectorXd::Ones(6);
  const double point = oracle::f1_value(H, d.y(), w, VectorXd::Ones(6), 1);
  const auto at1 = oracle::f1_exhaustive(H, d.y(), w, 1.0, 1, oracle::Goal::Max);
  CHECK(at1.value == doctest::Approx(point).epsilon(1e-12));
  const auto hi = oracle::f1_exhaustive(H, d.y(), w, 2.0, 1, oracle::Goal::Max);
  const auto lo = oracle::f1_exhaustive(H, d.y(), w, 2.0, 1, oracle::Goal::Min);
  CHECK(hi.value >= lo.value);
  CHECK(hi.method == "vertex-enumeration");
  CHECK(hi.certificate.minCoeff() >= 0.5 - 1e-10);
  CHECK(hi.certificate.maxCoeff() <= 2.0 + 1e-10);
  CHECK(std::fabs(hi.certificate.mean() - 1) < 1e-10);
  CHECK(oracle::f1_value(H, d.y(), w, hi.certificate, 1) == doctest::Approx(hi.value).epsilon(1e-12));

  MatrixXd big = MatrixXd::Ones(13, 1);
  CHECK(error_kind([&] { oracle::f1_exhaustive(big, VectorXd::Ones(13), VectorXd::Ones(13), 2.0, 0, oracle::Goal::Max); }) ==
        ErrorKind::TooLarge);
}

#pragma once

// Shared fixtures for the test executables.

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "msmsens/data.hpp"
#include "msmsens/error.hpp"
#include "msmsens/msm.hpp"
#include "msmsens/nuisance.hpp"

namespace msmsens::testing {

// Kind of the library error thrown by f, or nullopt if it returns normally.
template <class F>
std::optional<ErrorKind> error_kind(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

inline MsmModel line_model() { return MsmModel::linear(basis::polynomial(1)); }
inline MsmModel intercept_model() { return MsmModel::linear({basis::intercept()}); }

inline Eigen::MatrixXd design(const MsmModel& model, const MsmSample& sample) {
  Eigen::MatrixXd h(static_cast<Eigen::Index>(sample.size()), static_cast<Eigen::Index>(model.dim()));
  for (std::size_t i = 0; i < sample.size(); ++i)
    h.row(static_cast<Eigen::Index>(i)) = model.h(sample.treatment(i)).transpose();
  return h;
}

// X ~ N(0,1), A = .5X + N(0,1), Y = 1 + 2A + X + .5A^2 + N(0,1).
inline Dataset confounded_data(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  const auto m = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd x(m, 1);
  Eigen::VectorXd a(m), y(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    x(i, 0) = z(rng);
    a[i] = 0.5 * x(i, 0) + z(rng);
    y[i] = 1.0 + 2.0 * a[i] + x(i, 0) + 0.5 * a[i] * a[i] + z(rng);
  }
  return Dataset(x, a, y, {"x"});
}

// Discrete (A, X) nuisances fitted as cell means in sample.
inline NuisanceRecipes cell_recipes() {
  NuisanceRecipes r;
  r.outcome.method = OutcomeMethod::CellMean;
  r.outcome.cells = CellScope::TreatmentCovariates;
  r.propensity.method = PropensityMethod::Discrete;
  r.quantile.method = QuantileMethod::Empirical;
  r.quantile.cells = CellScope::TreatmentCovariates;
  return r;
}

}  // namespace msmsens::testing

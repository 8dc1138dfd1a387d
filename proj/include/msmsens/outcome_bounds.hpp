#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "msmsens/msm.hpp"
#include "msmsens/nuisance.hpp"
#include "msmsens/propensity_bounds.hpp"
#include "msmsens/sensitivity.hpp"

namespace msmsens {

// Bounds on b(a0)'beta under |mu(u, x, a) - mu(x, a)| <= delta: the doubly
// robust kernel shifted by +-delta sgn(b(a0)'Q^{-1} b(A1)), Q = E_n[b b'].
// The width is 2 delta E_n|b(a0)'Q^{-1} b(A)|.
std::vector<CurvePoint> outcome_curve_bounds(const CrossFit& cf, const MsmModel& model, const DeltaSpec& spec,
                                             const std::vector<double>& a0);
CurvePoint outcome_curve_bounds(const CrossFit& cf, const MsmModel& model, const DeltaSpec& spec, double a0);

// Coordinate version: beta_dr[coord] +- delta E_n|e'Q^{-1} b(A)|.
Interval outcome_beta_bounds_linear(const CrossFit& cf, const MsmModel& model, const DeltaSpec& spec,
                                    std::size_t coord);

// Parametric version: the doubly robust kernel shifted by +-delta.
ParametricBounds outcome_parametric_bounds(const CrossFit& cf, const MsmModel& model, const DeltaSpec& spec);

struct GridOptions {
  int resolution = 11;              // nodes per axis
  bool feasibility_filter = false;  // drop nodes outside the exact confounding set
};

struct GridBounds {
  Interval bounds;
  std::size_t nodes = 0;     // nodes solved
  std::size_t skipped = 0;   // outside the confounding set
  std::size_t failed = 0;    // solver did not converge
  std::vector<std::string> warnings;
};

// Nonlinear models: solve E_n[h (mu_hat - g(A; beta)) W] = t over a grid on
// the bounding box of the attainable t (axis extremes +-delta E_n|h_l(A)|)
// and report the range of beta[coord]. At most four coefficients.
GridBounds outcome_nonlinear_grid_bounds(const CrossFit& cf, const MsmModel& model, const DeltaSpec& spec,
                                         std::size_t coord, const GridOptions& options = {});

// Whether t = E_n[h(A) xi] for some |xi_i| <= delta.
bool in_confounding_set(const Eigen::MatrixXd& h, const Eigen::VectorXd& t, double delta);

}  // namespace msmsens

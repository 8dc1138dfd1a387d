#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "msmsens/msm.hpp"
#include "msmsens/nuisance.hpp"
#include "msmsens/quantile.hpp"
#include "msmsens/sensitivity.hpp"

namespace msmsens {

// F1: weights enter both sides of the estimating equation,
//     E_n[h W v (Y - g(A; b))] = 0.
// F2: weights multiply the outcome only, E_n[h W (Y v - g(A; b))] = 0.
enum class Functional { F1, F2 };
// V_large: box with marginal mean one. V_small: box with conditional mean one
// given (A, X).
enum class Constraint { Large, Small };

// d_i = e'{E_n[h W v grad g']}^{-1} h(A_i) W_i (Y_i - g(A_i; beta))
Eigen::VectorXd derivative_F1(const MsmModel& model, const MsmSample& sample, const Eigen::VectorXd& beta,
                              const Eigen::VectorXd& v, std::size_t coord);
// d_i = e'{E_n[h W grad g']}^{-1} h(A_i) W_i Y_i
Eigen::VectorXd derivative_F2(const MsmModel& model, const MsmSample& sample, const Eigen::VectorXd& beta,
                              std::size_t coord);

// Per-gamma conditional quantiles of Y at each unit, used to build V_small
// weights. When `cells` is non-empty (one label per unit, equal labels for
// units with identical (A, X)) the weights are completed inside each cell so
// that their cell mean is exactly one, and `quantiles` is not used.
struct ConditionalThresholds {
  std::function<std::pair<Eigen::VectorXd, Eigen::VectorXd>(double gamma)> quantiles;
  std::vector<std::size_t> cells;
};

ConditionalThresholds thresholds_from(const CrossFit& cf);
// Labels units by their exact (A, X) value.
std::vector<std::size_t> covariate_cells(const Dataset& data);

struct HomotopyOptions {
  Functional functional = Functional::F1;
  Constraint constraint = Constraint::Large;
  std::size_t coord = 0;
  // Threshold-and-refit passes per grid point; passes stop early once the
  // weights stop changing. 1 is a single sweep.
  int inner_iterations = 1;
  // Carry the previous grid point's weights forward when they score better;
  // they remain feasible because the boxes are nested.
  bool keep_best = true;
  // Box [lo, hi] at gamma; defaults to [1/gamma, gamma].
  std::function<std::pair<double, double>(double gamma)> box;
  ConditionalThresholds thresholds;  // Constraint::Small only
  bool record_weights = false;
};

struct HomotopyTrace {
  std::vector<double> grid;
  std::vector<double> lower, upper;
  std::vector<bool> valid_lower, valid_upper;
  double point = 0.0;
  Eigen::VectorXd beta_hat;
  std::vector<Eigen::VectorXd> beta_lower, beta_upper;
  std::vector<Eigen::VectorXd> v_lower, v_upper;  // filled when record_weights

  BoundCurve curve() const;
};

// Traces the coordinate bounds over an ascending gamma grid by alternating the
// threshold rule on the derivative with a refit, warm-started along the grid.
HomotopyTrace homotopy_bounds(const MsmModel& model, const MsmSample& sample, const std::vector<double>& gammas,
                              const HomotopyOptions& options = {});

struct AscentOptions {
  std::size_t coord = 0;
  std::size_t orderings = 4;
  std::uint64_t seed = 1;
  int max_passes = 50;
  // Called after every accepted flip with the weights and the rank-one
  // updated coefficients.
  std::function<void(const Eigen::VectorXd& v, const Eigen::VectorXd& beta)> on_accept;
};

// Greedy coordinate flips v_i in {1/gamma, gamma} (box constraint only) for
// linear models, with Sherman-Morrison updates of the weighted normal
// equations. Best of several coordinate orderings, warm-started along the grid.
HomotopyTrace coordinate_ascent_bounds(const MsmModel& model, const MsmSample& sample,
                                       const std::vector<double>& gammas, const AscentOptions& options = {});

}  // namespace msmsens

#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "msmsens/homotopy.hpp"
#include "msmsens/msm.hpp"
#include "msmsens/nuisance.hpp"
#include "msmsens/propensity_bounds.hpp"
#include "msmsens/sensitivity.hpp"

namespace msmsens {

// Rank-based selection of the confounded share: for Sense::Lower the
// ceil(n eps) smallest values, for Sense::Upper the n - ceil(n (1 - eps))
// largest, ties broken by index. Matches 1{r <= t_eps} and 1{r > t_(1-eps)}
// with type-1 thresholds when values are distinct.
std::vector<char> subset_selection(const Eigen::VectorXd& r, double epsilon, Sense side);

// Bounds on E[Y(a0)] when only a fraction epsilon of units is confounded:
// E_n mu(a0, X) + E_n[lambda_j r_j(a0, X)], r_j = kappa_j - mu.
Interval subset_theta_bounds(const CrossFit& cf, const BoundNuisance& nu, const EpsilonSpec& spec, double a0);

// Parametric bounds from the kernel
// f_mu + lambda(A1, X1) f_delta(Z1) + lambda(A1, X2) f_r(Z1, Z2),
// which reduces to the doubly robust kernel at epsilon = 0 and to the full
// propensity kernel at epsilon = 1.
ParametricBounds subset_parametric_bounds(const CrossFit& cf, const MsmModel& model, const BoundNuisance& nu,
                                          const EpsilonSpec& spec);

// E_n min/max{e'M^{-1}b(A_i) theta_u(A_i), e'M^{-1}b(A_i) theta_l(A_i)},
// M = E_n[b b'].
Interval subset_linear_beta_bounds(const CrossFit& cf, const MsmModel& model, const BoundNuisance& nu,
                                   const EpsilonSpec& spec, std::size_t coord);

// Box for v' = (1 - eps) + eps v with v in [1/gamma, gamma].
std::pair<double, double> subset_effective_box(double gamma, double epsilon);

// Reruns the weight-based coordinate bounds with the reparameterized box, for
// confounding independent of the subset indicator.
HomotopyTrace subset_independent_remark_bounds(const MsmModel& model, const MsmSample& sample,
                                               const std::vector<double>& gammas, const EpsilonSpec& spec,
                                               HomotopyOptions options = {});

// Outcome sensitivity restricted to a fraction epsilon:
// beta* = Omega^{-1} E_n[b ((1-eps) Y + eps mu) W], Omega = E_n[b b' W],
// half-width eps delta E_n|r b(A)| with r the coord row of Omega^{-1}.
Interval subset_outcome_beta_bounds(const CrossFit& cf, const MsmModel& model, const EpsilonSpec& eps,
                                    const DeltaSpec& delta, std::size_t coord);

}  // namespace msmsens

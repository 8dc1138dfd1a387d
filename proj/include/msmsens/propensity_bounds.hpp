#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "msmsens/msm.hpp"
#include "msmsens/nuisance.hpp"
#include "msmsens/quantile.hpp"
#include "msmsens/sensitivity.hpp"

namespace msmsens {

// Conditional quantile pieces at one gamma: per-unit out-of-fold quantiles
// q_l, q_u of Y given (A, X) at levels 1/(1+gamma), gamma/(1+gamma) and the
// transformed outcomes s_j = q_j + (Y - q_j) c_j^sgn(Y - q_j).
struct QuantilePieces {
  double gamma = 1.0;
  Eigen::VectorXd q_lower, q_upper;
  Eigen::VectorXd s_lower, s_upper;
  std::vector<QuantileFit> fits;  // one per fold
};

QuantilePieces quantile_pieces(const CrossFit& cf, const GammaSpec& spec);

// Quantile pieces plus the fold-wise regressions kappa_j(a, x) of s_j on
// (a, x), fitted with the outcome recipe on each training set.
struct BoundNuisance : QuantilePieces {
  std::vector<OutcomeFit> kappa_lower, kappa_upper;  // one per fold
  std::vector<std::size_t> fold_of;

  double kappa(Sense side, std::size_t i, double a, const Eigen::Ref<const Eigen::VectorXd>& x) const;
};

BoundNuisance bound_nuisance(const CrossFit& cf, const GammaSpec& spec);

// Transformed outcome s(y; q) for one side.
double s_transform(double y, double q, double c);

// Pointwise conditional-mean bounds (m_l, m_u) at (a, x), averaged over the
// fold bundles. Collapses to the outcome regression at gamma = 1.
std::pair<double, double> conditional_bounds_m(const CrossFit& cf, const BoundNuisance& nu, double a,
                                               const Eigen::Ref<const Eigen::VectorXd>& x);
std::pair<double, double> conditional_bounds_m(const CrossFit& cf, const GammaSpec& spec, double a,
                                               const Eigen::Ref<const Eigen::VectorXd>& x);

// Pair kernel of the form phi(i, j) = alpha_i + K(i, j); K(i, j) evaluates a
// regression of unit i's bundle at (A_i, X_j).
struct PseudoKernel {
  Eigen::VectorXd alpha;
  Eigen::MatrixXd cross;

  std::size_t size() const { return static_cast<std::size_t>(alpha.size()); }
  double operator()(std::size_t i, std::size_t j) const {
    return alpha[static_cast<Eigen::Index>(i)] + cross(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  // phi_bar_i = (n-1)^{-1} sum_{j != i} phi(i, j)
  Eigen::VectorXd row_means() const;
};

// W (s_j - kappa_j(A1, X1)) + kappa_j(A1, X2)
PseudoKernel phi_kernel(const CrossFit& cf, const BoundNuisance& nu, Sense side);
// Doubly robust kernel W (Y - mu(A1, X1)) + mu(A1, X2).
PseudoKernel dr_kernel(const CrossFit& cf);

// Solves U_n[h(A1) {phi(Z1, Z2) - g(A1; beta)}] = 0 with covariance
// 4 var(Psi^{-1} h(A1){phi - g} projected). `shift` is added to phi.
BetaEstimate fit_pseudo_msm(const MsmModel& model, const Eigen::MatrixXd& treatments, const PseudoKernel& phi,
                            double shift = 0.0);

// No-confounding doubly robust MSM fit.
BetaEstimate fit_dr_msm(const CrossFit& cf, const MsmModel& model);

struct ParametricBounds {
  BetaEstimate lower;
  BetaEstimate upper;
};

// Parametric bound curves g(a; beta_l), g(a; beta_u) for the lower and upper
// conditional-mean bounds.
ParametricBounds fit_gbounds_parametric(const CrossFit& cf, const MsmModel& model, const GammaSpec& spec);
ParametricBounds fit_gbounds_parametric(const CrossFit& cf, const MsmModel& model, const BoundNuisance& nu);

struct CurvePoint {
  double lower = 0.0;
  double upper = 0.0;
  // Asymptotic variances of sqrt(n) times each bound.
  double var_lower = 0.0;
  double var_upper = 0.0;
};

// Sharp bounds on the projection b(a0)'beta of the dose-response curve onto
// a linear basis: units with b(a0)'Q^{-1}b(A) >= 0 use the kernel of the
// matching side, the rest the opposite one.
CurvePoint linear_curve_bounds(const CrossFit& cf, const MsmModel& model, const BoundNuisance& nu, double a0);
CurvePoint linear_curve_bounds(const CrossFit& cf, const MsmModel& model, const GammaSpec& spec, double a0);
// Same at several points, sharing the kernels.
std::vector<CurvePoint> linear_curve_bounds(const CrossFit& cf, const MsmModel& model, const BoundNuisance& nu,
                                            const std::vector<double>& a0);

// Coordinate bounds over V_small for linear models (conditional mean-one
// constraint), evaluated as E_n[f v] with f = Y W e'M^{-1} b(A).
Interval lemma5_beta1_bounds(const CrossFit& cf, const MsmModel& model, const QuantilePieces& q, std::size_t coord);
Interval lemma5_beta1_bounds(const CrossFit& cf, const MsmModel& model, const GammaSpec& spec, std::size_t coord);

struct BoxMeanBounds {
  Interval bounds;
  Eigen::VectorXd v_lower, v_upper;
  Eigen::VectorXd f;
};

// Closed-form coordinate bounds for the weight-only functional over V_large
// (box plus marginal mean one), linear models only.
BoxMeanBounds lemma6_F2_bounds(const MsmModel& model, const MsmSample& sample, const GammaSpec& spec,
                               std::size_t coord);

// First-order bounds beta_coord +- log(gamma) E_n|d_i|, d from the weighted
// estimating equation at v = 1.
BoundCurve local_bounds(const MsmModel& model, const MsmSample& sample, const std::vector<double>& gammas,
                        std::size_t coord);

}  // namespace msmsens

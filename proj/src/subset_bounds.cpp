#include "msmsens/subset_bounds.hpp"

#include <algorithm>
#include <cmath>

#include "msmsens/error.hpp"

namespace msmsens {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

std::size_t ceil_count(std::size_t n, double p) {
  const double x = static_cast<double>(n) * p;
  const double c = std::ceil(x - 1e-9 * std::max(1.0, x));
  return static_cast<std::size_t>(std::clamp(c, 0.0, static_cast<double>(n)));
}

MatrixXd basis_matrix(const MsmModel& model, const VectorXd& a) {
  if (!model.is_linear()) fail(ErrorKind::UsageError, "this bound needs a linear model");
  MatrixXd B(a.size(), static_cast<Index>(model.dim()));
  for (Index i = 0; i < a.size(); ++i) B.row(i) = model.basis(a[i]).transpose();
  return B;
}

MatrixXd checked_inverse(const MatrixXd& M) {
  Eigen::ColPivHouseholderQR<MatrixXd> qr(M);
  if (qr.rank() < M.rows()) fail(ErrorKind::SingularMoment, "moment matrix is rank deficient");
  return qr.inverse();
}

// theta_l, theta_u at a0 with each X_l evaluated through its own bundle.
Interval theta_at(const CrossFit& cf, const BoundNuisance& nu, double eps, double a0) {
  const Dataset& data = cf.data();
  const Index n = static_cast<Index>(data.size());
  VectorXd mu(n), rl(n), ru(n);
  for (Index l = 0; l < n; ++l) {
    const auto ll = static_cast<std::size_t>(l);
    const VectorXd x = data.x().row(l).transpose();
    mu[l] = cf.mu(ll, a0, x);
    rl[l] = nu.kappa(Sense::Lower, ll, a0, x) - mu[l];
    ru[l] = nu.kappa(Sense::Upper, ll, a0, x) - mu[l];
  }
  const auto sl = subset_selection(rl, eps, Sense::Lower);
  const auto su = subset_selection(ru, eps, Sense::Upper);
  double lo = 0.0, hi = 0.0;
  for (Index l = 0; l < n; ++l) {
    lo += sl[static_cast<std::size_t>(l)] ? rl[l] : 0.0;
    hi += su[static_cast<std::size_t>(l)] ? ru[l] : 0.0;
  }
  const double base = mu.mean();
  return {base + lo / static_cast<double>(n), base + hi / static_cast<double>(n)};
}

}  // namespace

std::vector<char> subset_selection(const VectorXd& r, double epsilon, Sense side) {
  const auto n = static_cast<std::size_t>(r.size());
  const std::size_t m = side == Sense::Lower ? ceil_count(n, epsilon) : n - ceil_count(n, 1.0 - epsilon);
  const auto order = order_by_value(r);
  std::vector<char> out(n, 0);
  if (side == Sense::Lower) {
    for (std::size_t k = 0; k < m; ++k) out[order[k]] = 1;
  } else {
    // largest values; among ties the lower index is taken first
    std::vector<std::size_t> desc(order.begin(), order.end());
    std::stable_sort(desc.begin(), desc.end(), [&](std::size_t a, std::size_t b) {
      return r[static_cast<Index>(a)] > r[static_cast<Index>(b)];
    });
    for (std::size_t k = 0; k < m; ++k) out[desc[k]] = 1;
  }
  return out;
}

Interval subset_theta_bounds(const CrossFit& cf, const BoundNuisance& nu, const EpsilonSpec& spec, double a0) {
  return theta_at(cf, nu, spec.epsilon, a0);
}

ParametricBounds subset_parametric_bounds(const CrossFit& cf, const MsmModel& model, const BoundNuisance& nu,
                                          const EpsilonSpec& spec) {
  const Dataset& data = cf.data();
  const Index n = static_cast<Index>(data.size());
  const PseudoKernel dr = dr_kernel(cf);
  const VectorXd& w = cf.weights();
  const VectorXd& muh = cf.mu_hat();
  ParametricBounds out;
  for (Sense side : {Sense::Lower, Sense::Upper}) {
    const PseudoKernel phi = phi_kernel(cf, nu, side);
    const VectorXd& s = side == Sense::Lower ? nu.s_lower : nu.s_upper;
    PseudoKernel f;
    f.alpha.resize(n);
    f.cross.resize(n, n);
    for (Index i = 0; i < n; ++i) {
      const VectorXd r = phi.cross.row(i).transpose() - dr.cross.row(i).transpose();
      const auto lambda = subset_selection(r, spec.epsilon, side);
      const double kappa_ii = phi.cross(i, i);
      const double f_delta = w[i] * ((s[i] - kappa_ii) - data.y()[i] + muh[i]);
      f.alpha[i] = dr.alpha[i] + (lambda[static_cast<std::size_t>(i)] ? f_delta : 0.0);
      for (Index l = 0; l < n; ++l)
        f.cross(i, l) = dr.cross(i, l) + (lambda[static_cast<std::size_t>(l)] ? r[l] : 0.0);
    }
    (side == Sense::Lower ? out.lower : out.upper) = fit_pseudo_msm(model, MatrixXd(data.a()), f);
  }
  return out;
}

Interval subset_linear_beta_bounds(const CrossFit& cf, const MsmModel& model, const BoundNuisance& nu,
                                   const EpsilonSpec& spec, std::size_t coord) {
  if (coord >= model.dim()) fail(ErrorKind::UsageError, "coordinate out of range");
  const VectorXd& a = cf.data().a();
  const MatrixXd B = basis_matrix(model, a);
  const Index n = B.rows();
  const MatrixXd Minv = checked_inverse(B.transpose() * B / static_cast<double>(n));
  const VectorXd c = B * Minv.row(static_cast<Index>(coord)).transpose();
  Interval out{0.0, 0.0};
  for (Index i = 0; i < n; ++i) {
    const Interval th = theta_at(cf, nu, spec.epsilon, a[i]);
    const double u = c[i] * th.upper, l = c[i] * th.lower;
    out.lower += std::min(u, l);
    out.upper += std::max(u, l);
  }
  out.lower /= static_cast<double>(n);
  out.upper /= static_cast<double>(n);
  return out;
}

std::pair<double, double> subset_effective_box(double gamma, double epsilon) {
  return {(1.0 - epsilon) + epsilon / gamma, (1.0 - epsilon) + epsilon * gamma};
}

HomotopyTrace subset_independent_remark_bounds(const MsmModel& model, const MsmSample& sample,
                                               const std::vector<double>& gammas, const EpsilonSpec& spec,
                                               HomotopyOptions options) {
  if (options.constraint != Constraint::Large)
    fail(ErrorKind::UsageError, "the reparameterized box applies to marginal constraints only");
  const double eps = spec.epsilon;
  options.box = [eps](double g) { return subset_effective_box(g, eps); };
  return homotopy_bounds(model, sample, gammas, options);
}

Interval subset_outcome_beta_bounds(const CrossFit& cf, const MsmModel& model, const EpsilonSpec& eps,
                                    const DeltaSpec& delta, std::size_t coord) {
  if (coord >= model.dim()) fail(ErrorKind::UsageError, "coordinate out of range");
  const Dataset& data = cf.data();
  const MatrixXd B = basis_matrix(model, data.a());
  const Index n = B.rows();
  const VectorXd& w = cf.weights();
  const MatrixXd Oinv = checked_inverse(B.transpose() * w.asDiagonal() * B / static_cast<double>(n));
  const VectorXd target = (1.0 - eps.epsilon) * data.y() + eps.epsilon * cf.mu_hat();
  const VectorXd beta = Oinv * (B.transpose() * w.cwiseProduct(target)) / static_cast<double>(n);
  const VectorXd f = B * Oinv.row(static_cast<Index>(coord)).transpose();
  const double half = eps.epsilon * delta.delta * f.cwiseAbs().mean();
  const double center = beta[static_cast<Index>(coord)];
  return {center - half, center + half};
}

}  // namespace msmsens

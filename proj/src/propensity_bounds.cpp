#include "msmsens/propensity_bounds.hpp"

#include <cmath>

#include "msmsens/error.hpp"
#include "msmsens/homotopy.hpp"

namespace msmsens {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd basis_matrix(const MsmModel& model, const MatrixXd& treatments) {
  if (!model.is_linear()) fail(ErrorKind::UsageError, "this bound needs a linear model");
  const Index n = treatments.rows(), k = static_cast<Index>(model.dim());
  MatrixXd B(n, k);
  for (Index i = 0; i < n; ++i) B.row(i) = model.basis(TreatmentRef(treatments.row(i).transpose())).transpose();
  return B;
}

MatrixXd checked_inverse(const MatrixXd& M, const char* what) {
  Eigen::ColPivHouseholderQR<MatrixXd> qr(M);
  if (qr.rank() < M.rows()) fail(ErrorKind::SingularMoment, std::string(what) + " is rank deficient");
  return qr.inverse();
}

VectorXd unit_x(const Dataset& d, Index i) { return d.x().row(i).transpose(); }

}  // namespace

double s_transform(double y, double q, double c) {
  const double r = y - q;
  if (r > 0.0) return q + r * c;
  if (r < 0.0) return q + r / c;
  return q;
}

QuantilePieces quantile_pieces(const CrossFit& cf, const GammaSpec& spec) {
  const Dataset& data = cf.data();
  const Index n = static_cast<Index>(data.size());
  QuantilePieces out;
  out.gamma = spec.gamma;
  const std::vector<double> taus =
      spec.gamma == 1.0 ? std::vector<double>{0.5} : std::vector<double>{spec.tau_lower(), spec.tau_upper()};
  for (std::size_t f = 0; f < cf.fold_count(); ++f) {
    const Dataset sub = data.subset(cf.training(f));
    out.fits.push_back(fit_quantile(sub, taus, cf.recipes().quantile));
  }
  out.q_lower.resize(n);
  out.q_upper.resize(n);
  out.s_lower.resize(n);
  out.s_upper.resize(n);
  for (Index i = 0; i < n; ++i) {
    const auto& fit = out.fits[cf.fold_of(static_cast<std::size_t>(i))];
    const VectorXd x = unit_x(data, i);
    out.q_lower[i] = fit(spec.gamma == 1.0 ? 0.5 : spec.tau_lower(), data.a()[i], x);
    out.q_upper[i] = fit(spec.gamma == 1.0 ? 0.5 : spec.tau_upper(), data.a()[i], x);
    out.s_lower[i] = s_transform(data.y()[i], out.q_lower[i], spec.c_lower());
    out.s_upper[i] = s_transform(data.y()[i], out.q_upper[i], spec.c_upper());
  }
  return out;
}

BoundNuisance bound_nuisance(const CrossFit& cf, const GammaSpec& spec) {
  BoundNuisance nu;
  static_cast<QuantilePieces&>(nu) = quantile_pieces(cf, spec);
  const Dataset& data = cf.data();
  const double tl = spec.gamma == 1.0 ? 0.5 : spec.tau_lower();
  const double tu = spec.gamma == 1.0 ? 0.5 : spec.tau_upper();
  for (std::size_t f = 0; f < cf.fold_count(); ++f) {
    const auto& train = cf.training(f);
    const Dataset sub = data.subset(train);
    const Index m = static_cast<Index>(sub.size());
    VectorXd sl(m), su(m);
    for (Index r = 0; r < m; ++r) {
      const VectorXd x = unit_x(sub, r);
      sl[r] = s_transform(sub.y()[r], nu.fits[f](tl, sub.a()[r], x), spec.c_lower());
      su[r] = s_transform(sub.y()[r], nu.fits[f](tu, sub.a()[r], x), spec.c_upper());
    }
    nu.kappa_lower.push_back(fit_regression(sub.x(), sub.a(), sl, cf.recipes().outcome));
    nu.kappa_upper.push_back(fit_regression(sub.x(), sub.a(), su, cf.recipes().outcome));
  }
  nu.fold_of = cf.folds().fold_of;
  return nu;
}

double BoundNuisance::kappa(Sense side, std::size_t i, double a, const Eigen::Ref<const VectorXd>& x) const {
  const auto f = fold_of[i];
  return side == Sense::Lower ? kappa_lower[f](a, x) : kappa_upper[f](a, x);
}

std::pair<double, double> conditional_bounds_m(const CrossFit& cf, const BoundNuisance& nu, double a,
                                               const Eigen::Ref<const VectorXd>& x) {
  double lo = 0.0, hi = 0.0;
  const double k = static_cast<double>(cf.fold_count());
  for (std::size_t f = 0; f < cf.fold_count(); ++f) {
    lo += nu.kappa_lower[f](a, x) / k;
    hi += nu.kappa_upper[f](a, x) / k;
  }
  return {std::min(lo, hi), std::max(lo, hi)};
}

std::pair<double, double> conditional_bounds_m(const CrossFit& cf, const GammaSpec& spec, double a,
                                               const Eigen::Ref<const VectorXd>& x) {
  return conditional_bounds_m(cf, bound_nuisance(cf, spec), a, x);
}

VectorXd PseudoKernel::row_means() const {
  const Index n = alpha.size();
  VectorXd out(n);
  for (Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (Index j = 0; j < n; ++j)
      if (j != i) s += cross(i, j);
    out[i] = alpha[i] + s / static_cast<double>(n - 1);
  }
  return out;
}

PseudoKernel phi_kernel(const CrossFit& cf, const BoundNuisance& nu, Sense side) {
  const Dataset& data = cf.data();
  const Index n = static_cast<Index>(data.size());
  const VectorXd& s = side == Sense::Lower ? nu.s_lower : nu.s_upper;
  PseudoKernel k;
  k.alpha.resize(n);
  k.cross.resize(n, n);
  std::vector<VectorXd> xs;
  for (Index j = 0; j < n; ++j) xs.push_back(unit_x(data, j));
  for (Index i = 0; i < n; ++i) {
    const auto ii = static_cast<std::size_t>(i);
    const double ai = data.a()[i];
    k.alpha[i] = cf.weights()[i] * (s[i] - nu.kappa(side, ii, ai, xs[ii]));
    for (Index j = 0; j < n; ++j) k.cross(i, j) = nu.kappa(side, ii, ai, xs[static_cast<std::size_t>(j)]);
  }
  return k;
}

PseudoKernel dr_kernel(const CrossFit& cf) {
  const Dataset& data = cf.data();
  const Index n = static_cast<Index>(data.size());
  PseudoKernel k;
  k.alpha.resize(n);
  k.cross.resize(n, n);
  std::vector<VectorXd> xs;
  for (Index j = 0; j < n; ++j) xs.push_back(unit_x(data, j));
  for (Index i = 0; i < n; ++i) {
    const auto ii = static_cast<std::size_t>(i);
    k.alpha[i] = cf.weights()[i] * (data.y()[i] - cf.mu_hat()[i]);
    for (Index j = 0; j < n; ++j) k.cross(i, j) = cf.mu(ii, data.a()[i], xs[static_cast<std::size_t>(j)]);
  }
  return k;
}

BetaEstimate fit_pseudo_msm(const MsmModel& model, const MatrixXd& treatments, const PseudoKernel& phi,
                            double shift) {
  const Index n = treatments.rows(), k = static_cast<Index>(model.dim());
  const VectorXd pseudo = (phi.row_means().array() + shift).matrix();
  const MsmSample sample(treatments, pseudo, VectorXd::Ones(n));
  BetaEstimate est;
  est.beta = solve_msm(model, sample);
  est.n = static_cast<std::size_t>(n);

  MatrixXd D = MatrixXd::Zero(k, k);
  MatrixXd H(k, n);
  VectorXd g(n);
  for (Index i = 0; i < n; ++i) {
    const VectorXd a = treatments.row(i).transpose();
    const VectorXd h = model.h(a);
    D.noalias() += h * model.grad(a, est.beta).transpose();
    H.col(i) = h;
    g[i] = model.g(a, est.beta);
  }
  D /= static_cast<double>(n);
  const MatrixXd U = checked_inverse(D, "derivative matrix") * H;  // columns Psi^{-1} h_i
  PairKernel kernel{static_cast<std::size_t>(n), static_cast<std::size_t>(k),
                    [&](std::size_t i, std::size_t j, double* out) {
                      const Index ii = static_cast<Index>(i);
                      const double r = phi(i, j) + shift - g[ii];
                      for (Index c = 0; c < k; ++c) out[c] = U(c, ii) * r;
                    }};
  est.covariance = 4.0 * u_projection_variance(kernel);
  return est;
}

BetaEstimate fit_dr_msm(const CrossFit& cf, const MsmModel& model) {
  return fit_pseudo_msm(model, MatrixXd(cf.data().a()), dr_kernel(cf));
}

ParametricBounds fit_gbounds_parametric(const CrossFit& cf, const MsmModel& model, const BoundNuisance& nu) {
  const MatrixXd A = cf.data().a();
  return {fit_pseudo_msm(model, A, phi_kernel(cf, nu, Sense::Lower)),
          fit_pseudo_msm(model, A, phi_kernel(cf, nu, Sense::Upper))};
}

ParametricBounds fit_gbounds_parametric(const CrossFit& cf, const MsmModel& model, const GammaSpec& spec) {
  return fit_gbounds_parametric(cf, model, bound_nuisance(cf, spec));
}

std::vector<CurvePoint> linear_curve_bounds(const CrossFit& cf, const MsmModel& model, const BoundNuisance& nu,
                                            const std::vector<double>& a0s) {
  const MatrixXd A = cf.data().a();
  const MatrixXd B = basis_matrix(model, A);
  const Index n = B.rows();
  const MatrixXd Qinv = checked_inverse(B.transpose() * B / static_cast<double>(n), "basis Gram matrix");
  const PseudoKernel lo = phi_kernel(cf, nu, Sense::Lower);
  const PseudoKernel hi = phi_kernel(cf, nu, Sense::Upper);
  const VectorXd lo_bar = lo.row_means(), hi_bar = hi.row_means();

  std::vector<CurvePoint> out;
  for (double a0 : a0s) {
    const VectorXd c = B * (Qinv * model.basis(a0));
    CurvePoint pt;
    for (int side = 0; side < 2; ++side) {
      // upper: matching side where c >= 0; lower: opposite side there
      const bool upper = side == 1;
      VectorXd fbar(n);
      for (Index i = 0; i < n; ++i) {
        const bool use_hi = (c[i] >= 0.0) == upper;
        fbar[i] = use_hi ? hi_bar[i] : lo_bar[i];
      }
      const VectorXd beta = Qinv * (B.transpose() * fbar) / static_cast<double>(n);
      const VectorXd fitted = B * beta;
      MatrixXd V(n, n);
      for (Index i = 0; i < n; ++i) {
        const bool use_hi = (c[i] >= 0.0) == upper;
        const PseudoKernel& K = use_hi ? hi : lo;
        for (Index j = 0; j < n; ++j)
          V(i, j) = c[i] * (K(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) - fitted[i]);
      }
      const double value = model.basis(a0).dot(beta);
      const double var = 4.0 * u_projection_variance(matrix_kernel(V))(0, 0);
      if (upper) {
        pt.upper = value;
        pt.var_upper = var;
      } else {
        pt.lower = value;
        pt.var_lower = var;
      }
    }
    out.push_back(pt);
  }
  return out;
}

CurvePoint linear_curve_bounds(const CrossFit& cf, const MsmModel& model, const BoundNuisance& nu, double a0) {
  return linear_curve_bounds(cf, model, nu, std::vector<double>{a0}).front();
}

CurvePoint linear_curve_bounds(const CrossFit& cf, const MsmModel& model, const GammaSpec& spec, double a0) {
  return linear_curve_bounds(cf, model, bound_nuisance(cf, spec), a0);
}

Interval lemma5_beta1_bounds(const CrossFit& cf, const MsmModel& model, const QuantilePieces& q, std::size_t coord) {
  const MatrixXd B = basis_matrix(model, MatrixXd(cf.data().a()));
  const Index n = B.rows();
  const VectorXd& w = cf.weights();
  const MatrixXd M = B.transpose() * w.asDiagonal() * B / static_cast<double>(n);
  const VectorXd row = checked_inverse(M, "weighted Gram matrix").row(static_cast<Index>(coord)).transpose();
  Interval out{0.0, 0.0};
  for (Index i = 0; i < n; ++i) {
    const double T = w[i] * row.dot(B.row(i).transpose());
    out.upper += T * (T >= 0.0 ? q.s_upper[i] : q.s_lower[i]);
    out.lower += T * (T >= 0.0 ? q.s_lower[i] : q.s_upper[i]);
  }
  out.upper /= static_cast<double>(n);
  out.lower /= static_cast<double>(n);
  return out;
}

Interval lemma5_beta1_bounds(const CrossFit& cf, const MsmModel& model, const GammaSpec& spec, std::size_t coord) {
  return lemma5_beta1_bounds(cf, model, quantile_pieces(cf, spec), coord);
}

BoxMeanBounds lemma6_F2_bounds(const MsmModel& model, const MsmSample& sample, const GammaSpec& spec,
                               std::size_t coord) {
  const MatrixXd B = basis_matrix(model, sample.treatments);
  const Index n = B.rows();
  const VectorXd& w = sample.weights;
  const MatrixXd M = B.transpose() * w.asDiagonal() * B / static_cast<double>(n);
  const VectorXd row = checked_inverse(M, "weighted Gram matrix").row(static_cast<Index>(coord)).transpose();
  BoxMeanBounds out;
  out.f = (B * row).cwiseProduct(w).cwiseProduct(sample.y);
  const double lo = 1.0 / spec.gamma, hi = spec.gamma;
  out.v_upper = box_threshold_weights(out.f, lo, hi, Sense::Upper);
  out.v_lower = box_threshold_weights(out.f, lo, hi, Sense::Lower);
  out.bounds.upper = out.f.dot(out.v_upper) / static_cast<double>(n);
  out.bounds.lower = out.f.dot(out.v_lower) / static_cast<double>(n);
  return out;
}

BoundCurve local_bounds(const MsmModel& model, const MsmSample& sample, const std::vector<double>& gammas,
                        std::size_t coord) {
  const VectorXd beta = solve_msm(model, sample);
  const VectorXd d = derivative_F1(model, sample, beta, VectorXd::Ones(static_cast<Index>(sample.size())), coord);
  const double spread = d.cwiseAbs().mean();
  const double center = beta[static_cast<Index>(coord)];
  BoundCurve out;
  out.parameter = "gamma";
  for (double g : gammas) {
    GammaSpec spec(g);
    out.push(g, center - std::log(spec.gamma) * spread, center + std::log(spec.gamma) * spread);
  }
  return out;
}

}  // namespace msmsens

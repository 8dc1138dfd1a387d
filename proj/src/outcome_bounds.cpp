#include "msmsens/outcome_bounds.hpp"

#include <algorithm>
#include <cmath>

#include "msmsens/error.hpp"

namespace msmsens {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd basis_matrix(const MsmModel& model, const VectorXd& a) {
  if (!model.is_linear()) fail(ErrorKind::UsageError, "this bound needs a linear model");
  MatrixXd B(a.size(), static_cast<Index>(model.dim()));
  for (Index i = 0; i < a.size(); ++i) B.row(i) = model.basis(a[i]).transpose();
  return B;
}

MatrixXd gram_inverse(const MatrixXd& B) {
  Eigen::ColPivHouseholderQR<MatrixXd> qr(B.transpose() * B / static_cast<double>(B.rows()));
  if (qr.rank() < B.cols()) fail(ErrorKind::SingularMoment, "basis Gram matrix is rank deficient");
  return qr.inverse();
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

std::vector<CurvePoint> outcome_curve_bounds(const CrossFit& cf, const MsmModel& model, const DeltaSpec& spec,
                                             const std::vector<double>& a0s) {
  const MatrixXd B = basis_matrix(model, cf.data().a());
  const Index n = B.rows();
  const MatrixXd Qinv = gram_inverse(B);
  const PseudoKernel phi = dr_kernel(cf);
  const VectorXd phi_bar = phi.row_means();

  std::vector<CurvePoint> out;
  for (double a0 : a0s) {
    const VectorXd b0 = model.basis(a0);
    const VectorXd c = B * (Qinv * b0);
    CurvePoint pt;
    for (double side : {-1.0, 1.0}) {
      VectorXd shift(n);
      for (Index i = 0; i < n; ++i) shift[i] = side * spec.delta * sign(c[i]);
      const VectorXd beta = Qinv * (B.transpose() * (phi_bar + shift)) / static_cast<double>(n);
      const VectorXd fitted = B * beta;
      MatrixXd V(n, n);
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j)
          V(i, j) = c[i] * (phi(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) + shift[i] - fitted[i]);
      const double value = b0.dot(beta);
      const double var = 4.0 * u_projection_variance(matrix_kernel(V))(0, 0);
      if (side > 0) {
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

CurvePoint outcome_curve_bounds(const CrossFit& cf, const MsmModel& model, const DeltaSpec& spec, double a0) {
  return outcome_curve_bounds(cf, model, spec, std::vector<double>{a0}).front();
}

Interval outcome_beta_bounds_linear(const CrossFit& cf, const MsmModel& model, const DeltaSpec& spec,
                                    std::size_t coord) {
  if (coord >= model.dim()) fail(ErrorKind::UsageError, "coordinate out of range");
  const MatrixXd B = basis_matrix(model, cf.data().a());
  const Index n = B.rows();
  const MatrixXd Qinv = gram_inverse(B);
  const VectorXd beta = Qinv * (B.transpose() * dr_kernel(cf).row_means()) / static_cast<double>(n);
  const VectorXd c = B * Qinv.row(static_cast<Index>(coord)).transpose();
  const double half = spec.delta * c.cwiseAbs().mean();
  const double center = beta[static_cast<Index>(coord)];
  return {center - half, center + half};
}

ParametricBounds outcome_parametric_bounds(const CrossFit& cf, const MsmModel& model, const DeltaSpec& spec) {
  const MatrixXd A = cf.data().a();
  const PseudoKernel phi = dr_kernel(cf);
  return {fit_pseudo_msm(model, A, phi, -spec.delta), fit_pseudo_msm(model, A, phi, spec.delta)};
}

bool in_confounding_set(const MatrixXd& h, const VectorXd& t, double delta) {
  // Coordinate descent on ||E_n[h xi] - t||^2 over the box |xi_i| <= delta.
  const Index n = h.rows();
  const MatrixXd G = h / static_cast<double>(n);
  VectorXd xi = VectorXd::Zero(n);
  VectorXd r = -t;
  const double scale = 1.0 + delta * h.cwiseAbs().maxCoeff();
  const double tol = 1e-9 * scale;
  if (r.lpNorm<Eigen::Infinity>() <= tol) return true;
  VectorXd norms(n);
  for (Index i = 0; i < n; ++i) norms[i] = G.row(i).squaredNorm();
  double prev = r.squaredNorm();
  for (int sweep = 0; sweep < 2000; ++sweep) {
    for (Index i = 0; i < n; ++i) {
      if (norms[i] == 0.0) continue;
      const double target = std::clamp(xi[i] - G.row(i).dot(r) / norms[i], -delta, delta);
      const double step = target - xi[i];
      if (step != 0.0) {
        r += step * G.row(i).transpose();
        xi[i] = target;
      }
    }
    if (r.lpNorm<Eigen::Infinity>() <= tol) return true;
    const double cur = r.squaredNorm();
    if (prev - cur <= 1e-14 * prev) break;
    prev = cur;
  }
  return false;
}

GridBounds outcome_nonlinear_grid_bounds(const CrossFit& cf, const MsmModel& model, const DeltaSpec& spec,
                                         std::size_t coord, const GridOptions& options) {
  const Index k = static_cast<Index>(model.dim());
  if (k > 4) fail(ErrorKind::TooLarge, "grid bounds support at most four coefficients");
  if (coord >= model.dim()) fail(ErrorKind::UsageError, "coordinate out of range");
  if (options.resolution < 2) fail(ErrorKind::UsageError, "grid resolution must be at least 2");
  const Dataset& data = cf.data();
  const Index n = static_cast<Index>(data.size());
  const MsmSample sample(MatrixXd(data.a()), cf.mu_hat(), cf.weights());

  MatrixXd H(n, k);
  for (Index i = 0; i < n; ++i) H.row(i) = model.h(TreatmentRef(sample.treatments.row(i).transpose())).transpose();
  const VectorXd extent = spec.delta * H.cwiseAbs().colwise().mean().transpose();

  GridBounds out;
  const VectorXd center = solve_msm(model, sample);
  bool have = false;
  const int res = options.resolution;
  std::size_t total = 1;
  for (Index l = 0; l < k; ++l) total *= static_cast<std::size_t>(res);
  for (std::size_t node = 0; node < total; ++node) {
    VectorXd t(k);
    std::size_t rest = node;
    for (Index l = 0; l < k; ++l) {
      const auto step = static_cast<int>(rest % static_cast<std::size_t>(res));
      rest /= static_cast<std::size_t>(res);
      t[l] = extent[l] * (-1.0 + 2.0 * step / static_cast<double>(res - 1));
    }
    if (options.feasibility_filter && !in_confounding_set(H, t, spec.delta)) {
      ++out.skipped;
      continue;
    }
    try {
      SolveOptions so;
      so.start = center;
      const VectorXd beta = solve_msm(model, sample, {}, {}, t, so);
      const double val = beta[static_cast<Index>(coord)];
      if (!have) {
        out.bounds = {val, val};
        have = true;
      } else {
        out.bounds.lower = std::min(out.bounds.lower, val);
        out.bounds.upper = std::max(out.bounds.upper, val);
      }
      ++out.nodes;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NoConvergence && e.kind() != ErrorKind::SingularMoment) throw;
      ++out.failed;
      out.warnings.push_back("grid node " + std::to_string(node) + " skipped: " + e.what());
    }
  }
  if (!have) fail(ErrorKind::GridFailure, "no grid node could be solved");
  return out;
}

}  // namespace msmsens

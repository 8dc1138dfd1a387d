#include "msmsens/msm.hpp"

#include <cmath>
#include <memory>

#include "msmsens/error.hpp"

namespace msmsens {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace basis {

BasisTerm intercept() {
  return {"intercept", [](const TreatmentRef&) { return 1.0; }};
}

BasisTerm power(int p) {
  return {p == 1 ? "a" : "a^" + std::to_string(p),
          [p](const TreatmentRef& a) { return std::pow(a[a.size() - 1], p); }};
}

BasisTerm cumulative(std::size_t lag) {
  return {lag == 0 ? "cumulative" : "cumulative_lag" + std::to_string(lag), [lag](const TreatmentRef& a) {
            double s = 0.0;
            const Index upto = a.size() - static_cast<Index>(lag);
            for (Index t = 0; t < upto; ++t) s += a[t];
            return s;
          }};
}

BasisTerm indicator(double lo, double hi) {
  return {"1[" + format_number(lo) + "," + format_number(hi) + ")", [lo, hi](const TreatmentRef& a) {
            const double v = a[a.size() - 1];
            return (v >= lo && v < hi) ? 1.0 : 0.0;
          }};
}

BasisTerm custom(std::string name, std::function<double(const TreatmentRef&)> f) {
  return {std::move(name), std::move(f)};
}

std::vector<BasisTerm> polynomial(int degree) {
  std::vector<BasisTerm> out{intercept()};
  for (int p = 1; p <= degree; ++p) out.push_back(power(p));
  return out;
}

}  // namespace basis

namespace {

VectorXd eval_terms(const std::vector<BasisTerm>& terms, const TreatmentRef& a) {
  VectorXd b(static_cast<Index>(terms.size()));
  for (std::size_t k = 0; k < terms.size(); ++k) b[static_cast<Index>(k)] = terms[k].f(a);
  return b;
}

VectorXd or_ones(const VectorXd& v, Index n) { return v.size() ? v : VectorXd::Ones(n); }

}  // namespace

MsmModel MsmModel::linear(std::vector<BasisTerm> terms) {
  MsmModel m;
  m.linear_ = true;
  m.dim_ = terms.size();
  m.name_ = "linear";
  for (const auto& t : terms) m.coef_names_.push_back(t.name);
  m.terms_ = std::move(terms);
  return m;
}

MsmModel MsmModel::exp_linear(std::vector<BasisTerm> terms) {
  MsmModel m;
  m.linear_ = false;
  m.dim_ = terms.size();
  m.name_ = "exp-linear";
  for (const auto& t : terms) m.coef_names_.push_back(t.name);
  m.terms_ = terms;
  auto shared = std::make_shared<const std::vector<BasisTerm>>(std::move(terms));
  m.h_ = [shared](const TreatmentRef& a) { return eval_terms(*shared, a); };
  m.g_ = [shared](const TreatmentRef& a, const VectorXd& beta) {
    return std::exp(eval_terms(*shared, a).dot(beta));
  };
  m.grad_ = [shared](const TreatmentRef& a, const VectorXd& beta) -> VectorXd {
    const VectorXd b = eval_terms(*shared, a);
    return std::exp(b.dot(beta)) * b;
  };
  return m;
}

MsmModel MsmModel::generic(std::size_t dim, VecFn h, ValueFn g, GradFn grad, std::string name,
                           std::vector<std::string> coefficient_names) {
  MsmModel m;
  m.linear_ = false;
  m.dim_ = dim;
  m.name_ = std::move(name);
  if (coefficient_names.empty())
    for (std::size_t k = 0; k < dim; ++k) coefficient_names.push_back("beta" + std::to_string(k));
  m.coef_names_ = std::move(coefficient_names);
  m.h_ = std::move(h);
  m.g_ = std::move(g);
  m.grad_ = std::move(grad);
  return m;
}

VectorXd MsmModel::basis(const TreatmentRef& a) const {
  if (terms_.empty()) fail(ErrorKind::UsageError, "model '" + name_ + "' has no basis");
  return eval_terms(terms_, a);
}

VectorXd MsmModel::h(const TreatmentRef& a) const { return linear_ ? basis(a) : h_(a); }

double MsmModel::g(const TreatmentRef& a, const VectorXd& beta) const {
  return linear_ ? basis(a).dot(beta) : g_(a, beta);
}

VectorXd MsmModel::grad(const TreatmentRef& a, const VectorXd& beta) const {
  return linear_ ? basis(a) : grad_(a, beta);
}

VectorXd MsmModel::basis(double a) const {
  VectorXd t(1);
  t[0] = a;
  return basis(TreatmentRef(t));
}

double MsmModel::g(double a, const VectorXd& beta) const {
  VectorXd t(1);
  t[0] = a;
  return g(TreatmentRef(t), beta);
}

MsmSample::MsmSample(MatrixXd t, VectorXd yy, VectorXd w)
    : treatments(std::move(t)), y(std::move(yy)), weights(std::move(w)) {
  if (treatments.rows() != y.size() || weights.size() != y.size())
    fail(ErrorKind::UsageError, "sample columns have different lengths");
}

MsmSample::MsmSample(const Dataset& data, VectorXd w)
    : MsmSample(MatrixXd(data.a()), data.y(), std::move(w)) {}

VectorXd solve_msm(const MsmModel& model, const MsmSample& s, const VectorXd& v_in, const VectorXd& y_in,
                   const VectorXd& target_in, const SolveOptions& options) {
  const Index n = static_cast<Index>(s.size());
  const Index k = static_cast<Index>(model.dim());
  const VectorXd v = or_ones(v_in, n);
  const VectorXd& y = y_in.size() ? y_in : s.y;
  const VectorXd target = target_in.size() ? target_in : VectorXd::Zero(k);
  const double nd = static_cast<double>(n);

  if (model.is_linear()) {
    MatrixXd G = MatrixXd::Zero(k, k);
    VectorXd r = VectorXd::Zero(k);
    for (Index i = 0; i < n; ++i) {
      const VectorXd b = model.basis(TreatmentRef(s.treatments.row(i).transpose()));
      const double c = s.weights[i] * v[i];
      G.noalias() += c * b * b.transpose();
      r.noalias() += (c * y[i]) * b;
    }
    G /= nd;
    r /= nd;
    Eigen::ColPivHouseholderQR<MatrixXd> qr(G);
    if (qr.rank() < k) fail(ErrorKind::SingularMoment, "moment matrix is rank deficient");
    return qr.solve(r - target);
  }

  VectorXd beta = options.start ? *options.start : VectorXd::Zero(k);
  double scale = 1.0;
  for (Index i = 0; i < n; ++i)
    scale += std::abs(s.weights[i] * v[i] * y[i]) *
             model.h(TreatmentRef(s.treatments.row(i).transpose())).cwiseAbs().maxCoeff() / nd;

  auto residual = [&](const VectorXd& b, MatrixXd* jac) {
    VectorXd F = VectorXd::Zero(k);
    if (jac) jac->setZero(k, k);
    for (Index i = 0; i < n; ++i) {
      const VectorXd a = s.treatments.row(i).transpose();
      const VectorXd h = model.h(a);
      const double c = s.weights[i] * v[i];
      F.noalias() += (c * (y[i] - model.g(a, b))) * h;
      if (jac) jac->noalias() -= c * h * model.grad(a, b).transpose();
    }
    F /= nd;
    if (jac) *jac /= nd;
    return VectorXd(F - target);
  };

  MatrixXd J;
  VectorXd F = residual(beta, &J);
  double norm = F.lpNorm<Eigen::Infinity>();
  for (int iter = 0; iter < options.max_iterations && norm > 1e-13 * scale; ++iter) {
    Eigen::ColPivHouseholderQR<MatrixXd> qr(J);
    if (qr.rank() < k) fail(ErrorKind::SingularMoment, "Jacobian is rank deficient");
    const VectorXd step = qr.solve(-F);
    double t = 1.0;
    bool moved = false;
    for (int h = 0; h < 40; ++h, t *= 0.5) {
      const VectorXd cand = beta + t * step;
      MatrixXd Jc;
      const VectorXd Fc = residual(cand, &Jc);
      const double nc = Fc.lpNorm<Eigen::Infinity>();
      if (std::isfinite(nc) && nc < norm) {
        beta = cand;
        F = Fc;
        J = Jc;
        norm = nc;
        moved = true;
        break;
      }
    }
    if (!moved) break;
  }
  if (!(norm <= options.tolerance * scale))
    fail(ErrorKind::NoConvergence, "Newton iterations stopped at residual " + format_number(norm));
  return beta;
}

MatrixXd sandwich_variance(const MsmModel& model, const MsmSample& s, const VectorXd& beta, const VectorXd& v_in,
                           const VectorXd& y_in) {
  const Index n = static_cast<Index>(s.size());
  const Index k = static_cast<Index>(model.dim());
  const VectorXd v = or_ones(v_in, n);
  const VectorXd& y = y_in.size() ? y_in : s.y;
  MatrixXd M = MatrixXd::Zero(k, k);
  MatrixXd psi(n, k);
  for (Index i = 0; i < n; ++i) {
    const VectorXd a = s.treatments.row(i).transpose();
    const VectorXd h = model.h(a);
    const double c = s.weights[i] * v[i];
    M.noalias() += c * h * model.grad(a, beta).transpose();
    psi.row(i) = (c * (y[i] - model.g(a, beta))) * h.transpose();
  }
  M /= static_cast<double>(n);
  const VectorXd mean = psi.colwise().mean().transpose();
  const MatrixXd centered = psi.rowwise() - mean.transpose();
  const MatrixXd meat = centered.transpose() * centered / static_cast<double>(n);
  Eigen::ColPivHouseholderQR<MatrixXd> qr(M);
  if (qr.rank() < k) fail(ErrorKind::SingularMoment, "derivative matrix is rank deficient");
  const MatrixXd Minv = qr.inverse();
  return Minv * meat * Minv.transpose();
}

BetaEstimate fit_msm(const MsmModel& model, const MsmSample& sample, const VectorXd& v, const SolveOptions& options) {
  BetaEstimate est;
  est.beta = solve_msm(model, sample, v, {}, {}, options);
  est.covariance = sandwich_variance(model, sample, est.beta, v);
  est.n = sample.size();
  return est;
}

PairKernel matrix_kernel(const MatrixXd& values) {
  auto shared = std::make_shared<const MatrixXd>(values);
  return PairKernel{static_cast<std::size_t>(values.rows()), 1,
                    [shared](std::size_t i, std::size_t j, double* out) {
                      *out = (*shared)(static_cast<Index>(i), static_cast<Index>(j));
                    }};
}

VectorXd u_statistic(const PairKernel& kernel) {
  const std::size_t n = kernel.n;
  if (n < 2) fail(ErrorKind::UsageError, "U-statistic needs at least two units");
  const Index d = static_cast<Index>(kernel.dim);
  VectorXd sum = VectorXd::Zero(d), buf(d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      kernel.eval(i, j, buf.data());
      sum += buf;
    }
  return sum / (static_cast<double>(n) * static_cast<double>(n - 1));
}

MatrixXd u_projection(const PairKernel& kernel) {
  const std::size_t n = kernel.n;
  if (n < 2) fail(ErrorKind::UsageError, "U-statistic needs at least two units");
  const Index d = static_cast<Index>(kernel.dim);
  MatrixXd h = MatrixXd::Zero(static_cast<Index>(n), d);
  VectorXd buf(d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      kernel.eval(i, j, buf.data());
      h.row(static_cast<Index>(i)) += 0.5 * buf.transpose();
      h.row(static_cast<Index>(j)) += 0.5 * buf.transpose();
    }
  return h / static_cast<double>(n - 1);
}

MatrixXd u_projection_variance(const PairKernel& kernel) {
  const MatrixXd h = u_projection(kernel);
  const MatrixXd centered = h.rowwise() - h.colwise().mean();
  return centered.transpose() * centered / static_cast<double>(h.rows());
}

}  // namespace msmsens

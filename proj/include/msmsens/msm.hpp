#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "msmsens/data.hpp"

namespace msmsens {

// Treatment argument of a model: the trajectory (a_1, ..., a_T); static data
// use T = 1.
using TreatmentRef = Eigen::Ref<const Eigen::VectorXd>;

struct BasisTerm {
  std::string name;
  std::function<double(const TreatmentRef&)> f;
};

namespace basis {
BasisTerm intercept();
// Power of the most recent treatment.
BasisTerm power(int p);
// Sum of a_1..a_{T-lag}; lag 0 is the full cumulative treatment.
BasisTerm cumulative(std::size_t lag = 0);
// 1{lo <= a_T < hi}
BasisTerm indicator(double lo, double hi);
BasisTerm custom(std::string name, std::function<double(const TreatmentRef&)> f);
// intercept, a, ..., a^degree
std::vector<BasisTerm> polynomial(int degree);
}  // namespace basis

// Marginal structural model g(a; beta) with estimating function h(a).
// Linear models have g = b(a)'beta and h = b. Generic models supply g, its
// gradient in beta and h.
class MsmModel {
 public:
  using VecFn = std::function<Eigen::VectorXd(const TreatmentRef&)>;
  using ValueFn = std::function<double(const TreatmentRef&, const Eigen::VectorXd&)>;
  using GradFn = std::function<Eigen::VectorXd(const TreatmentRef&, const Eigen::VectorXd&)>;

  static MsmModel linear(std::vector<BasisTerm> terms);
  // g = exp(b(a)'beta), h = b
  static MsmModel exp_linear(std::vector<BasisTerm> terms);
  static MsmModel generic(std::size_t dim, VecFn h, ValueFn g, GradFn grad, std::string name,
                          std::vector<std::string> coefficient_names = {});

  bool is_linear() const { return linear_; }
  std::size_t dim() const { return dim_; }
  const std::string& name() const { return name_; }
  const std::vector<std::string>& coefficient_names() const { return coef_names_; }
  // Only for models built from basis terms.
  bool has_basis() const { return !terms_.empty(); }
  const std::vector<BasisTerm>& terms() const { return terms_; }

  Eigen::VectorXd basis(const TreatmentRef& a) const;
  Eigen::VectorXd h(const TreatmentRef& a) const;
  double g(const TreatmentRef& a, const Eigen::VectorXd& beta) const;
  Eigen::VectorXd grad(const TreatmentRef& a, const Eigen::VectorXd& beta) const;

  // Convenience for static treatments.
  Eigen::VectorXd basis(double a) const;
  double g(double a, const Eigen::VectorXd& beta) const;

 private:
  bool linear_ = true;
  std::size_t dim_ = 0;
  std::string name_;
  std::vector<std::string> coef_names_;
  std::vector<BasisTerm> terms_;
  VecFn h_;
  ValueFn g_;
  GradFn grad_;
};

// What the weighted estimating equations see of a sample: treatment
// trajectories (n x T), outcomes and weights W_i.
struct MsmSample {
  Eigen::MatrixXd treatments;
  Eigen::VectorXd y;
  Eigen::VectorXd weights;

  MsmSample() = default;
  MsmSample(Eigen::MatrixXd treatments, Eigen::VectorXd y, Eigen::VectorXd weights);
  MsmSample(const Dataset& data, Eigen::VectorXd weights);

  std::size_t size() const { return static_cast<std::size_t>(y.size()); }
  Eigen::VectorXd treatment(std::size_t i) const { return treatments.row(static_cast<Eigen::Index>(i)).transpose(); }
};

struct BetaEstimate {
  Eigen::VectorXd beta;
  // Asymptotic covariance of sqrt(n) (beta_hat - beta).
  Eigen::MatrixXd covariance;
  std::size_t n = 0;
};

struct SolveOptions {
  std::optional<Eigen::VectorXd> start;
  int max_iterations = 100;
  double tolerance = 1e-9;  // on the sup-norm of the mean moment, relative to its scale
};

// Solves E_n[h(A) W v (y - g(A; beta))] = target for beta. `v` multiplies the
// weights (empty means 1), `y` replaces the sample outcomes when non-empty and
// `target` defaults to zero. Linear models use the closed form; generic
// models use damped Newton started at `start` or at zero.
Eigen::VectorXd solve_msm(const MsmModel& model, const MsmSample& sample, const Eigen::VectorXd& v = {},
                          const Eigen::VectorXd& y = {}, const Eigen::VectorXd& target = {},
                          const SolveOptions& options = {});

// Weighted fit with sandwich covariance M^{-1} var[h W v (Y - g)] M^{-T},
// M = E_n[h W v grad g'].
BetaEstimate fit_msm(const MsmModel& model, const MsmSample& sample, const Eigen::VectorXd& v = {},
                     const SolveOptions& options = {});

Eigen::MatrixXd sandwich_variance(const MsmModel& model, const MsmSample& sample, const Eigen::VectorXd& beta,
                                  const Eigen::VectorXd& v = {}, const Eigen::VectorXd& y = {});

// Vector-valued kernel on ordered pairs of sample units, addressed by index.
struct PairKernel {
  std::size_t n = 0;
  std::size_t dim = 1;
  std::function<void(std::size_t i, std::size_t j, double* out)> eval;
};

// Kernel backed by an n x n matrix of scalar values K(i, j).
PairKernel matrix_kernel(const Eigen::MatrixXd& values);

// (n(n-1))^{-1} sum_{i != j} f(Z_i, Z_j), summed in index order.
Eigen::VectorXd u_statistic(const PairKernel& kernel);
// Rows are h1(Z_i) = (n-1)^{-1} sum_{j != i} (f(Z_i, Z_j) + f(Z_j, Z_i)) / 2.
Eigen::MatrixXd u_projection(const PairKernel& kernel);
// Empirical covariance (divisor n) of the projections. The asymptotic
// covariance of sqrt(n) U_n is four times this matrix.
Eigen::MatrixXd u_projection_variance(const PairKernel& kernel);

}  // namespace msmsens

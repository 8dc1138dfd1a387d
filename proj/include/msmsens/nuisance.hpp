#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "msmsens/data.hpp"

namespace msmsens {

// Which units share a "cell" for the empirical fitters: same treatment value,
// or same treatment value and same covariate vector.
enum class CellScope { Treatment, TreatmentCovariates };

enum class OutcomeMethod { Linear, Kernel, CellMean };

struct OutcomeRecipe {
  OutcomeMethod method = OutcomeMethod::Linear;
  int degree = 1;             // polynomial degree in a (linear method)
  bool interactions = false;  // add a * x_j columns (linear method)
  double bandwidth = 0.0;     // kernel method, standardized scale; 0 picks n^(-1/(p+4))
  CellScope cells = CellScope::Treatment;
};

// Regression evaluator (a, x) -> E[target | A = a, X = x]. Immutable and
// cheap to copy.
class OutcomeFit {
 public:
  struct Impl {
    virtual ~Impl() = default;
    virtual double eval(double a, const Eigen::Ref<const Eigen::VectorXd>& x) const = 0;
  };

  OutcomeFit() = default;
  OutcomeFit(std::shared_ptr<const Impl> impl, std::string method)
      : impl_(std::move(impl)), method_(std::move(method)) {}

  double operator()(double a, const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return impl_->eval(a, x);
  }
  const std::string& method() const { return method_; }

 private:
  std::shared_ptr<const Impl> impl_;
  std::string method_;
};

OutcomeFit fit_regression(const Eigen::MatrixXd& x, const Eigen::VectorXd& a,
                          const Eigen::VectorXd& target, const OutcomeRecipe& recipe);
OutcomeFit fit_outcome(const Dataset& data, const OutcomeRecipe& recipe);

enum class PropensityMethod { Discrete, Gaussian };

struct PropensityRecipe {
  PropensityMethod method = PropensityMethod::Gaussian;
  double floor = 1e-3;      // lower clip for densities and masses
  bool stabilized = true;   // numerator pi(a) instead of 1
  std::size_t max_levels = 20;
};

// Conditional and marginal treatment density (continuous A) or mass
// (discrete A). The marginal is the same family fitted without covariates.
class PropensityFit {
 public:
  struct Impl {
    virtual ~Impl() = default;
    virtual double conditional(double a, const Eigen::Ref<const Eigen::VectorXd>& x) const = 0;
    virtual double marginal(double a) const = 0;
    virtual std::vector<double> levels() const { return {}; }
    virtual Eigen::VectorXd masses(const Eigen::Ref<const Eigen::VectorXd>& x) const {
      (void)x;
      return {};
    }
  };

  PropensityFit() = default;
  PropensityFit(std::shared_ptr<const Impl> impl, PropensityRecipe recipe)
      : impl_(std::move(impl)), recipe_(recipe) {}

  double conditional(double a, const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return impl_->conditional(a, x);
  }
  double marginal(double a) const { return impl_->marginal(a); }
  // Stabilized pi(a)/pi(a|x), or 1/pi(a|x) when unstabilized.
  double weight(double a, const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return (recipe_.stabilized ? marginal(a) : 1.0) / conditional(a, x);
  }
  // Discrete method only: observed levels and their clipped conditional masses.
  std::vector<double> levels() const { return impl_->levels(); }
  Eigen::VectorXd masses(const Eigen::Ref<const Eigen::VectorXd>& x) const { return impl_->masses(x); }
  const PropensityRecipe& recipe() const { return recipe_; }

 private:
  std::shared_ptr<const Impl> impl_;
  PropensityRecipe recipe_;
};

PropensityFit fit_propensity(const Eigen::MatrixXd& x, const Eigen::VectorXd& a,
                             const PropensityRecipe& recipe);
PropensityFit fit_propensity(const Dataset& data, const PropensityRecipe& recipe);

enum class QuantileMethod { Pinball, Empirical };

struct QuantileRecipe {
  QuantileMethod method = QuantileMethod::Pinball;
  int degree = 1;
  bool interactions = false;
  CellScope cells = CellScope::Treatment;
};

// Conditional quantile evaluator (tau, a, x). Pinball fits are only defined at
// the fitted levels; crossing curves are sorted at evaluation time.
class QuantileFit {
 public:
  struct Impl {
    virtual ~Impl() = default;
    virtual double eval(double tau, double a, const Eigen::Ref<const Eigen::VectorXd>& x) const = 0;
  };

  QuantileFit() = default;
  QuantileFit(std::shared_ptr<const Impl> impl, std::vector<double> taus)
      : impl_(std::move(impl)), taus_(std::move(taus)) {}

  double operator()(double tau, double a, const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return impl_->eval(tau, a, x);
  }
  const std::vector<double>& taus() const { return taus_; }

 private:
  std::shared_ptr<const Impl> impl_;
  std::vector<double> taus_;
};

QuantileFit fit_quantile(const Eigen::MatrixXd& x, const Eigen::VectorXd& a, const Eigen::VectorXd& y,
                         const std::vector<double>& taus, const QuantileRecipe& recipe);
QuantileFit fit_quantile(const Dataset& data, const std::vector<double>& taus, const QuantileRecipe& recipe);

struct NuisanceRecipes {
  OutcomeRecipe outcome;
  PropensityRecipe propensity;
  QuantileRecipe quantile;
};

// Fold-wise nuisance bundles. The bundle used for unit i was trained on the
// units outside i's fold; with a single fold (in-sample mode) every bundle is
// trained on the full sample.
class CrossFit {
 public:
  static CrossFit fit(const Dataset& data, const FoldAssignment& folds, const NuisanceRecipes& recipes);
  static CrossFit in_sample(const Dataset& data, const NuisanceRecipes& recipes);

  const Dataset& data() const { return *data_; }
  std::size_t size() const { return data_->size(); }
  std::size_t fold_count() const { return folds_.k; }
  std::size_t fold_of(std::size_t i) const { return folds_.fold_of[i]; }
  const FoldAssignment& folds() const { return folds_; }
  const std::vector<std::size_t>& training(std::size_t fold) const { return training_[fold]; }
  const NuisanceRecipes& recipes() const { return recipes_; }
  bool is_in_sample() const { return in_sample_; }

  const OutcomeFit& outcome(std::size_t fold) const { return outcome_[fold]; }
  const PropensityFit& propensity(std::size_t fold) const { return propensity_[fold]; }

  // Outcome regression of unit i's bundle at (a, x).
  double mu(std::size_t i, double a, const Eigen::Ref<const Eigen::VectorXd>& x) const;
  // Out-of-fold fitted outcome at unit i's own (A_i, X_i).
  const Eigen::VectorXd& mu_hat() const { return mu_hat_; }
  // Out-of-fold weights W_i.
  const Eigen::VectorXd& weights() const { return weights_; }
  // Out-of-fold weight evaluated at an arbitrary (a, x) through unit i's bundle.
  double weight(std::size_t i, double a, const Eigen::Ref<const Eigen::VectorXd>& x) const;

 private:
  std::shared_ptr<const Dataset> data_;
  FoldAssignment folds_;
  NuisanceRecipes recipes_;
  bool in_sample_ = false;
  std::vector<std::vector<std::size_t>> training_;
  std::vector<OutcomeFit> outcome_;
  std::vector<PropensityFit> propensity_;
  Eigen::VectorXd mu_hat_;
  Eigen::VectorXd weights_;
};

// Design row [1, a, ..., a^degree, x, a * x (if interactions)] shared by the
// linear outcome and pinball quantile fitters.
Eigen::VectorXd regression_features(double a, const Eigen::Ref<const Eigen::VectorXd>& x, int degree,
                                    bool interactions);

}  // namespace msmsens

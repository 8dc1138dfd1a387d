#include "msmsens/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>

#include "msmsens/error.hpp"
#include "msmsens/quantile.hpp"

namespace msmsens {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd design_matrix(const MatrixXd& x, const VectorXd& a, int degree, bool interactions) {
  const Index n = a.size();
  VectorXd first = regression_features(a[0], x.row(0).transpose(), degree, interactions);
  MatrixXd B(n, first.size());
  B.row(0) = first.transpose();
  for (Index i = 1; i < n; ++i)
    B.row(i) = regression_features(a[i], x.row(i).transpose(), degree, interactions).transpose();
  return B;
}

VectorXd least_squares(const MatrixXd& B, const VectorXd& y) {
  Eigen::ColPivHouseholderQR<MatrixXd> qr(B);
  if (qr.rank() < B.cols())
    fail(ErrorKind::SingularDesign, "design matrix has rank " + std::to_string(qr.rank()) + " < " +
                                        std::to_string(B.cols()));
  return qr.solve(y);
}

// ---- cells ---------------------------------------------------------------

using CellKey = std::vector<double>;

CellKey cell_key(double a, const Eigen::Ref<const VectorXd>& x, CellScope scope) {
  CellKey k{a};
  if (scope == CellScope::TreatmentCovariates)
    for (Index j = 0; j < x.size(); ++j) k.push_back(x[j]);
  return k;
}

// Groups training values by cell, with treatment-level and global fallbacks
// for query points whose cell was never observed.
struct CellTable {
  CellScope scope = CellScope::Treatment;
  std::map<CellKey, std::vector<double>> cells;
  std::map<double, std::vector<double>> levels;
  std::vector<double> all;

  CellTable(const MatrixXd& x, const VectorXd& a, const VectorXd& v, CellScope s) : scope(s) {
    for (Index i = 0; i < a.size(); ++i) {
      cells[cell_key(a[i], x.row(i).transpose(), scope)].push_back(v[i]);
      levels[a[i]].push_back(v[i]);
      all.push_back(v[i]);
    }
  }

  const std::vector<double>& lookup(double a, const Eigen::Ref<const VectorXd>& x) const {
    if (auto it = cells.find(cell_key(a, x, scope)); it != cells.end()) return it->second;
    if (auto it = levels.find(a); it != levels.end()) return it->second;
    if (scope == CellScope::Treatment && !levels.empty()) {
      // nearest observed treatment level, lower level on ties
      auto hi = levels.lower_bound(a);
      if (hi == levels.end()) return std::prev(hi)->second;
      if (hi == levels.begin()) return hi->second;
      auto lo = std::prev(hi);
      return (a - lo->first <= hi->first - a) ? lo->second : hi->second;
    }
    return all;
  }
};

// ---- outcome fitters -----------------------------------------------------

struct LinearOutcome final : OutcomeFit::Impl {
  VectorXd coef;
  int degree;
  bool interactions;
  double eval(double a, const Eigen::Ref<const VectorXd>& x) const override {
    return regression_features(a, x, degree, interactions).dot(coef);
  }
};

struct KernelOutcome final : OutcomeFit::Impl {
  MatrixXd z;  // standardized (a, x) rows
  VectorXd center, scale, target;
  double bandwidth;

  double eval(double a, const Eigen::Ref<const VectorXd>& x) const override {
    VectorXd q(z.cols());
    q[0] = a;
    q.tail(z.cols() - 1) = x;
    q = (q - center).cwiseQuotient(scale);
    VectorXd logk(z.rows());
    for (Index i = 0; i < z.rows(); ++i)
      logk[i] = -0.5 * (z.row(i).transpose() - q).squaredNorm() / (bandwidth * bandwidth);
    const double m = logk.maxCoeff();
    double num = 0.0, den = 0.0;
    for (Index i = 0; i < z.rows(); ++i) {
      const double k = std::exp(logk[i] - m);
      num += k * target[i];
      den += k;
    }
    return num / den;
  }
};

struct CellMeanOutcome final : OutcomeFit::Impl {
  CellTable table;
  explicit CellMeanOutcome(CellTable t) : table(std::move(t)) {}
  double eval(double a, const Eigen::Ref<const VectorXd>& x) const override {
    const auto& v = table.lookup(a, x);
    double s = 0.0;
    for (double y : v) s += y;
    return s / static_cast<double>(v.size());
  }
};

// ---- propensity fitters --------------------------------------------------

double normal_density(double z, double sd) {
  return std::exp(-0.5 * z * z / (sd * sd)) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

struct GaussianPropensity final : PropensityFit::Impl {
  VectorXd coef;  // on [1, x]
  double sd = 1.0;
  double marginal_mean = 0.0;
  double marginal_sd = 1.0;
  double floor = 1e-3;

  double conditional(double a, const Eigen::Ref<const VectorXd>& x) const override {
    const double m = coef[0] + (x.size() ? coef.tail(x.size()).dot(x) : 0.0);
    return std::max(normal_density(a - m, sd), floor);
  }
  double marginal(double a) const override {
    return std::max(normal_density(a - marginal_mean, marginal_sd), floor);
  }
};

// Raise masses below `floor` to it and rescale the rest so the total stays 1.
VectorXd clip_masses(VectorXd p, double floor) {
  const Index K = p.size();
  std::vector<bool> fixed(static_cast<std::size_t>(K), false);
  for (int pass = 0; pass <= K; ++pass) {
    bool changed = false;
    double free_mass = 0.0, fixed_count = 0.0;
    for (Index k = 0; k < K; ++k) {
      if (!fixed[static_cast<std::size_t>(k)] && p[k] < floor) {
        fixed[static_cast<std::size_t>(k)] = true;
        changed = true;
      }
    }
    for (Index k = 0; k < K; ++k) {
      if (fixed[static_cast<std::size_t>(k)]) fixed_count += 1.0;
      else free_mass += p[k];
    }
    const double budget = 1.0 - fixed_count * floor;
    for (Index k = 0; k < K; ++k) {
      if (fixed[static_cast<std::size_t>(k)]) p[k] = floor;
      else if (free_mass > 0.0) p[k] *= budget / free_mass;
    }
    if (!changed) break;
  }
  return p;
}

struct DiscretePropensity final : PropensityFit::Impl {
  std::vector<double> level_values;
  MatrixXd theta;  // (K-1) x (1+d), reference level 0
  VectorXd marginal_mass;
  double floor = 1e-3;

  VectorXd raw_masses(const Eigen::Ref<const VectorXd>& x) const {
    const Index K = static_cast<Index>(level_values.size());
    VectorXd f(1 + x.size());
    f[0] = 1.0;
    f.tail(x.size()) = x;
    VectorXd eta = VectorXd::Zero(K);
    if (K > 1) eta.tail(K - 1) = theta * f;
    const double m = eta.maxCoeff();
    VectorXd p = (eta.array() - m).exp();
    return p / p.sum();
  }
  Index level_index(double a) const {
    auto it = std::find(level_values.begin(), level_values.end(), a);
    return it == level_values.end() ? -1 : static_cast<Index>(it - level_values.begin());
  }
  double conditional(double a, const Eigen::Ref<const VectorXd>& x) const override {
    const Index k = level_index(a);
    if (k < 0) return floor;
    return clip_masses(raw_masses(x), floor)[k];
  }
  double marginal(double a) const override {
    const Index k = level_index(a);
    return k < 0 ? floor : marginal_mass[k];
  }
  std::vector<double> levels() const override { return level_values; }
  VectorXd masses(const Eigen::Ref<const VectorXd>& x) const override {
    return clip_masses(raw_masses(x), floor);
  }
};

// Penalized multinomial logistic regression by damped Newton.
MatrixXd fit_multinomial(const MatrixXd& F, const std::vector<Index>& label, Index K) {
  const Index n = F.rows(), p = F.cols(), m = (K - 1) * p;
  MatrixXd theta = MatrixXd::Zero(K - 1, p);
  if (K == 1) return theta;
  const double ridge = 1e-6 * static_cast<double>(n);

  auto objective = [&](const MatrixXd& th) {
    double ll = 0.0;
    for (Index i = 0; i < n; ++i) {
      VectorXd eta = VectorXd::Zero(K);
      eta.tail(K - 1) = th * F.row(i).transpose();
      const double mx = eta.maxCoeff();
      ll += eta[label[static_cast<std::size_t>(i)]] - mx - std::log((eta.array() - mx).exp().sum());
    }
    if (p > 1) ll -= 0.5 * ridge * th.rightCols(p - 1).squaredNorm();
    return ll;
  };

  // Start from the intercept-only solution.
  VectorXd count = VectorXd::Zero(K);
  for (auto l : label) count[l] += 1.0;
  for (Index k = 1; k < K; ++k) theta(k - 1, 0) = std::log(count[k] / count[0]);
  if (p == 1) return theta;

  double current = objective(theta);
  for (int iter = 0; iter < 100; ++iter) {
    VectorXd grad = VectorXd::Zero(m);
    MatrixXd hess = MatrixXd::Zero(m, m);
    for (Index i = 0; i < n; ++i) {
      const VectorXd f = F.row(i).transpose();
      VectorXd eta = VectorXd::Zero(K);
      eta.tail(K - 1) = theta * f;
      const double mx = eta.maxCoeff();
      VectorXd pr = (eta.array() - mx).exp();
      pr /= pr.sum();
      for (Index k = 1; k < K; ++k) {
        const double r = (label[static_cast<std::size_t>(i)] == k ? 1.0 : 0.0) - pr[k];
        grad.segment((k - 1) * p, p) += r * f;
        for (Index l = 1; l < K; ++l) {
          const double c = pr[k] * ((k == l ? 1.0 : 0.0) - pr[l]);
          hess.block((k - 1) * p, (l - 1) * p, p, p).noalias() += c * f * f.transpose();
        }
      }
    }
    for (Index k = 0; k < K - 1; ++k)
      for (Index j = 1; j < p; ++j) {
        grad[k * p + j] -= ridge * theta(k, j);
        hess(k * p + j, k * p + j) += ridge;
      }
    if (grad.lpNorm<Eigen::Infinity>() < 1e-10 * static_cast<double>(n)) break;
    const VectorXd step = hess.ldlt().solve(grad);
    double t = 1.0;
    bool improved = false;
    for (int h = 0; h < 40; ++h, t *= 0.5) {
      MatrixXd cand = theta;
      for (Index k = 0; k < K - 1; ++k) cand.row(k) += t * step.segment(k * p, p).transpose();
      const double val = objective(cand);
      if (val >= current) {
        theta = cand;
        improved = val > current;
        current = val;
        break;
      }
    }
    if (!improved) break;
  }
  return theta;
}

// ---- quantile fitters ----------------------------------------------------

// Linear quantile regression by the majorize-minimize scheme of Hunter and
// Lange: iteratively reweighted least squares on a perturbed check loss.
VectorXd fit_pinball(const MatrixXd& B, const VectorXd& y, double tau) {
  Eigen::ColPivHouseholderQR<MatrixXd> qr(B);
  if (qr.rank() < B.cols()) fail(ErrorKind::SingularDesign, "quantile design is rank deficient");
  VectorXd beta = qr.solve(y);
  const double scale = std::max(1.0, y.cwiseAbs().maxCoeff());
  const double eps = 1e-7 * scale;
  const VectorXd colsum = B.colwise().sum().transpose();
  auto loss = [&](const VectorXd& b) {
    const VectorXd r = y - B * b;
    double s = 0.0;
    for (Index i = 0; i < r.size(); ++i) s += r[i] * (tau - (r[i] < 0.0 ? 1.0 : 0.0));
    return s;
  };
  double prev = loss(beta);
  for (int iter = 0; iter < 2000; ++iter) {
    const VectorXd r = y - B * beta;
    const VectorXd w = (r.cwiseAbs().array() + eps).inverse().matrix();
    const MatrixXd G = B.transpose() * w.asDiagonal() * B;
    const VectorXd rhs = B.transpose() * w.cwiseProduct(y) + (2.0 * tau - 1.0) * colsum;
    VectorXd next = G.ldlt().solve(rhs);
    const double change = (next - beta).lpNorm<Eigen::Infinity>();
    beta = next;
    const double cur = loss(beta);
    if (change < 1e-12 * scale || std::abs(prev - cur) < 1e-14 * scale * static_cast<double>(y.size())) break;
    prev = cur;
  }
  // Polish to a vertex: the exact optimum interpolates k observations, and the
  // smoothed iterate sits O(eps) away from it.
  const VectorXd r = y - B * beta;
  std::vector<Index> order(static_cast<std::size_t>(r.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return std::fabs(r[a]) < std::fabs(r[b]); });
  const Index k = B.cols();
  MatrixXd rows(0, k);
  std::vector<Index> basis;
  for (Index i : order) {
    MatrixXd trial(rows.rows() + 1, k);
    trial << rows, B.row(i);
    if (Eigen::FullPivLU<MatrixXd>(trial).rank() == trial.rows()) {
      rows = trial;
      basis.push_back(i);
      if (rows.rows() == k) break;
    }
  }
  if (rows.rows() == k) {
    VectorXd ys(k);
    for (Index j = 0; j < k; ++j) ys[j] = y[basis[static_cast<std::size_t>(j)]];
    const VectorXd vertex = rows.fullPivLu().solve(ys);
    if (loss(vertex) <= loss(beta)) beta = vertex;
  }
  return beta;
}

struct PinballQuantile final : QuantileFit::Impl {
  std::vector<double> taus;  // ascending
  std::vector<VectorXd> coefs;
  int degree;
  bool interactions;

  double eval(double tau, double a, const Eigen::Ref<const VectorXd>& x) const override {
    std::size_t pos = taus.size();
    for (std::size_t k = 0; k < taus.size(); ++k)
      if (std::abs(taus[k] - tau) <= 1e-12) pos = k;
    if (pos == taus.size()) fail(ErrorKind::BadTau, "level " + format_number(tau) + " was not fitted");
    const VectorXd f = regression_features(a, x, degree, interactions);
    std::vector<double> vals;
    for (const auto& c : coefs) vals.push_back(f.dot(c));
    std::sort(vals.begin(), vals.end());
    return vals[pos];
  }
};

struct EmpiricalQuantile final : QuantileFit::Impl {
  CellTable table;
  explicit EmpiricalQuantile(CellTable t) : table(std::move(t)) {}
  double eval(double tau, double a, const Eigen::Ref<const VectorXd>& x) const override {
    if (!(tau > 0.0 && tau < 1.0)) fail(ErrorKind::BadTau, "level must lie in (0, 1)");
    return type1_quantile(std::span<const double>(table.lookup(a, x)), tau);
  }
};

}  // namespace

VectorXd regression_features(double a, const Eigen::Ref<const VectorXd>& x, int degree, bool interactions) {
  const Index d = x.size();
  const Index len = 1 + std::max(degree, 0) + d + (interactions ? d : 0);
  VectorXd f(len);
  Index k = 0;
  f[k++] = 1.0;
  double p = 1.0;
  for (int j = 1; j <= degree; ++j) {
    p *= a;
    f[k++] = p;
  }
  for (Index j = 0; j < d; ++j) f[k++] = x[j];
  if (interactions)
    for (Index j = 0; j < d; ++j) f[k++] = a * x[j];
  return f;
}

OutcomeFit fit_regression(const MatrixXd& x, const VectorXd& a, const VectorXd& target,
                          const OutcomeRecipe& recipe) {
  if (a.size() == 0) fail(ErrorKind::EmptyFile, "no training rows");
  switch (recipe.method) {
    case OutcomeMethod::Linear: {
      auto impl = std::make_shared<LinearOutcome>();
      impl->degree = recipe.degree;
      impl->interactions = recipe.interactions;
      impl->coef = least_squares(design_matrix(x, a, recipe.degree, recipe.interactions), target);
      return OutcomeFit(std::move(impl), "linear");
    }
    case OutcomeMethod::Kernel: {
      auto impl = std::make_shared<KernelOutcome>();
      const Index n = a.size(), p = 1 + x.cols();
      impl->z.resize(n, p);
      impl->z.col(0) = a;
      if (x.cols()) impl->z.rightCols(x.cols()) = x;
      impl->center = impl->z.colwise().mean().transpose();
      impl->scale.resize(p);
      for (Index j = 0; j < p; ++j) {
        const double sd = std::sqrt((impl->z.col(j).array() - impl->center[j]).square().mean());
        impl->scale[j] = sd > 0.0 ? sd : 1.0;
      }
      for (Index i = 0; i < n; ++i)
        impl->z.row(i) = (impl->z.row(i) - impl->center.transpose()).cwiseQuotient(impl->scale.transpose());
      impl->target = target;
      impl->bandwidth = recipe.bandwidth > 0.0
                            ? recipe.bandwidth
                            : std::pow(static_cast<double>(n), -1.0 / static_cast<double>(p + 4));
      return OutcomeFit(std::move(impl), "kernel");
    }
    case OutcomeMethod::CellMean:
      return OutcomeFit(std::make_shared<CellMeanOutcome>(CellTable(x, a, target, recipe.cells)), "cell-mean");
  }
  fail(ErrorKind::ConfigError, "unknown outcome method");
}

OutcomeFit fit_outcome(const Dataset& data, const OutcomeRecipe& recipe) {
  return fit_regression(data.x(), data.a(), data.y(), recipe);
}

PropensityFit fit_propensity(const MatrixXd& x, const VectorXd& a, const PropensityRecipe& recipe) {
  const Index n = a.size(), d = x.cols();
  if (n == 0) fail(ErrorKind::EmptyFile, "no training rows");
  MatrixXd F(n, 1 + d);
  F.col(0).setOnes();
  if (d) F.rightCols(d) = x;

  if (recipe.method == PropensityMethod::Gaussian) {
    auto impl = std::make_shared<GaussianPropensity>();
    impl->floor = recipe.floor;
    if (n <= F.cols()) fail(ErrorKind::DegenerateVariance, "too few rows for the residual variance");
    impl->coef = least_squares(F, a);
    const double rss = (a - F * impl->coef).squaredNorm();
    const double var = rss / static_cast<double>(n - F.cols());
    impl->marginal_mean = a.mean();
    const double mvar = (a.array() - impl->marginal_mean).square().sum() / static_cast<double>(n - 1);
    if (!(mvar > 1e-12) || !(var > 1e-12 * mvar))
      fail(ErrorKind::DegenerateVariance, "treatment residual variance is zero");
    impl->sd = std::sqrt(var);
    impl->marginal_sd = std::sqrt(mvar);
    return PropensityFit(std::move(impl), recipe);
  }

  std::vector<double> levels(a.data(), a.data() + n);
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  if (levels.size() > recipe.max_levels)
    fail(ErrorKind::TooManyLevels, std::to_string(levels.size()) + " distinct treatment values (limit " +
                                       std::to_string(recipe.max_levels) + ")");
  if (static_cast<double>(levels.size()) * recipe.floor > 1.0)
    fail(ErrorKind::TooManyLevels, "clip floor incompatible with the number of levels");
  std::vector<Index> label(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i)
    label[static_cast<std::size_t>(i)] =
        static_cast<Index>(std::lower_bound(levels.begin(), levels.end(), a[i]) - levels.begin());
  auto impl = std::make_shared<DiscretePropensity>();
  impl->level_values = levels;
  impl->floor = recipe.floor;
  const Index K = static_cast<Index>(levels.size());
  impl->theta = fit_multinomial(F, label, K);
  VectorXd freq = VectorXd::Zero(K);
  for (auto l : label) freq[l] += 1.0;
  impl->marginal_mass = clip_masses(freq / static_cast<double>(n), recipe.floor);
  return PropensityFit(std::move(impl), recipe);
}

PropensityFit fit_propensity(const Dataset& data, const PropensityRecipe& recipe) {
  return fit_propensity(data.x(), data.a(), recipe);
}

QuantileFit fit_quantile(const MatrixXd& x, const VectorXd& a, const VectorXd& y, const std::vector<double>& taus,
                         const QuantileRecipe& recipe) {
  if (taus.empty()) fail(ErrorKind::BadTau, "no quantile levels requested");
  for (double t : taus)
    if (!(t > 0.0 && t < 1.0)) fail(ErrorKind::BadTau, "level " + format_number(t) + " outside (0, 1)");
  std::vector<double> sorted = taus;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

  if (recipe.method == QuantileMethod::Empirical)
    return QuantileFit(std::make_shared<EmpiricalQuantile>(CellTable(x, a, y, recipe.cells)), sorted);

  auto impl = std::make_shared<PinballQuantile>();
  impl->taus = sorted;
  impl->degree = recipe.degree;
  impl->interactions = recipe.interactions;
  const MatrixXd B = design_matrix(x, a, recipe.degree, recipe.interactions);
  for (double t : sorted) impl->coefs.push_back(fit_pinball(B, y, t));
  return QuantileFit(std::move(impl), sorted);
}

QuantileFit fit_quantile(const Dataset& data, const std::vector<double>& taus, const QuantileRecipe& recipe) {
  return fit_quantile(data.x(), data.a(), data.y(), taus, recipe);
}

// ---- cross-fitting -------------------------------------------------------

CrossFit CrossFit::fit(const Dataset& data, const FoldAssignment& folds, const NuisanceRecipes& recipes) {
  if (folds.size() != data.size()) fail(ErrorKind::BadFoldCount, "fold assignment does not match the data");
  CrossFit cf;
  cf.data_ = std::make_shared<const Dataset>(data);
  cf.folds_ = folds;
  cf.recipes_ = recipes;
  cf.in_sample_ = folds.k == 1;
  for (std::size_t f = 0; f < folds.k; ++f) {
    auto train = cf.in_sample_ ? folds.members(0) : folds.complement(f);
    if (train.empty()) fail(ErrorKind::BadFoldCount, "empty training set");
    const Dataset sub = data.subset(train);
    cf.outcome_.push_back(fit_outcome(sub, recipes.outcome));
    cf.propensity_.push_back(fit_propensity(sub, recipes.propensity));
    cf.training_.push_back(std::move(train));
  }
  const auto n = static_cast<Index>(data.size());
  cf.mu_hat_.resize(n);
  cf.weights_.resize(n);
  for (Index i = 0; i < n; ++i) {
    const auto f = cf.folds_.fold_of[static_cast<std::size_t>(i)];
    const VectorXd xi = data.x().row(i).transpose();
    cf.mu_hat_[i] = cf.outcome_[f](data.a()[i], xi);
    cf.weights_[i] = cf.propensity_[f].weight(data.a()[i], xi);
  }
  return cf;
}

CrossFit CrossFit::in_sample(const Dataset& data, const NuisanceRecipes& recipes) {
  FoldAssignment one{1, std::vector<std::size_t>(data.size(), 0)};
  return fit(data, one, recipes);
}

double CrossFit::mu(std::size_t i, double a, const Eigen::Ref<const VectorXd>& x) const {
  return outcome_[folds_.fold_of[i]](a, x);
}

double CrossFit::weight(std::size_t i, double a, const Eigen::Ref<const VectorXd>& x) const {
  return propensity_[folds_.fold_of[i]].weight(a, x);
}

}  // namespace msmsens

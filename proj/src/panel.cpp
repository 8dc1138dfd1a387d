#include "msmsens/panel.hpp"

#include "msmsens/error.hpp"
#include "msmsens/propensity_bounds.hpp"

namespace msmsens {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Treatment-history features for step s (0-based): previous treatment,
// running sum and the step index. Empty for single-step panels.
VectorXd history(const PanelUnit& u, std::size_t s, std::size_t horizon, bool with_time) {
  if (horizon == 1) return VectorXd();
  VectorXd h(with_time ? 3 : 2);
  double sum = 0.0;
  for (std::size_t r = 0; r < s; ++r) sum += u.steps[r].a;
  h[0] = s > 0 ? u.steps[s - 1].a : 0.0;
  h[1] = sum;
  if (with_time) h[2] = static_cast<double>(s + 1);
  return h;
}

VectorXd join(const VectorXd& x, const VectorXd& h) {
  VectorXd out(x.size() + h.size());
  out << x, h;
  return out;
}

}  // namespace

VectorXd panel_weights(const Panel& panel, const PanelWeightOptions& options) {
  const std::size_t n = panel.size(), T = panel.horizon(), d = panel.dim();
  const auto& units = panel.units();
  VectorXd w = VectorXd::Ones(static_cast<Index>(n));

  auto build = [&](const std::vector<std::size_t>& steps, bool with_time, MatrixXd& num_x, MatrixXd& den_x,
                   VectorXd& a) {
    const Index rows = static_cast<Index>(n * steps.size());
    const Index hdim = T == 1 ? 0 : (with_time ? 3 : 2);
    num_x.resize(rows, hdim);
    den_x.resize(rows, static_cast<Index>(d) + hdim);
    a.resize(rows);
    Index r = 0;
    for (std::size_t s : steps)
      for (const auto& u : units) {
        const VectorXd h = history(u, s, T, with_time);
        if (hdim) num_x.row(r) = h.transpose();
        den_x.row(r) = join(u.steps[s].x, h).transpose();
        a[r] = u.steps[s].a;
        ++r;
      }
  };

  auto apply = [&](const std::vector<std::size_t>& steps, bool with_time) {
    MatrixXd num_x, den_x;
    VectorXd a;
    build(steps, with_time, num_x, den_x, a);
    const PropensityFit num = fit_propensity(num_x, a, options.recipe);
    const PropensityFit den = fit_propensity(den_x, a, options.recipe);
    Index r = 0;
    for (std::size_t k = 0; k < steps.size(); ++k)
      for (std::size_t i = 0; i < n; ++i, ++r) {
        const double top = options.recipe.stabilized ? num.conditional(a[r], num_x.row(r).transpose()) : 1.0;
        w[static_cast<Index>(i)] *= top / den.conditional(a[r], den_x.row(r).transpose());
      }
  };

  if (options.pooled || T == 1) {
    std::vector<std::size_t> all(T);
    for (std::size_t s = 0; s < T; ++s) all[s] = s;
    apply(all, T > 1);
  } else {
    for (std::size_t s = 0; s < T; ++s) {
      if (s == 0) {
        // No history yet: marginal numerator, covariate-only denominator.
        MatrixXd x(static_cast<Index>(n), static_cast<Index>(d));
        VectorXd a(static_cast<Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
          if (d) x.row(static_cast<Index>(i)) = units[i].steps[0].x.transpose();
          a[static_cast<Index>(i)] = units[i].steps[0].a;
        }
        const PropensityFit den = fit_propensity(x, a, options.recipe);
        for (std::size_t i = 0; i < n; ++i) {
          const Index r = static_cast<Index>(i);
          const double top = options.recipe.stabilized ? den.marginal(a[r]) : 1.0;
          w[r] *= top / den.conditional(a[r], x.row(r).transpose());
        }
      } else {
        apply({s}, false);
      }
    }
  }
  return w;
}

MsmSample panel_sample(const Panel& panel, const VectorXd& weights) {
  return MsmSample(panel.treatments(), panel.outcomes(), weights);
}

BetaEstimate panel_fit_msm(const Panel& panel, const MsmModel& model, const VectorXd& weights) {
  return fit_msm(model, panel_sample(panel, weights));
}

BoundCurve panel_propensity_bounds(const Panel& panel, const MsmModel& model, const VectorXd& weights,
                                   const std::vector<double>& gammas, PanelBoundMethod method, std::size_t coord,
                                   const HomotopyOptions& options) {
  const MsmSample sample = panel_sample(panel, weights);
  switch (method) {
    case PanelBoundMethod::HomotopyF1: {
      HomotopyOptions o = options;
      o.functional = Functional::F1;
      o.constraint = Constraint::Large;
      o.coord = coord;
      return homotopy_bounds(model, sample, gammas, o).curve();
    }
    case PanelBoundMethod::ClosedF2: {
      BoundCurve c;
      c.parameter = "gamma";
      for (double g : gammas) {
        const auto b = lemma6_F2_bounds(model, sample, GammaSpec(g), coord);
        c.push(g, b.bounds.lower, b.bounds.upper);
      }
      return c;
    }
    case PanelBoundMethod::Local:
      return local_bounds(model, sample, gammas, coord);
  }
  fail(ErrorKind::UsageError, "unknown panel bound method");
}

double breakdown_gamma(const BoundCurve& curve) {
  for (std::size_t j = 0; j < curve.size(); ++j)
    if (curve.valid[j] && curve.lower[j] <= 0.0 && curve.upper[j] >= 0.0) return curve.grid[j];
  return -1.0;
}

}  // namespace msmsens

#include "msmsens/homotopy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "msmsens/error.hpp"
#include "msmsens/propensity_bounds.hpp"

namespace msmsens {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// e'{E_n[h W v grad g']}^{-1}
VectorXd sensitivity_row(const MsmModel& model, const MsmSample& s, const VectorXd& beta, const VectorXd& v,
                         std::size_t coord) {
  const Index n = static_cast<Index>(s.size()), k = static_cast<Index>(model.dim());
  if (coord >= model.dim()) fail(ErrorKind::UsageError, "coordinate out of range");
  MatrixXd M = MatrixXd::Zero(k, k);
  for (Index i = 0; i < n; ++i) {
    const VectorXd a = s.treatments.row(i).transpose();
    M.noalias() += (s.weights[i] * v[i]) * model.h(a) * model.grad(a, beta).transpose();
  }
  M /= static_cast<double>(n);
  Eigen::ColPivHouseholderQR<MatrixXd> qr(M);
  if (qr.rank() < k) fail(ErrorKind::SingularMoment, "derivative matrix is rank deficient");
  return qr.inverse().row(static_cast<Index>(coord)).transpose();
}

bool improves(double candidate, double current, Sense sense) {
  const double tol = 1e-13 * std::max(1.0, std::abs(current));
  return sense == Sense::Upper ? candidate > current + tol : candidate < current - tol;
}

}  // namespace

VectorXd derivative_F1(const MsmModel& model, const MsmSample& s, const VectorXd& beta, const VectorXd& v,
                       std::size_t coord) {
  const Index n = static_cast<Index>(s.size());
  const VectorXd vv = v.size() ? v : VectorXd::Ones(n);
  const VectorXd row = sensitivity_row(model, s, beta, vv, coord);
  VectorXd d(n);
  for (Index i = 0; i < n; ++i) {
    const VectorXd a = s.treatments.row(i).transpose();
    d[i] = row.dot(model.h(a)) * s.weights[i] * (s.y[i] - model.g(a, beta));
  }
  return d;
}

VectorXd derivative_F2(const MsmModel& model, const MsmSample& s, const VectorXd& beta, std::size_t coord) {
  const Index n = static_cast<Index>(s.size());
  const VectorXd row = sensitivity_row(model, s, beta, VectorXd::Ones(n), coord);
  VectorXd d(n);
  for (Index i = 0; i < n; ++i) d[i] = row.dot(model.h(s.treatments.row(i).transpose())) * s.weights[i] * s.y[i];
  return d;
}

std::vector<std::size_t> covariate_cells(const Dataset& data) {
  std::map<std::vector<double>, std::size_t> label;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto r = static_cast<Index>(i);
    std::vector<double> key{data.a()[r]};
    for (Index j = 0; j < data.x().cols(); ++j) key.push_back(data.x()(r, j));
    auto [it, inserted] = label.emplace(std::move(key), label.size());
    out.push_back(it->second);
  }
  return out;
}

ConditionalThresholds thresholds_from(const CrossFit& cf) {
  ConditionalThresholds t;
  t.quantiles = [cf](double gamma) {
    auto q = quantile_pieces(cf, GammaSpec(gamma));
    return std::make_pair(q.q_lower, q.q_upper);
  };
  return t;
}

namespace {

// Conditional (V_small) weights: units whose sensitivity T_i = row'h_i W_i
// pushes the coordinate up take the upper-side rule for an upper bound, the
// others the lower-side rule.
VectorXd small_weights(const MsmSample& s, const MsmModel& model, const VectorXd& row, double gamma, Sense sense,
                       const ConditionalThresholds& th) {
  const Index n = static_cast<Index>(s.size());
  VectorXd T(n);
  for (Index i = 0; i < n; ++i) T[i] = row.dot(model.h(s.treatments.row(i).transpose())) * s.weights[i];
  auto side_of = [&](Index i) {
    const bool push_up = T[i] >= 0.0;
    return (push_up == (sense == Sense::Upper)) ? Sense::Upper : Sense::Lower;
  };
  VectorXd v(n);
  if (!th.cells.empty()) {
    if (th.cells.size() != s.size()) fail(ErrorKind::UsageError, "cell labels do not match the sample");
    std::map<std::size_t, std::vector<Index>> groups;
    for (Index i = 0; i < n; ++i) groups[th.cells[static_cast<std::size_t>(i)]].push_back(i);
    for (const auto& [label, members] : groups) {
      VectorXd y(static_cast<Index>(members.size()));
      for (std::size_t m = 0; m < members.size(); ++m) y[static_cast<Index>(m)] = s.y[members[m]];
      const VectorXd vc = box_threshold_weights(y, 1.0 / gamma, gamma, side_of(members.front()));
      for (std::size_t m = 0; m < members.size(); ++m) v[members[m]] = vc[static_cast<Index>(m)];
    }
    return v;
  }
  if (!th.quantiles) fail(ErrorKind::UsageError, "V_small bounds need conditional quantiles");
  const auto [ql, qu] = th.quantiles(gamma);
  for (Index i = 0; i < n; ++i) {
    if (side_of(i) == Sense::Upper) {
      const double r = s.y[i] - qu[i];
      v[i] = r > 0.0 ? gamma : (r < 0.0 ? 1.0 / gamma : 1.0);
    } else {
      const double r = ql[i] - s.y[i];
      v[i] = r > 0.0 ? gamma : (r < 0.0 ? 1.0 / gamma : 1.0);
    }
  }
  return v;
}

}  // namespace

BoundCurve HomotopyTrace::curve() const {
  BoundCurve c;
  c.parameter = "gamma";
  for (std::size_t j = 0; j < grid.size(); ++j) c.push(grid[j], lower[j], upper[j], valid_lower[j] && valid_upper[j]);
  return c;
}

HomotopyTrace homotopy_bounds(const MsmModel& model, const MsmSample& sample, const std::vector<double>& gammas,
                              const HomotopyOptions& opt) {
  const Index n = static_cast<Index>(sample.size()), k = static_cast<Index>(model.dim());
  const Index c = static_cast<Index>(opt.coord);
  if (opt.coord >= model.dim()) fail(ErrorKind::UsageError, "coordinate out of range");
  for (std::size_t j = 0; j < gammas.size(); ++j) {
    GammaSpec check(gammas[j]);
    if (j > 0 && gammas[j] < gammas[j - 1]) fail(ErrorKind::UsageError, "gamma grid must be ascending");
  }
  const VectorXd ones = VectorXd::Ones(n);
  auto box = opt.box ? opt.box : [](double g) { return std::make_pair(1.0 / g, g); };

  auto refit_once = [&](const VectorXd& v, const VectorXd& start) {
    SolveOptions so;
    so.start = start;
    if (opt.functional == Functional::F1) return solve_msm(model, sample, v, {}, {}, so);
    return solve_msm(model, sample, {}, sample.y.cwiseProduct(v), {}, so);
  };

  HomotopyTrace tr;
  tr.grid = gammas;
  tr.beta_hat = refit_once(ones, VectorXd::Zero(k));
  tr.point = tr.beta_hat[c];

  // Up to three attempts from different starting points before giving up on
  // a grid point.
  auto refit = [&](const VectorXd& v, const VectorXd& warm, VectorXd& out) {
    const VectorXd starts[3] = {warm, tr.beta_hat, VectorXd::Zero(k)};
    for (const auto& st : starts) {
      try {
        out = refit_once(v, st);
        return true;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::NoConvergence && e.kind() != ErrorKind::SingularMoment) throw;
      }
    }
    return false;
  };

  struct State {
    VectorXd v, beta;
    double value;
  };

  for (Sense sense : {Sense::Lower, Sense::Upper}) {
    auto& values = sense == Sense::Upper ? tr.upper : tr.lower;
    auto& valid = sense == Sense::Upper ? tr.valid_upper : tr.valid_lower;
    auto& betas = sense == Sense::Upper ? tr.beta_upper : tr.beta_lower;
    auto& weights = sense == Sense::Upper ? tr.v_upper : tr.v_lower;
    State st{ones, tr.beta_hat, tr.point};

    for (double gamma : gammas) {
      const auto [lo, hi] = box(gamma);
      bool ok = true;
      State cur = st;
      if (hi - lo <= 0.0) {
        cur = State{ones, tr.beta_hat, tr.point};
      } else if (opt.constraint == Constraint::Large) {
        State best = cur;
        for (int pass = 0; pass < std::max(1, opt.inner_iterations); ++pass) {
          const VectorXd d = opt.functional == Functional::F1 ? derivative_F1(model, sample, cur.beta, cur.v, opt.coord)
                                                              : derivative_F2(model, sample, cur.beta, opt.coord);
          const VectorXd v = box_threshold_weights(d, lo, hi, sense);
          const bool same = pass > 0 && v == cur.v;
          VectorXd beta;
          if (!refit(v, cur.beta, beta)) {
            ok = false;
            break;
          }
          State next{v, beta, beta[c]};
          if (pass == 0 || !opt.keep_best || improves(next.value, best.value, sense)) best = next;
          cur = next;
          if (same) break;
        }
        cur = best;
      } else {
        // Conditional rule: recompute the sensitivity signs until the
        // coordinate settles.
        for (int pass = 0; pass < 50; ++pass) {
          const VectorXd row = sensitivity_row(model, sample, cur.beta,
                                               opt.functional == Functional::F1 ? cur.v : ones, opt.coord);
          const VectorXd v = small_weights(sample, model, row, gamma, sense, opt.thresholds);
          VectorXd beta;
          if (!refit(v, cur.beta, beta)) {
            ok = false;
            break;
          }
          const double change = std::abs(beta[c] - cur.value);
          cur = State{v, beta, beta[c]};
          if (pass > 0 && change < 1e-6) break;
        }
      }

      if (!ok) {
        values.push_back(kNaN);
        valid.push_back(false);
        betas.push_back(VectorXd::Constant(k, kNaN));
        if (opt.record_weights) weights.push_back(st.v);
        continue;
      }
      if (opt.keep_best && improves(st.value, cur.value, sense)) cur = st;
      st = cur;
      values.push_back(st.value);
      valid.push_back(true);
      betas.push_back(st.beta);
      if (opt.record_weights) weights.push_back(st.v);
    }
  }
  return tr;
}

HomotopyTrace coordinate_ascent_bounds(const MsmModel& model, const MsmSample& sample,
                                       const std::vector<double>& gammas, const AscentOptions& opt) {
  if (!model.is_linear()) fail(ErrorKind::UsageError, "coordinate ascent needs a linear model");
  if (opt.coord >= model.dim()) fail(ErrorKind::UsageError, "coordinate out of range");
  const Index n = static_cast<Index>(sample.size()), k = static_cast<Index>(model.dim());
  const Index c = static_cast<Index>(opt.coord);
  MatrixXd B(n, k);
  for (Index i = 0; i < n; ++i) B.row(i) = model.basis(TreatmentRef(sample.treatments.row(i).transpose())).transpose();
  const VectorXd& w = sample.weights;
  const VectorXd& y = sample.y;

  auto normal_equations = [&](const VectorXd& v, MatrixXd& Ginv, VectorXd& r) {
    const MatrixXd G = B.transpose() * (w.cwiseProduct(v)).asDiagonal() * B;
    Eigen::ColPivHouseholderQR<MatrixXd> qr(G);
    if (qr.rank() < k) fail(ErrorKind::SingularMoment, "weighted Gram matrix is rank deficient");
    Ginv = qr.inverse();
    r = B.transpose() * w.cwiseProduct(v).cwiseProduct(y);
  };

  HomotopyTrace tr;
  tr.grid = gammas;
  {
    MatrixXd Ginv;
    VectorXd r;
    normal_equations(VectorXd::Ones(n), Ginv, r);
    tr.beta_hat = Ginv * r;
    tr.point = tr.beta_hat[c];
  }

  for (Sense sense : {Sense::Lower, Sense::Upper}) {
    auto& values = sense == Sense::Upper ? tr.upper : tr.lower;
    auto& valid = sense == Sense::Upper ? tr.valid_upper : tr.valid_lower;
    auto& betas = sense == Sense::Upper ? tr.beta_upper : tr.beta_lower;
    auto& weights = sense == Sense::Upper ? tr.v_upper : tr.v_lower;
    std::vector<char> high;  // pattern: true where v_i = gamma
    std::mt19937_64 rng(opt.seed + (sense == Sense::Upper ? 1 : 0));

    for (std::size_t j = 0; j < gammas.size(); ++j) {
      const double gamma = GammaSpec(gammas[j]).gamma;
      if (gamma == 1.0) {
        values.push_back(tr.point);
        valid.push_back(true);
        betas.push_back(tr.beta_hat);
        weights.push_back(VectorXd::Ones(n));
        continue;
      }
      if (high.empty()) {
        // First step away from v = 1: choose each coordinate on its own.
        MatrixXd Ginv;
        VectorXd r;
        normal_equations(VectorXd::Ones(n), Ginv, r);
        high.assign(static_cast<std::size_t>(n), 0);
        for (Index i = 0; i < n; ++i) {
          const VectorXd u = Ginv * B.row(i).transpose();
          double val[2];
          for (int s = 0; s < 2; ++s) {
            const double delta = ((s ? gamma : 1.0 / gamma) - 1.0) * w[i];
            const MatrixXd Gi = Ginv - (delta / (1.0 + delta * B.row(i).dot(u))) * u * u.transpose();
            val[s] = (Gi * (r + delta * y[i] * B.row(i).transpose()))[c];
          }
          high[static_cast<std::size_t>(i)] = sense == Sense::Upper ? val[1] >= val[0] : val[1] <= val[0];
        }
      }

      double best_value = 0.0;
      bool have_best = false;
      VectorXd best_v, best_beta;
      std::vector<char> best_high;
      for (std::size_t o = 0; o < std::max<std::size_t>(1, opt.orderings); ++o) {
        std::vector<Index> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), Index{0});
        if (o > 0) std::shuffle(order.begin(), order.end(), rng);
        VectorXd v(n);
        for (Index i = 0; i < n; ++i) v[i] = high[static_cast<std::size_t>(i)] ? gamma : 1.0 / gamma;
        MatrixXd Ginv;
        VectorXd r;
        normal_equations(v, Ginv, r);
        VectorXd beta = Ginv * r;
        double cur = beta[c];
        for (int pass = 0; pass < opt.max_passes; ++pass) {
          bool flipped = false;
          for (Index i : order) {
            const double vnew = v[i] == gamma ? 1.0 / gamma : gamma;
            const double delta = (vnew - v[i]) * w[i];
            const VectorXd bi = B.row(i).transpose();
            const VectorXd u = Ginv * bi;
            const double denom = 1.0 + delta * bi.dot(u);
            if (!(denom > 0.0)) continue;
            const MatrixXd Gnew = Ginv - (delta / denom) * u * u.transpose();
            const VectorXd rnew = r + (delta * y[i]) * bi;
            const VectorXd bnew = Gnew * rnew;
            if (improves(bnew[c], cur, sense)) {
              v[i] = vnew;
              Ginv = Gnew;
              r = rnew;
              beta = bnew;
              cur = bnew[c];
              flipped = true;
              if (opt.on_accept) opt.on_accept(v, beta);
            }
          }
          if (!flipped) break;
        }
        if (!have_best || improves(cur, best_value, sense)) {
          have_best = true;
          best_value = cur;
          best_v = v;
          best_beta = beta;
          best_high.assign(static_cast<std::size_t>(n), 0);
          for (Index i = 0; i < n; ++i) best_high[static_cast<std::size_t>(i)] = v[i] == gamma;
        }
      }
      high = best_high;
      values.push_back(best_value);
      valid.push_back(true);
      betas.push_back(best_beta);
      weights.push_back(best_v);
    }
  }
  return tr;
}

}  // namespace msmsens

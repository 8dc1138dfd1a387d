#include "msmsens/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>

#include "msmsens/error.hpp"

namespace msmsens::oracle {

namespace {

// Order of filling: largest values first when maximizing.
std::vector<std::size_t> fill_order(const std::vector<double>& f, Goal goal) {
  std::vector<std::size_t> idx(f.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t i, std::size_t j) { return goal == Goal::Max ? f[i] > f[j] : f[i] < f[j]; });
  return idx;
}

// Raise v from lo toward hi in fill order until sum p_i v_i = 1.
std::vector<double> knapsack(const std::vector<double>& f, const std::vector<double>& p, double lo, double hi,
                             Goal goal) {
  std::vector<double> v(f.size(), lo);
  double budget = 1.0 - lo * std::accumulate(p.begin(), p.end(), 0.0);
  for (std::size_t i : fill_order(f, goal)) {
    if (budget <= 0.0) break;
    if (p[i] <= 0.0) continue;
    const double step = std::min(hi - lo, budget / p[i]);
    v[i] = lo + step;
    budget -= step * p[i];
  }
  return v;
}

// Gaussian elimination with partial pivoting on a dense p x p system.
std::vector<double> solve(std::vector<std::vector<double>> m, std::vector<double> b) {
  const std::size_t p = b.size();
  for (std::size_t c = 0; c < p; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < p; ++r)
      if (std::fabs(m[r][c]) > std::fabs(m[piv][c])) piv = r;
    if (std::fabs(m[piv][c]) < 1e-300) throw std::runtime_error("singular system");
    std::swap(m[c], m[piv]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = c + 1; r < p; ++r) {
      const double factor = m[r][c] / m[c][c];
      for (std::size_t k = c; k < p; ++k) m[r][k] -= factor * m[c][k];
      b[r] -= factor * b[c];
    }
  }
  std::vector<double> x(p);
  for (std::size_t c = p; c-- > 0;) {
    double s = b[c];
    for (std::size_t k = c + 1; k < p; ++k) s -= m[c][k] * x[k];
    x[c] = s / m[c][c];
  }
  return x;
}

}  // namespace

OracleResult linear_box_mean(const Eigen::VectorXd& f, double lo, double hi, Goal goal) {
  const std::size_t n = static_cast<std::size_t>(f.size());
  if (n == 0) fail(ErrorKind::UsageError, "oracle needs at least one value");
  std::vector<double> fv(f.data(), f.data() + n), p(n, 1.0 / static_cast<double>(n));
  const auto v = knapsack(fv, p, lo, hi, goal);
  OracleResult r;
  r.method = "lp-knapsack";
  r.certificate = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(n));
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += fv[i] * v[i];
  r.value = s / static_cast<double>(n);
  return r;
}

OracleResult linear_box_mean(const Eigen::VectorXd& f, double gamma, Goal goal) {
  return linear_box_mean(f, 1.0 / gamma, gamma, goal);
}

OracleResult conditional_box_mean(const std::vector<Cell>& cells, double gamma, const std::vector<Goal>& goals) {
  if (goals.size() != cells.size()) fail(ErrorKind::UsageError, "one goal per cell");
  OracleResult r;
  r.method = "lp-knapsack";
  std::vector<double> cert;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const Cell& cell = cells[c];
    if (cell.values.size() != cell.probs.size() || cell.values.empty())
      fail(ErrorKind::UsageError, "cell values and probabilities must match");
    const double total = std::accumulate(cell.probs.begin(), cell.probs.end(), 0.0);
    std::vector<double> p(cell.probs);
    for (double& q : p) q /= total;
    const auto v = knapsack(cell.values, p, 1.0 / gamma, gamma, goals[c]);
    double value = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) value += p[k] * cell.values[k] * v[k];
    r.cell_values.push_back(value);
    r.value += cell.weight * value;
    cert.insert(cert.end(), v.begin(), v.end());
  }
  r.certificate = Eigen::Map<const Eigen::VectorXd>(cert.data(), static_cast<Eigen::Index>(cert.size()));
  return r;
}

OracleResult conditional_box_mean(const std::vector<Cell>& cells, double gamma, Goal goal) {
  return conditional_box_mean(cells, gamma, std::vector<Goal>(cells.size(), goal));
}

double f1_value(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                const Eigen::VectorXd& v, std::size_t coord) {
  const auto n = static_cast<std::size_t>(design.rows()), p = static_cast<std::size_t>(design.cols());
  std::vector<std::vector<double>> m(p, std::vector<double>(p, 0.0));
  std::vector<double> b(p, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double wt = w[ii] * v[ii];
    for (std::size_t r = 0; r < p; ++r) {
      const double hr = design(ii, static_cast<Eigen::Index>(r));
      b[r] += wt * hr * y[ii];
      for (std::size_t c = 0; c < p; ++c) m[r][c] += wt * hr * design(ii, static_cast<Eigen::Index>(c));
    }
  }
  return solve(std::move(m), std::move(b))[coord];
}

OracleResult f1_exhaustive(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                           double gamma, std::size_t coord, Goal goal) {
  const auto n = static_cast<std::size_t>(design.rows());
  if (n > 12) fail(ErrorKind::TooLarge, "exhaustive oracle is limited to n <= 12, got " + std::to_string(n));
  if (coord >= static_cast<std::size_t>(design.cols())) fail(ErrorKind::UsageError, "coordinate out of range");
  const double lo = 1.0 / gamma, hi = gamma, nn = static_cast<double>(n);
  const double tol = 1e-12 * nn * hi;

  OracleResult best;
  best.method = "vertex-enumeration";
  bool found = false;
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  auto consider = [&] {
    ++best.candidates;
    double value;
    try {
      value = f1_value(design, y, w, v, coord);
    } catch (const std::runtime_error&) {
      return;
    }
    if (!found || (goal == Goal::Max ? value > best.value : value < best.value)) {
      best.value = value;
      best.certificate = v;
      found = true;
    }
  };

  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      v[static_cast<Eigen::Index>(i)] = (mask >> i) & 1 ? hi : lo;
      sum += v[static_cast<Eigen::Index>(i)];
    }
    if (std::fabs(sum - nn) <= tol) consider();
    for (std::size_t j = 0; j < n; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      const double keep = v[jj];
      const double vj = nn - (sum - keep);
      if (vj >= lo - tol && vj <= hi + tol) {
        v[jj] = std::clamp(vj, lo, hi);
        consider();
      }
      v[jj] = keep;
    }
  }
  if (!found) fail(ErrorKind::SingularMoment, "no candidate weight vector gave a solvable system");
  return best;
}

}  // namespace msmsens::oracle

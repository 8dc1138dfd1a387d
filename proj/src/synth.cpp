#include "msmsens/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "msmsens/error.hpp"

namespace msmsens {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

const std::vector<std::string> kStatic = {"a1", "f6a", "f6b", "discrete"};
const std::vector<std::string> kPanel = {"panel"};

// Own normal and uniform draws so streams do not depend on the standard
// library's distribution implementations.
struct Rng {
  std::mt19937_64 eng;
  explicit Rng(std::uint64_t seed) : eng(seed) {}
  double uniform() { return (static_cast<double>(eng() >> 11) + 0.5) * 0x1.0p-53; }
  double normal() {
    const double u1 = uniform(), u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }
  bool bernoulli(double p) { return uniform() < p; }
};

}  // namespace

double DgpSpec::param(const std::string& key, double fallback) const {
  const auto it = params.find(key);
  return it == params.end() ? fallback : it->second;
}

std::vector<std::string> dgp_names() {
  auto all = kStatic;
  all.insert(all.end(), kPanel.begin(), kPanel.end());
  return all;
}

bool is_panel_dgp(const std::string& name) { return std::find(kPanel.begin(), kPanel.end(), name) != kPanel.end(); }

Dataset generate(const DgpSpec& spec, std::size_t n) {
  if (std::find(kStatic.begin(), kStatic.end(), spec.name) == kStatic.end()) {
    if (is_panel_dgp(spec.name)) {
      Panel p = generate_panel(spec, n);
      if (p.horizon() == 1) return p.to_static();
      fail(ErrorKind::UsageError, "dgp '" + spec.name + "' is longitudinal; use the panel generator");
    }
    fail(ErrorKind::UnknownDgp, "unknown dgp '" + spec.name + "'");
  }
  Rng rng(spec.seed);
  const Index m = static_cast<Index>(n);
  VectorXd a(m), y(m);
  MatrixXd x;
  std::vector<std::string> names;

  if (spec.name == "a1") {
    const double beta = spec.param("beta", 3.0);
    x.resize(m, 0);
    for (Index i = 0; i < m; ++i) {
      a[i] = rng.normal();
      y[i] = beta * a[i] + rng.normal();
    }
  } else if (spec.name == "f6a") {
    x.resize(m, 1);
    names = {"x"};
    for (Index i = 0; i < m; ++i) {
      x(i, 0) = rng.normal();
      a[i] = x(i, 0) + rng.normal();
      y[i] = 3.0 * a[i] + 2.0 * x(i, 0) + rng.normal();
    }
  } else if (spec.name == "f6b") {
    x.resize(m, 0);
    for (Index i = 0; i < m; ++i) {
      const double u = 0.5 + 0.5 * rng.uniform();
      a[i] = 3.0 - u;
      y[i] = 2.5 * u + 0.25 * rng.normal();
    }
  } else {  // discrete
    const int atoms = static_cast<int>(spec.param("atoms", 0.0));
    x.resize(m, 1);
    names = {"x"};
    for (Index i = 0; i < m; ++i) {
      x(i, 0) = rng.bernoulli(0.5) ? 1.0 : 0.0;
      a[i] = rng.bernoulli(0.3 + 0.4 * x(i, 0)) ? 1.0 : 0.0;
      double e;
      if (atoms >= 2) {
        const auto k = std::min<std::uint64_t>(static_cast<std::uint64_t>(rng.uniform() * atoms), atoms - 1);
        e = -1.0 + 2.0 * static_cast<double>(k) / (atoms - 1);
      } else {
        e = rng.normal();
      }
      y[i] = 1.0 + 2.0 * a[i] + x(i, 0) + e;
    }
  }
  return Dataset(std::move(x), std::move(a), std::move(y), std::move(names));
}

Panel generate_panel(const DgpSpec& spec, std::size_t n) {
  if (!is_panel_dgp(spec.name)) {
    if (std::find(kStatic.begin(), kStatic.end(), spec.name) != kStatic.end())
      fail(ErrorKind::UsageError, "dgp '" + spec.name + "' is static; use the dataset generator");
    fail(ErrorKind::UnknownDgp, "unknown dgp '" + spec.name + "'");
  }
  const double steps = spec.param("steps", 3.0);
  if (!(steps >= 1.0)) fail(ErrorKind::UsageError, "panel dgp needs steps >= 1");
  const auto T = static_cast<std::size_t>(steps);
  const double beta = spec.param("beta", -0.5);
  const double c = spec.param("confounding", 1.0);
  const double noise = spec.param("noise", 1.0);
  const double x_effect = spec.param("x_effect", 0.5);
  Rng rng(spec.seed);
  const int width = static_cast<int>(std::to_string(n).size());
  std::vector<PanelUnit> units(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& u = units[i];
    std::string id = std::to_string(i);
    u.id = "u" + std::string(static_cast<std::size_t>(width) - id.size(), '0') + id;
    double prev = 0.0, sum_a = 0.0, sum_x = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      PanelStep s;
      s.x = VectorXd::Constant(1, 0.5 * prev + rng.normal());
      const double eta = -0.5 + c * s.x[0] + 0.5 * prev;
      s.a = rng.bernoulli(1.0 / (1.0 + std::exp(-eta))) ? 1.0 : 0.0;
      prev = s.a;
      sum_a += s.a;
      sum_x += s.x[0];
      u.steps.push_back(std::move(s));
    }
    u.y = 1.0 + beta * sum_a + x_effect * sum_x + noise * rng.normal();
  }
  return Panel(std::move(units), {"x"});
}

}  // namespace msmsens

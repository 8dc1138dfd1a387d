#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "msmsens/data.hpp"

namespace msmsens {

// Registered generators:
//   a1       A ~ N(0,1), Y = beta A + N(0,1)               (beta = 3; no covariates)
//   f6a      X ~ N(0,1), A = X + N(0,1), Y = 3A + 2X + N(0,1)
//   f6b      U ~ Unif(.5,1), A = 3 - U, Y = 2.5U + .25 N(0,1)   (U is not emitted)
//   discrete X ~ Bern(.5), A ~ Bern(.3 + .4X), Y = 1 + 2A + X + e with e
//            N(0,1), or uniform on `atoms` equally spaced points in [-1,1]
//   panel    T steps: X_t ~ N(.5 a_{t-1}, 1), A_t ~ Bern(logit^-1(-.5 + c X_t
//            + .5 a_{t-1})), Y = 1 + beta sum a_t + k sum X_t + s N(0,1)
//            (beta = -.5, c = `confounding` = 1, T = `steps` = 3, s = `noise` = 1,
//            k = `x_effect` = .5)
struct DgpSpec {
  std::string name;
  std::map<std::string, double> params;
  std::uint64_t seed = 1;

  double param(const std::string& key, double fallback) const;
};

std::vector<std::string> dgp_names();
bool is_panel_dgp(const std::string& name);

Dataset generate(const DgpSpec& spec, std::size_t n);
Panel generate_panel(const DgpSpec& spec, std::size_t n);

}  // namespace msmsens

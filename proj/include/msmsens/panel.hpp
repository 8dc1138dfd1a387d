#pragma once

#include <Eigen/Dense>
#include <vector>

#include "msmsens/data.hpp"
#include "msmsens/homotopy.hpp"
#include "msmsens/msm.hpp"
#include "msmsens/nuisance.hpp"
#include "msmsens/sensitivity.hpp"

namespace msmsens {

struct PanelWeightOptions {
  PropensityRecipe recipe;
  // One fit over all (unit, step) rows with the step index as a feature;
  // otherwise a separate fit per step.
  bool pooled = true;
};

// W_T = prod_s pi(a_s | a_1..a_{s-1}) / prod_s pi(a_s | x_s, a_1..a_{s-1}).
// History enters through the previous treatment and the running sum; with
// T = 1 this is the static stabilized weight.
Eigen::VectorXd panel_weights(const Panel& panel, const PanelWeightOptions& options = {});

MsmSample panel_sample(const Panel& panel, const Eigen::VectorXd& weights);
BetaEstimate panel_fit_msm(const Panel& panel, const MsmModel& model, const Eigen::VectorXd& weights);

enum class PanelBoundMethod { HomotopyF1, ClosedF2, Local };

BoundCurve panel_propensity_bounds(const Panel& panel, const MsmModel& model, const Eigen::VectorXd& weights,
                                   const std::vector<double>& gammas, PanelBoundMethod method, std::size_t coord,
                                   const HomotopyOptions& options = {});

// Smallest grid value whose interval for beta[coord] contains zero, or a
// negative value if none does.
double breakdown_gamma(const BoundCurve& curve);

}  // namespace msmsens

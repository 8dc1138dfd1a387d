#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <span>
#include <vector>

namespace msmsens {

// 1-based rank of the type-1 (inverse-ECDF) tau-quantile among n sorted
// values: ceil(n * tau), clamped to [1, n]. Products within 1e-9 of an
// integer are treated as that integer.
std::size_t type1_rank(std::size_t n, double tau);

// Type-1 empirical quantile: smallest value whose ECDF is >= tau.
double type1_quantile(std::span<const double> values, double tau);
double type1_quantile(const Eigen::VectorXd& values, double tau);

// Indices sorted by (value, index); the fixed tie order keeps every
// threshold rule below deterministic.
std::vector<std::size_t> order_by_value(const Eigen::VectorXd& values);

enum class Sense { Lower, Upper };

// Extreme point of {v : lo <= v_i <= hi, mean(v) = 1} for the objective
// sum_i v_i d_i. For Sense::Upper the largest d receive `hi`, the rest `lo`,
// and the unit sitting at the type-1 quantile of level 1 - p (p the mass
// fraction at `hi`) takes the fractional value that makes the mean exactly
// one. Sense::Lower mirrors this. With lo = 1/gamma, hi = gamma the quantile
// levels are gamma/(1+gamma) and 1/(1+gamma).
Eigen::VectorXd box_threshold_weights(const Eigen::VectorXd& d, double lo, double hi, Sense sense);

}  // namespace msmsens

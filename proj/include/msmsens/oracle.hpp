#pragma once

// Brute-force reference solvers for tests. Kept apart from the library's
// numerical code: nothing here calls into the estimation modules, and the
// small linear solves use their own elimination routine.

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace msmsens::oracle {

enum class Goal { Min, Max };

struct OracleResult {
  double value = 0.0;
  std::string method;  // "lp-knapsack" or "vertex-enumeration"
  Eigen::VectorXd certificate;
  std::vector<double> cell_values;  // conditional oracle only
  std::size_t candidates = 0;       // enumeration only
};

// Optimum of sum_i f_i v_i / n over lo <= v_i <= hi, mean(v) = 1, built by
// filling the mean-one budget in order of f.
OracleResult linear_box_mean(const Eigen::VectorXd& f, double lo, double hi, Goal goal);
OracleResult linear_box_mean(const Eigen::VectorXd& f, double gamma, Goal goal);

// Discrete conditional law of the outcome within one cell.
struct Cell {
  std::vector<double> values;
  std::vector<double> probs;  // normalized internally
  double weight = 1.0;        // combination weight, may be negative
};

// Per-cell optimum of E[Y v | cell] with E[v | cell] = 1 and v in the box,
// combined as sum_c weight_c * value_c. `goals` gives one direction per cell.
OracleResult conditional_box_mean(const std::vector<Cell>& cells, double gamma, const std::vector<Goal>& goals);
OracleResult conditional_box_mean(const std::vector<Cell>& cells, double gamma, Goal goal);

// Best e_coord' beta(v) with beta(v) solving sum_i h_i w_i v_i (y_i - h_i'b) = 0,
// over every v in {1/gamma, gamma}^n with exact mean one and every v with one
// coordinate set to restore mean one. Rows of `design` are h(A_i). n <= 12.
OracleResult f1_exhaustive(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                           double gamma, std::size_t coord, Goal goal);

// e_coord' beta(v) for the weighted least squares above.
double f1_value(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                const Eigen::VectorXd& v, std::size_t coord);

}  // namespace msmsens::oracle

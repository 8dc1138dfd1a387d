#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace msmsens {

// One observation (X, A, Y).
struct Unit {
  Eigen::VectorXd x;
  double a = 0.0;
  double y = 0.0;
};

// Immutable static sample stored column-wise. Covariate dimension may be zero.
class Dataset {
 public:
  Dataset() = default;
  Dataset(Eigen::MatrixXd x, Eigen::VectorXd a, Eigen::VectorXd y,
          std::vector<std::string> covariate_names = {});

  std::size_t size() const { return static_cast<std::size_t>(a_.size()); }
  std::size_t dim() const { return static_cast<std::size_t>(x_.cols()); }

  const Eigen::MatrixXd& x() const { return x_; }
  const Eigen::VectorXd& a() const { return a_; }
  const Eigen::VectorXd& y() const { return y_; }
  const std::vector<std::string>& covariate_names() const { return names_; }

  Unit unit(std::size_t i) const;
  Dataset subset(std::span<const std::size_t> rows) const;

 private:
  Eigen::MatrixXd x_;
  Eigen::VectorXd a_;
  Eigen::VectorXd y_;
  std::vector<std::string> names_;
};

struct PanelStep {
  Eigen::VectorXd x;
  double a = 0.0;
};

// Longitudinal unit: steps ordered t = 1..T and one terminal outcome.
struct PanelUnit {
  std::string id;
  std::vector<PanelStep> steps;
  double y = 0.0;
};

class Panel {
 public:
  Panel() = default;
  explicit Panel(std::vector<PanelUnit> units, std::vector<std::string> covariate_names = {});

  std::size_t size() const { return units_.size(); }
  std::size_t horizon() const { return horizon_; }
  std::size_t dim() const { return dim_; }
  const std::vector<PanelUnit>& units() const { return units_; }
  const std::vector<std::string>& covariate_names() const { return names_; }

  // n x T matrix of treatment trajectories.
  Eigen::MatrixXd treatments() const;
  Eigen::VectorXd outcomes() const;
  Panel subset(std::span<const std::size_t> rows) const;
  // Only valid for T == 1.
  Dataset to_static() const;

 private:
  std::vector<PanelUnit> units_;
  std::vector<std::string> names_;
  std::size_t horizon_ = 0;
  std::size_t dim_ = 0;
};

// Column names for static CSV input. Empty `x` means every column other than
// y and a, in file order.
struct CsvSchema {
  std::string y = "y";
  std::string a = "a";
  std::vector<std::string> x;
};

struct PanelCsvSchema {
  std::string id = "id";
  std::string t = "t";
  std::string y = "y";
  std::string a = "a";
  std::vector<std::string> x;
};

Dataset load_csv(const std::string& path, const CsvSchema& schema = {});
Dataset read_csv(std::istream& in, const CsvSchema& schema = {});
void write_csv(std::ostream& out, const Dataset& data, const CsvSchema& schema = {});
void write_csv(const std::string& path, const Dataset& data, const CsvSchema& schema = {});

Panel load_panel_csv(const std::string& path, const PanelCsvSchema& schema = {});
Panel read_panel_csv(std::istream& in, const PanelCsvSchema& schema = {});
void write_panel_csv(std::ostream& out, const Panel& panel, const PanelCsvSchema& schema = {});

struct FoldAssignment {
  std::size_t k = 0;
  std::vector<std::size_t> fold_of;  // fold index per unit

  std::size_t size() const { return fold_of.size(); }
  std::vector<std::size_t> members(std::size_t fold) const;
  std::vector<std::size_t> complement(std::size_t fold) const;
};

// Balanced random split: fold sizes differ by at most one.
FoldAssignment split_folds(std::size_t n, std::size_t k, std::uint64_t seed);

// Shortest decimal text that parses back to the same double.
std::string format_number(double value);

}  // namespace msmsens

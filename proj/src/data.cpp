#include "msmsens/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "msmsens/error.hpp"

namespace msmsens {

namespace {

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) fail(ErrorKind::ParseError, std::string("non-finite ") + what);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      out.push_back(cell);
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  out.push_back(cell);
  for (auto& s : out) {
    auto b = s.find_first_not_of(" \t");
    auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }
  return out;
}

bool next_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") != std::string::npos) return true;
  }
  return false;
}

double parse_cell(const std::string& cell, std::size_t row, std::size_t col) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (cell.empty() || ec != std::errc() || ptr != last)
    throw ParseError(row, col, "cannot parse '" + cell + "' as a number");
  if (!std::isfinite(v)) throw ParseError(row, col, "non-finite value");
  return v;
}

std::size_t column_index(const std::vector<std::string>& header, const std::string& name) {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) fail(ErrorKind::MissingColumn, "column '" + name + "' not found");
  return static_cast<std::size_t>(it - header.begin());
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open '" + path + "'");
  return in;
}

}  // namespace

Dataset::Dataset(Eigen::MatrixXd x, Eigen::VectorXd a, Eigen::VectorXd y,
                 std::vector<std::string> covariate_names)
    : x_(std::move(x)), a_(std::move(a)), y_(std::move(y)), names_(std::move(covariate_names)) {
  if (a_.size() != y_.size() || x_.rows() != a_.size())
    fail(ErrorKind::ParseError, "inconsistent column lengths");
  if (a_.size() == 0) fail(ErrorKind::EmptyFile, "dataset has no rows");
  if (names_.empty()) {
    for (Eigen::Index j = 0; j < x_.cols(); ++j) names_.push_back("x" + std::to_string(j + 1));
  }
  if (names_.size() != static_cast<std::size_t>(x_.cols()))
    fail(ErrorKind::ParseError, "covariate names do not match covariate columns");
  for (Eigen::Index i = 0; i < a_.size(); ++i) {
    require_finite(a_[i], "treatment");
    require_finite(y_[i], "outcome");
    for (Eigen::Index j = 0; j < x_.cols(); ++j) require_finite(x_(i, j), "covariate");
  }
}

Unit Dataset::unit(std::size_t i) const {
  return Unit{x_.row(static_cast<Eigen::Index>(i)).transpose(), a_[static_cast<Eigen::Index>(i)],
              y_[static_cast<Eigen::Index>(i)]};
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  const auto m = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd x(m, x_.cols());
  Eigen::VectorXd a(m), y(m);
  for (Eigen::Index r = 0; r < m; ++r) {
    const auto i = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)]);
    x.row(r) = x_.row(i);
    a[r] = a_[i];
    y[r] = y_[i];
  }
  return Dataset(std::move(x), std::move(a), std::move(y), names_);
}

Panel::Panel(std::vector<PanelUnit> units, std::vector<std::string> covariate_names)
    : units_(std::move(units)), names_(std::move(covariate_names)) {
  if (units_.empty()) fail(ErrorKind::EmptyFile, "panel has no units");
  horizon_ = units_.front().steps.size();
  if (horizon_ == 0) fail(ErrorKind::RaggedPanel, "unit '" + units_.front().id + "' has no steps");
  dim_ = static_cast<std::size_t>(units_.front().steps.front().x.size());
  for (const auto& u : units_) {
    if (u.steps.size() != horizon_)
      fail(ErrorKind::RaggedPanel, "unit '" + u.id + "' has " + std::to_string(u.steps.size()) +
                                       " steps, expected " + std::to_string(horizon_));
    require_finite(u.y, "outcome");
    for (const auto& s : u.steps) {
      if (static_cast<std::size_t>(s.x.size()) != dim_)
        fail(ErrorKind::RaggedPanel, "unit '" + u.id + "' has inconsistent covariate dimension");
      require_finite(s.a, "treatment");
      for (Eigen::Index j = 0; j < s.x.size(); ++j) require_finite(s.x[j], "covariate");
    }
  }
  if (names_.empty())
    for (std::size_t j = 0; j < dim_; ++j) names_.push_back("x" + std::to_string(j + 1));
}

Eigen::MatrixXd Panel::treatments() const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(horizon_));
  for (std::size_t i = 0; i < size(); ++i)
    for (std::size_t t = 0; t < horizon_; ++t)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = units_[i].steps[t].a;
  return out;
}

Eigen::VectorXd Panel::outcomes() const {
  Eigen::VectorXd y(static_cast<Eigen::Index>(size()));
  for (std::size_t i = 0; i < size(); ++i) y[static_cast<Eigen::Index>(i)] = units_[i].y;
  return y;
}

Panel Panel::subset(std::span<const std::size_t> rows) const {
  std::vector<PanelUnit> sel;
  sel.reserve(rows.size());
  for (auto i : rows) sel.push_back(units_.at(i));
  return Panel(std::move(sel), names_);
}

Dataset Panel::to_static() const {
  if (horizon_ != 1) fail(ErrorKind::RaggedPanel, "static view requires a single time step");
  const auto n = static_cast<Eigen::Index>(size());
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(dim_));
  Eigen::VectorXd a(n), y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& u = units_[static_cast<std::size_t>(i)];
    if (dim_ > 0) x.row(i) = u.steps[0].x.transpose();
    a[i] = u.steps[0].a;
    y[i] = u.y;
  }
  return Dataset(std::move(x), std::move(a), std::move(y), names_);
}

Dataset read_csv(std::istream& in, const CsvSchema& schema) {
  std::string line;
  if (!next_line(in, line)) fail(ErrorKind::EmptyFile, "no header row");
  const auto header = split_line(line);
  const auto iy = column_index(header, schema.y);
  const auto ia = column_index(header, schema.a);
  std::vector<std::size_t> ix;
  std::vector<std::string> names;
  if (schema.x.empty()) {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (j != iy && j != ia) {
        ix.push_back(j);
        names.push_back(header[j]);
      }
  } else {
    for (const auto& name : schema.x) {
      ix.push_back(column_index(header, name));
      names.push_back(name);
    }
  }

  std::vector<double> a, y, x;
  std::size_t row = 0;
  while (next_line(in, line)) {
    const auto cells = split_line(line);
    if (cells.size() != header.size())
      throw ParseError(row, std::min(cells.size(), header.size()),
                       "expected " + std::to_string(header.size()) + " fields, found " +
                           std::to_string(cells.size()));
    y.push_back(parse_cell(cells[iy], row, iy));
    a.push_back(parse_cell(cells[ia], row, ia));
    for (auto j : ix) x.push_back(parse_cell(cells[j], row, j));
    ++row;
  }
  if (row == 0) fail(ErrorKind::EmptyFile, "no data rows");

  const auto n = static_cast<Eigen::Index>(row);
  const auto d = static_cast<Eigen::Index>(ix.size());
  Eigen::MatrixXd X(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) X(i, j) = x[static_cast<std::size_t>(i * d + j)];
  return Dataset(std::move(X), Eigen::Map<Eigen::VectorXd>(a.data(), n),
                 Eigen::Map<Eigen::VectorXd>(y.data(), n), std::move(names));
}

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
  auto in = open_input(path);
  return read_csv(in, schema);
}

void write_csv(std::ostream& out, const Dataset& data, const CsvSchema& schema) {
  const auto& names = schema.x.empty() ? data.covariate_names() : schema.x;
  if (names.size() != data.dim()) fail(ErrorKind::MissingColumn, "covariate names do not match data");
  out << schema.y << ',' << schema.a;
  for (const auto& nm : names) out << ',' << nm;
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out << format_number(data.y()[r]) << ',' << format_number(data.a()[r]);
    for (Eigen::Index j = 0; j < data.x().cols(); ++j) out << ',' << format_number(data.x()(r, j));
    out << '\n';
  }
}

void write_csv(const std::string& path, const Dataset& data, const CsvSchema& schema) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::IoError, "cannot write '" + path + "'");
  write_csv(out, data, schema);
}

Panel read_panel_csv(std::istream& in, const PanelCsvSchema& schema) {
  std::string line;
  if (!next_line(in, line)) fail(ErrorKind::EmptyFile, "no header row");
  const auto header = split_line(line);
  const auto iid = column_index(header, schema.id);
  const auto it = column_index(header, schema.t);
  const auto iy = column_index(header, schema.y);
  const auto ia = column_index(header, schema.a);
  std::vector<std::size_t> ix;
  std::vector<std::string> names;
  if (schema.x.empty()) {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (j != iid && j != it && j != iy && j != ia) {
        ix.push_back(j);
        names.push_back(header[j]);
      }
  } else {
    for (const auto& name : schema.x) {
      ix.push_back(column_index(header, name));
      names.push_back(name);
    }
  }

  struct Row {
    long t;
    double y;
    PanelStep step;
  };
  std::map<std::string, std::vector<Row>> by_id;
  std::size_t row = 0;
  while (next_line(in, line)) {
    const auto cells = split_line(line);
    if (cells.size() != header.size())
      throw ParseError(row, std::min(cells.size(), header.size()), "wrong number of fields");
    const double tv = parse_cell(cells[it], row, it);
    if (tv != std::floor(tv)) throw ParseError(row, it, "time index must be an integer");
    Row r{static_cast<long>(tv), parse_cell(cells[iy], row, iy), {}};
    r.step.a = parse_cell(cells[ia], row, ia);
    r.step.x.resize(static_cast<Eigen::Index>(ix.size()));
    for (std::size_t j = 0; j < ix.size(); ++j)
      r.step.x[static_cast<Eigen::Index>(j)] = parse_cell(cells[ix[j]], row, ix[j]);
    by_id[cells[iid]].push_back(std::move(r));
    ++row;
  }
  if (row == 0) fail(ErrorKind::EmptyFile, "no data rows");

  std::vector<PanelUnit> units;
  std::size_t horizon = 0;
  for (auto& [id, rows] : by_id) {
    std::sort(rows.begin(), rows.end(), [](const Row& l, const Row& r) { return l.t < r.t; });
    if (horizon == 0) horizon = rows.size();
    if (rows.size() != horizon)
      fail(ErrorKind::RaggedPanel, "unit '" + id + "' has " + std::to_string(rows.size()) +
                                       " time steps, expected " + std::to_string(horizon));
    PanelUnit u;
    u.id = id;
    u.y = rows.front().y;
    for (std::size_t s = 0; s < rows.size(); ++s) {
      if (rows[s].t != static_cast<long>(s + 1))
        fail(ErrorKind::RaggedPanel, "unit '" + id + "' does not cover t = 1.." + std::to_string(horizon));
      if (rows[s].y != u.y)
        fail(ErrorKind::RaggedPanel, "outcome varies within unit '" + id + "'");
      u.steps.push_back(std::move(rows[s].step));
    }
    units.push_back(std::move(u));
  }
  return Panel(std::move(units), std::move(names));
}

Panel load_panel_csv(const std::string& path, const PanelCsvSchema& schema) {
  auto in = open_input(path);
  return read_panel_csv(in, schema);
}

void write_panel_csv(std::ostream& out, const Panel& panel, const PanelCsvSchema& schema) {
  const auto& names = schema.x.empty() ? panel.covariate_names() : schema.x;
  out << schema.id << ',' << schema.t << ',' << schema.y << ',' << schema.a;
  for (const auto& nm : names) out << ',' << nm;
  out << '\n';
  for (const auto& u : panel.units()) {
    for (std::size_t s = 0; s < u.steps.size(); ++s) {
      out << u.id << ',' << (s + 1) << ',' << format_number(u.y) << ',' << format_number(u.steps[s].a);
      for (Eigen::Index j = 0; j < u.steps[s].x.size(); ++j) out << ',' << format_number(u.steps[s].x[j]);
      out << '\n';
    }
  }
}

std::vector<std::size_t> FoldAssignment::members(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] == fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldAssignment::complement(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] != fold) out.push_back(i);
  return out;
}

FoldAssignment split_folds(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2 || k > n)
    fail(ErrorKind::BadFoldCount, "need 2 <= k <= n, got k = " + std::to_string(k) +
                                      ", n = " + std::to_string(n));
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  FoldAssignment out{k, std::vector<std::size_t>(n)};
  for (std::size_t p = 0; p < n; ++p) out.fold_of[perm[p]] = p % k;
  return out;
}

std::string format_number(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

}  // namespace msmsens

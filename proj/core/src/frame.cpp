#include "balsam/frame.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace balsam {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

double parse_number(const std::string& cell, const std::string& column, std::size_t row) {
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end) {
    throw std::invalid_argument("non-numeric cell '" + cell + "' in column '" + column +
                                "' at data row " + std::to_string(row));
  }
  return value;
}

std::string format_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

PopulationFrame::PopulationFrame(std::vector<std::string> ids, Eigen::MatrixXd aux,
                                 std::vector<std::string> aux_names,
                                 std::optional<Eigen::MatrixXd> coords,
                                 std::vector<std::string> coord_names,
                                 std::optional<std::vector<std::string>> strata,
                                 std::optional<Eigen::VectorXd> sigma)
    : ids_(std::move(ids)),
      aux_(std::move(aux)),
      aux_names_(std::move(aux_names)),
      coords_(std::move(coords)),
      coord_names_(std::move(coord_names)),
      sigma_(std::move(sigma)) {
  const auto n = static_cast<Eigen::Index>(ids_.size());
  if (n < 1) throw std::invalid_argument("population frame must contain at least one unit");
  if (aux_.rows() != n) throw std::invalid_argument("aux row count does not match unit count");
  if (!aux_.allFinite()) throw std::invalid_argument("aux contains non-finite values");

  std::unordered_set<std::string> seen;
  for (const auto& id : ids_) {
    if (!seen.insert(id).second) throw std::invalid_argument("duplicate unit id '" + id + "'");
  }

  if (aux_names_.empty()) {
    for (Eigen::Index j = 0; j < aux_.cols(); ++j) aux_names_.push_back("x" + std::to_string(j + 1));
  }
  if (static_cast<Eigen::Index>(aux_names_.size()) != aux_.cols()) {
    throw std::invalid_argument("aux name count does not match aux column count");
  }

  if (coords_) {
    if (coords_->rows() != n) throw std::invalid_argument("coords row count does not match unit count");
    if (!coords_->allFinite()) throw std::invalid_argument("coords contain non-finite values");
    if (coord_names_.empty()) {
      for (Eigen::Index j = 0; j < coords_->cols(); ++j) coord_names_.push_back("c" + std::to_string(j + 1));
    }
    if (static_cast<Eigen::Index>(coord_names_.size()) != coords_->cols()) {
      throw std::invalid_argument("coord name count does not match coord column count");
    }
  }

  if (strata) {
    if (static_cast<Eigen::Index>(strata->size()) != n) {
      throw std::invalid_argument("stratum label count does not match unit count");
    }
    std::unordered_map<std::string, int> label_index;
    stratum_index_.resize(ids_.size());
    for (std::size_t k = 0; k < strata->size(); ++k) {
      const std::string& label = (*strata)[k];
      auto it = label_index.find(label);
      if (it == label_index.end()) {
        it = label_index.emplace(label, static_cast<int>(stratum_labels_.size())).first;
        stratum_labels_.push_back(label);
        stratum_sizes_.push_back(0);
        stratum_members_.emplace_back();
      }
      stratum_index_[k] = it->second;
      stratum_sizes_[it->second] += 1;
      stratum_members_[it->second].push_back(static_cast<int>(k));
    }
  }

  if (sigma_) {
    if (sigma_->size() != n) throw std::invalid_argument("sigma length does not match unit count");
    if (!sigma_->allFinite() || (sigma_->array() < 0.0).any()) {
      throw std::invalid_argument("sigma must be elementwise nonnegative and finite");
    }
    if (sigma_->isZero(0.0)) throw std::invalid_argument("sigma must not be all zero");
  }
}

const Eigen::MatrixXd& PopulationFrame::coords() const {
  if (!coords_) throw std::logic_error("frame has no coordinates");
  return *coords_;
}

const Eigen::VectorXd& PopulationFrame::sigma() const {
  if (!sigma_) throw std::logic_error("frame has no dispersion column");
  return *sigma_;
}

Eigen::VectorXd PopulationFrame::aux_column(const std::string& name) const {
  for (std::size_t j = 0; j < aux_names_.size(); ++j) {
    if (aux_names_[j] == name) return aux_.col(static_cast<Eigen::Index>(j));
  }
  throw std::invalid_argument("unknown aux column '" + name + "'");
}

PopulationFrame load_frame(std::istream& source, const FrameSchema& schema) {
  std::string line;
  if (!std::getline(source, line)) throw std::invalid_argument("empty table");
  const std::vector<std::string> header = split_csv_line(line);

  auto column_of = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::invalid_argument("column '" + name + "' not found in header");
    return static_cast<std::size_t>(it - header.begin());
  };

  const std::size_t id_col = column_of(schema.id_column);
  std::vector<std::size_t> aux_cols, coord_cols;
  for (const auto& c : schema.aux_columns) aux_cols.push_back(column_of(c));
  for (const auto& c : schema.coord_columns) coord_cols.push_back(column_of(c));
  std::optional<std::size_t> stratum_col, sigma_col;
  if (schema.stratum_column) stratum_col = column_of(*schema.stratum_column);
  if (schema.sigma_column) sigma_col = column_of(*schema.sigma_column);

  std::vector<std::string> ids;
  std::vector<std::vector<double>> aux_rows, coord_rows;
  std::vector<std::string> strata;
  std::vector<double> sigma;

  std::size_t row = 0;
  while (std::getline(source, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw std::invalid_argument("row " + std::to_string(row) + " has " +
                                  std::to_string(cells.size()) + " cells, expected " +
                                  std::to_string(header.size()));
    }
    ids.push_back(cells[id_col]);
    std::vector<double> a;
    for (std::size_t j : aux_cols) a.push_back(parse_number(cells[j], header[j], row));
    aux_rows.push_back(std::move(a));
    if (!coord_cols.empty()) {
      std::vector<double> c;
      for (std::size_t j : coord_cols) c.push_back(parse_number(cells[j], header[j], row));
      coord_rows.push_back(std::move(c));
    }
    if (stratum_col) strata.push_back(cells[*stratum_col]);
    if (sigma_col) sigma.push_back(parse_number(cells[*sigma_col], header[*sigma_col], row));
  }
  if (ids.empty()) throw std::invalid_argument("empty table");

  const auto n = static_cast<Eigen::Index>(ids.size());
  Eigen::MatrixXd aux(n, static_cast<Eigen::Index>(aux_cols.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < aux.cols(); ++j) aux(i, j) = aux_rows[i][j];
  }

  std::optional<Eigen::MatrixXd> coords;
  if (!coord_cols.empty()) {
    coords.emplace(n, static_cast<Eigen::Index>(coord_cols.size()));
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < coords->cols(); ++j) (*coords)(i, j) = coord_rows[i][j];
    }
  }

  std::optional<Eigen::VectorXd> sig;
  if (sigma_col) sig = Eigen::Map<Eigen::VectorXd>(sigma.data(), n);

  return PopulationFrame(std::move(ids), std::move(aux), schema.aux_columns, std::move(coords),
                         schema.coord_columns,
                         stratum_col ? std::optional(std::move(strata)) : std::nullopt,
                         std::move(sig));
}

void write_frame(std::ostream& out, const PopulationFrame& frame) {
  out << "id";
  for (const auto& name : frame.aux_names()) out << ',' << name;
  if (frame.has_coords()) {
    for (const auto& name : frame.coord_names()) out << ',' << name;
  }
  if (frame.has_strata()) out << ",stratum";
  if (frame.has_sigma()) out << ",sigma";
  out << '\n';

  for (std::size_t k = 0; k < frame.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    out << frame.ids()[k];
    for (Eigen::Index j = 0; j < frame.aux_count(); ++j) out << ',' << format_full(frame.aux()(i, j));
    if (frame.has_coords()) {
      for (Eigen::Index j = 0; j < frame.coords().cols(); ++j) out << ',' << format_full(frame.coords()(i, j));
    }
    if (frame.has_strata()) out << ',' << frame.stratum_labels()[frame.stratum_of(k)];
    if (frame.has_sigma()) out << ',' << format_full(frame.sigma()[i]);
    out << '\n';
  }
}

PopulationFrame grid_frame(int side, GridAux aux_spec) {
  if (side < 1) throw std::invalid_argument("grid side must be at least 1");
  const auto n = static_cast<Eigen::Index>(side) * side;

  std::vector<std::string> ids(static_cast<std::size_t>(n));
  Eigen::MatrixXd coords(n, 2);
  for (Eigen::Index k = 0; k < n; ++k) {
    coords(k, 0) = static_cast<double>(k / side);
    coords(k, 1) = static_cast<double>(k % side);
    ids[static_cast<std::size_t>(k)] = std::to_string(k);
  }

  Eigen::MatrixXd aux;
  std::vector<std::string> aux_names;
  if (aux_spec == GridAux::constant_one) {
    aux = Eigen::MatrixXd::Ones(n, 1);
    aux_names = {"one"};
  } else {
    aux.resize(n, 3);
    aux.col(0).setOnes();
    aux.col(1) = coords.col(0);
    aux.col(2) = coords.col(1);
    aux_names = {"one", "x", "y"};
  }

  return PopulationFrame(std::move(ids), std::move(aux), std::move(aux_names), std::move(coords),
                         {"x", "y"});
}

InclusionProbabilities::InclusionProbabilities(Eigen::VectorXd pi) : pi_(std::move(pi)) {
  if (pi_.size() < 1) throw std::invalid_argument("inclusion probabilities must be nonempty");
  if (!pi_.allFinite() || (pi_.array() < 0.0).any() || (pi_.array() > 1.0).any()) {
    throw std::invalid_argument("inclusion probabilities must lie in [0, 1]");
  }
  expected_size_ = pi_.sum();
}

InclusionProbabilities InclusionProbabilities::equal(std::size_t n_units, double value) {
  return InclusionProbabilities(
      Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n_units), value));
}

bool InclusionProbabilities::is_integer_size(double tol) const {
  return std::abs(expected_size_ - std::round(expected_size_)) <= tol;
}

int InclusionProbabilities::integer_size(double tol) const {
  if (!is_integer_size(tol)) {
    throw std::invalid_argument("expected size " + std::to_string(expected_size_) +
                                " is not integral");
  }
  return static_cast<int>(std::lround(expected_size_));
}

Sample::Sample(std::vector<int> indices, std::size_t population_size)
    : indices_(std::move(indices)), population_size_(population_size) {
  std::sort(indices_.begin(), indices_.end());
  for (std::size_t i = 0; i < indices_.size(); ++i) {
    if (indices_[i] < 0 || static_cast<std::size_t>(indices_[i]) >= population_size_) {
      throw std::invalid_argument("sample index out of range");
    }
    if (i > 0 && indices_[i] == indices_[i - 1]) {
      throw std::invalid_argument("sample contains a duplicate index");
    }
  }
}

Sample Sample::from_indicator(const std::vector<std::uint8_t>& indicator) {
  std::vector<int> idx;
  for (std::size_t k = 0; k < indicator.size(); ++k) {
    if (indicator[k]) idx.push_back(static_cast<int>(k));
  }
  return Sample(std::move(idx), indicator.size());
}

std::vector<std::uint8_t> Sample::indicator() const {
  std::vector<std::uint8_t> ind(population_size_, 0);
  for (int k : indices_) ind[static_cast<std::size_t>(k)] = 1;
  return ind;
}

bool Sample::contains(int k) const {
  return std::binary_search(indices_.begin(), indices_.end(), k);
}

}  // namespace balsam

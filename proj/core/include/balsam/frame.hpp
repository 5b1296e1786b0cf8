#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace balsam {

/// Maps columns of a delimited input file onto frame roles. Every column
/// named here must exist in the header; unnamed columns are ignored.
struct FrameSchema {
  std::string id_column;
  std::vector<std::string> aux_columns;
  std::vector<std::string> coord_columns;
  std::optional<std::string> stratum_column;
  std::optional<std::string> sigma_column;
};

/// The population register: unit labels, auxiliary matrix, optional spatial
/// coordinates, strata and per-unit model dispersions. Immutable after
/// construction and safe to share across threads. Units are addressed by
/// their row index 0..N-1 everywhere; ids are labels only.
class PopulationFrame {
 public:
  PopulationFrame(std::vector<std::string> ids, Eigen::MatrixXd aux,
                  std::vector<std::string> aux_names = {},
                  std::optional<Eigen::MatrixXd> coords = std::nullopt,
                  std::vector<std::string> coord_names = {},
                  std::optional<std::vector<std::string>> strata = std::nullopt,
                  std::optional<Eigen::VectorXd> sigma = std::nullopt);

  std::size_t size() const { return ids_.size(); }
  Eigen::Index aux_count() const { return aux_.cols(); }

  const std::vector<std::string>& ids() const { return ids_; }
  const Eigen::MatrixXd& aux() const { return aux_; }
  const std::vector<std::string>& aux_names() const { return aux_names_; }

  bool has_coords() const { return coords_.has_value(); }
  const Eigen::MatrixXd& coords() const;
  const std::vector<std::string>& coord_names() const { return coord_names_; }

  bool has_strata() const { return !stratum_index_.empty(); }
  int stratum_count() const { return static_cast<int>(stratum_labels_.size()); }
  /// Stratum index of unit k (labels are mapped in order of first appearance).
  int stratum_of(std::size_t k) const { return stratum_index_.at(k); }
  const std::vector<std::string>& stratum_labels() const { return stratum_labels_; }
  const std::vector<int>& stratum_sizes() const { return stratum_sizes_; }
  /// Unit indices of stratum h, in row order.
  const std::vector<int>& stratum_members(int h) const { return stratum_members_.at(h); }

  bool has_sigma() const { return sigma_.has_value(); }
  const Eigen::VectorXd& sigma() const;

  /// Column of aux() by name; throws if the name is unknown.
  Eigen::VectorXd aux_column(const std::string& name) const;

 private:
  std::vector<std::string> ids_;
  Eigen::MatrixXd aux_;
  std::vector<std::string> aux_names_;
  std::optional<Eigen::MatrixXd> coords_;
  std::vector<std::string> coord_names_;
  std::vector<int> stratum_index_;
  std::vector<std::string> stratum_labels_;
  std::vector<int> stratum_sizes_;
  std::vector<std::vector<int>> stratum_members_;
  std::optional<Eigen::VectorXd> sigma_;
};

/// Parse a comma-delimited table with a header row into a frame.
/// Row order defines unit indexing. Rejects duplicate ids, non-numeric
/// cells in numeric roles and empty tables.
PopulationFrame load_frame(std::istream& source, const FrameSchema& schema);

/// Write a frame as CSV with 17 significant digits so that load_frame on the
/// produced text reproduces every value bit-exactly. Column names follow the
/// frame's own aux/coord names; the written header doubles as a schema.
void write_frame(std::ostream& out, const PopulationFrame& frame);

enum class GridAux {
  constant_one,    ///< single auxiliary column of ones
  coords_and_one,  ///< columns (1, x, y): fixed size plus coordinate balance
};

/// Regular side x side lattice population with coordinates (x, y) in
/// 0..side-1 and unit k at (k / side, k % side).
PopulationFrame grid_frame(int side, GridAux aux_spec = GridAux::coords_and_one);

/// First-order inclusion probabilities with expected-size bookkeeping.
class InclusionProbabilities {
 public:
  explicit InclusionProbabilities(Eigen::VectorXd pi);

  static InclusionProbabilities equal(std::size_t n_units, double value);

  std::size_t size() const { return static_cast<std::size_t>(pi_.size()); }
  const Eigen::VectorXd& values() const { return pi_; }
  double operator[](std::size_t k) const { return pi_[static_cast<Eigen::Index>(k)]; }
  double expected_size() const { return expected_size_; }

  /// True when the expected size is integral within tol, as required by
  /// fixed-size designs.
  bool is_integer_size(double tol = 1e-9) const;
  /// Expected size rounded to the nearest integer; throws if not integral.
  int integer_size(double tol = 1e-9) const;

 private:
  Eigen::VectorXd pi_;
  double expected_size_;
};

/// A drawn subset of the population, stored as a sorted index list.
class Sample {
 public:
  Sample(std::vector<int> indices, std::size_t population_size);
  static Sample from_indicator(const std::vector<std::uint8_t>& indicator);

  std::size_t size() const { return indices_.size(); }
  std::size_t population_size() const { return population_size_; }
  const std::vector<int>& indices() const { return indices_; }
  std::vector<std::uint8_t> indicator() const;
  bool contains(int k) const;

  bool operator==(const Sample& other) const {
    return population_size_ == other.population_size_ && indices_ == other.indices_;
  }

 private:
  std::vector<int> indices_;
  std::size_t population_size_;
};

}  // namespace balsam

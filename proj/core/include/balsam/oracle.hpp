#pragma once

#include <Eigen/Dense>
#include <functional>
#include <iosfwd>
#include <optional>
#include <variant>
#include <vector>

#include "balsam/basic_designs.hpp"
#include "balsam/cps.hpp"
#include "balsam/estimators.hpp"
#include "balsam/frame.hpp"
#include "balsam/random.hpp"

namespace balsam {

/// Explicit design distribution for tiny populations: the ground truth that
/// sampling algorithms and estimators are checked against. The support is
/// kept in lexicographic order of indicator vectors so emitted tables are
/// diff-stable.
struct EnumeratedDesign {
  struct Atom {
    Sample sample;
    double probability;
  };
  std::vector<Atom> support;
  std::optional<int> fixed_size;

  std::size_t population_size() const;
  /// Validates nonnegativity, distinctness and total probability within tol.
  void validate(double tol = 1e-12) const;
};

struct BernoulliDesign {
  double pi;
};
struct PoissonDesign {
  Eigen::VectorXd pi;
};
struct SrsDesign {
  int n;
};
struct StratifiedDesign {
  Allocation alloc;
};
struct CpsDesign {
  CpsParameters params;
};

using DesignSpec =
    std::variant<BernoulliDesign, PoissonDesign, SrsDesign, StratifiedDesign, CpsDesign>;

/// Exhaustive enumeration of a closed-form design; requires N <= 20.
EnumeratedDesign enumerate_design(const DesignSpec& spec, const PopulationFrame& frame);

/// Frequency table over R independent replications of an arbitrary sampler,
/// with streams derived from the master seed.
EnumeratedDesign empirical_design(const std::function<Sample(Rng&)>& sampler,
                                  std::size_t n_units, int replications,
                                  std::uint64_t master_seed);

Eigen::VectorXd inclusion_probabilities(const EnumeratedDesign& design);
Eigen::MatrixXd joint_inclusion(const EnumeratedDesign& design);
SecondOrderStructure second_order(const EnumeratedDesign& design);

/// Expectation of a sample statistic under the enumerated design.
double expectation(const EnumeratedDesign& design,
                   const std::function<double(const Sample&)>& statistic);

/// Total variation distance between two designs on the same population.
double total_variation(const EnumeratedDesign& a, const EnumeratedDesign& b);

/// Emit the support as CSV rows "indicator,probability" for golden files.
void write_support_csv(std::ostream& out, const EnumeratedDesign& design);

}  // namespace balsam

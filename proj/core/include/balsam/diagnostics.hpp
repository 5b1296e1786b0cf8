#pragma once

#include <Eigen/Dense>
#include <functional>

#include "balsam/frame.hpp"
#include "balsam/oracle.hpp"
#include "balsam/random.hpp"

namespace balsam {

using SamplerFn = std::function<Sample(Rng&)>;

/// Entropy I(p) = -sum p(s) log p(s) of an enumerated design, natural log,
/// 0 log 0 = 0.
double design_entropy(const EnumeratedDesign& design);

/// Voronoi-based spatial balance. Every population unit is assigned to the
/// nearest sampled unit (ties to the smallest sampled index); cell_mass
/// holds the inclusion-probability mass of each sampled unit's cell.
struct SpatialBalanceResult {
  Eigen::VectorXd cell_mass;  ///< one entry per sampled unit, sums to sum(pi)
  double index = 0.0;
};

/// The spatial balance index: mean of (v_i - 1)^2 over cells when the
/// probability mass equals the sample size (so ideal cells carry mass one),
/// otherwise the plain variance of the cell masses.
SpatialBalanceResult spatial_balance_index(const PopulationFrame& frame, const Sample& s,
                                           const InclusionProbabilities& pi);

struct InclusionCheck {
  Eigen::VectorXd frequency;       ///< empirical inclusion frequency per unit
  Eigen::VectorXd standard_error;  ///< binomial SE of the target pi at R reps
  double max_studentized = 0.0;    ///< max |freq - pi| / SE over units
  int replications = 0;
};

/// Empirical inclusion frequencies over R replications with streams derived
/// from (master_seed, replicate). Deterministic for a given master seed
/// regardless of the thread count.
InclusionCheck monte_carlo_inclusion(const SamplerFn& sampler, const PopulationFrame& frame,
                                     int replications, std::uint64_t master_seed,
                                     const InclusionProbabilities& target_pi, int threads = 0);

struct DeltaEstimate {
  Eigen::MatrixXd delta;           ///< empirical pi_kl - pi_k pi_l (diagonal pi(1-pi))
  Eigen::MatrixXd standard_error;  ///< jackknife-over-replications SE
  int replications = 0;
};

/// Empirical second-order behaviour of a sampler; negative off-diagonal
/// entries indicate repulsion between the two units.
DeltaEstimate estimate_delta(const SamplerFn& sampler, const PopulationFrame& frame,
                             int replications, std::uint64_t master_seed, int threads = 0);

}  // namespace balsam

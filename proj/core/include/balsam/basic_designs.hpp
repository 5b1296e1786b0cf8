#pragma once

#include <Eigen/Dense>
#include <vector>

#include "balsam/frame.hpp"
#include "balsam/random.hpp"

namespace balsam {

/// Per-stratum sample sizes. take_all marks strata whose optimal allocation
/// exceeded the stratum size and were therefore fully enumerated.
struct Allocation {
  std::vector<int> size_per_stratum;
  std::vector<bool> take_all;

  int total() const;
};

/// Every unit included independently with the same probability pi.
Sample bernoulli_sample(const PopulationFrame& frame, double pi, Rng& rng);

/// Independent inclusions with per-unit probabilities (joint inclusion
/// probabilities factorize).
Sample poisson_sample(const PopulationFrame& frame, const InclusionProbabilities& pi, Rng& rng);

/// Simple random sampling without replacement: uniform over all size-n
/// subsets, drawn by partial Fisher-Yates selection.
Sample srs_sample(const PopulationFrame& frame, int n, Rng& rng);

/// n_h proportional to stratum size, rounded by largest remainder
/// (ties to the lowest stratum index) so the sizes sum to n exactly.
Allocation proportional_allocation(const PopulationFrame& frame, int n);

/// Neyman allocation n_h = n N_h V_h / sum N_l V_l from per-stratum
/// dispersions V_h. Strata whose raw allocation exceeds N_h become take-all
/// and the allocation is recomputed over the rest until a fixed point.
/// After largest-remainder rounding, single-unit exchanges that strictly
/// decrease the stratified variance objective are applied, which makes the
/// returned integer allocation optimal for this separable convex objective.
Allocation neyman_allocation(const PopulationFrame& frame, int n,
                             const Eigen::VectorXd& stratum_sd);

/// Same, with V_h computed from a per-unit variable y as the within-stratum
/// standard deviation (denominator N_h - 1; zero for singleton strata).
Allocation neyman_allocation_from_y(const PopulationFrame& frame, int n,
                                    const Eigen::VectorXd& y);

/// The variance objective minimized by the Neyman allocation,
/// sum_h N_h^2 V_h^2 (1/n_h - 1/N_h); infinite if some n_h = 0 with V_h > 0.
double stratified_variance_objective(const std::vector<int>& stratum_sizes,
                                     const Eigen::VectorXd& stratum_sd,
                                     const std::vector<int>& allocation);

/// Independent SRS of size n_h within each stratum.
Sample stratified_srs_sample(const PopulationFrame& frame, const Allocation& alloc, Rng& rng);

/// pi_k = n_h / N_h for units of stratum h.
InclusionProbabilities stratified_pi(const PopulationFrame& frame, const Allocation& alloc);

/// Inclusion probabilities proportional to per-unit dispersions,
/// pi_k = n sigma_k / sum sigma, with components capped at 1 and the
/// remainder redistributed until all lie in [0, 1]. The result sums to n.
InclusionProbabilities optimal_inclusion_probabilities(const Eigen::VectorXd& sigma, int n);

/// Equal-probability spatially systematic sample on a lattice frame:
/// a regular sub-lattice of exactly n points with a uniform random offset,
/// wrapped on the torus of the lattice extent, each point mapped to the
/// nearest unit (ties toward the smaller index). Exact size n.
Sample systematic_grid_sample(const PopulationFrame& frame, int n, Rng& rng);

}  // namespace balsam

#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "balsam/cube.hpp"
#include "balsam/frame.hpp"
#include "balsam/random.hpp"

namespace balsam {

/// Distance structure for spreading designs. Euclidean contexts use the
/// frame coordinates directly; Mahalanobis contexts whiten the auxiliary
/// matrix (covariance Cholesky, ridge-regularized when near-singular) so
/// that squared Euclidean distance on the stored points equals the
/// Mahalanobis distance on the auxiliaries. Immutable and shareable.
class DistanceContext {
 public:
  static DistanceContext euclidean(const PopulationFrame& frame);
  static DistanceContext mahalanobis(const PopulationFrame& frame);

  const Eigen::MatrixXd& points() const { return points_; }
  std::size_t size() const { return static_cast<std::size_t>(points_.rows()); }
  double squared_distance(int a, int b) const {
    return (points_.row(a) - points_.row(b)).squaredNorm();
  }
  /// True when the covariance needed ridge regularization.
  bool regularized() const { return regularized_; }

 private:
  explicit DistanceContext(Eigen::MatrixXd points, bool regularized = false)
      : points_(std::move(points)), regularized_(regularized) {}

  Eigen::MatrixXd points_;
  bool regularized_;
};

/// One pivotal duel: the expectation-preserving two-point lottery that sets
/// one of the two probabilities to 0 or 1. The pair sum is preserved
/// exactly. Inputs must lie strictly inside (0, 1).
std::pair<double, double> pivotal_update(double pi_i, double pi_j, Rng& rng);

/// Pivotal duels between the first two unresolved units in population
/// order; the last unresolved unit is resolved by its own probability.
Sample sequential_pivotal_sample(const PopulationFrame& frame,
                                 const InclusionProbabilities& pi, Rng& rng);

/// Local pivotal method: a uniformly random unresolved unit duels its
/// nearest unresolved neighbour (distance ties broken uniformly at random),
/// which pushes close units apart.
Sample local_pivotal_sample(const PopulationFrame& frame, const InclusionProbabilities& pi,
                            const DistanceContext& ctx, Rng& rng);

/// Generalized random tessellation stratified sampling: a quadtree over the
/// bounding box subdivided until every cell carries probability mass at most
/// one, hierarchically randomized child order, and systematic sampling along
/// the resulting unit order. Requires 2-d coordinates, integral expected
/// size, and pi_k < 1.
Sample grts_sample(const PopulationFrame& frame, const InclusionProbabilities& pi, Rng& rng);

/// Local cube method: flight steps of the cube method on clusters of p+1
/// mutually close unresolved units (one random unit plus its p nearest),
/// finished by a global flight and landing. Balanced like the cube method
/// and spatially spread like the local pivotal method.
Sample local_cube_sample(const PopulationFrame& frame, const InclusionProbabilities& pi,
                         const Eigen::MatrixXd& aux, const DistanceContext& ctx, Rng& rng);

}  // namespace balsam

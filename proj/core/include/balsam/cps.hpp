#pragma once

#include <Eigen/Dense>
#include <vector>

#include "balsam/frame.hpp"
#include "balsam/random.hpp"

namespace balsam {

/// Solved parameters of the fixed-size maximum-entropy design with
/// p(s) proportional to exp(sum of lambda_k over s). Units whose target
/// probability is exactly 0 or 1 are excluded or forced before solving;
/// lambda is normalized to mean zero over the free units. Immutable after
/// construction, so sampling from shared parameters is thread-safe when
/// each thread owns its generator.
class CpsParameters {
 public:
  int sample_size() const { return n_; }
  std::size_t population_size() const { return static_cast<std::size_t>(lambda_.size()); }
  const Eigen::VectorXd& lambda() const { return lambda_; }
  const InclusionProbabilities& target_pi() const { return target_; }
  const std::vector<int>& free_units() const { return free_; }
  const std::vector<int>& forced_units() const { return forced_; }
  int free_sample_size() const { return n_free_; }

  /// Natural log of the normalizing constant over the free units.
  double log_normalizer() const { return log_normalizer_; }
  /// log e_j(w_i..w_last) table over free units used by the sequential draw.
  const Eigen::MatrixXd& suffix_table() const { return suffix_; }

 private:
  friend CpsParameters solve_lambda(const InclusionProbabilities&, int, double, int);

  Eigen::VectorXd lambda_;          // full length, zero outside the free set
  InclusionProbabilities target_{Eigen::VectorXd::Ones(1)};
  std::vector<int> free_, forced_;  // unit indices
  int n_ = 0, n_free_ = 0;
  Eigen::MatrixXd suffix_;          // (n_free+1) x (n_free_size+1), log domain
  double log_normalizer_ = 0.0;
};

/// Solve for lambda such that the induced fixed-size inclusion probabilities
/// match pi componentwise within tol. Damped Newton with the analytic
/// Jacobian (the design's Delta matrix) for moderate N, falling back to the
/// fixed-point update lambda += log(pi) - log(pi(lambda)) when the Jacobian
/// is ill-conditioned or the population is large.
CpsParameters solve_lambda(const InclusionProbabilities& pi, int n, double tol = 1e-10,
                           int max_iter = 200);

/// Exact sequential draw: unit k is selected with the conditional ratio of
/// elementary symmetric functions given how many units remain to be chosen.
Sample cps_sample(const CpsParameters& params, Rng& rng);

/// Exact design probability of a size-n sample (log-domain accumulation).
/// Samples that omit a forced unit or include an excluded one have
/// probability zero; a wrong sample size is an error.
double cps_probability(const Sample& s, const CpsParameters& params);

/// Full matrix of joint inclusion probabilities, diagonal pi_k.
/// Rows satisfy sum_{l != k} pi_kl = (n-1) pi_k.
Eigen::MatrixXd cps_joint_inclusion(const CpsParameters& params);

/// Inclusion probabilities induced by arbitrary lambda over free units only
/// (used by the solver and by tests).
Eigen::VectorXd cps_induced_pi(const Eigen::VectorXd& lambda_free, int n);

}  // namespace balsam

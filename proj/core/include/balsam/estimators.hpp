#pragma once

#include <Eigen/Dense>
#include <optional>

#include "balsam/basic_designs.hpp"
#include "balsam/frame.hpp"

namespace balsam {

/// Second-order design structure: joint inclusion probabilities (diagonal
/// pi_k) and the indicator covariances Delta. For fixed-size designs the
/// rows of the joint matrix satisfy sum_{l != k} pi_kl = (n-1) pi_k, which
/// is validated at construction.
class SecondOrderStructure {
 public:
  SecondOrderStructure(Eigen::MatrixXd joint, bool fixed_size);

  const Eigen::MatrixXd& joint() const { return joint_; }
  const Eigen::MatrixXd& delta() const { return delta_; }
  Eigen::VectorXd pi() const { return joint_.diagonal(); }
  bool fixed_size() const { return fixed_size_; }

 private:
  Eigen::MatrixXd joint_;
  Eigen::MatrixXd delta_;
  bool fixed_size_;
};

SecondOrderStructure bernoulli_second_order(std::size_t n_units, double pi);
SecondOrderStructure poisson_second_order(const InclusionProbabilities& pi);
SecondOrderStructure srs_second_order(std::size_t n_units, int n);
SecondOrderStructure stratified_second_order(const PopulationFrame& frame,
                                             const Allocation& alloc);

/// Narain-Horvitz-Thompson total: sum over the sample of y_k / pi_k.
/// A sampled unit with pi_k = 0 signals a coverage violation and throws.
double nht_total(const Sample& s, const Eigen::VectorXd& y, const InclusionProbabilities& pi);

struct TrueVariance {
  double general = 0.0;  ///< double sum of y_k y_l Delta_kl / (pi_k pi_l)
  std::optional<double> sen_yates_grundy;  ///< fixed-size form, when defined
};

/// Design variance of the NHT estimator from the second-order structure.
/// For fixed-size designs both algebraic forms are computed and must agree
/// within 1e-9; disagreement indicates an inconsistent fixed-size flag.
TrueVariance true_variance_nht(const SecondOrderStructure& design, const Eigen::VectorXd& y);

/// Variance estimate from one sample. Uses the Sen-Yates-Grundy estimator
/// for fixed-size designs and the general Horvitz-Thompson estimator
/// otherwise. Requires pi_kl > 0 on all sampled pairs.
double estimate_variance(const Sample& s, const Eigen::VectorXd& y,
                         const InclusionProbabilities& pi, const Eigen::MatrixXd& joint,
                         bool fixed_size);

/// Best linear unbiased predictor of the total under the heteroscedastic
/// linear working model: sampled y plus model predictions for the rest,
/// with weighted least squares solved by QR (condition bound 1e12).
double blup_total(const Sample& s, const Eigen::MatrixXd& aux, const Eigen::VectorXd& y,
                  const Eigen::VectorXd& sigma);

/// Working model for anticipated-variance computations: regression
/// coefficients, per-unit dispersions, and an optional error correlation
/// matrix (unit diagonal) for the spatially correlated variant.
struct ModelSpec {
  Eigen::VectorXd beta;
  Eigen::VectorXd sigma;
  std::optional<Eigen::MatrixXd> rho;
};

/// Two-term anticipated variance of the NHT estimator: the design variance
/// of the model mean plus the dispersion term. Without rho the dispersion
/// term is the Godambe-Joshi bound sum (1-pi_k) sigma_k^2 / pi_k; with rho
/// it is the correlated form sum Delta_kl sigma_k sigma_l rho_kl/(pi_k pi_l).
double anticipated_variance(const SecondOrderStructure& design, const Eigen::MatrixXd& aux,
                            const ModelSpec& model);

struct MonteCarloValue {
  double value = 0.0;
  double standard_error = 0.0;
};

/// Anticipated variance with the design term estimated over R replications
/// (independent-errors model only).
MonteCarloValue anticipated_variance_monte_carlo(
    const std::function<Sample(Rng&)>& sampler, int replications, std::uint64_t master_seed,
    const Eigen::MatrixXd& aux, const ModelSpec& model, const InclusionProbabilities& pi);

/// Closed form of the anticipated variance when pi is proportional to sigma
/// and the design is balanced on the auxiliaries:
/// N^2 [ (N-n)/N * mean(sigma)^2 / n - var(sigma)/N ].
double avar_balanced_closed_form(const Eigen::VectorXd& sigma, int n);

/// The model catalogue rows pairing a working model with its optimal design.
enum class Table1Case {
  common_mean,                ///< y = b + e, homoscedastic
  pure_noise,                 ///< y = e, homoscedastic
  proportional_regression,    ///< y = x b + e, sd proportional to x
  proportional_noise,         ///< y = e, sd proportional to x
  stratum_means,              ///< y = b_h + e, common dispersion
  stratum_means_dispersions,  ///< y = b_h + e, per-stratum dispersion
};

struct DesignDescriptor {
  enum class Kind {
    srs,
    bernoulli,
    cps,
    poisson,
    proportional_stratification,
    optimal_stratification,
  } kind;
  enum class PiRule {
    uniform,                        ///< pi_k = n / N
    expected_count,                 ///< pi = E(n_s) / N
    proportional_to_x,              ///< pi_k proportional to x_k
    proportional_to_stratum_sigma,  ///< pi_k proportional to sigma_h
  } pi_rule;
};

/// Optimal design and inclusion-probability rule for each model case.
DesignDescriptor table1_design(Table1Case model_case);

}  // namespace balsam

#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "balsam/frame.hpp"
#include "balsam/random.hpp"

namespace balsam {

enum class BalanceNorm { linf, l2 };

/// Balance quality of one sample: componentwise normalized deviations of
/// the NHT-estimated auxiliary totals from the population totals, their
/// norm, and a pass/fail verdict against the tolerance constant.
struct BalanceReport {
  Eigen::VectorXd relative_deviation;  ///< |(X_j - X^_j) / D_jj|, D = diag of totals
  double max_deviation = 0.0;
  double norm_value = 0.0;
  bool within_tolerance = true;
  int sample_size = 0;
};

/// The balancing constraints in expectation form: columns a_k = x_k / pi_k.
/// Rows are scaled to unit maximum entry; rows that are linear combinations
/// of earlier ones are dropped (balance on them is implied) with a warning.
class BalancingProblem {
 public:
  BalancingProblem(InclusionProbabilities pi, Eigen::MatrixXd aux,
                   BalanceNorm norm = BalanceNorm::linf, double tolerance = 0.02);

  const InclusionProbabilities& pi() const { return pi_; }
  const Eigen::MatrixXd& aux() const { return aux_; }
  /// Scaled constraint matrix, kept rows only (p_eff x N).
  const Eigen::MatrixXd& constraints() const { return constraints_; }
  Eigen::Index constraint_count() const { return constraints_.rows(); }
  const std::vector<int>& kept_rows() const { return kept_rows_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  BalanceNorm norm() const { return norm_; }
  double tolerance() const { return tolerance_; }

 private:
  InclusionProbabilities pi_;
  Eigen::MatrixXd aux_;
  Eigen::MatrixXd constraints_;
  std::vector<int> kept_rows_;
  std::vector<std::string> warnings_;
  BalanceNorm norm_;
  double tolerance_;
};

/// Randomized inclusion vector mid-algorithm: expectation equals the
/// starting pi at every stage and the balance equations hold exactly.
struct FlightState {
  Eigen::VectorXd v;
  std::vector<int> free_units;  ///< units with non-integer components
};

namespace detail {

/// One flight step on the units of `window`: a kernel direction of the
/// constraint matrix restricted to those columns and the largest moves in
/// both senses that keep v inside the unit cube. Empty when the restricted
/// matrix has full column rank.
struct StepPlan {
  Eigen::VectorXd direction;  ///< indexed like `window`
  double lambda_up = 0.0;
  double lambda_down = 0.0;
  double prob_up = 0.0;
};

std::optional<StepPlan> plan_flight_step(const Eigen::MatrixXd& constraints,
                                         const std::vector<int>& window,
                                         const Eigen::VectorXd& v);

/// Execute one planned step as the two-point lottery; components of v that
/// reach a bound are set exactly to it. Returns the units that resolved.
std::vector<int> apply_flight_step(const StepPlan& plan, const std::vector<int>& window,
                                   Eigen::VectorXd& v, Rng& rng);

/// Flight walk restricted to `order`, updating v in place; `constraints`
/// spans the full vector. Used by the flight phase, the landing relaxation
/// route and the local cube method.
void run_flight(const Eigen::MatrixXd& constraints, Eigen::VectorXd& v,
                const std::vector<int>& order, Rng& rng,
                const std::function<void(const Eigen::VectorXd&)>& observer);

/// The landing lottery: completions of the free components (in free-unit
/// order) and their probabilities, chosen to minimize the expected squared
/// normalized balance deviation subject to preserving the expectations.
std::vector<std::pair<std::vector<std::uint8_t>, double>> landing_lottery(
    const FlightState& state, const BalancingProblem& problem);

}  // namespace detail

/// Observer invoked with the inclusion vector after every flight step
/// (testing hook; pass nullptr in production).
using FlightObserver = std::function<void(const Eigen::VectorXd&)>;

/// Flight phase of the cube method. Walks v from pi to a vector with at
/// most p_eff non-integer components while keeping A v = A pi exactly;
/// every step is a two-point lottery preserving expectations. Units are
/// processed in a uniformly random order.
FlightState flight_phase(const BalancingProblem& problem, Rng& rng,
                         const FlightObserver& observer = nullptr);

struct LandingOptions {
  /// Above this many free balancing variables the completion enumeration is
  /// replaced by constraint relaxation (drop last row, re-run flight).
  int max_enumeration_vars = 12;
};

/// Landing phase: resolves the remaining fractional components to 0/1,
/// preserving each component's expectation and minimizing the expected
/// squared normalized balance deviation. When the sample-size constraint
/// lies in the row space of the free constraints and the fractional mass is
/// integral, only size-preserving completions are considered, so fixed-size
/// problems stay fixed-size through landing.
Sample landing_phase(const FlightState& state, const BalancingProblem& problem, Rng& rng,
                     const LandingOptions& options = {});

struct CubeResult {
  Sample sample;
  BalanceReport report;
};

/// Balanced sampling by the cube method: flight plus landing, with the
/// balance report of the returned sample. Units with pi exactly 0 or 1 are
/// resolved up front.
CubeResult cube_sample(const PopulationFrame& frame, const InclusionProbabilities& pi,
                       const Eigen::MatrixXd& aux, Rng& rng,
                       BalanceNorm norm = BalanceNorm::linf, double tolerance = 0.02);

/// Balance report of an arbitrary sample against auxiliary totals.
/// Variables with zero population total are reported on an absolute scale.
BalanceReport balance_check(const Sample& s, const InclusionProbabilities& pi,
                            const Eigen::MatrixXd& aux, BalanceNorm norm = BalanceNorm::linf,
                            double tolerance = 0.02);

}  // namespace balsam

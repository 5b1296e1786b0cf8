#include "balsam/cube.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "simplex.hpp"

namespace balsam {

namespace {

constexpr double kSnap = 1e-11;      // distance to 0/1 at which a component resolves
constexpr double kPivotTol = 1e-10;  // elimination pivot threshold (rows are unit-scaled)

Eigen::VectorXd column_totals(const Eigen::MatrixXd& aux) { return aux.colwise().sum(); }

}  // namespace

BalancingProblem::BalancingProblem(InclusionProbabilities pi, Eigen::MatrixXd aux,
                                   BalanceNorm norm, double tolerance)
    : pi_(std::move(pi)), aux_(std::move(aux)), norm_(norm), tolerance_(tolerance) {
  const auto N = static_cast<Eigen::Index>(pi_.size());
  if (aux_.rows() != N) throw std::invalid_argument("aux row count does not match pi");
  if (!aux_.allFinite()) throw std::invalid_argument("aux contains non-finite values");

  Eigen::MatrixXd full(aux_.cols(), N);
  for (Eigen::Index k = 0; k < N; ++k) {
    const double p = pi_[static_cast<std::size_t>(k)];
    for (Eigen::Index j = 0; j < aux_.cols(); ++j) {
      if (aux_(k, j) != 0.0 && p <= 0.0) {
        throw std::invalid_argument("unit with zero inclusion probability and nonzero auxiliary");
      }
      full(j, k) = p > 0.0 ? aux_(k, j) / p : 0.0;
    }
  }

  // Scale each row to unit max entry, then drop rows that are linear
  // combinations of the rows kept so far (balance on them is implied).
  std::vector<Eigen::VectorXd> basis;
  for (Eigen::Index j = 0; j < full.rows(); ++j) {
    Eigen::VectorXd row = full.row(j);
    const double scale = row.cwiseAbs().maxCoeff();
    if (scale <= 0.0) {
      warnings_.push_back("balancing variable " + std::to_string(j) +
                          " is identically zero; dropped");
      continue;
    }
    row /= scale;
    Eigen::VectorXd residual = row;
    for (const auto& b : basis) residual -= b.dot(residual) * b;
    if (residual.norm() <= 1e-12 * row.norm()) {
      warnings_.push_back("balancing variable " + std::to_string(j) +
                          " is linearly dependent on earlier ones; dropped");
      continue;
    }
    basis.push_back(residual.normalized());
    kept_rows_.push_back(static_cast<int>(j));
    constraints_.conservativeResize(static_cast<Eigen::Index>(kept_rows_.size()), N);
    constraints_.row(static_cast<Eigen::Index>(kept_rows_.size()) - 1) = row;
  }
}

namespace detail {

std::optional<StepPlan> plan_flight_step(const Eigen::MatrixXd& constraints,
                                         const std::vector<int>& window,
                                         const Eigen::VectorXd& v) {
  const auto rows = constraints.rows();
  const auto w = static_cast<Eigen::Index>(window.size());
  if (w == 0) return std::nullopt;

  Eigen::MatrixXd b(rows, w);
  for (Eigen::Index c = 0; c < w; ++c) {
    b.col(c) = constraints.col(window[static_cast<std::size_t>(c)]);
  }

  // Row-echelon reduction with partial pivoting; non-pivot columns span the
  // kernel and the basis vector of the last one is the step direction.
  std::vector<Eigen::Index> pivot_col, free_col;
  Eigen::Index r = 0;
  for (Eigen::Index c = 0; c < w; ++c) {
    if (r == rows) {
      free_col.push_back(c);
      continue;
    }
    Eigen::Index best = -1;
    double best_abs = kPivotTol;
    for (Eigen::Index i = r; i < rows; ++i) {
      if (std::abs(b(i, c)) > best_abs) {
        best_abs = std::abs(b(i, c));
        best = i;
      }
    }
    if (best < 0) {
      free_col.push_back(c);
      continue;
    }
    b.row(r).swap(b.row(best));
    for (Eigen::Index i = r + 1; i < rows; ++i) {
      const double factor = b(i, c) / b(r, c);
      if (factor != 0.0) b.row(i).tail(w - c) -= factor * b.row(r).tail(w - c);
    }
    pivot_col.push_back(c);
    ++r;
  }
  if (free_col.empty()) return std::nullopt;

  Eigen::VectorXd u = Eigen::VectorXd::Zero(w);
  u[free_col.back()] = 1.0;
  for (auto i = static_cast<Eigen::Index>(pivot_col.size()) - 1; i >= 0; --i) {
    const Eigen::Index pc = pivot_col[static_cast<std::size_t>(i)];
    double acc = 0.0;
    for (Eigen::Index c = pc + 1; c < w; ++c) acc += b(i, c) * u[c];
    u[pc] = -acc / b(i, pc);
  }
  u /= u.cwiseAbs().maxCoeff();

  StepPlan plan;
  plan.direction = u;
  double up = std::numeric_limits<double>::infinity();
  double down = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < w; ++c) {
    const double vi = v[window[static_cast<std::size_t>(c)]];
    if (u[c] > 1e-12) {
      up = std::min(up, (1.0 - vi) / u[c]);
      down = std::min(down, vi / u[c]);
    } else if (u[c] < -1e-12) {
      up = std::min(up, vi / (-u[c]));
      down = std::min(down, (1.0 - vi) / (-u[c]));
    }
  }
  plan.lambda_up = up;
  plan.lambda_down = down;
  plan.prob_up = down / (up + down);
  return plan;
}

std::vector<int> apply_flight_step(const StepPlan& plan, const std::vector<int>& window,
                                   Eigen::VectorXd& v, Rng& rng) {
  const bool go_up = rng.uniform() < plan.prob_up;
  const double lambda = go_up ? plan.lambda_up : -plan.lambda_down;
  for (std::size_t c = 0; c < window.size(); ++c) {
    v[window[c]] += lambda * plan.direction[static_cast<Eigen::Index>(c)];
  }
  std::vector<int> resolved;
  for (std::size_t c = 0; c < window.size(); ++c) {
    double& value = v[window[c]];
    if (value <= kSnap) {
      value = 0.0;
    } else if (value >= 1.0 - kSnap) {
      value = 1.0;
    } else {
      continue;
    }
    resolved.push_back(window[c]);
  }
  return resolved;
}

void run_flight(const Eigen::MatrixXd& constraints, Eigen::VectorXd& v,
                const std::vector<int>& order, Rng& rng,
                const std::function<void(const Eigen::VectorXd&)>& observer) {
  const auto window_size = static_cast<std::size_t>(constraints.rows()) + 1;
  std::vector<int> window;
  std::size_t next = 0;
  auto refill = [&] {
    while (window.size() < window_size && next < order.size()) window.push_back(order[next++]);
  };
  refill();

  while (!window.empty()) {
    const auto plan = plan_flight_step(constraints, window, v);
    if (!plan) break;
    const std::vector<int> resolved = apply_flight_step(*plan, window, v, rng);
    for (int unit : resolved) {
      window.erase(std::find(window.begin(), window.end(), unit));
    }
    refill();
    if (observer) observer(v);
  }
}

namespace {

std::vector<int> fractional_units(const Eigen::VectorXd& v) {
  std::vector<int> free;
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    if (v[k] > 0.0 && v[k] < 1.0) free.push_back(static_cast<int>(k));
  }
  return free;
}

}  // namespace

}  // namespace detail

FlightState flight_phase(const BalancingProblem& problem, Rng& rng,
                         const FlightObserver& observer) {
  const auto N = static_cast<Eigen::Index>(problem.pi().size());
  for (Eigen::Index k = 0; k < N; ++k) {
    const double pk = problem.pi()[static_cast<std::size_t>(k)];
    if (!(pk > 0.0 && pk < 1.0)) {
      throw std::invalid_argument("flight phase requires pi strictly inside (0, 1)");
    }
  }

  Eigen::VectorXd v = problem.pi().values();
  std::vector<int> order(static_cast<std::size_t>(N));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order.begin(), order.end());
  detail::run_flight(problem.constraints(), v, order, rng, observer);

  const Eigen::VectorXd drift = problem.constraints() * (v - problem.pi().values());
  if (drift.size() > 0 && drift.cwiseAbs().maxCoeff() > 1e-9) {
    throw std::runtime_error("flight phase lost the balance equations");
  }

  FlightState state;
  state.free_units = detail::fractional_units(v);
  state.v = std::move(v);
  return state;
}

namespace detail {

namespace {

/// Lottery over completions generated by systematic sampling on the
/// fractional components: exact marginals, fixed total when the fractional
/// mass is integral. Fallback when the landing program fails numerically.
std::vector<std::pair<std::vector<std::uint8_t>, double>> systematic_lottery(
    const Eigen::VectorXd& v) {
  const auto f = v.size();
  std::vector<double> breaks{0.0, 1.0};
  std::vector<double> cumulative(static_cast<std::size_t>(f) + 1, 0.0);
  for (Eigen::Index i = 0; i < f; ++i) {
    const auto s = static_cast<std::size_t>(i);
    cumulative[s + 1] = cumulative[s] + v[i];
    breaks.push_back(cumulative[s + 1] - std::floor(cumulative[s + 1]));
  }
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end(),
                           [](double a, double b) { return b - a < 1e-13; }),
               breaks.end());

  std::vector<std::pair<std::vector<std::uint8_t>, double>> lottery;
  for (std::size_t seg = 0; seg + 1 < breaks.size(); ++seg) {
    const double width = breaks[seg + 1] - breaks[seg];
    if (width <= 1e-13) continue;
    const double u = breaks[seg] + width / 2.0;
    std::vector<std::uint8_t> completion(static_cast<std::size_t>(f), 0);
    for (Eigen::Index i = 0; i < f; ++i) {
      const double lo = cumulative[static_cast<std::size_t>(i)];
      const double hi = cumulative[static_cast<std::size_t>(i) + 1];
      // Selected iff some u + integer lands in [lo, hi).
      if (std::ceil(lo - u) + u < hi) completion[static_cast<std::size_t>(i)] = 1;
    }
    lottery.emplace_back(std::move(completion), width);
  }
  return lottery;
}

}  // namespace

std::vector<std::pair<std::vector<std::uint8_t>, double>> landing_lottery(
    const FlightState& state, const BalancingProblem& problem) {
  const auto& free = state.free_units;
  const auto f = static_cast<Eigen::Index>(free.size());
  if (f == 0) return {{std::vector<std::uint8_t>{}, 1.0}};

  Eigen::VectorXd v_free(f);
  for (Eigen::Index i = 0; i < f; ++i) v_free[i] = state.v[free[static_cast<std::size_t>(i)]];

  // When the size constraint follows from the balance equations on the free
  // units and the fractional mass is integral, only size-preserving
  // completions are admissible; fixed-size designs then stay fixed-size.
  bool size_restricted = false;
  int target_count = 0;
  {
    const double mass = v_free.sum();
    const double rounded = std::round(mass);
    if (std::abs(mass - rounded) <= 1e-9 && problem.constraint_count() > 0) {
      Eigen::MatrixXd cf(problem.constraint_count(), f);
      for (Eigen::Index i = 0; i < f; ++i) {
        cf.col(i) = problem.constraints().col(free[static_cast<std::size_t>(i)]);
      }
      const Eigen::VectorXd ones = Eigen::VectorXd::Ones(f);
      const Eigen::VectorXd w = cf.transpose().colPivHouseholderQr().solve(ones);
      if ((cf.transpose() * w - ones).cwiseAbs().maxCoeff() <= 1e-8) {
        size_restricted = true;
        target_count = static_cast<int>(rounded);
      }
    }
  }

  // Normalized deviation of a completed sample = base + selected columns.
  const Eigen::MatrixXd& aux = problem.aux();
  const auto p = aux.cols();
  Eigen::VectorXd scale = column_totals(aux);
  for (Eigen::Index j = 0; j < p; ++j) {
    if (std::abs(scale[j]) < 1e-12) scale[j] = 1.0;
  }
  Eigen::VectorXd base = -column_totals(aux);
  for (Eigen::Index k = 0; k < state.v.size(); ++k) {
    if (state.v[k] >= 1.0) base += aux.row(k).transpose() / problem.pi()[static_cast<std::size_t>(k)];
  }
  Eigen::MatrixXd contribution(p, f);
  for (Eigen::Index i = 0; i < f; ++i) {
    const int k = free[static_cast<std::size_t>(i)];
    contribution.col(i) = aux.row(k).transpose() / problem.pi()[static_cast<std::size_t>(k)];
  }

  const auto n_completions = std::size_t{1} << f;
  std::vector<std::vector<std::uint8_t>> completions;
  std::vector<double> costs;
  completions.reserve(n_completions);
  for (std::size_t mask = 0; mask < n_completions; ++mask) {
    if (size_restricted && std::popcount(mask) != target_count) continue;
    std::vector<std::uint8_t> completion(static_cast<std::size_t>(f), 0);
    Eigen::VectorXd dev = base;
    for (Eigen::Index i = 0; i < f; ++i) {
      if (mask & (std::size_t{1} << i)) {
        completion[static_cast<std::size_t>(i)] = 1;
        dev += contribution.col(i);
      }
    }
    costs.push_back((dev.array() / scale.array()).square().sum());
    completions.push_back(std::move(completion));
  }

  // Lottery q over completions: E q = v on every free unit, total mass one,
  // expected squared deviation minimal.
  const auto m = static_cast<Eigen::Index>(completions.size());
  Eigen::MatrixXd constraints(f + 1, m);
  Eigen::VectorXd rhs(f + 1);
  for (Eigen::Index c = 0; c < m; ++c) {
    for (Eigen::Index i = 0; i < f; ++i) {
      constraints(i, c) = completions[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)];
    }
    constraints(f, c) = 1.0;
  }
  rhs.head(f) = v_free;
  rhs[f] = 1.0;

  const auto solution = solve_linear_program(
      constraints, rhs, Eigen::Map<const Eigen::VectorXd>(costs.data(), m));
  if (!solution) return systematic_lottery(v_free);

  std::vector<std::pair<std::vector<std::uint8_t>, double>> lottery;
  double total = 0.0;
  for (Eigen::Index c = 0; c < m; ++c) {
    if ((*solution)[c] > 1e-12) {
      lottery.emplace_back(completions[static_cast<std::size_t>(c)], (*solution)[c]);
      total += (*solution)[c];
    }
  }
  if (lottery.empty() || std::abs(total - 1.0) > 1e-6) return systematic_lottery(v_free);
  // Verify the marginals before trusting the program's solution.
  Eigen::VectorXd achieved = Eigen::VectorXd::Zero(f);
  for (const auto& [completion, prob] : lottery) {
    for (Eigen::Index i = 0; i < f; ++i) {
      if (completion[static_cast<std::size_t>(i)]) achieved[i] += prob;
    }
  }
  if ((achieved - v_free * total).cwiseAbs().maxCoeff() > 1e-7) {
    return systematic_lottery(v_free);
  }
  for (auto& [completion, prob] : lottery) prob /= total;
  return lottery;
}

}  // namespace detail

Sample landing_phase(const FlightState& state, const BalancingProblem& problem, Rng& rng,
                     const LandingOptions& options) {
  FlightState working = state;
  BalancingProblem reduced = problem;

  // Relaxation route for wide problems: drop balancing variables from the
  // last aux column backwards and resume the flight on the free units, with
  // the constraint columns still built from the original pi.
  while (static_cast<int>(working.free_units.size()) > options.max_enumeration_vars &&
         reduced.aux().cols() > 1) {
    Eigen::MatrixXd smaller = reduced.aux().leftCols(reduced.aux().cols() - 1);
    reduced = BalancingProblem(reduced.pi(), std::move(smaller), reduced.norm(),
                               reduced.tolerance());
    std::vector<int> order = working.free_units;
    rng.shuffle(order.begin(), order.end());
    detail::run_flight(reduced.constraints(), working.v, order, rng, nullptr);
    working.free_units = detail::fractional_units(working.v);
  }

  const auto lottery = detail::landing_lottery(working, reduced);
  double u = rng.uniform();
  const auto* chosen = &lottery.back().first;
  for (const auto& [completion, prob] : lottery) {
    u -= prob;
    if (u < 0.0) {
      chosen = &completion;
      break;
    }
  }

  std::vector<int> idx;
  for (Eigen::Index k = 0; k < working.v.size(); ++k) {
    if (working.v[k] >= 1.0) idx.push_back(static_cast<int>(k));
  }
  for (std::size_t i = 0; i < working.free_units.size(); ++i) {
    if ((*chosen)[i]) idx.push_back(working.free_units[i]);
  }
  return Sample(std::move(idx), static_cast<std::size_t>(working.v.size()));
}

CubeResult cube_sample(const PopulationFrame& frame, const InclusionProbabilities& pi,
                       const Eigen::MatrixXd& aux, Rng& rng, BalanceNorm norm,
                       double tolerance) {
  const auto N = static_cast<Eigen::Index>(frame.size());
  if (pi.size() != frame.size() || aux.rows() != N) {
    throw std::invalid_argument("dimension mismatch in cube_sample");
  }

  std::vector<int> forced, interior;
  for (Eigen::Index k = 0; k < N; ++k) {
    const double p = pi[static_cast<std::size_t>(k)];
    if (p >= 1.0 - 1e-12) {
      forced.push_back(static_cast<int>(k));
    } else if (p > 1e-12) {
      interior.push_back(static_cast<int>(k));
    }
  }

  std::vector<int> idx = forced;
  if (!interior.empty()) {
    const auto m = static_cast<Eigen::Index>(interior.size());
    Eigen::VectorXd sub_pi(m);
    Eigen::MatrixXd sub_aux(m, aux.cols());
    for (Eigen::Index i = 0; i < m; ++i) {
      sub_pi[i] = pi[static_cast<std::size_t>(interior[static_cast<std::size_t>(i)])];
      sub_aux.row(i) = aux.row(interior[static_cast<std::size_t>(i)]);
    }
    const BalancingProblem problem(InclusionProbabilities(sub_pi), std::move(sub_aux), norm,
                                   tolerance);
    const FlightState state = flight_phase(problem, rng);
    const Sample sub = landing_phase(state, problem, rng);
    for (int i : sub.indices()) idx.push_back(interior[static_cast<std::size_t>(i)]);
  }

  Sample sample(std::move(idx), frame.size());
  BalanceReport report = balance_check(sample, pi, aux, norm, tolerance);
  return {std::move(sample), std::move(report)};
}

BalanceReport balance_check(const Sample& s, const InclusionProbabilities& pi,
                            const Eigen::MatrixXd& aux, BalanceNorm norm, double tolerance) {
  const auto N = static_cast<Eigen::Index>(pi.size());
  if (aux.rows() != N || s.population_size() != pi.size()) {
    throw std::invalid_argument("dimension mismatch in balance_check");
  }
  const Eigen::VectorXd totals = column_totals(aux);
  Eigen::VectorXd estimate = Eigen::VectorXd::Zero(aux.cols());
  for (int k : s.indices()) {
    const double p = pi[static_cast<std::size_t>(k)];
    if (p <= 0.0) throw std::invalid_argument("sampled unit with zero inclusion probability");
    estimate += aux.row(k).transpose() / p;
  }

  BalanceReport report;
  report.relative_deviation.resize(aux.cols());
  for (Eigen::Index j = 0; j < aux.cols(); ++j) {
    const double scale = std::abs(totals[j]) < 1e-12 ? 1.0 : totals[j];
    report.relative_deviation[j] = std::abs((totals[j] - estimate[j]) / scale);
  }
  report.max_deviation =
      report.relative_deviation.size() > 0 ? report.relative_deviation.maxCoeff() : 0.0;
  report.norm_value =
      norm == BalanceNorm::linf ? report.max_deviation : report.relative_deviation.norm();
  report.within_tolerance = report.norm_value <= tolerance;
  report.sample_size = static_cast<int>(s.size());
  return report;
}

}  // namespace balsam

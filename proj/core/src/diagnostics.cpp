#include "balsam/diagnostics.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "balsam/detail/parallel.hpp"

namespace balsam {

using detail::parallel_chunks;
using detail::resolve_threads;

double design_entropy(const EnumeratedDesign& design) {
  design.validate(1e-9);
  double entropy = 0.0;
  for (const auto& atom : design.support) {
    if (atom.probability < 0.0) throw std::invalid_argument("negative design probability");
    if (atom.probability > 0.0) entropy -= atom.probability * std::log(atom.probability);
  }
  return entropy;
}

SpatialBalanceResult spatial_balance_index(const PopulationFrame& frame, const Sample& s,
                                           const InclusionProbabilities& pi) {
  if (!frame.has_coords()) throw std::invalid_argument("frame has no coordinates");
  if (s.size() == 0) throw std::invalid_argument("sample is empty");
  if (pi.size() != frame.size() || s.population_size() != frame.size()) {
    throw std::invalid_argument("dimension mismatch in spatial_balance_index");
  }

  const Eigen::MatrixXd& coords = frame.coords();
  const auto& sampled = s.indices();
  SpatialBalanceResult result;
  result.cell_mass = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sampled.size()));

  for (std::size_t k = 0; k < frame.size(); ++k) {
    // Nearest sampled unit; the scan order makes ties go to the smallest
    // sampled index.
    std::size_t best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < sampled.size(); ++i) {
      const double d2 =
          (coords.row(sampled[i]) - coords.row(static_cast<Eigen::Index>(k))).squaredNorm();
      if (d2 < best_d2) {
        best_d2 = d2;
        best = i;
      }
    }
    result.cell_mass[static_cast<Eigen::Index>(best)] += pi[k];
  }

  const auto n = static_cast<double>(sampled.size());
  if (std::abs(pi.expected_size() - n) <= 1e-9) {
    result.index = (result.cell_mass.array() - 1.0).square().sum() / n;
  } else {
    const double mean = result.cell_mass.mean();
    result.index = (result.cell_mass.array() - mean).square().sum() / n;
  }
  return result;
}

InclusionCheck monte_carlo_inclusion(const SamplerFn& sampler, const PopulationFrame& frame,
                                     int replications, std::uint64_t master_seed,
                                     const InclusionProbabilities& target_pi, int threads) {
  if (replications < 1) throw std::invalid_argument("replications must be positive");
  if (target_pi.size() != frame.size()) {
    throw std::invalid_argument("target pi length does not match the frame");
  }
  const auto N = static_cast<Eigen::Index>(frame.size());

  threads = resolve_threads(threads, replications);
  std::vector<Eigen::VectorXd> partial(static_cast<std::size_t>(threads),
                                       Eigen::VectorXd::Zero(N));
  parallel_chunks(replications, threads, [&](int begin, int end, int chunk_idx) {
    Eigen::VectorXd& counts = partial[static_cast<std::size_t>(chunk_idx)];
    for (int r = begin; r < end; ++r) {
      Rng rng = Rng::derive(master_seed, static_cast<std::uint64_t>(r));
      const Sample s = sampler(rng);
      for (int k : s.indices()) counts[k] += 1.0;
    }
  });

  Eigen::VectorXd counts = Eigen::VectorXd::Zero(N);
  for (const auto& c : partial) counts += c;

  InclusionCheck check;
  check.replications = replications;
  check.frequency = counts / static_cast<double>(replications);
  check.standard_error.resize(N);
  check.max_studentized = 0.0;
  for (Eigen::Index k = 0; k < N; ++k) {
    const double p = target_pi[static_cast<std::size_t>(k)];
    const double se = std::sqrt(p * (1.0 - p) / replications);
    check.standard_error[k] = se;
    const double diff = std::abs(check.frequency[k] - p);
    if (se > 0.0) {
      check.max_studentized = std::max(check.max_studentized, diff / se);
    } else if (diff > 0.0) {
      check.max_studentized = std::numeric_limits<double>::infinity();
    }
  }
  return check;
}

DeltaEstimate estimate_delta(const SamplerFn& sampler, const PopulationFrame& frame,
                             int replications, std::uint64_t master_seed, int threads) {
  if (replications < 2) throw std::invalid_argument("at least two replications are required");
  const auto N = static_cast<Eigen::Index>(frame.size());

  threads = resolve_threads(threads, replications);
  std::vector<Eigen::MatrixXd> joint_partial(static_cast<std::size_t>(threads),
                                             Eigen::MatrixXd::Zero(N, N));
  parallel_chunks(replications, threads, [&](int begin, int end, int chunk_idx) {
    Eigen::MatrixXd& joint = joint_partial[static_cast<std::size_t>(chunk_idx)];
    for (int r = begin; r < end; ++r) {
      Rng rng = Rng::derive(master_seed, static_cast<std::uint64_t>(r));
      const Sample s = sampler(rng);
      const auto& idx = s.indices();
      for (std::size_t a = 0; a < idx.size(); ++a) {
        joint(idx[a], idx[a]) += 1.0;
        for (std::size_t b = a + 1; b < idx.size(); ++b) {
          joint(idx[a], idx[b]) += 1.0;
        }
      }
    }
  });
  Eigen::MatrixXd joint_counts = Eigen::MatrixXd::Zero(N, N);
  for (const auto& j : joint_partial) joint_counts += j;
  joint_counts = joint_counts.selfadjointView<Eigen::Upper>();

  const double R = replications;
  DeltaEstimate est;
  est.replications = replications;
  est.delta.resize(N, N);
  est.standard_error.resize(N, N);

  // Jackknife over replications. Leaving one replication out changes the
  // estimate through the three indicator counts only, so the R leave-one-out
  // values collapse onto the four (a, b) categories.
  for (Eigen::Index k = 0; k < N; ++k) {
    for (Eigen::Index l = k; l < N; ++l) {
      const double ck = joint_counts(k, k);
      const double cl = joint_counts(l, l);
      const double ckl = joint_counts(k, l);
      const double mk = ck / R, ml = cl / R, mkl = ckl / R;
      const double delta = k == l ? mk * (1.0 - mk) : mkl - mk * ml;
      est.delta(k, l) = delta;
      est.delta(l, k) = delta;

      const double n11 = ckl;
      const double n10 = ck - ckl;
      const double n01 = cl - ckl;
      const double n00 = R - ck - cl + ckl;
      auto loo = [&](double a, double b) {
        const double mk_r = (ck - a) / (R - 1.0);
        const double ml_r = (cl - b) / (R - 1.0);
        if (k == l) return mk_r * (1.0 - mk_r);
        const double mkl_r = (ckl - a * b) / (R - 1.0);
        return mkl_r - mk_r * ml_r;
      };
      const double v11 = loo(1, 1), v10 = loo(1, 0), v01 = loo(0, 1), v00 = loo(0, 0);
      const double mean =
          (n11 * v11 + n10 * v10 + n01 * v01 + n00 * v00) / R;
      const double ss = n11 * (v11 - mean) * (v11 - mean) + n10 * (v10 - mean) * (v10 - mean) +
                        n01 * (v01 - mean) * (v01 - mean) + n00 * (v00 - mean) * (v00 - mean);
      const double se = std::sqrt((R - 1.0) / R * ss);
      est.standard_error(k, l) = se;
      est.standard_error(l, k) = se;
    }
  }
  return est;
}

}  // namespace balsam

#include "balsam/cps.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace balsam {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

/// suffix(i, j) = log e_j(w_i, ..., w_{m-1}) for weights w_k = exp(lambda_k).
/// Mahler's recursion run from the tail, log domain.
Eigen::MatrixXd suffix_log_esf(const Eigen::VectorXd& lambda, int nmax) {
  const auto m = lambda.size();
  Eigen::MatrixXd table(m + 1, nmax + 1);
  table.setConstant(kNegInf);
  table.col(0).setZero();  // e_0 = 1
  for (Eigen::Index i = m - 1; i >= 0; --i) {
    const int jmax = std::min<int>(nmax, static_cast<int>(m - i));
    for (int j = 1; j <= jmax; ++j) {
      table(i, j) = log_sum_exp(table(i + 1, j), lambda[i] + table(i + 1, j - 1));
    }
  }
  return table;
}

/// prefix(i, j) = log e_j(w_0, ..., w_{i-1}).
Eigen::MatrixXd prefix_log_esf(const Eigen::VectorXd& lambda, int nmax) {
  const auto m = lambda.size();
  Eigen::MatrixXd table(m + 1, nmax + 1);
  table.setConstant(kNegInf);
  table.col(0).setZero();
  for (Eigen::Index i = 1; i <= m; ++i) {
    const int jmax = std::min<int>(nmax, static_cast<int>(i));
    for (int j = 1; j <= jmax; ++j) {
      table(i, j) = log_sum_exp(table(i - 1, j), lambda[i - 1] + table(i - 1, j - 1));
    }
  }
  return table;
}

/// log e_j of the weights with position k removed, from prefix/suffix tables.
double log_esf_without(const Eigen::MatrixXd& prefix, const Eigen::MatrixXd& suffix,
                       Eigen::Index k, int j) {
  double acc = kNegInf;
  for (int a = 0; a <= j; ++a) {
    acc = log_sum_exp(acc, prefix(k, a) + suffix(k + 1, j - a));
  }
  return acc;
}

Eigen::VectorXd induced_pi_impl(const Eigen::VectorXd& lambda, int n,
                                const Eigen::MatrixXd& prefix, const Eigen::MatrixXd& suffix) {
  const auto m = lambda.size();
  const double log_en = suffix(0, n);
  Eigen::VectorXd pi(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    pi[k] = std::exp(lambda[k] + log_esf_without(prefix, suffix, k, n - 1) - log_en);
  }
  return pi;
}

/// Joint inclusion probabilities over the free units for given lambda.
Eigen::MatrixXd induced_joint_impl(const Eigen::VectorXd& lambda, int n) {
  const auto m = lambda.size();
  const Eigen::MatrixXd suffix = suffix_log_esf(lambda, n);
  const Eigen::MatrixXd prefix = prefix_log_esf(lambda, n);
  const double log_en = suffix(0, n);
  Eigen::MatrixXd joint(m, m);
  joint.setZero();
  joint.diagonal() = induced_pi_impl(lambda, n, prefix, suffix);
  if (n < 2) return joint;
  for (Eigen::Index k = 0; k < m; ++k) {
    // Tables of the weight vector with unit k removed.
    Eigen::VectorXd rest(m - 1);
    for (Eigen::Index i = 0, j = 0; i < m; ++i) {
      if (i != k) rest[j++] = lambda[i];
    }
    const Eigen::MatrixXd pk = prefix_log_esf(rest, n - 2);
    const Eigen::MatrixXd sk = suffix_log_esf(rest, n - 2);
    for (Eigen::Index l = k + 1; l < m; ++l) {
      const Eigen::Index pos = l - 1;  // position of l in `rest`
      const double log_e = log_esf_without(pk, sk, pos, n - 2);
      const double value = std::exp(lambda[k] + lambda[l] + log_e - log_en);
      joint(k, l) = value;
      joint(l, k) = value;
    }
  }
  return joint;
}

}  // namespace

Eigen::VectorXd cps_induced_pi(const Eigen::VectorXd& lambda_free, int n) {
  if (n == 0) return Eigen::VectorXd::Zero(lambda_free.size());
  const Eigen::MatrixXd suffix = suffix_log_esf(lambda_free, n);
  const Eigen::MatrixXd prefix = prefix_log_esf(lambda_free, n);
  return induced_pi_impl(lambda_free, n, prefix, suffix);
}

CpsParameters solve_lambda(const InclusionProbabilities& pi, int n, double tol, int max_iter) {
  const auto N = static_cast<Eigen::Index>(pi.size());
  if (std::abs(pi.expected_size() - n) > 1e-9) {
    throw std::invalid_argument("inclusion probabilities must sum to the sample size");
  }

  CpsParameters params;
  params.n_ = n;
  params.target_ = pi;
  params.lambda_ = Eigen::VectorXd::Zero(N);
  for (Eigen::Index k = 0; k < N; ++k) {
    const double p = pi[static_cast<std::size_t>(k)];
    if (p >= 1.0) {
      params.forced_.push_back(static_cast<int>(k));
    } else if (p > 0.0) {
      params.free_.push_back(static_cast<int>(k));
    }
  }
  params.n_free_ = n - static_cast<int>(params.forced_.size());
  const auto m = static_cast<Eigen::Index>(params.free_.size());
  if (params.n_free_ < 0 || params.n_free_ > m) {
    throw std::invalid_argument("forced units are inconsistent with the sample size");
  }

  Eigen::VectorXd target(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    target[i] = pi[static_cast<std::size_t>(params.free_[static_cast<std::size_t>(i)])];
  }

  Eigen::VectorXd lambda(m);
  const int nf = params.n_free_;
  if (m > 0 && nf > 0 && nf < m) {
    for (Eigen::Index i = 0; i < m; ++i) lambda[i] = std::log(target[i] / (1.0 - target[i]));
    lambda.array() -= lambda.mean();

    // Newton iterations cost O(m^2 n); past this size the fixed-point update
    // (linear rate, O(m n) per pass) is the faster route.
    const bool use_newton = m <= 400;
    bool converged = false;
    for (int iter = 0; iter < max_iter; ++iter) {
      const Eigen::VectorXd current = cps_induced_pi(lambda, nf);
      const Eigen::VectorXd residual = current - target;
      const double err = residual.cwiseAbs().maxCoeff();
      if (err <= tol) {
        converged = true;
        break;
      }

      bool stepped = false;
      if (use_newton) {
        // Jacobian of pi(lambda) is the design's Delta matrix; it is singular
        // along the constant direction, which the rank-one shift removes.
        Eigen::MatrixXd joint = induced_joint_impl(lambda, nf);
        Eigen::MatrixXd jac = joint - current * current.transpose();
        jac.diagonal() = current.array() * (1.0 - current.array());
        const double shift = jac.trace() / static_cast<double>(m);
        jac.array() += shift / static_cast<double>(m);
        Eigen::LDLT<Eigen::MatrixXd> ldlt(jac);
        if (ldlt.info() == Eigen::Success) {
          const Eigen::VectorXd d = ldlt.solve(-residual);
          if (d.allFinite()) {
            double t = 1.0;
            for (int half = 0; half < 25; ++half, t *= 0.5) {
              Eigen::VectorXd trial = lambda + t * d;
              trial.array() -= trial.mean();
              const double trial_err =
                  (cps_induced_pi(trial, nf) - target).cwiseAbs().maxCoeff();
              if (trial_err < err) {
                lambda = trial;
                stepped = true;
                break;
              }
            }
          }
        }
      }
      if (!stepped) {
        lambda.array() += target.array().log() - current.array().log().max(-700.0);
        lambda.array() -= lambda.mean();
      }
    }
    if (!converged) {
      const double err = (cps_induced_pi(lambda, nf) - target).cwiseAbs().maxCoeff();
      if (err > tol) {
        throw std::runtime_error("CPS parameter solve did not converge within " +
                                 std::to_string(max_iter) + " iterations");
      }
    }
  } else {
    lambda.setZero();  // all free units taken (nf == m) or none (nf == 0)
  }

  for (Eigen::Index i = 0; i < m; ++i) {
    params.lambda_[params.free_[static_cast<std::size_t>(i)]] = lambda[i];
  }
  params.suffix_ = suffix_log_esf(lambda, std::max(nf, 0));
  params.log_normalizer_ = m > 0 ? params.suffix_(0, nf) : 0.0;
  return params;
}

Sample cps_sample(const CpsParameters& params, Rng& rng) {
  std::vector<int> idx = params.forced_units();
  const auto& free = params.free_units();
  const auto m = static_cast<Eigen::Index>(free.size());
  int remaining = params.free_sample_size();
  const Eigen::MatrixXd& suffix = params.suffix_table();

  for (Eigen::Index i = 0; i < m && remaining > 0; ++i) {
    const auto left = m - i;
    if (left == remaining) {
      for (Eigen::Index j = i; j < m; ++j) idx.push_back(free[static_cast<std::size_t>(j)]);
      remaining = 0;
      break;
    }
    const double lambda_i = params.lambda()[free[static_cast<std::size_t>(i)]];
    const double p = std::exp(lambda_i + suffix(i + 1, remaining - 1) - suffix(i, remaining));
    if (rng.bernoulli(p)) {
      idx.push_back(free[static_cast<std::size_t>(i)]);
      --remaining;
    }
  }
  return Sample(std::move(idx), params.population_size());
}

double cps_probability(const Sample& s, const CpsParameters& params) {
  if (static_cast<int>(s.size()) != params.sample_size()) {
    throw std::invalid_argument("sample size does not match the design");
  }
  for (int k : params.forced_units()) {
    if (!s.contains(k)) return 0.0;
  }
  double log_weight = 0.0;
  int free_count = 0;
  for (int k : s.indices()) {
    const double target = params.target_pi()[static_cast<std::size_t>(k)];
    if (target <= 0.0) return 0.0;
    if (target < 1.0) {
      log_weight += params.lambda()[k];
      ++free_count;
    }
  }
  if (free_count != params.free_sample_size()) return 0.0;
  return std::exp(log_weight - params.log_normalizer());
}

Eigen::MatrixXd cps_joint_inclusion(const CpsParameters& params) {
  const auto N = static_cast<Eigen::Index>(params.population_size());
  const auto& free = params.free_units();
  const auto m = static_cast<Eigen::Index>(free.size());

  Eigen::VectorXd lambda_free(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    lambda_free[i] = params.lambda()[free[static_cast<std::size_t>(i)]];
  }
  const Eigen::MatrixXd joint_free =
      m > 0 && params.free_sample_size() > 0
          ? induced_joint_impl(lambda_free, params.free_sample_size())
          : Eigen::MatrixXd::Zero(m, m);

  Eigen::MatrixXd joint(N, N);
  joint.setZero();
  const auto& pi = params.target_pi();
  for (Eigen::Index k = 0; k < N; ++k) joint(k, k) = pi[static_cast<std::size_t>(k)];
  // Forced units co-occur with everything that occurs.
  for (int f : params.forced_units()) {
    for (Eigen::Index l = 0; l < N; ++l) {
      if (l == f) continue;
      joint(f, l) = pi[static_cast<std::size_t>(l)];
      joint(l, f) = pi[static_cast<std::size_t>(l)];
    }
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i + 1; j < m; ++j) {
      joint(free[static_cast<std::size_t>(i)], free[static_cast<std::size_t>(j)]) = joint_free(i, j);
      joint(free[static_cast<std::size_t>(j)], free[static_cast<std::size_t>(i)]) = joint_free(i, j);
    }
  }
  return joint;
}

}  // namespace balsam

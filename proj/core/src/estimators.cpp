#include "balsam/estimators.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>

namespace balsam {

SecondOrderStructure::SecondOrderStructure(Eigen::MatrixXd joint, bool fixed_size)
    : joint_(std::move(joint)), fixed_size_(fixed_size) {
  const auto N = joint_.rows();
  if (joint_.cols() != N) throw std::invalid_argument("joint matrix must be square");
  if (!joint_.isApprox(joint_.transpose(), 1e-12)) {
    throw std::invalid_argument("joint matrix must be symmetric");
  }
  const Eigen::VectorXd pi = joint_.diagonal();
  for (Eigen::Index k = 0; k < N; ++k) {
    for (Eigen::Index l = 0; l < N; ++l) {
      if (joint_(k, l) < -1e-12 || joint_(k, l) > std::min(pi[k], pi[l]) + 1e-9) {
        throw std::invalid_argument("joint inclusion probabilities out of range");
      }
    }
  }
  if (fixed_size_) {
    const double n = pi.sum();
    for (Eigen::Index k = 0; k < N; ++k) {
      const double row = joint_.row(k).sum() - pi[k];
      if (std::abs(row - (n - 1.0) * pi[k]) > 1e-7) {
        throw std::invalid_argument("joint matrix is inconsistent with a fixed-size design");
      }
    }
  }
  delta_ = joint_ - pi * pi.transpose();
  delta_.diagonal() = pi.array() * (1.0 - pi.array());
}

SecondOrderStructure bernoulli_second_order(std::size_t n_units, double pi) {
  const auto N = static_cast<Eigen::Index>(n_units);
  Eigen::MatrixXd joint = Eigen::MatrixXd::Constant(N, N, pi * pi);
  joint.diagonal().setConstant(pi);
  return SecondOrderStructure(std::move(joint), false);
}

SecondOrderStructure poisson_second_order(const InclusionProbabilities& pi) {
  Eigen::MatrixXd joint = pi.values() * pi.values().transpose();
  joint.diagonal() = pi.values();
  return SecondOrderStructure(std::move(joint), false);
}

SecondOrderStructure srs_second_order(std::size_t n_units, int n) {
  const auto N = static_cast<Eigen::Index>(n_units);
  const double first = static_cast<double>(n) / static_cast<double>(N);
  const double second = N > 1 ? static_cast<double>(n) * (n - 1.0) / (N * (N - 1.0)) : first;
  Eigen::MatrixXd joint = Eigen::MatrixXd::Constant(N, N, second);
  joint.diagonal().setConstant(first);
  return SecondOrderStructure(std::move(joint), true);
}

SecondOrderStructure stratified_second_order(const PopulationFrame& frame,
                                             const Allocation& alloc) {
  const auto N = static_cast<Eigen::Index>(frame.size());
  Eigen::MatrixXd joint(N, N);
  const auto& sizes = frame.stratum_sizes();
  for (Eigen::Index k = 0; k < N; ++k) {
    const int hk = frame.stratum_of(static_cast<std::size_t>(k));
    const double nk = alloc.size_per_stratum[static_cast<std::size_t>(hk)];
    const double Nk = sizes[static_cast<std::size_t>(hk)];
    for (Eigen::Index l = 0; l < N; ++l) {
      const int hl = frame.stratum_of(static_cast<std::size_t>(l));
      const double nl = alloc.size_per_stratum[static_cast<std::size_t>(hl)];
      const double Nl = sizes[static_cast<std::size_t>(hl)];
      if (k == l) {
        joint(k, l) = nk / Nk;
      } else if (hk == hl) {
        joint(k, l) = Nk > 1 ? nk * (nk - 1.0) / (Nk * (Nk - 1.0)) : nk / Nk;
      } else {
        joint(k, l) = (nk / Nk) * (nl / Nl);
      }
    }
  }
  return SecondOrderStructure(std::move(joint), true);
}

double nht_total(const Sample& s, const Eigen::VectorXd& y, const InclusionProbabilities& pi) {
  if (y.size() != static_cast<Eigen::Index>(pi.size()) ||
      s.population_size() != pi.size()) {
    throw std::invalid_argument("dimension mismatch in nht_total");
  }
  double total = 0.0;
  for (int k : s.indices()) {
    const double p = pi[static_cast<std::size_t>(k)];
    if (p <= 0.0) {
      throw std::invalid_argument("sampled unit " + std::to_string(k) +
                                  " has zero inclusion probability (coverage violation)");
    }
    total += y[k] / p;
  }
  return total;
}

TrueVariance true_variance_nht(const SecondOrderStructure& design, const Eigen::VectorXd& y) {
  const Eigen::VectorXd pi = design.pi();
  const auto N = pi.size();
  if (y.size() != N) throw std::invalid_argument("dimension mismatch in true_variance_nht");
  Eigen::VectorXd check(N);
  for (Eigen::Index k = 0; k < N; ++k) {
    if (pi[k] <= 0.0 && y[k] != 0.0) {
      throw std::invalid_argument("variance undefined: unit with pi = 0 and nonzero y");
    }
    check[k] = pi[k] > 0.0 ? y[k] / pi[k] : 0.0;
  }

  TrueVariance out;
  out.general = check.transpose() * design.delta() * check;
  if (design.fixed_size()) {
    double syg = 0.0;
    for (Eigen::Index k = 0; k < N; ++k) {
      for (Eigen::Index l = 0; l < N; ++l) {
        if (k == l) continue;
        const double diff = check[k] - check[l];
        syg += diff * diff * design.delta()(k, l);
      }
    }
    syg *= -0.5;
    if (std::abs(syg - out.general) > 1e-9 * std::max(1.0, std::abs(out.general))) {
      throw std::runtime_error("fixed-size variance forms disagree; fixed_size flag inconsistent");
    }
    out.sen_yates_grundy = syg;
  }
  return out;
}

double estimate_variance(const Sample& s, const Eigen::VectorXd& y,
                         const InclusionProbabilities& pi, const Eigen::MatrixXd& joint,
                         bool fixed_size) {
  const auto& idx = s.indices();
  const auto N = static_cast<Eigen::Index>(pi.size());
  if (y.size() != N || joint.rows() != N || joint.cols() != N) {
    throw std::invalid_argument("dimension mismatch in estimate_variance");
  }
  auto pair_joint = [&](int k, int l) {
    const double pkl = joint(k, l);
    if (pkl <= 0.0) {
      throw std::invalid_argument("zero joint inclusion probability among sampled pairs");
    }
    return pkl;
  };

  double total = 0.0;
  if (fixed_size) {
    for (std::size_t a = 0; a < idx.size(); ++a) {
      for (std::size_t b = a + 1; b < idx.size(); ++b) {
        const int k = idx[a], l = idx[b];
        const double pk = pi[static_cast<std::size_t>(k)], pl = pi[static_cast<std::size_t>(l)];
        const double pkl = pair_joint(k, l);
        const double delta = pkl - pk * pl;
        const double diff = y[k] / pk - y[l] / pl;
        total += -diff * diff * delta / pkl;  // each unordered pair once = -1/2 over ordered
      }
    }
  } else {
    for (std::size_t a = 0; a < idx.size(); ++a) {
      const int k = idx[a];
      const double pk = pi[static_cast<std::size_t>(k)];
      if (pk <= 0.0) throw std::invalid_argument("sampled unit with zero inclusion probability");
      total += (y[k] / pk) * (y[k] / pk) * (1.0 - pk);
      for (std::size_t b = a + 1; b < idx.size(); ++b) {
        const int l = idx[b];
        const double pl = pi[static_cast<std::size_t>(l)];
        const double pkl = pair_joint(k, l);
        total += 2.0 * (y[k] * y[l] / (pk * pl)) * (pkl - pk * pl) / pkl;
      }
    }
  }
  return total;
}

double blup_total(const Sample& s, const Eigen::MatrixXd& aux, const Eigen::VectorXd& y,
                  const Eigen::VectorXd& sigma) {
  const auto N = aux.rows();
  const auto p = aux.cols();
  if (y.size() != N || sigma.size() != N || s.population_size() != static_cast<std::size_t>(N)) {
    throw std::invalid_argument("dimension mismatch in blup_total");
  }
  const auto n = static_cast<Eigen::Index>(s.size());
  Eigen::MatrixXd design(n, p);
  Eigen::VectorXd rhs(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int k = s.indices()[static_cast<std::size_t>(i)];
    const double sd = sigma[k];
    if (sd <= 0.0) throw std::invalid_argument("sampled unit with nonpositive model dispersion");
    design.row(i) = aux.row(k) / sd;
    rhs[i] = y[k] / sd;
  }

  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(design, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv[sv.size() - 1] <= 0.0 || sv[0] / sv[sv.size() - 1] > 1e12) {
    throw std::runtime_error("singular weighted design matrix in blup_total");
  }
  const Eigen::VectorXd beta = svd.solve(rhs);

  double total = 0.0;
  std::size_t cursor = 0;
  for (Eigen::Index k = 0; k < N; ++k) {
    if (cursor < s.size() && s.indices()[cursor] == static_cast<int>(k)) {
      total += y[k];
      ++cursor;
    } else {
      total += aux.row(k).dot(beta);
    }
  }
  return total;
}

namespace {

double dispersion_term(const SecondOrderStructure& design, const ModelSpec& model) {
  const Eigen::VectorXd pi = design.pi();
  const auto N = pi.size();
  if (model.sigma.size() != N) throw std::invalid_argument("sigma length mismatch");
  if (!model.rho) {
    double term = 0.0;
    for (Eigen::Index k = 0; k < N; ++k) {
      if (model.sigma[k] == 0.0) continue;
      if (pi[k] <= 0.0) throw std::invalid_argument("unit with positive dispersion and pi = 0");
      term += (1.0 - pi[k]) * model.sigma[k] * model.sigma[k] / pi[k];
    }
    return term;
  }
  const Eigen::MatrixXd& rho = *model.rho;
  if (rho.rows() != N || rho.cols() != N) throw std::invalid_argument("rho dimension mismatch");
  if (!rho.isApprox(rho.transpose(), 1e-12) ||
      (rho.diagonal().array() - 1.0).abs().maxCoeff() > 1e-12 ||
      rho.cwiseAbs().maxCoeff() > 1.0 + 1e-12) {
    throw std::invalid_argument("rho must be symmetric with unit diagonal and entries in [-1, 1]");
  }
  double term = 0.0;
  for (Eigen::Index k = 0; k < N; ++k) {
    for (Eigen::Index l = 0; l < N; ++l) {
      const double weight = model.sigma[k] * model.sigma[l] * rho(k, l);
      if (weight == 0.0) continue;
      if (pi[k] <= 0.0 || pi[l] <= 0.0) {
        throw std::invalid_argument("unit with positive dispersion and pi = 0");
      }
      term += design.delta()(k, l) * weight / (pi[k] * pi[l]);
    }
  }
  return term;
}

}  // namespace

double anticipated_variance(const SecondOrderStructure& design, const Eigen::MatrixXd& aux,
                            const ModelSpec& model) {
  if (aux.cols() != model.beta.size()) throw std::invalid_argument("beta length mismatch");
  const Eigen::VectorXd mean = aux * model.beta;
  return true_variance_nht(design, mean).general + dispersion_term(design, model);
}

MonteCarloValue anticipated_variance_monte_carlo(
    const std::function<Sample(Rng&)>& sampler, int replications, std::uint64_t master_seed,
    const Eigen::MatrixXd& aux, const ModelSpec& model, const InclusionProbabilities& pi) {
  if (model.rho) {
    throw std::invalid_argument("Monte Carlo anticipated variance supports independent errors only");
  }
  if (replications < 1) throw std::invalid_argument("replications must be positive");
  const Eigen::VectorXd mean = aux * model.beta;
  const double population_total = mean.sum();

  double sum = 0.0, sum_sq = 0.0;
  for (int r = 0; r < replications; ++r) {
    Rng rng = Rng::derive(master_seed, static_cast<std::uint64_t>(r));
    const Sample s = sampler(rng);
    const double residual = nht_total(s, mean, pi) - population_total;
    sum += residual * residual;
    sum_sq += residual * residual * residual * residual;
  }
  const double mc = sum / replications;
  const double var_mc =
      replications > 1 ? (sum_sq / replications - mc * mc) / (replications - 1.0) : 0.0;

  double gj = 0.0;
  for (Eigen::Index k = 0; k < model.sigma.size(); ++k) {
    if (model.sigma[k] == 0.0) continue;
    gj += (1.0 - pi[static_cast<std::size_t>(k)]) * model.sigma[k] * model.sigma[k] /
          pi[static_cast<std::size_t>(k)];
  }
  return {mc + gj, std::sqrt(std::max(0.0, var_mc))};
}

double avar_balanced_closed_form(const Eigen::VectorXd& sigma, int n) {
  const auto N = sigma.size();
  if (n < 1 || n > N) throw std::invalid_argument("sample size must lie in [1, N]");
  const double nn = static_cast<double>(N);
  const double mean = sigma.mean();
  const double var = (sigma.array() - mean).square().sum() / nn;
  return nn * nn * ((nn - n) / nn * mean * mean / n - var / nn);
}

DesignDescriptor table1_design(Table1Case model_case) {
  using Kind = DesignDescriptor::Kind;
  using PiRule = DesignDescriptor::PiRule;
  switch (model_case) {
    case Table1Case::common_mean:
      return {Kind::srs, PiRule::uniform};
    case Table1Case::pure_noise:
      return {Kind::bernoulli, PiRule::expected_count};
    case Table1Case::proportional_regression:
      return {Kind::cps, PiRule::proportional_to_x};
    case Table1Case::proportional_noise:
      return {Kind::poisson, PiRule::proportional_to_x};
    case Table1Case::stratum_means:
      return {Kind::proportional_stratification, PiRule::uniform};
    case Table1Case::stratum_means_dispersions:
      return {Kind::optimal_stratification, PiRule::proportional_to_stratum_sigma};
  }
  throw std::invalid_argument("unknown model case");
}

}  // namespace balsam

#include "balsam/oracle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <stdexcept>

namespace balsam {

std::size_t EnumeratedDesign::population_size() const {
  if (support.empty()) throw std::logic_error("empty enumerated design");
  return support.front().sample.population_size();
}

void EnumeratedDesign::validate(double tol) const {
  if (support.empty()) throw std::invalid_argument("enumerated design has empty support");
  double total = 0.0;
  for (const auto& atom : support) {
    if (atom.probability < -tol) throw std::invalid_argument("negative design probability");
    if (atom.sample.population_size() != population_size()) {
      throw std::invalid_argument("mixed population sizes in enumerated design");
    }
    total += atom.probability;
  }
  if (std::abs(total - 1.0) > tol) {
    throw std::invalid_argument("design probabilities sum to " + std::to_string(total));
  }
  for (std::size_t i = 1; i < support.size(); ++i) {
    if (support[i].sample == support[i - 1].sample) {
      throw std::invalid_argument("duplicate sample in enumerated design");
    }
  }
  if (fixed_size) {
    for (const auto& atom : support) {
      if (static_cast<int>(atom.sample.size()) != *fixed_size) {
        throw std::invalid_argument("sample size differs from the fixed size");
      }
    }
  }
}

namespace {

/// Mask bit (N-1-k) holds unit k, so ascending masks enumerate indicator
/// vectors in lexicographic order.
Sample mask_to_sample(std::uint32_t mask, int N) {
  std::vector<int> idx;
  for (int k = 0; k < N; ++k) {
    if (mask & (1u << (N - 1 - k))) idx.push_back(k);
  }
  return Sample(std::move(idx), static_cast<std::size_t>(N));
}

}  // namespace

EnumeratedDesign enumerate_design(const DesignSpec& spec, const PopulationFrame& frame) {
  const int N = static_cast<int>(frame.size());
  if (N > 20) throw std::invalid_argument("enumeration supports N <= 20");

  EnumeratedDesign design;
  const std::uint64_t count = 1ull << N;

  auto add_if = [&](std::uint32_t mask, double p) {
    if (p > 0.0) design.support.push_back({mask_to_sample(mask, N), p});
  };

  if (const auto* b = std::get_if<BernoulliDesign>(&spec)) {
    if (!(b->pi >= 0.0 && b->pi <= 1.0)) throw std::invalid_argument("pi outside [0, 1]");
    for (std::uint64_t mask = 0; mask < count; ++mask) {
      const int ns = std::popcount(mask);
      add_if(static_cast<std::uint32_t>(mask),
             std::pow(b->pi, ns) * std::pow(1.0 - b->pi, N - ns));
    }
  } else if (const auto* po = std::get_if<PoissonDesign>(&spec)) {
    if (po->pi.size() != N) throw std::invalid_argument("pi length mismatch");
    for (std::uint64_t mask = 0; mask < count; ++mask) {
      double p = 1.0;
      for (int k = 0; k < N; ++k) {
        const bool in = mask & (1ull << (N - 1 - k));
        p *= in ? po->pi[k] : 1.0 - po->pi[k];
      }
      add_if(static_cast<std::uint32_t>(mask), p);
    }
  } else if (const auto* srs = std::get_if<SrsDesign>(&spec)) {
    if (srs->n < 0 || srs->n > N) throw std::invalid_argument("n outside [0, N]");
    double combos = 1.0;
    for (int i = 0; i < srs->n; ++i) combos = combos * (N - i) / (i + 1);
    design.fixed_size = srs->n;
    for (std::uint64_t mask = 0; mask < count; ++mask) {
      if (std::popcount(mask) == srs->n) add_if(static_cast<std::uint32_t>(mask), 1.0 / combos);
    }
  } else if (const auto* st = std::get_if<StratifiedDesign>(&spec)) {
    if (!frame.has_strata()) throw std::invalid_argument("frame has no strata");
    const auto H = static_cast<std::size_t>(frame.stratum_count());
    if (st->alloc.size_per_stratum.size() != H) throw std::invalid_argument("allocation mismatch");
    double p_sample = 1.0;
    for (std::size_t h = 0; h < H; ++h) {
      const int Nh = frame.stratum_sizes()[h];
      const int nh = st->alloc.size_per_stratum[h];
      if (nh < 0 || nh > Nh) throw std::invalid_argument("allocation exceeds a stratum");
      double combos = 1.0;
      for (int i = 0; i < nh; ++i) combos = combos * (Nh - i) / (i + 1);
      p_sample /= combos;
    }
    design.fixed_size = st->alloc.total();
    std::vector<int> want(H);
    for (std::size_t h = 0; h < H; ++h) want[h] = st->alloc.size_per_stratum[h];
    for (std::uint64_t mask = 0; mask < count; ++mask) {
      std::vector<int> got(H, 0);
      for (int k = 0; k < N; ++k) {
        if (mask & (1ull << (N - 1 - k))) {
          ++got[static_cast<std::size_t>(frame.stratum_of(static_cast<std::size_t>(k)))];
        }
      }
      if (got == want) add_if(static_cast<std::uint32_t>(mask), p_sample);
    }
  } else if (const auto* cps = std::get_if<CpsDesign>(&spec)) {
    if (cps->params.population_size() != frame.size()) {
      throw std::invalid_argument("CPS parameters do not match the frame");
    }
    design.fixed_size = cps->params.sample_size();
    for (std::uint64_t mask = 0; mask < count; ++mask) {
      if (std::popcount(mask) != cps->params.sample_size()) continue;
      const Sample s = mask_to_sample(static_cast<std::uint32_t>(mask), N);
      const double p = cps_probability(s, cps->params);
      if (p > 0.0) design.support.push_back({s, p});
    }
  }

  design.validate(1e-9);
  return design;
}

EnumeratedDesign empirical_design(const std::function<Sample(Rng&)>& sampler,
                                  std::size_t n_units, int replications,
                                  std::uint64_t master_seed) {
  if (replications < 1) throw std::invalid_argument("replications must be positive");
  std::map<std::vector<std::uint8_t>, long long> counts;
  for (int r = 0; r < replications; ++r) {
    Rng rng = Rng::derive(master_seed, static_cast<std::uint64_t>(r));
    const Sample s = sampler(rng);
    if (s.population_size() != n_units) throw std::invalid_argument("sampler population mismatch");
    counts[s.indicator()] += 1;
  }
  EnumeratedDesign design;
  for (const auto& [indicator, count] : counts) {
    design.support.push_back(
        {Sample::from_indicator(indicator), static_cast<double>(count) / replications});
  }
  design.validate(1e-9);
  return design;
}

Eigen::VectorXd inclusion_probabilities(const EnumeratedDesign& design) {
  const auto N = static_cast<Eigen::Index>(design.population_size());
  Eigen::VectorXd pi = Eigen::VectorXd::Zero(N);
  for (const auto& atom : design.support) {
    for (int k : atom.sample.indices()) pi[k] += atom.probability;
  }
  return pi;
}

Eigen::MatrixXd joint_inclusion(const EnumeratedDesign& design) {
  const auto N = static_cast<Eigen::Index>(design.population_size());
  Eigen::MatrixXd joint = Eigen::MatrixXd::Zero(N, N);
  for (const auto& atom : design.support) {
    const auto& idx = atom.sample.indices();
    for (std::size_t a = 0; a < idx.size(); ++a) {
      joint(idx[a], idx[a]) += atom.probability;
      for (std::size_t b = a + 1; b < idx.size(); ++b) {
        joint(idx[a], idx[b]) += atom.probability;
        joint(idx[b], idx[a]) += atom.probability;
      }
    }
  }
  return joint;
}

SecondOrderStructure second_order(const EnumeratedDesign& design) {
  return SecondOrderStructure(joint_inclusion(design), design.fixed_size.has_value());
}

double expectation(const EnumeratedDesign& design,
                   const std::function<double(const Sample&)>& statistic) {
  double acc = 0.0;
  for (const auto& atom : design.support) acc += atom.probability * statistic(atom.sample);
  return acc;
}

double total_variation(const EnumeratedDesign& a, const EnumeratedDesign& b) {
  if (a.population_size() != b.population_size()) {
    throw std::invalid_argument("designs live on different populations");
  }
  std::map<std::vector<std::uint8_t>, double> diff;
  for (const auto& atom : a.support) diff[atom.sample.indicator()] += atom.probability;
  for (const auto& atom : b.support) diff[atom.sample.indicator()] -= atom.probability;
  double tv = 0.0;
  for (const auto& [ind, d] : diff) tv += std::abs(d);
  return tv / 2.0;
}

void write_support_csv(std::ostream& out, const EnumeratedDesign& design) {
  out << "indicator,probability\n";
  char buf[40];
  for (const auto& atom : design.support) {
    for (std::uint8_t bit : atom.sample.indicator()) out << (bit ? '1' : '0');
    std::snprintf(buf, sizeof(buf), "%.17g", atom.probability);
    out << ',' << buf << '\n';
  }
}

}  // namespace balsam

#include "balsam/basic_designs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace balsam {

namespace {

/// Largest-remainder rounding of nonnegative targets to integers summing to
/// round(sum(targets)), with per-index caps. Ties broken by lowest index.
std::vector<int> largest_remainder_round(const std::vector<double>& targets,
                                         const std::vector<int>& caps, int total) {
  const std::size_t h = targets.size();
  std::vector<int> out(h, 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  int assigned = 0;
  for (std::size_t i = 0; i < h; ++i) {
    const double t = std::min(targets[i], static_cast<double>(caps[i]));
    out[i] = static_cast<int>(std::floor(t + 1e-12));
    out[i] = std::min(out[i], caps[i]);
    assigned += out[i];
    remainders.emplace_back(t - out[i], i);
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  int leftover = total - assigned;
  while (leftover > 0) {
    bool progress = false;
    for (const auto& [rem, i] : remainders) {
      if (leftover == 0) break;
      if (out[i] < caps[i]) {
        ++out[i];
        --leftover;
        progress = true;
      }
    }
    if (!progress) throw std::invalid_argument("allocation does not fit the stratum caps");
  }
  return out;
}

std::vector<int> partial_fisher_yates(std::vector<int> pool, int n, Rng& rng) {
  const std::size_t m = pool.size();
  for (int i = 0; i < n; ++i) {
    const std::size_t j = static_cast<std::size_t>(i) + rng.uniform_below(m - static_cast<std::size_t>(i));
    std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
  }
  pool.resize(static_cast<std::size_t>(n));
  return pool;
}

}  // namespace

int Allocation::total() const {
  return std::accumulate(size_per_stratum.begin(), size_per_stratum.end(), 0);
}

Sample bernoulli_sample(const PopulationFrame& frame, double pi, Rng& rng) {
  if (!(pi >= 0.0 && pi <= 1.0)) throw std::invalid_argument("bernoulli probability outside [0, 1]");
  std::vector<int> idx;
  for (std::size_t k = 0; k < frame.size(); ++k) {
    if (rng.bernoulli(pi)) idx.push_back(static_cast<int>(k));
  }
  return Sample(std::move(idx), frame.size());
}

Sample poisson_sample(const PopulationFrame& frame, const InclusionProbabilities& pi, Rng& rng) {
  if (pi.size() != frame.size()) {
    throw std::invalid_argument("inclusion probability length does not match the frame");
  }
  std::vector<int> idx;
  for (std::size_t k = 0; k < frame.size(); ++k) {
    if (rng.bernoulli(pi[k])) idx.push_back(static_cast<int>(k));
  }
  return Sample(std::move(idx), frame.size());
}

Sample srs_sample(const PopulationFrame& frame, int n, Rng& rng) {
  const int N = static_cast<int>(frame.size());
  if (n < 0 || n > N) throw std::invalid_argument("sample size must lie in [0, N]");
  std::vector<int> pool(static_cast<std::size_t>(N));
  std::iota(pool.begin(), pool.end(), 0);
  return Sample(partial_fisher_yates(std::move(pool), n, rng), frame.size());
}

Allocation proportional_allocation(const PopulationFrame& frame, int n) {
  if (!frame.has_strata()) throw std::invalid_argument("frame has no strata");
  const int N = static_cast<int>(frame.size());
  if (n < 0 || n > N) throw std::invalid_argument("sample size must lie in [0, N]");
  const auto& sizes = frame.stratum_sizes();
  for (int nh : sizes) {
    if (nh == 0) throw std::invalid_argument("degenerate stratum of size zero");
  }
  std::vector<double> targets;
  for (int nh : sizes) targets.push_back(static_cast<double>(n) * nh / N);
  Allocation alloc;
  alloc.size_per_stratum = largest_remainder_round(targets, sizes, n);
  alloc.take_all.assign(sizes.size(), false);
  return alloc;
}

double stratified_variance_objective(const std::vector<int>& stratum_sizes,
                                     const Eigen::VectorXd& stratum_sd,
                                     const std::vector<int>& allocation) {
  double obj = 0.0;
  for (std::size_t h = 0; h < stratum_sizes.size(); ++h) {
    const double nh = static_cast<double>(stratum_sizes[h]);
    const double v = stratum_sd[static_cast<Eigen::Index>(h)];
    if (v == 0.0) continue;
    if (allocation[h] <= 0) return std::numeric_limits<double>::infinity();
    obj += nh * nh * v * v * (1.0 / allocation[h] - 1.0 / nh);
  }
  return obj;
}

Allocation neyman_allocation(const PopulationFrame& frame, int n,
                             const Eigen::VectorXd& stratum_sd) {
  if (!frame.has_strata()) throw std::invalid_argument("frame has no strata");
  const auto& sizes = frame.stratum_sizes();
  const auto H = static_cast<std::size_t>(frame.stratum_count());
  if (static_cast<std::size_t>(stratum_sd.size()) != H) {
    throw std::invalid_argument("dispersion count does not match stratum count");
  }
  if ((stratum_sd.array() < 0.0).any()) throw std::invalid_argument("negative stratum dispersion");
  if (stratum_sd.isZero(0.0)) throw std::invalid_argument("all stratum dispersions are zero");
  if (n < 0 || n > static_cast<int>(frame.size())) {
    throw std::invalid_argument("sample size must lie in [0, N]");
  }
  for (int nh : sizes) {
    if (nh == 0) throw std::invalid_argument("degenerate stratum of size zero");
  }

  // Take-all fixed point: any stratum whose raw optimal allocation exceeds
  // its size is fully selected and the allocation recomputed on the rest.
  std::vector<bool> take_all(H, false);
  std::vector<double> raw(H, 0.0);
  int n_rest = n;
  while (true) {
    double denom = 0.0;
    for (std::size_t h = 0; h < H; ++h) {
      if (!take_all[h]) denom += sizes[h] * stratum_sd[static_cast<Eigen::Index>(h)];
    }
    bool changed = false;
    for (std::size_t h = 0; h < H; ++h) {
      if (take_all[h]) continue;
      raw[h] = denom > 0.0
                   ? n_rest * sizes[h] * stratum_sd[static_cast<Eigen::Index>(h)] / denom
                   : 0.0;
      if (raw[h] > sizes[h]) {
        take_all[h] = true;
        n_rest -= sizes[h];
        if (n_rest < 0) throw std::invalid_argument("take-all strata exceed the sample size");
        changed = true;
        break;  // recompute with the reduced budget
      }
    }
    if (!changed) break;
  }

  std::vector<double> targets(H, 0.0);
  std::vector<int> caps(H, 0);
  for (std::size_t h = 0; h < H; ++h) {
    if (take_all[h]) continue;
    targets[h] = raw[h];
    caps[h] = sizes[h];
  }
  std::vector<int> rounded = largest_remainder_round(targets, caps, n_rest);
  for (std::size_t h = 0; h < H; ++h) {
    if (take_all[h]) rounded[h] = sizes[h];
  }

  // Integer polish: the objective is separable convex over the allocation
  // simplex, so single-unit exchanges reach the global integer optimum.
  bool improved = true;
  while (improved) {
    improved = false;
    const double current = stratified_variance_objective(sizes, stratum_sd, rounded);
    for (std::size_t a = 0; a < H && !improved; ++a) {
      if (take_all[a] || rounded[a] == 0) continue;
      for (std::size_t b = 0; b < H && !improved; ++b) {
        if (b == a || take_all[b] || rounded[b] >= sizes[b]) continue;
        --rounded[a];
        ++rounded[b];
        if (stratified_variance_objective(sizes, stratum_sd, rounded) < current) {
          improved = true;
        } else {
          ++rounded[a];
          --rounded[b];
        }
      }
    }
  }

  Allocation alloc;
  alloc.size_per_stratum = std::move(rounded);
  alloc.take_all = std::move(take_all);
  return alloc;
}

Allocation neyman_allocation_from_y(const PopulationFrame& frame, int n,
                                    const Eigen::VectorXd& y) {
  if (!frame.has_strata()) throw std::invalid_argument("frame has no strata");
  if (y.size() != static_cast<Eigen::Index>(frame.size())) {
    throw std::invalid_argument("variable length does not match the frame");
  }
  const auto H = static_cast<std::size_t>(frame.stratum_count());
  Eigen::VectorXd sd(static_cast<Eigen::Index>(H));
  for (std::size_t h = 0; h < H; ++h) {
    const auto& members = frame.stratum_members(static_cast<int>(h));
    const auto nh = static_cast<double>(members.size());
    double mean = 0.0;
    for (int k : members) mean += y[k];
    mean /= nh;
    double ss = 0.0;
    for (int k : members) ss += (y[k] - mean) * (y[k] - mean);
    sd[static_cast<Eigen::Index>(h)] = members.size() > 1 ? std::sqrt(ss / (nh - 1.0)) : 0.0;
  }
  return neyman_allocation(frame, n, sd);
}

Sample stratified_srs_sample(const PopulationFrame& frame, const Allocation& alloc, Rng& rng) {
  if (!frame.has_strata()) throw std::invalid_argument("frame has no strata");
  const auto H = static_cast<std::size_t>(frame.stratum_count());
  if (alloc.size_per_stratum.size() != H) {
    throw std::invalid_argument("allocation does not match the stratum count");
  }
  std::vector<int> idx;
  for (std::size_t h = 0; h < H; ++h) {
    const auto& members = frame.stratum_members(static_cast<int>(h));
    const int nh = alloc.size_per_stratum[h];
    if (nh < 0 || nh > static_cast<int>(members.size())) {
      throw std::invalid_argument("allocation exceeds a stratum size");
    }
    std::vector<int> chosen = partial_fisher_yates(members, nh, rng);
    idx.insert(idx.end(), chosen.begin(), chosen.end());
  }
  return Sample(std::move(idx), frame.size());
}

InclusionProbabilities stratified_pi(const PopulationFrame& frame, const Allocation& alloc) {
  if (!frame.has_strata()) throw std::invalid_argument("frame has no strata");
  Eigen::VectorXd pi(static_cast<Eigen::Index>(frame.size()));
  for (std::size_t k = 0; k < frame.size(); ++k) {
    const int h = frame.stratum_of(k);
    pi[static_cast<Eigen::Index>(k)] =
        static_cast<double>(alloc.size_per_stratum[static_cast<std::size_t>(h)]) /
        frame.stratum_sizes()[static_cast<std::size_t>(h)];
  }
  return InclusionProbabilities(std::move(pi));
}

InclusionProbabilities optimal_inclusion_probabilities(const Eigen::VectorXd& sigma, int n) {
  const auto N = sigma.size();
  if ((sigma.array() < 0.0).any()) throw std::invalid_argument("negative dispersion");
  if (sigma.sum() <= 0.0) throw std::invalid_argument("dispersions must not be all zero");
  if (n < 0 || n > static_cast<int>(N)) throw std::invalid_argument("sample size must lie in [0, N]");

  Eigen::VectorXd pi = Eigen::VectorXd::Zero(N);
  std::vector<bool> capped(static_cast<std::size_t>(N), false);
  int n_rest = n;
  while (true) {
    double denom = 0.0;
    int positive = 0;
    for (Eigen::Index k = 0; k < N; ++k) {
      if (!capped[static_cast<std::size_t>(k)] && sigma[k] > 0.0) {
        denom += sigma[k];
        ++positive;
      }
    }
    if (n_rest > positive) {
      throw std::invalid_argument("sample size exceeds the number of units with positive dispersion");
    }
    if (n_rest == 0 || denom == 0.0) break;
    bool changed = false;
    for (Eigen::Index k = 0; k < N; ++k) {
      if (capped[static_cast<std::size_t>(k)] || sigma[k] <= 0.0) continue;
      const double value = n_rest * sigma[k] / denom;
      if (value >= 1.0) {
        pi[k] = 1.0;
        capped[static_cast<std::size_t>(k)] = true;
        --n_rest;
        changed = true;
        break;  // redistribute with the reduced budget
      }
      pi[k] = value;
    }
    if (!changed) break;
  }
  return InclusionProbabilities(std::move(pi));
}

namespace {

/// Description of an axis of a complete rectangular lattice: origin, spacing
/// and point count. Throws if the values are not evenly spaced.
struct LatticeAxis {
  double origin = 0.0;
  double spacing = 1.0;
  int count = 1;
};

LatticeAxis infer_axis(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end(),
                           [](double a, double b) { return std::abs(a - b) < 1e-9; }),
               values.end());
  LatticeAxis axis;
  axis.origin = values.front();
  axis.count = static_cast<int>(values.size());
  if (axis.count > 1) {
    axis.spacing = values[1] - values[0];
    for (std::size_t i = 1; i < values.size(); ++i) {
      if (std::abs(values[i] - values[i - 1] - axis.spacing) > 1e-9 * std::max(1.0, axis.spacing)) {
        throw std::invalid_argument("coordinates do not form a regular lattice");
      }
    }
  }
  return axis;
}

}  // namespace

Sample systematic_grid_sample(const PopulationFrame& frame, int n, Rng& rng) {
  if (!frame.has_coords() || frame.coords().cols() != 2) {
    throw std::invalid_argument("systematic sampling requires 2-d lattice coordinates");
  }
  const int N = static_cast<int>(frame.size());
  if (n < 0 || n > N) throw std::invalid_argument("sample size must lie in [0, N]");
  if (n == 0) return Sample({}, frame.size());

  const Eigen::MatrixXd& coords = frame.coords();
  std::vector<double> xs(frame.size()), ys(frame.size());
  for (std::size_t k = 0; k < frame.size(); ++k) {
    xs[k] = coords(static_cast<Eigen::Index>(k), 0);
    ys[k] = coords(static_cast<Eigen::Index>(k), 1);
  }
  const LatticeAxis ax = infer_axis(xs);
  const LatticeAxis ay = infer_axis(ys);
  if (ax.count * ay.count != N) throw std::invalid_argument("coordinates do not form a regular lattice");

  // Occupancy map: every lattice cell must hold exactly one unit.
  std::vector<int> cell_unit(static_cast<std::size_t>(N), -1);
  for (std::size_t k = 0; k < frame.size(); ++k) {
    const int ix = static_cast<int>(std::lround((xs[k] - ax.origin) / ax.spacing));
    const int iy = static_cast<int>(std::lround((ys[k] - ay.origin) / ay.spacing));
    const std::size_t cell = static_cast<std::size_t>(ix) * ay.count + iy;
    if (ix < 0 || ix >= ax.count || iy < 0 || iy >= ay.count || cell_unit[cell] != -1) {
      throw std::invalid_argument("coordinates do not form a regular lattice");
    }
    cell_unit[cell] = static_cast<int>(k);
  }

  // Most-square factorization n = cols x rows that fits the lattice.
  int best_cols = -1, best_rows = -1;
  double best_score = std::numeric_limits<double>::infinity();
  for (int cols = 1; cols <= n; ++cols) {
    if (n % cols != 0) continue;
    const int rows = n / cols;
    if (cols > ax.count || rows > ay.count) continue;
    const double step_x = static_cast<double>(ax.count) / cols;
    const double step_y = static_cast<double>(ay.count) / rows;
    const double score = std::abs(std::log(step_x / step_y));
    if (score < best_score) {
      best_score = score;
      best_cols = cols;
      best_rows = rows;
    }
  }

  // Torus-nearest lattice index for a position in lattice units; ties go to
  // the smaller coordinate, hence the smaller unit index.
  auto wrap_index = [](double t, int count) {
    int i = static_cast<int>(std::ceil(t - 0.5));
    i %= count;
    if (i < 0) i += count;
    return i;
  };

  std::vector<int> idx;
  idx.reserve(static_cast<std::size_t>(n));
  if (best_cols > 0) {
    const double step_x = static_cast<double>(ax.count) / best_cols;
    const double step_y = static_cast<double>(ay.count) / best_rows;
    const double off_x = rng.uniform() * step_x;
    const double off_y = rng.uniform() * step_y;
    for (int i = 0; i < best_cols; ++i) {
      const int ix = wrap_index(off_x + i * step_x, ax.count);
      for (int j = 0; j < best_rows; ++j) {
        const int iy = wrap_index(off_y + j * step_y, ay.count);
        idx.push_back(cell_unit[static_cast<std::size_t>(ix) * ay.count + iy]);
      }
    }
  } else {
    // No 2-d factorization fits (e.g. a prime n on a small lattice): fall
    // back to a 1-d systematic pass over the row-major cell order.
    const double step = static_cast<double>(N) / n;
    const double off = rng.uniform() * step;
    for (int j = 0; j < n; ++j) {
      auto cell = static_cast<std::size_t>(off + j * step);
      if (cell >= static_cast<std::size_t>(N)) cell = static_cast<std::size_t>(N) - 1;
      idx.push_back(cell_unit[cell]);
    }
  }
  return Sample(std::move(idx), frame.size());
}

}  // namespace balsam

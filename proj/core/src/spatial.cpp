#include "balsam/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <stdexcept>

#include "balsam/detail/kdtree.hpp"

namespace balsam {

namespace {

constexpr double kResolveEps = 1e-12;
constexpr std::size_t kTreeThreshold = 10000;  // linear scans below, k-d tree above

bool resolved(double v) { return v <= kResolveEps || v >= 1.0 - kResolveEps; }

double snap(double v) {
  if (v <= kResolveEps) return 0.0;
  if (v >= 1.0 - kResolveEps) return 1.0;
  return v;
}

/// Unresolved-unit bookkeeping shared by the local pivotal and local cube
/// methods: uniform random picks, removal, and nearest-neighbour queries
/// over the still-active units.
class NeighborPool {
 public:
  NeighborPool(const Eigen::MatrixXd& points, std::vector<int> active)
      : points_(points), active_(std::move(active)) {
    position_.assign(static_cast<std::size_t>(points_.rows()), -1);
    for (std::size_t i = 0; i < active_.size(); ++i) position_[active_[i]] = static_cast<int>(i);
    if (static_cast<std::size_t>(points_.rows()) > kTreeThreshold) {
      tree_ = std::make_unique<detail::KdTree>(points_);
      for (int k = 0; k < static_cast<int>(points_.rows()); ++k) {
        if (position_[k] < 0) tree_->remove(k);
      }
    }
  }

  std::size_t size() const { return active_.size(); }
  int pick(Rng& rng) const { return active_[rng.uniform_below(active_.size())]; }

  void remove(int unit) {
    const int pos = position_[unit];
    position_[active_.back()] = pos;
    std::swap(active_[static_cast<std::size_t>(pos)], active_.back());
    active_.pop_back();
    position_[unit] = -1;
    if (tree_) tree_->remove(unit);
  }

  /// Nearest active neighbour of `from`; distance ties resolved uniformly.
  int nearest(int from, Rng& rng) const {
    std::vector<int> ties;
    if (tree_) {
      ties = tree_->nearest_set(from);
    } else {
      double best = std::numeric_limits<double>::infinity();
      for (int k : active_) {
        if (k == from) continue;
        const double d2 = (points_.row(k) - points_.row(from)).squaredNorm();
        if (d2 < best - 1e-12 * (1.0 + best)) {
          best = d2;
          ties.clear();
          ties.push_back(k);
        } else if (d2 <= best + 1e-12 * (1.0 + best)) {
          ties.push_back(k);
        }
      }
    }
    if (ties.empty()) throw std::logic_error("no active neighbour available");
    return ties.size() == 1 ? ties[0] : ties[rng.uniform_below(ties.size())];
  }

  /// The m nearest active neighbours of `from` (unordered).
  std::vector<int> k_nearest(int from, int m) const {
    if (tree_) return tree_->k_nearest(from, m);
    std::vector<std::pair<double, int>> heap;
    heap.reserve(static_cast<std::size_t>(m) + 1);
    for (int k : active_) {
      if (k == from) continue;
      const double d2 = (points_.row(k) - points_.row(from)).squaredNorm();
      if (static_cast<int>(heap.size()) < m) {
        heap.emplace_back(d2, k);
        std::push_heap(heap.begin(), heap.end());
      } else if (d2 < heap.front().first) {
        std::pop_heap(heap.begin(), heap.end());
        heap.back() = {d2, k};
        std::push_heap(heap.begin(), heap.end());
      }
    }
    std::vector<int> out;
    out.reserve(heap.size());
    for (const auto& [d2, k] : heap) out.push_back(k);
    return out;
  }

 private:
  const Eigen::MatrixXd& points_;
  std::vector<int> active_;
  std::vector<int> position_;
  std::unique_ptr<detail::KdTree> tree_;
};

/// Splits units into excluded (pi = 0), forced (pi = 1) and interior sets.
struct Partition {
  std::vector<int> forced;
  std::vector<int> interior;
};

Partition partition_by_pi(const InclusionProbabilities& pi) {
  Partition out;
  for (std::size_t k = 0; k < pi.size(); ++k) {
    const double p = pi[k];
    if (p >= 1.0 - kResolveEps) {
      out.forced.push_back(static_cast<int>(k));
    } else if (p > kResolveEps) {
      out.interior.push_back(static_cast<int>(k));
    }
  }
  return out;
}

}  // namespace

DistanceContext DistanceContext::euclidean(const PopulationFrame& frame) {
  if (!frame.has_coords()) throw std::invalid_argument("frame has no coordinates");
  return DistanceContext(frame.coords());
}

DistanceContext DistanceContext::mahalanobis(const PopulationFrame& frame) {
  if (frame.size() < 2) throw std::invalid_argument("mahalanobis context needs at least 2 units");
  const Eigen::MatrixXd& x = frame.aux();
  const auto p = x.cols();
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mean;
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(x.rows());

  bool regularized = false;
  const double trace = cov.trace();
  if (trace <= 0.0) {
    // Constant auxiliaries: all distances are zero either way.
    return DistanceContext(Eigen::MatrixXd::Zero(x.rows(), p), true);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.eigenvalues().minCoeff() < 1e-12 * trace / static_cast<double>(p)) {
    cov += 1e-10 * trace / static_cast<double>(p) *
           Eigen::MatrixXd::Identity(p, p);
    regularized = true;
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("covariance factorization failed despite regularization");
  }
  // Whitened points: squared Euclidean distance equals Mahalanobis distance.
  Eigen::MatrixXd z = llt.matrixL().solve(centered.transpose()).transpose();
  return DistanceContext(std::move(z), regularized);
}

std::pair<double, double> pivotal_update(double pi_i, double pi_j, Rng& rng) {
  if (!(pi_i > 0.0 && pi_i < 1.0 && pi_j > 0.0 && pi_j < 1.0)) {
    throw std::invalid_argument("pivotal update requires probabilities strictly inside (0, 1)");
  }
  const double sum = pi_i + pi_j;
  if (sum < 1.0) {
    return rng.uniform() < pi_i / sum ? std::pair{sum, 0.0} : std::pair{0.0, sum};
  }
  return rng.uniform() < (1.0 - pi_j) / (2.0 - sum) ? std::pair{1.0, sum - 1.0}
                                                    : std::pair{sum - 1.0, 1.0};
}

Sample sequential_pivotal_sample(const PopulationFrame& frame,
                                 const InclusionProbabilities& pi, Rng& rng) {
  if (pi.size() != frame.size()) throw std::invalid_argument("pi length does not match the frame");
  Eigen::VectorXd v = pi.values();
  std::vector<int> pending;
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    if (!resolved(v[k])) pending.push_back(static_cast<int>(k));
  }

  std::size_t first = 0;
  while (pending.size() - first >= 2) {
    const int i = pending[first];
    const int j = pending[first + 1];
    const auto [vi, vj] = pivotal_update(v[i], v[j], rng);
    v[i] = snap(vi);
    v[j] = snap(vj);
    // Keep the still-unresolved duellist (if any) as the next first.
    if (resolved(v[i]) && resolved(v[j])) {
      first += 2;
    } else {
      ++first;
      pending[first] = resolved(v[i]) ? j : i;
    }
  }
  if (pending.size() - first == 1) {
    const int k = pending[first];
    v[k] = rng.bernoulli(v[k]) ? 1.0 : 0.0;
  }

  std::vector<int> idx;
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    if (v[k] >= 1.0 - kResolveEps) idx.push_back(static_cast<int>(k));
  }
  return Sample(std::move(idx), frame.size());
}

Sample local_pivotal_sample(const PopulationFrame& frame, const InclusionProbabilities& pi,
                            const DistanceContext& ctx, Rng& rng) {
  if (pi.size() != frame.size() || ctx.size() != frame.size()) {
    throw std::invalid_argument("dimension mismatch in local_pivotal_sample");
  }
  Eigen::VectorXd v = pi.values();
  const Partition parts = partition_by_pi(pi);
  NeighborPool pool(ctx.points(), parts.interior);

  while (pool.size() >= 2) {
    const int i = pool.pick(rng);
    const int j = pool.nearest(i, rng);
    const auto [vi, vj] = pivotal_update(v[i], v[j], rng);
    v[i] = snap(vi);
    v[j] = snap(vj);
    if (resolved(v[i])) pool.remove(i);
    if (resolved(v[j])) pool.remove(j);
  }
  if (pool.size() == 1) {
    const int k = pool.pick(rng);
    v[k] = rng.bernoulli(v[k]) ? 1.0 : 0.0;
  }

  std::vector<int> idx = parts.forced;
  for (int k : parts.interior) {
    if (v[k] >= 1.0 - kResolveEps) idx.push_back(k);
  }
  return Sample(std::move(idx), frame.size());
}

namespace {

/// Hierarchically randomized quadtree order: children permuted uniformly at
/// every node, subdivision until the cell mass is at most one (depth cap for
/// co-located points), random order inside leaves.
void grts_order(const std::vector<int>& units, const Eigen::MatrixXd& coords,
                const Eigen::VectorXd& pi, double x0, double y0, double extent, int depth,
                Rng& rng, std::vector<int>& out) {
  double mass = 0.0;
  for (int k : units) mass += pi[k];
  if (units.size() <= 1 || mass <= 1.0 || depth >= 20) {
    std::vector<int> leaf = units;
    rng.shuffle(leaf.begin(), leaf.end());
    out.insert(out.end(), leaf.begin(), leaf.end());
    return;
  }
  const double half = extent / 2.0;
  std::vector<int> quadrant[4];
  for (int k : units) {
    const int qx = coords(k, 0) < x0 + half ? 0 : 1;
    const int qy = coords(k, 1) < y0 + half ? 0 : 1;
    quadrant[qx * 2 + qy].push_back(k);
  }
  int order[4] = {0, 1, 2, 3};
  rng.shuffle(std::begin(order), std::end(order));
  for (int q : order) {
    if (quadrant[q].empty()) continue;
    const double qx0 = x0 + (q / 2) * half;
    const double qy0 = y0 + (q % 2) * half;
    grts_order(quadrant[q], coords, pi, qx0, qy0, half, depth + 1, rng, out);
  }
}

}  // namespace

Sample grts_sample(const PopulationFrame& frame, const InclusionProbabilities& pi, Rng& rng) {
  if (!frame.has_coords() || frame.coords().cols() != 2) {
    throw std::invalid_argument("GRTS requires 2-d coordinates");
  }
  if (pi.size() != frame.size()) throw std::invalid_argument("pi length does not match the frame");
  if (!pi.is_integer_size()) {
    throw std::invalid_argument("GRTS requires an integral expected sample size");
  }
  for (std::size_t k = 0; k < pi.size(); ++k) {
    if (pi[k] >= 1.0) throw std::invalid_argument("GRTS requires pi_k < 1");
  }
  const int n = pi.integer_size();
  if (n == 0) return Sample({}, frame.size());

  const Eigen::MatrixXd& coords = frame.coords();
  const double x0 = coords.col(0).minCoeff();
  const double y0 = coords.col(1).minCoeff();
  const double extent = std::max({coords.col(0).maxCoeff() - x0,
                                  coords.col(1).maxCoeff() - y0, 1e-12});

  std::vector<int> units(frame.size());
  std::iota(units.begin(), units.end(), 0);
  std::vector<int> order;
  order.reserve(frame.size());
  grts_order(units, coords, pi.values(), x0, y0, extent * (1.0 + 1e-12), 0, rng, order);

  // Systematic pass along the ordered units: thresholds u, u+1, ..., u+n-1
  // on the cumulative (normalized) probabilities.
  const double scale = static_cast<double>(n) / pi.expected_size();
  const double u = rng.uniform();
  std::vector<int> idx;
  idx.reserve(static_cast<std::size_t>(n));
  double cumulative = 0.0;
  int next_target = 0;
  for (int k : order) {
    cumulative += pi[static_cast<std::size_t>(k)] * scale;
    if (next_target < n && u + next_target < cumulative) {
      idx.push_back(k);
      ++next_target;
    }
  }
  // Cumulative rounding can starve the last threshold; the tail units are
  // the ones its interval covers.
  for (auto it = order.rbegin(); next_target < n && it != order.rend(); ++it) {
    if (std::find(idx.begin(), idx.end(), *it) == idx.end()) {
      idx.push_back(*it);
      ++next_target;
    }
  }
  return Sample(std::move(idx), frame.size());
}

Sample local_cube_sample(const PopulationFrame& frame, const InclusionProbabilities& pi,
                         const Eigen::MatrixXd& aux, const DistanceContext& ctx, Rng& rng) {
  const auto N = static_cast<Eigen::Index>(frame.size());
  if (pi.size() != frame.size() || aux.rows() != N || ctx.size() != frame.size()) {
    throw std::invalid_argument("dimension mismatch in local_cube_sample");
  }

  const Partition parts = partition_by_pi(pi);
  std::vector<int> idx = parts.forced;
  if (!parts.interior.empty()) {
    const auto m = static_cast<Eigen::Index>(parts.interior.size());
    Eigen::VectorXd sub_pi(m);
    Eigen::MatrixXd sub_aux(m, aux.cols());
    Eigen::MatrixXd sub_points(m, ctx.points().cols());
    for (Eigen::Index i = 0; i < m; ++i) {
      const int k = parts.interior[static_cast<std::size_t>(i)];
      sub_pi[i] = pi[static_cast<std::size_t>(k)];
      sub_aux.row(i) = aux.row(k);
      sub_points.row(i) = ctx.points().row(k);
    }
    const BalancingProblem problem(InclusionProbabilities(sub_pi), std::move(sub_aux));
    const auto p_eff = static_cast<int>(problem.constraint_count());

    Eigen::VectorXd v = problem.pi().values();
    std::vector<int> all(static_cast<std::size_t>(m));
    std::iota(all.begin(), all.end(), 0);
    NeighborPool pool(sub_points, all);

    // Local flight steps on clusters of p_eff + 1 close unresolved units:
    // each step resolves at least one of them and keeps the balance.
    while (static_cast<int>(pool.size()) > p_eff + 1) {
      const int center = pool.pick(rng);
      std::vector<int> cluster = pool.k_nearest(center, p_eff);
      cluster.push_back(center);
      const auto plan = detail::plan_flight_step(problem.constraints(), cluster, v);
      if (!plan) break;  // degenerate constraints on this cluster
      for (int unit : detail::apply_flight_step(*plan, cluster, v, rng)) pool.remove(unit);
    }

    // Global finish on whatever remains.
    std::vector<int> rest;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (!resolved(v[i])) rest.push_back(static_cast<int>(i));
    }
    rng.shuffle(rest.begin(), rest.end());
    detail::run_flight(problem.constraints(), v, rest, rng, nullptr);

    FlightState state;
    state.v = v;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (v[i] > 0.0 && v[i] < 1.0) state.free_units.push_back(static_cast<int>(i));
    }
    const Sample sub = landing_phase(state, problem, rng);
    for (int i : sub.indices()) idx.push_back(parts.interior[static_cast<std::size_t>(i)]);
  }
  return Sample(std::move(idx), frame.size());
}

}  // namespace balsam

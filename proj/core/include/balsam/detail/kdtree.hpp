#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

namespace balsam::detail {

/// Static k-d tree over the rows of a point matrix with lazy point removal,
/// used for nearest-unresolved-neighbor queries once populations are large
/// enough that linear scans hurt. Ties at the minimal distance are reported
/// exhaustively so the caller can randomize among them.
class KdTree {
 public:
  explicit KdTree(const Eigen::MatrixXd& points) : points_(points) {
    const auto n = static_cast<std::size_t>(points_.rows());
    perm_.resize(n);
    std::iota(perm_.begin(), perm_.end(), 0);
    nodes_.reserve(2 * n);
    alive_.assign(n, true);
    locator_.resize(n);
    root_ = build(0, n, 0);
  }

  void remove(int point) {
    alive_[static_cast<std::size_t>(point)] = false;
    for (int node = locator_[static_cast<std::size_t>(point)]; node >= 0;
         node = nodes_[static_cast<std::size_t>(node)].parent) {
      nodes_[static_cast<std::size_t>(node)].alive_count -= 1;
    }
  }

  bool alive(int point) const { return alive_[static_cast<std::size_t>(point)]; }

  /// All alive points (excluding `from`) at the minimal distance from it,
  /// within a relative slack that absorbs floating error on exact ties.
  std::vector<int> nearest_set(int from) const {
    double best = std::numeric_limits<double>::infinity();
    search_min(root_, from, best);
    if (!std::isfinite(best)) return {};
    std::vector<int> ties;
    const double bound = best + 1e-9 * (1.0 + best);
    collect(root_, from, bound, ties);
    std::vector<int> out;
    const double strict = best + 1e-12 * (1.0 + best);
    for (int t : ties) {
      if (squared_distance(from, t) <= strict) out.push_back(t);
    }
    return out;
  }

  /// The m alive points closest to `from` (excluding it), unordered.
  std::vector<int> k_nearest(int from, int m) const;

  double squared_distance(int a, int b) const {
    return (points_.row(a) - points_.row(b)).squaredNorm();
  }

 private:
  struct Node {
    int axis = 0;
    double split = 0.0;
    int left = -1, right = -1, parent = -1;
    int point = -1;  // leaf payload
    int alive_count = 0;
  };

  int build(std::size_t begin, std::size_t end, int parent) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({});
    nodes_[static_cast<std::size_t>(id)].parent = parent;
    nodes_[static_cast<std::size_t>(id)].alive_count = static_cast<int>(end - begin);
    if (end - begin == 1) {
      nodes_[static_cast<std::size_t>(id)].point = static_cast<int>(perm_[begin]);
      locator_[perm_[begin]] = id;
      return id;
    }
    // Split on the widest axis at the median.
    const auto d = points_.cols();
    int axis = 0;
    double widest = -1.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (std::size_t i = begin; i < end; ++i) {
        const double v = points_(static_cast<Eigen::Index>(perm_[i]), j);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (hi - lo > widest) {
        widest = hi - lo;
        axis = static_cast<int>(j);
      }
    }
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(perm_.begin() + static_cast<std::ptrdiff_t>(begin),
                     perm_.begin() + static_cast<std::ptrdiff_t>(mid),
                     perm_.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) {
                       return points_(static_cast<Eigen::Index>(a), axis) <
                              points_(static_cast<Eigen::Index>(b), axis);
                     });
    nodes_[static_cast<std::size_t>(id)].axis = axis;
    nodes_[static_cast<std::size_t>(id)].split =
        points_(static_cast<Eigen::Index>(perm_[mid]), axis);
    const int left = build(begin, mid, id);
    const int right = build(mid, end, id);
    nodes_[static_cast<std::size_t>(id)].left = left;
    nodes_[static_cast<std::size_t>(id)].right = right;
    return id;
  }

  void search_min(int node, int from, double& best) const {
    const Node& nd = nodes_[static_cast<std::size_t>(node)];
    if (nd.alive_count == 0) return;
    if (nd.point >= 0) {
      if (nd.point != from && alive_[static_cast<std::size_t>(nd.point)]) {
        best = std::min(best, squared_distance(from, nd.point));
      }
      return;
    }
    const double q = points_(from, nd.axis);
    const double gap = q - nd.split;
    const int first = gap < 0.0 ? nd.left : nd.right;
    const int second = gap < 0.0 ? nd.right : nd.left;
    search_min(first, from, best);
    if (gap * gap <= best) search_min(second, from, best);
  }

  void collect(int node, int from, double bound, std::vector<int>& out) const {
    const Node& nd = nodes_[static_cast<std::size_t>(node)];
    if (nd.alive_count == 0) return;
    if (nd.point >= 0) {
      if (nd.point != from && alive_[static_cast<std::size_t>(nd.point)] &&
          squared_distance(from, nd.point) <= bound) {
        out.push_back(nd.point);
      }
      return;
    }
    const double gap = points_(from, nd.axis) - nd.split;
    collect(gap < 0.0 ? nd.left : nd.right, from, bound, out);
    if (gap * gap <= bound) collect(gap < 0.0 ? nd.right : nd.left, from, bound, out);
  }

  void search_k(int node, int from, int m, std::vector<std::pair<double, int>>& heap) const {
    const Node& nd = nodes_[static_cast<std::size_t>(node)];
    if (nd.alive_count == 0) return;
    if (nd.point >= 0) {
      if (nd.point == from || !alive_[static_cast<std::size_t>(nd.point)]) return;
      const double d2 = squared_distance(from, nd.point);
      if (static_cast<int>(heap.size()) < m) {
        heap.emplace_back(d2, nd.point);
        std::push_heap(heap.begin(), heap.end());
      } else if (d2 < heap.front().first) {
        std::pop_heap(heap.begin(), heap.end());
        heap.back() = {d2, nd.point};
        std::push_heap(heap.begin(), heap.end());
      }
      return;
    }
    const double gap = points_(from, nd.axis) - nd.split;
    search_k(gap < 0.0 ? nd.left : nd.right, from, m, heap);
    if (static_cast<int>(heap.size()) < m || gap * gap <= heap.front().first) {
      search_k(gap < 0.0 ? nd.right : nd.left, from, m, heap);
    }
  }

  const Eigen::MatrixXd& points_;
  std::vector<std::size_t> perm_;
  std::vector<Node> nodes_;
  std::vector<bool> alive_;
  std::vector<int> locator_;
  int root_ = -1;
};

inline std::vector<int> KdTree::k_nearest(int from, int m) const {
  std::vector<std::pair<double, int>> heap;
  heap.reserve(static_cast<std::size_t>(m) + 1);
  search_k(root_, from, m, heap);
  std::vector<int> out;
  out.reserve(heap.size());
  for (const auto& [d2, idx] : heap) out.push_back(idx);
  return out;
}

}  // namespace balsam::detail

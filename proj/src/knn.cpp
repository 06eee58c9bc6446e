#include "grounder/knn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace grounder {

namespace {

constexpr std::size_t kLeafSize = 12;

/// The best `k` candidates so far, kept sorted by (squared distance, index).
class BestK {
 public:
  explicit BestK(std::size_t k) : k_(k) { best_.reserve(k + 1); }

  [[nodiscard]] bool full() const { return best_.size() == k_; }
  [[nodiscard]] double worst() const { return best_.back().first; }

  void offer(double d2, std::size_t idx) {
    const std::pair<double, std::size_t> c{d2, idx};
    if (full() && !(c < best_.back())) return;
    auto pos = best_.end();
    while (pos != best_.begin() && c < *(pos - 1)) --pos;
    best_.insert(pos, c);
    if (best_.size() > k_) best_.pop_back();
  }

  std::vector<std::pair<double, std::size_t>> take_sorted() { return std::move(best_); }

 private:
  std::size_t k_;
  std::vector<std::pair<double, std::size_t>> best_;
};

}  // namespace

KdTree3::KdTree3(std::span<const Vec3> points) : points_(points) {
  work_.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) work_.push_back({points[i], i});
  if (!work_.empty()) root_ = build(0, work_.size());
  order_.reserve(work_.size());
  sorted_.reserve(work_.size());
  for (const auto& w : work_) {
    order_.push_back(w.index);
    sorted_.push_back(w.point);
  }
  work_.clear();
  work_.shrink_to_fit();
}

int KdTree3::build(std::size_t begin, std::size_t end) {
  const int id = static_cast<int>(nodes_.size());
  Vec3 lo = work_[begin].point, hi = lo;
  for (std::size_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(work_[i].point);
    hi = hi.cwiseMax(work_[i].point);
  }
  nodes_.push_back({begin, end});
  nodes_.back().lo = lo;
  nodes_.back().hi = hi;
  if (end - begin <= kLeafSize) return id;

  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] == lo[axis]) return id;  // all points coincide

  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(work_.begin() + static_cast<long>(begin), work_.begin() + static_cast<long>(mid),
                   work_.begin() + static_cast<long>(end),
                   [axis](const Entry& a, const Entry& b) { return a.point[axis] < b.point[axis]; });
  const double split = work_[mid].point[axis];
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[static_cast<std::size_t>(id)].axis = axis;
  nodes_[static_cast<std::size_t>(id)].split = split;
  nodes_[static_cast<std::size_t>(id)].left = left;
  nodes_[static_cast<std::size_t>(id)].right = right;
  return id;
}

inline double KdTree3::box_distance2(int node, const Vec3& q) const {
  const Node& n = nodes_[static_cast<std::size_t>(node)];
  double d2 = 0;
  for (int a = 0; a < 3; ++a) {
    const double below = n.lo[a] - q[a], above = q[a] - n.hi[a];
    if (below > 0) d2 += below * below;
    else if (above > 0) d2 += above * above;
  }
  return d2;
}

template <class Visit>
void KdTree3::search(const Vec3& query, Visit&& visit, const double& bound) const {
  // Depth-first with the near child first; prune on the distance to each node's bounds.
  struct Pending {
    int node;
    double d2;
  };
  constexpr std::size_t kMaxDepth = 128;
  Pending stack[kMaxDepth];
  std::size_t top = 0;
  stack[top++] = {root_, box_distance2(root_, query)};
  while (top > 0) {
    const auto [node_id, d2] = stack[--top];
    if (d2 > bound) continue;
    const Node& node = nodes_[static_cast<std::size_t>(node_id)];
    if (node.axis < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) visit(i);
      continue;
    }
    const bool left_first = query[node.axis] < node.split;
    const int near = left_first ? node.left : node.right;
    const int far = left_first ? node.right : node.left;
    stack[top++] = {far, box_distance2(far, query)};
    stack[top++] = {near, d2};
  }
}

std::vector<KdTree3::Neighbor> KdTree3::knn(const Vec3& query, std::size_t k, std::size_t exclude) const {
  std::vector<Neighbor> out;
  if (k == 0 || root_ < 0) return out;
  BestK best(k);
  double bound = std::numeric_limits<double>::infinity();
  search(
      query,
      [&](std::size_t i) {
        const std::size_t idx = order_[i];
        if (idx == exclude) return;
        best.offer((sorted_[i] - query).squaredNorm(), idx);
        if (best.full()) bound = best.worst();
      },
      bound);
  const auto sorted = best.take_sorted();
  out.reserve(sorted.size());
  for (const auto& [d2, idx] : sorted) out.push_back({idx, std::sqrt(d2)});
  return out;
}

KdTree3::Neighbor KdTree3::nearest(const Vec3& query) const {
  if (root_ < 0) throw std::invalid_argument("nearest neighbour query on an empty tree");
  double bound = std::numeric_limits<double>::infinity();
  std::size_t best = kNone;
  search(
      query,
      [&](std::size_t i) {
        const double d2 = (sorted_[i] - query).squaredNorm();
        if (d2 < bound || (d2 == bound && order_[i] < best)) bound = d2, best = order_[i];
      },
      bound);
  return {best, std::sqrt(bound)};
}

}  // namespace grounder

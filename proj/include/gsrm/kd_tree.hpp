#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <queue>
#include <span>
#include <utility>
#include <vector>

namespace gsrm {

// Static 3D kd-tree for exact k-nearest-neighbour queries. Equal distances
// are ordered by point index, so results are deterministic.
class KdTree3 {
 public:
  using Point = std::array<float, 3>;

  explicit KdTree3(std::span<const Point> points) : points_(points.begin(), points.end()) {
    order_.resize(points_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<std::uint32_t>(i);
    if (!order_.empty()) root_ = build(0, order_.size());
  }

  std::size_t size() const noexcept { return points_.size(); }

  // Up to k nearest points (by index into the build span), nearest first.
  // `exclude` is skipped, typically the query point itself.
  std::vector<std::size_t> knn(const Point& query, std::size_t k, std::size_t exclude = SIZE_MAX) const {
    std::vector<std::size_t> out;
    if (k == 0 || root_ < 0) return out;
    Heap heap;
    search(root_, query, k, exclude, heap);
    std::vector<Entry> items;
    items.reserve(heap.size());
    while (!heap.empty()) {
      items.push_back(heap.top());
      heap.pop();
    }
    std::reverse(items.begin(), items.end());
    out.reserve(items.size());
    for (const auto& e : items) out.push_back(e.second);
    return out;
  }

  static double squared_distance(const Point& a, const Point& b) {
    double s = 0.0;
    for (int i = 0; i < 3; ++i) {
      const double d = static_cast<double>(a[i]) - b[i];
      s += d * d;
    }
    return s;
  }

 private:
  using Entry = std::pair<double, std::size_t>;  // (squared distance, index); max-heap keeps the worst on top
  using Heap = std::priority_queue<Entry>;

  struct Node {
    std::size_t begin = 0, end = 0;  // leaf range in order_
    int axis = -1;                   // -1 for leaves
    float split = 0.0f;
    int left = -1, right = -1;
  };

  static constexpr std::size_t kLeafSize = 8;

  int build(std::size_t begin, std::size_t end) {
    Node node;
    node.begin = begin;
    node.end = end;
    if (end - begin > kLeafSize) {
      Point lo = points_[order_[begin]], hi = lo;
      for (std::size_t i = begin; i < end; ++i) {
        for (int a = 0; a < 3; ++a) {
          lo[a] = std::min(lo[a], points_[order_[i]][a]);
          hi[a] = std::max(hi[a], points_[order_[i]][a]);
        }
      }
      int axis = 0;
      for (int a = 1; a < 3; ++a) {
        if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;
      }
      if (hi[axis] > lo[axis]) {
        const std::size_t mid = begin + (end - begin) / 2;
        std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                         order_.begin() + static_cast<std::ptrdiff_t>(mid),
                         order_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::uint32_t a, std::uint32_t b) {
                           if (points_[a][axis] != points_[b][axis]) return points_[a][axis] < points_[b][axis];
                           return a < b;
                         });
        node.axis = axis;
        node.split = points_[order_[mid]][axis];
        const int self = static_cast<int>(nodes_.size());
        nodes_.push_back(node);
        const int l = build(begin, mid);
        const int r = build(mid, end);
        nodes_[static_cast<std::size_t>(self)].left = l;
        nodes_[static_cast<std::size_t>(self)].right = r;
        return self;
      }
    }
    nodes_.push_back(node);
    return static_cast<int>(nodes_.size() - 1);
  }

  static void offer(Heap& heap, std::size_t k, Entry e) {
    if (heap.size() < k) {
      heap.push(e);
    } else if (e < heap.top()) {
      heap.pop();
      heap.push(e);
    }
  }

  void search(int id, const Point& q, std::size_t k, std::size_t exclude, Heap& heap) const {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    if (node.axis < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t idx = order_[i];
        if (idx == exclude) continue;
        offer(heap, k, {squared_distance(points_[idx], q), idx});
      }
      return;
    }
    const double delta = static_cast<double>(q[node.axis]) - node.split;
    const int near = delta < 0.0 ? node.left : node.right;
    const int far = delta < 0.0 ? node.right : node.left;
    search(near, q, k, exclude, heap);
    // Points on the far side are at least |delta| away; equal distances are
    // still visited so that lower indices win ties.
    if (heap.size() < k || delta * delta <= heap.top().first) search(far, q, k, exclude, heap);
  }

  std::vector<Point> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace gsrm

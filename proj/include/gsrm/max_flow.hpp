#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <queue>
#include <vector>

namespace gsrm {

// Dinic max-flow on real capacities. Residuals at or below `eps` count as
// saturated.
class MaxFlow {
 public:
  explicit MaxFlow(std::size_t n_nodes, double eps = 1e-12) : adj_(n_nodes), eps_(eps) {}

  std::size_t size() const noexcept { return adj_.size(); }

  void add_edge(std::size_t from, std::size_t to, double cap, double reverse_cap = 0.0) {
    if (cap <= 0.0 && reverse_cap <= 0.0) return;
    adj_[from].push_back(edges_.size());
    edges_.push_back({to, cap});
    adj_[to].push_back(edges_.size());
    edges_.push_back({from, reverse_cap});
  }

  double run(std::size_t source, std::size_t sink) {
    double flow = 0.0;
    level_.assign(adj_.size(), -1);
    next_.assign(adj_.size(), 0);
    while (bfs(source, sink)) {
      std::fill(next_.begin(), next_.end(), 0);
      for (;;) {
        const double pushed = dfs(source, sink, std::numeric_limits<double>::infinity());
        if (pushed <= eps_) break;
        flow += pushed;
      }
    }
    return flow;
  }

  // Nodes reachable from the source in the final residual graph, i.e. the
  // smallest source side of a minimum cut.
  std::vector<std::uint8_t> source_side(std::size_t source) const {
    std::vector<std::uint8_t> seen(adj_.size(), 0);
    std::vector<std::size_t> stack{source};
    seen[source] = 1;
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      for (std::size_t e : adj_[u]) {
        const auto& edge = edges_[e];
        if (edge.cap > eps_ && !seen[edge.to]) {
          seen[edge.to] = 1;
          stack.push_back(edge.to);
        }
      }
    }
    return seen;
  }

 private:
  struct Edge {
    std::size_t to;
    double cap;
  };

  bool bfs(std::size_t s, std::size_t t) {
    std::fill(level_.begin(), level_.end(), -1);
    std::queue<std::size_t> q;
    level_[s] = 0;
    q.push(s);
    while (!q.empty()) {
      const std::size_t u = q.front();
      q.pop();
      for (std::size_t e : adj_[u]) {
        const auto& edge = edges_[e];
        if (edge.cap > eps_ && level_[edge.to] < 0) {
          level_[edge.to] = level_[u] + 1;
          q.push(edge.to);
        }
      }
    }
    return level_[t] >= 0;
  }

  double dfs(std::size_t u, std::size_t t, double limit) {
    if (u == t) return limit;
    for (std::size_t& i = next_[u]; i < adj_[u].size(); ++i) {
      const std::size_t e = adj_[u][i];
      Edge& edge = edges_[e];
      if (edge.cap <= eps_ || level_[edge.to] != level_[u] + 1) continue;
      const double pushed = dfs(edge.to, t, std::min(limit, edge.cap));
      if (pushed > eps_) {
        edge.cap -= pushed;
        edges_[e ^ 1].cap += pushed;
        return pushed;
      }
    }
    return 0.0;
  }

  std::vector<std::vector<std::size_t>> adj_;
  std::vector<Edge> edges_;
  std::vector<int> level_;
  std::vector<std::size_t> next_;
  double eps_;
};

}  // namespace gsrm

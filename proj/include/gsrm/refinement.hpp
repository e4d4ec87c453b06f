#pragma once

// Graph-based refinement of a removal set. Candidate splats (the seed plus
// everything intersecting it) become nodes; each node links to those of its
// K nearest neighbours whose semantic features are similar enough. Every node
// carries a two-label simplex point (retain, remove) and the energy
//
//   F(x) = sum_v KL(s_v || x_v) + sum_(u,v) w_uv sum_d w_d |x_ud - x_vd|
//
// is minimized, where s_v is the seed label smoothed by epsilon. The top
// (100 - percentile)% of removal probabilities are then cut and merged with
// the seed.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gsrm/error.hpp"
#include "gsrm/gaussian_cloud.hpp"
#include "gsrm/kd_tree.hpp"
#include "gsrm/max_flow.hpp"

namespace gsrm {

struct RefineConfig {
  std::size_t k_neighbors = 10;
  double delta = 0.8;            // feature-similarity gate for edges
  double cut_percentile = 95.0;  // percent
  double tv_weight = 1.0;        // scales every edge weight
  double kl_smoothing = 1e-2;    // epsilon of the smoothed seed labels
  std::array<double, 2> label_weights{1.0, 1.0};  // (retain, remove)
  std::size_t max_iters = 64;    // bisection levels of the solver
  double tol = 1e-10;            // resolution of the removal probabilities

  void validate() const {
    if (k_neighbors < 1) throw Error(ErrorCode::invalid_argument, "k_neighbors must be at least 1");
    if (!(delta >= 0.0 && delta <= 1.0)) throw Error(ErrorCode::invalid_argument, "delta must lie in [0,1]");
    if (!(cut_percentile > 0.0 && cut_percentile < 100.0)) {
      throw Error(ErrorCode::invalid_argument, "cut_percentile must lie in (0,100)");
    }
    if (!(tv_weight > 0.0)) throw Error(ErrorCode::invalid_argument, "tv_weight must be positive");
    if (!(kl_smoothing > 0.0 && kl_smoothing < 0.5)) {
      throw Error(ErrorCode::invalid_argument, "kl_smoothing must lie in (0,0.5)");
    }
    if (!(label_weights[0] >= 0.0 && label_weights[1] >= 0.0)) {
      throw Error(ErrorCode::invalid_argument, "label weights must be nonnegative");
    }
    if (max_iters < 1) throw Error(ErrorCode::invalid_argument, "max_iters must be at least 1");
    if (!(tol > 0.0)) throw Error(ErrorCode::invalid_argument, "tol must be positive");
  }
};

// Removal probabilities below this are treated as this value by the KL term.
inline constexpr double kProbabilityFloor = 1e-8;

struct GraphEdge {
  std::size_t u = 0;  // node positions, u < v
  std::size_t v = 0;
  double weight = 0.0;
};

struct RefinementGraph {
  std::vector<std::size_t> node_indices;  // splat index of each node
  std::vector<GraphEdge> edges;
  std::vector<std::uint8_t> unary_init;   // 1 when the splat is in the seed

  std::size_t size() const noexcept { return node_indices.size(); }
};

enum class SolveStatus { converged, max_iters, graph_empty };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iters: return "max-iters";
    case SolveStatus::graph_empty: return "graph-empty";
  }
  return "unknown";
}

struct SolveResult {
  std::vector<double> probabilities;  // removal coordinate per node
  std::vector<double> energy_trace;
  SolveStatus status = SolveStatus::converged;
};

struct RefinementResult {
  std::vector<std::size_t> node_indices;
  std::vector<double> probabilities;
  RemovalSet refined_set;
  std::vector<double> energy_trace;
  SolveStatus status = SolveStatus::converged;
  std::size_t n_edges = 0;
  double cut_threshold = 0.0;
  std::size_t n_cut = 0;
};

inline double feature_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::dimension_mismatch, "feature dimensions " + std::to_string(a.size()) + " and " +
                                                   std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return 1.0 / (1.0 + std::sqrt(s));
}

inline double feature_distance(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

inline RefinementGraph build_graph(const GaussianCloud& cloud, const RemovalSet& seed, const RefineConfig& cfg) {
  cfg.validate();
  if (!cloud.has_features()) {
    throw Error(ErrorCode::missing_features, "refinement needs per-splat semantic features (feature_* properties)");
  }
  RefinementGraph g;
  g.node_indices = candidate_filter(cloud, seed);
  g.unary_init.reserve(g.node_indices.size());
  for (std::size_t idx : g.node_indices) g.unary_init.push_back(seed.flags[idx]);

  std::vector<KdTree3::Point> points;
  points.reserve(g.node_indices.size());
  for (std::size_t idx : g.node_indices) points.push_back(cloud.positions[idx]);
  const KdTree3 tree(points);

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t u = 0; u < g.size(); ++u) {
    const auto fu = cloud.feature(g.node_indices[u]);
    for (std::size_t v : tree.knn(points[u], cfg.k_neighbors, u)) {
      const auto fv = cloud.feature(g.node_indices[v]);
      if (feature_similarity(fu, fv) >= cfg.delta) pairs.emplace_back(std::min(u, v), std::max(u, v));
    }
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  if (pairs.empty()) {
    throw Error(ErrorCode::graph_empty, "graph empty: no neighbouring candidates pass the feature-similarity gate");
  }
  g.edges.reserve(pairs.size());
  for (const auto& [u, v] : pairs) {
    const double dist = feature_distance(cloud.feature(g.node_indices[u]), cloud.feature(g.node_indices[v]));
    g.edges.push_back({u, v, cfg.tv_weight * std::exp(-dist)});
  }
  return g;
}

// Smoothed seed distribution (retain, remove) of a node.
inline std::array<double, 2> smoothed_label(std::uint8_t init, double eps) {
  return init ? std::array<double, 2>{eps, 1.0 - eps} : std::array<double, 2>{1.0 - eps, eps};
}

inline double data_term(const std::array<double, 2>& s, const std::array<double, 2>& x) {
  double f = 0.0;
  for (int d = 0; d < 2; ++d) f += s[d] * std::log(s[d] / std::max(x[d], kProbabilityFloor));
  return f;
}

inline double energy(const RefinementGraph& g, std::span<const std::array<double, 2>> x, const RefineConfig& cfg,
                     double simplex_tol = 1e-9) {
  if (x.size() != g.size()) throw Error(ErrorCode::dimension_mismatch, "one simplex point per node is required");
  double f = 0.0;
  for (std::size_t v = 0; v < g.size(); ++v) {
    if (x[v][0] < -simplex_tol || x[v][1] < -simplex_tol || std::abs(x[v][0] + x[v][1] - 1.0) > simplex_tol) {
      throw Error(ErrorCode::invalid_argument, "node " + std::to_string(v) + " is off the simplex");
    }
    f += data_term(smoothed_label(g.unary_init[v], cfg.kl_smoothing), x[v]);
  }
  double tv = 0.0;
  for (const auto& e : g.edges) {
    double s = 0.0;
    for (int d = 0; d < 2; ++d) s += cfg.label_weights[d] * std::abs(x[e.u][d] - x[e.v][d]);
    tv += e.weight * s;
  }
  return f + tv;
}

// Energy with x_v = (1 - p_v, p_v).
inline double energy_of_probabilities(const RefinementGraph& g, std::span<const double> p, const RefineConfig& cfg) {
  std::vector<std::array<double, 2>> x(p.size());
  for (std::size_t v = 0; v < p.size(); ++v) x[v] = {1.0 - p[v], p[v]};
  return energy(g, x, cfg);
}

namespace detail {

// Restricted to the two-label simplex the energy becomes
//   sum_v g_v(p_v) + sum_e c_e |p_u - p_v|,  c_e = w_e (w_retain + w_remove),
// with g_v(p) = -s0 log(1 - p) - s1 log(p) + const convex on (0,1). Its level
// sets {p >= t} are minimum cuts of a binary problem whose unaries are
// g_v'(t), so bisecting the value range with one max-flow per group and level
// recovers the minimizer, including exactly fused (equal-valued) regions.
class ParametricTvSolver {
 public:
  ParametricTvSolver(const RefinementGraph& g, const RefineConfig& cfg) : g_(g), cfg_(cfg) {
    const std::size_t n = g.size();
    s0_.resize(n);
    s1_.resize(n);
    for (std::size_t v = 0; v < n; ++v) {
      const auto s = smoothed_label(g.unary_init[v], cfg.kl_smoothing);
      s0_[v] = s[0];
      s1_[v] = s[1];
    }
    adj_.resize(n);
    const double label_sum = cfg.label_weights[0] + cfg.label_weights[1];
    for (const auto& e : g.edges) {
      const double c = e.weight * label_sum;
      adj_[e.u].push_back({e.v, c});
      adj_[e.v].push_back({e.u, c});
    }
  }

  SolveResult run() {
    const std::size_t n = g_.size();
    SolveResult out;
    lo_.assign(n, kProbabilityFloor);
    hi_.assign(n, 1.0 - kProbabilityFloor);
    group_.assign(n, 0);
    local_index_.assign(n, 0);

    // Start from the data-only optimum, the smoothed seed labels.
    std::vector<double> best(n);
    for (std::size_t v = 0; v < n; ++v) best[v] = s1_[v];
    double best_energy = checked_energy(best);
    out.energy_trace.push_back(best_energy);

    std::vector<std::vector<std::size_t>> groups;
    if (n > 0) {
      groups.emplace_back(n);
      std::iota(groups.front().begin(), groups.front().end(), std::size_t{0});
    }
    out.status = SolveStatus::max_iters;
    for (std::size_t iter = 0; iter < cfg_.max_iters; ++iter) {
      std::vector<std::vector<std::size_t>> next;
      bool open = false;
      for (auto& grp : groups) {
        const std::size_t v0 = grp.front();
        if (hi_[v0] - lo_[v0] <= cfg_.tol || !has_internal_edge(grp)) {
          next.push_back(std::move(grp));
          continue;
        }
        open = true;
        split(grp, next);
      }
      groups = std::move(next);
      for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        for (std::size_t v : groups[gi]) group_[v] = gi;
      }

      const auto candidate = fused_values(groups);
      const double e = checked_energy(candidate);
      if (e <= best_energy) {
        best_energy = e;
        best = candidate;
      }
      out.energy_trace.push_back(best_energy);
      if (!open) {
        out.status = SolveStatus::converged;
        break;
      }
    }
    out.probabilities = std::move(best);
    return out;
  }

 private:
  struct Arc {
    std::size_t to;
    double cap;
  };

  double derivative(std::size_t v, double t) const { return s0_[v] / (1.0 - t) - s1_[v] / t; }

  double checked_energy(std::span<const double> p) const {
    const double e = energy_of_probabilities(g_, p, cfg_);
    if (!std::isfinite(e)) throw Error(ErrorCode::numerical, "refinement energy is not finite");
    return e;
  }

  bool has_internal_edge(const std::vector<std::size_t>& grp) const {
    const std::size_t id = group_[grp.front()];
    for (std::size_t v : grp) {
      for (const auto& a : adj_[v]) {
        if (group_[a.to] == id) return true;
      }
    }
    return false;
  }

  // Linear pull from neighbours outside v's group: they sit entirely below
  // or above v's value range.
  double boundary_slope(std::size_t v) const {
    double slope = 0.0;
    for (const auto& a : adj_[v]) {
      if (group_[a.to] == group_[v]) continue;
      slope += (hi_[a.to] <= lo_[v]) ? a.cap : -a.cap;
    }
    return slope;
  }

  void split(std::vector<std::size_t>& grp, std::vector<std::vector<std::size_t>>& out) {
    const std::size_t id = group_[grp.front()];
    const double lo = lo_[grp.front()];
    const double hi = hi_[grp.front()];
    const double t = 0.5 * (lo + hi);

    for (std::size_t i = 0; i < grp.size(); ++i) local_index_[grp[i]] = i;
    const std::size_t source = grp.size();
    const std::size_t sink = grp.size() + 1;
    MaxFlow flow(grp.size() + 2);
    for (std::size_t i = 0; i < grp.size(); ++i) {
      const std::size_t v = grp[i];
      const double h = derivative(v, t) + boundary_slope(v);
      if (h > 0.0) {
        flow.add_edge(i, sink, h);
      } else if (h < 0.0) {
        flow.add_edge(source, i, -h);
      }
      for (const auto& a : adj_[v]) {
        if (group_[a.to] == id && a.to > v) flow.add_edge(i, local_index_[a.to], a.cap, a.cap);
      }
    }
    flow.run(source, sink);
    const auto upper = flow.source_side(source);

    std::vector<std::size_t> below, above;
    for (std::size_t i = 0; i < grp.size(); ++i) {
      const std::size_t v = grp[i];
      if (upper[i]) {
        above.push_back(v);
        lo_[v] = t;
      } else {
        below.push_back(v);
        hi_[v] = t;
      }
    }
    if (!below.empty()) out.push_back(std::move(below));
    if (!above.empty()) out.push_back(std::move(above));
  }

  // Minimizer over [lo, hi] of sum_v g_v(q) + slope * q for one connected
  // piece: root of A0/(1-q) - A1/q + B.
  static double fused_value(double a0, double a1, double slope, double lo, double hi) {
    auto deriv = [&](double q) { return a0 / (1.0 - q) - a1 / q + slope; };
    if (deriv(lo) >= 0.0) return lo;
    if (deriv(hi) <= 0.0) return hi;
    double q;
    if (slope == 0.0) {
      q = a1 / (a0 + a1);
    } else {
      // slope q^2 - (a0 + a1 + slope) q + a1 = 0, root inside (0, 1).
      const double b = a0 + a1 + slope;
      const double disc = std::sqrt(std::max(0.0, b * b - 4.0 * slope * a1));
      const double r1 = (b >= 0.0) ? (b + disc) / (2.0 * slope) : (2.0 * a1) / (b - disc);
      const double r2 = (b >= 0.0) ? (2.0 * a1) / (b + disc) : (b - disc) / (2.0 * slope);
      q = (r1 > 0.0 && r1 < 1.0) ? r1 : r2;
    }
    q = std::clamp(q, lo, hi);
    // Polish with safeguarded Newton steps.
    double a = lo, b = hi;
    for (int it = 0; it < 4; ++it) {
      const double d = deriv(q);
      if (d == 0.0) break;
      (d > 0.0 ? b : a) = q;
      const double dd = a0 / ((1.0 - q) * (1.0 - q)) + a1 / (q * q);
      double nq = q - d / dd;
      if (nq == q) break;  // step below double resolution
      if (!(nq > a && nq < b)) nq = 0.5 * (a + b);
      q = nq;
    }
    return q;
  }

  std::vector<double> fused_values(const std::vector<std::vector<std::size_t>>& groups) {
    const std::size_t n = g_.size();
    std::vector<double> p(n, 0.0);
    std::vector<std::uint8_t> seen(n, 0);
    std::vector<std::size_t> stack, piece;
    for (const auto& grp : groups) {
      for (std::size_t start : grp) {
        if (seen[start]) continue;
        // Connected piece of the group over internal edges.
        piece.clear();
        stack.assign(1, start);
        seen[start] = 1;
        while (!stack.empty()) {
          const std::size_t v = stack.back();
          stack.pop_back();
          piece.push_back(v);
          for (const auto& a : adj_[v]) {
            if (!seen[a.to] && group_[a.to] == group_[v]) {
              seen[a.to] = 1;
              stack.push_back(a.to);
            }
          }
        }
        std::sort(piece.begin(), piece.end());
        double a0 = 0.0, a1 = 0.0, slope = 0.0;
        for (std::size_t v : piece) {
          a0 += s0_[v];
          a1 += s1_[v];
          slope += boundary_slope(v);
        }
        const double q = fused_value(a0, a1, slope, lo_[start], hi_[start]);
        for (std::size_t v : piece) p[v] = q;
      }
    }
    return p;
  }

  const RefinementGraph& g_;
  const RefineConfig& cfg_;
  std::vector<double> s0_, s1_;
  std::vector<std::vector<Arc>> adj_;
  std::vector<double> lo_, hi_;
  std::vector<std::size_t> group_;
  std::vector<std::size_t> local_index_;
};

}  // namespace detail

// Minimizes the energy over the simplex. The trace starts at the smoothed
// seed labels and records the energy of the accepted iterate after every
// level, so it never increases.
inline SolveResult solve(const RefinementGraph& g, const RefineConfig& cfg) {
  cfg.validate();
  if (g.unary_init.size() != g.size()) throw Error(ErrorCode::invalid_argument, "unary_init does not match nodes");
  for (const auto& e : g.edges) {
    if (e.u >= g.size() || e.v >= g.size() || e.u == e.v || !(e.weight > 0.0)) {
      throw Error(ErrorCode::invalid_argument, "graph edges must join two distinct nodes with positive weight");
    }
  }
  return detail::ParametricTvSolver(g, cfg).run();
}

// Marks the ceil((100 - percentile)% * n) highest probabilities, plus any
// node tied with the lowest of them.
inline double percentile_cut_threshold(std::span<const double> p, double percentile) {
  if (p.empty()) throw Error(ErrorCode::empty_input, "no probabilities to cut");
  std::vector<double> sorted(p.begin(), p.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const double share = (100.0 - percentile) / 100.0 * static_cast<double>(sorted.size());
  auto k = static_cast<std::size_t>(std::ceil(share - 1e-9));
  k = std::clamp<std::size_t>(k, 1, sorted.size());
  return sorted[k - 1];
}

inline RemovalSet cut(std::span<const std::size_t> node_indices, std::span<const double> p, const RemovalSet& seed,
                      double percentile = 95.0) {
  if (node_indices.size() != p.size()) throw Error(ErrorCode::dimension_mismatch, "one probability per node");
  RemovalSet out = seed;
  out.provenance = "refined";
  const double threshold = percentile_cut_threshold(p, percentile);
  for (std::size_t v = 0; v < p.size(); ++v) {
    if (p[v] >= threshold) out.flags.at(node_indices[v]) = 1;
  }
  return out;
}

inline RefinementResult refine(const GaussianCloud& cloud, const RemovalSet& seed, const RefineConfig& cfg) {
  cfg.validate();
  if (!cloud.has_features()) {
    throw Error(ErrorCode::missing_features, "refinement needs per-splat semantic features (feature_* properties)");
  }
  if (seed.size() != cloud.size()) {
    throw Error(ErrorCode::invalid_argument, "removal set size " + std::to_string(seed.size()) +
                                                 " does not match cloud size " + std::to_string(cloud.size()));
  }
  RefinementResult result;
  RefinementGraph graph;
  try {
    graph = build_graph(cloud, seed, cfg);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::graph_empty) throw;
    result.status = SolveStatus::graph_empty;
    result.refined_set = seed;
    return result;
  }
  SolveResult solved = solve(graph, cfg);
  result.node_indices = graph.node_indices;
  result.n_edges = graph.edges.size();
  result.cut_threshold = percentile_cut_threshold(solved.probabilities, cfg.cut_percentile);
  result.refined_set = cut(graph.node_indices, solved.probabilities, seed, cfg.cut_percentile);
  result.n_cut = static_cast<std::size_t>(std::count_if(solved.probabilities.begin(), solved.probabilities.end(),
                                                        [&](double v) { return v >= result.cut_threshold; }));
  result.probabilities = std::move(solved.probabilities);
  result.energy_trace = std::move(solved.energy_trace);
  result.status = solved.status;
  return result;
}

}  // namespace gsrm

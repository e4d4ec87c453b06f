// Acceptance checks, one PASS/FAIL line per criterion.
// Usage: gsrm_acceptance [--criterion 1|2|3|4|5a|5b|5c|6|7|8]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gsrm/depth_change.hpp"
#include "gsrm/evaluate.hpp"
#include "gsrm/fixture.hpp"
#include "gsrm/mask_similarity.hpp"
#include "gsrm/refinement.hpp"
#include "gsrm/report.hpp"
#include "gsrm/semantic_metrics.hpp"

namespace fs = std::filesystem;
using namespace gsrm;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("gsrm_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(read_file_bytes(p)); }

EvaluationReport eval_dir(const fs::path& dir) {
  EvalConfig cfg;
  cfg.workers = 1;
  return run_eval(validate_manifest(dir / "manifest.json"), cfg);
}

// 1: drop arithmetic and the composite table cell.
Outcome criterion_1() {
  std::vector<SemanticViewRecord> records;
  for (int i = 0; i < 5; ++i) records.push_back(SemanticViewRecord::make(std::to_string(i), 0.63, 0.01));
  const auto s = summarize_scene(records);
  const std::string cell = drop_pct_cell(s.iou_drop, s.pct_reduction);
  return {cell == "0.62 / 98.4" && format_fixed(s.iou_drop, 2) == "0.62", "cell \"" + cell + "\""};
}

// 2: optimal matching total equals exhaustive search over injective matchings.
Outcome criterion_2() {
  std::mt19937 rng(20240601);
  std::uniform_int_distribution<int> size(0, 6), coord(0, 15);
  const int W = 16, H = 16;
  auto random_rect = [&] {
    const int x = coord(rng), y = coord(rng);
    const int w = 1 + coord(rng) % (W - x), h = 1 + coord(rng) % (H - y);
    BinaryMask m(W, H);
    for (int yy = y; yy < y + h; ++yy) {
      for (int xx = x; xx < x + w; ++xx) m.set(xx, yy);
    }
    return m;
  };
  auto pixel_iou = [&](const BinaryMask& a, const BinaryMask& b) {
    int inter = 0, uni = 0;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        inter += a.at(x, y) && b.at(x, y);
        uni += a.at(x, y) || b.at(x, y);
      }
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
  };
  BinaryMask object(W, H);
  for (int y = 4; y < 12; ++y) {
    for (int x = 4; x < 12; ++x) object.set(x, y);
  }

  int agree = 0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    MaskSet a, b;
    const int n = size(rng), m = size(rng);
    for (int i = 0; i < n; ++i) a.push_back(random_rect());
    for (int i = 0; i < m; ++i) b.push_back(random_rect());
    const auto result = sim_sam_detailed(a, b, object);

    // Oracle: own filter, own IoU, every injective matching.
    std::vector<const BinaryMask*> fa, fb;
    for (const auto& x : a) {
      if (pixel_iou(x, object) >= 0.1) fa.push_back(&x);
    }
    for (const auto& x : b) {
      if (pixel_iou(x, object) >= 0.1) fb.push_back(&x);
    }
    const bool flip = fa.size() > fb.size();
    const auto& small = flip ? fb : fa;
    const auto& large = flip ? fa : fb;
    std::vector<std::size_t> perm(large.size());
    std::iota(perm.begin(), perm.end(), 0);
    double best = 0.0;
    do {
      std::vector<double> vals;
      for (std::size_t i = 0; i < small.size(); ++i) {
        const double v = pixel_iou(*small[i], *large[perm[i]]);
        if (v > 0.0) vals.push_back(v);
      }
      std::sort(vals.begin(), vals.end());
      double s = 0.0;
      for (double v : vals) s += v;
      best = std::max(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    if (result.matching.total_iou() == best) ++agree;
  }
  return {agree == trials, std::to_string(agree) + "/" + std::to_string(trials) + " exact agreements"};
}

// 3: default GHT selects the same bin as a between-class-variance Otsu.
Outcome criterion_3() {
  std::mt19937 rng(77);
  std::uniform_int_distribution<int> count(0, 40);
  const int n_bins = 256;
  int agree = 0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    // Plant a random histogram: each bin's samples sit at its center, plus
    // one sample at the top edge that fixes the histogram range.
    std::vector<float> diffs;
    std::vector<int> planted(n_bins);
    for (int b = 0; b < n_bins; ++b) {
      planted[b] = count(rng);
      for (int k = 0; k < planted[b]; ++k) diffs.push_back(static_cast<float>(b) + 0.5f);
    }
    diffs.push_back(static_cast<float>(n_bins));
    planted[n_bins - 1] += 1;
    const int w = static_cast<int>(diffs.size());
    const DepthDiffMap map(w, 1, diffs, std::vector<std::uint8_t>(diffs.size(), 1));
    const auto got = ght_threshold(map);

    double total = 0, total_m = 0;
    for (int b = 0; b < n_bins; ++b) total += planted[b], total_m += planted[b] * (b + 0.5);
    double best = -1, w0 = 0, m0 = 0;
    int best_t = -1;
    for (int s = 0; s + 1 < n_bins; ++s) {
      w0 += planted[s];
      m0 += planted[s] * (s + 0.5);
      const double w1 = total - w0;
      if (w0 == 0 || w1 == 0) continue;
      const double d = m0 / w0 - (total_m - m0) / w1;
      const double between = w0 * w1 * d * d;
      if (between > best) best = between, best_t = s;
    }
    if (!got.degenerate && static_cast<int>(got.split) == best_t && got.value == best_t + 1.0) ++agree;
  }
  return {agree == trials, std::to_string(agree) + "/" + std::to_string(trials) + " identical bins"};
}

// 4: planted residual fractions give acc = 1 - rho exactly.
Outcome criterion_4() {
  std::string detail;
  bool ok = true;
  for (double rho : {0.0, 0.4, 1.0}) {
    const auto dir = scratch("c4_" + std::to_string(static_cast<int>(rho * 10)));
    gen_fixture(nlohmann::json{{"mode", "residual"}, {"rho", rho}, {"object", {20, 15, 10, 10}}}, dir);
    const auto r = eval_dir(dir);
    for (const auto& row : r.rows) ok = ok && row.acc_depth && *row.acc_depth == 1.0 - rho;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "rho %.1f -> acc %.4f; ", rho, r.rows[0].acc_depth.value_or(-1));
    detail += buf;
    fs::remove_all(dir);
  }
  return {ok, detail};
}

RefinementGraph random_graph(std::mt19937& rng, std::size_t n) {
  RefinementGraph g;
  g.node_indices.resize(n);
  std::iota(g.node_indices.begin(), g.node_indices.end(), std::size_t{0});
  std::bernoulli_distribution seed(0.5), edge(std::min(1.0, 3.0 / static_cast<double>(n)));
  std::uniform_real_distribution<double> w(0.05, 2.0);
  for (std::size_t v = 0; v < n; ++v) g.unary_init.push_back(seed(rng));
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      if (edge(rng)) g.edges.push_back({u, v, w(rng)});
    }
  }
  return g;
}

// 5a: energy trace never increases.
Outcome criterion_5a() {
  std::mt19937 rng(5001);
  std::uniform_int_distribution<std::size_t> n(2, 200);
  int ok = 0;
  for (int t = 0; t < 100; ++t) {
    const auto g = random_graph(rng, n(rng));
    const auto r = solve(g, RefineConfig{});
    bool mono = true;
    for (std::size_t i = 1; i < r.energy_trace.size(); ++i) {
      const double prev = r.energy_trace[i - 1];
      mono = mono && r.energy_trace[i] <= prev + 1e-9 * std::max(1.0, std::abs(prev));
    }
    ok += mono;
  }
  return {ok == 100, std::to_string(ok) + "/100 monotone traces"};
}

// 5b: rounding the relaxed solution at 0.5 lands within 5% of the binary optimum.
Outcome criterion_5b() {
  std::mt19937 rng(5002);
  std::uniform_int_distribution<std::size_t> n(2, 16);
  const RefineConfig cfg;
  int ok = 0;
  double worst = 0.0;
  const int trials = 50;
  for (int t = 0; t < trials; ++t) {
    const auto g = random_graph(rng, n(rng));
    const auto r = solve(g, cfg);
    std::vector<double> rounded(g.size());
    for (std::size_t v = 0; v < g.size(); ++v) rounded[v] = r.probabilities[v] >= 0.5 ? 1.0 : 0.0;
    const double e_round = energy_of_probabilities(g, rounded, cfg);
    double best = std::numeric_limits<double>::infinity();
    std::vector<double> p(g.size());
    for (unsigned m = 0; m < (1u << g.size()); ++m) {
      for (std::size_t v = 0; v < g.size(); ++v) p[v] = (m >> v) & 1u ? 1.0 : 0.0;
      best = std::min(best, energy_of_probabilities(g, p, cfg));
    }
    const double gap = (e_round - best) / best;
    worst = std::max(worst, gap);
    ok += e_round <= 1.05 * best;
  }
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%d/%d instances within 5%% (worst gap %.1f%%)", ok, trials, 100.0 * worst);
  return {ok == trials, buf};
}

// 5c: identical results across repeated runs.
Outcome criterion_5c() {
  std::mt19937 rng(5003);
  const auto g = random_graph(rng, 200);
  const auto a = solve(g, RefineConfig{});
  bool same = true;
  for (int k = 0; k < 2; ++k) {
    const auto b = solve(g, RefineConfig{});
    same = same && b.probabilities == a.probabilities && b.energy_trace == a.energy_trace;
  }
  return {same, same ? "3 runs bitwise identical" : "runs differ"};
}

// 6: planted residual splats are recovered, background untouched.
Outcome criterion_6() {
  const auto dir = scratch("c6");
  gen_fixture(nlohmann::json{{"mode", "perfect"}, {"dumbbell", nlohmann::json::object()}}, dir);
  const auto cloud = load_ply(dir / "scene.ply");
  const auto seed = load_removal_set(dir / "removed.txt", cloud.size());
  const auto cfg = load_refine_config(dir / "refine.json");
  const auto r = refine(cloud, seed, cfg);
  const auto e = read_json(dir / "expected.json").at("dumbbell");
  const auto residual = e.at("residual").get<std::vector<std::size_t>>();
  const auto background = e.at("background").get<std::vector<std::size_t>>();
  std::size_t got_res = 0, got_bg = 0;
  for (std::size_t i : residual) got_res += r.refined_set.contains(i);
  for (std::size_t i : background) got_bg += r.refined_set.contains(i);
  fs::remove_all(dir);
  return {got_res == residual.size() && got_bg == 0,
          std::to_string(got_res) + "/" + std::to_string(residual.size()) + " residual removed, " +
              std::to_string(got_bg) + "/" + std::to_string(background.size()) + " background removed"};
}

// 7: no-op and perfect-removal fixtures end to end.
Outcome criterion_7() {
  const auto d_none = scratch("c7_none"), d_perfect = scratch("c7_perfect");
  gen_fixture(nlohmann::json{{"mode", "none"}}, d_none);
  gen_fixture(nlohmann::json{{"mode", "perfect"}}, d_perfect);
  const auto none = eval_dir(d_none), perfect = eval_dir(d_perfect);
  bool ok = true;
  for (const auto& r : none.rows) ok = ok && *r.iou_drop == 0.0 && *r.acc_depth == 0.0 && *r.sim_sam == 1.0;
  double max_sim = 0.0;
  for (const auto& r : perfect.rows) {
    ok = ok && *r.iou_drop == *r.iou_pre && *r.acc_depth == 1.0 && *r.sim_sam <= 0.2;
    max_sim = std::max(max_sim, *r.sim_sam);
  }
  fs::remove_all(d_none);
  fs::remove_all(d_perfect);
  char buf[128];
  std::snprintf(buf, sizeof(buf), "no-op (%.2f, %.2f, %.2f); perfect drop=%.4f acc=%.2f max sim=%.4f",
                none.summary.semantic->iou_drop, *none.summary.mean_acc_depth, *none.summary.mean_sim_sam,
                perfect.summary.semantic->iou_drop, *perfect.summary.mean_acc_depth, max_sim);
  return {ok, buf};
}

// 8: published per-scene values, only with the authors' released data.
// GSRM_RELEASED_DATA names a JSON list of
//   {"manifest": path, "iou_drop": x, "acc_depth": y, "sim_sam": z}.
Outcome criterion_8() {
  const char* env = std::getenv("GSRM_RELEASED_DATA");
  if (!env || !*env) return {true, "N/A: released evaluation data not available (set GSRM_RELEASED_DATA)"};
  const fs::path list = env;
  int ok = 0, total = 0;
  for (const auto& entry : read_json(list)) {
    ++total;
    fs::path manifest = entry.at("manifest").get<std::string>();
    if (manifest.is_relative()) manifest = list.parent_path() / manifest;
    const auto r = run_eval(validate_manifest(manifest), EvalConfig{});
    const auto& s = r.summary;
    const bool hit = s.semantic && s.mean_acc_depth && s.mean_sim_sam &&
                     std::abs(s.semantic->iou_drop - entry.at("iou_drop").get<double>()) <= 0.01 &&
                     std::abs(*s.mean_acc_depth - entry.at("acc_depth").get<double>()) <= 0.01 &&
                     std::abs(*s.mean_sim_sam - entry.at("sim_sam").get<double>()) <= 0.01;
    ok += hit;
  }
  return {ok == total && total > 0, std::to_string(ok) + "/" + std::to_string(total) + " scenes within 0.01"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gsrm acceptance checks", "gsrm_acceptance"};
  std::string only;
  app.add_option("--criterion", only, "Run a single criterion");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> all{
      {"1", criterion_1},   {"2", criterion_2},   {"3", criterion_3}, {"4", criterion_4}, {"5a", criterion_5a},
      {"5b", criterion_5b}, {"5c", criterion_5c}, {"6", criterion_6}, {"7", criterion_7}, {"8", criterion_8}};

  bool all_pass = true, found = false;
  for (const auto& [id, fn] : all) {
    if (!only.empty() && only != id) continue;
    found = true;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s criterion %s: %s (%.2fs)\n", o.pass ? "PASS" : "FAIL", id.c_str(), o.detail.c_str(), secs);
    all_pass = all_pass && o.pass;
  }
  if (!found) {
    std::fprintf(stderr, "unknown criterion '%s'\n", only.c_str());
    return 1;
  }
  return all_pass ? 0 : 1;
}

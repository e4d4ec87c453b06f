#pragma once

// Synthetic scenes with analytically known metric values.
//
// Spec JSON (every field optional):
// {
//   "scene_id": "synthetic", "object_id": "box", "method_id": "planted",
//   "grid": [64, 48], "object": [20, 15, 10, 10], "views": 3, "shift": 1,
//   "mode": "perfect" | "none" | "residual", "rho": 0.4,
//   "semantic_margin": 2,
//   "depth": {"background": 10.0, "object": 4.0},
//   "dumbbell": {"n_object": 100, "n_background": 100, "n_bridge": 20, "residual_every": 5,
//                "separation": 3.0, "radius": 0.8, "log_scale": 0.3, "feature_dim": 8,
//                "noise": 0.02, "seed": 7}
// }
//
// View k moves the object k*shift pixels to the right. Under "residual" the
// top round(rho*h) object rows survive removal. Expected values land in
// expected.json; they are computed by per-pixel predicate counting and
// exhaustive matching, not by the library's own metric code.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "gsrm/error.hpp"
#include "gsrm/file_util.hpp"
#include "gsrm/gaussian_cloud.hpp"
#include "gsrm/raster.hpp"
#include "json.hpp"

namespace gsrm {

struct Rect {
  int x = 0, y = 0, w = 0, h = 0;
  bool contains(int px, int py) const { return px >= x && px < x + w && py >= y && py < y + h; }
};

enum class FixtureMode { none, perfect, residual };

struct DumbbellSpec {
  std::size_t n_object = 100;
  std::size_t n_background = 100;
  std::size_t n_bridge = 20;
  std::size_t residual_every = 5;
  double separation = 3.0;
  double radius = 0.8;
  double log_scale = 0.3;
  std::size_t feature_dim = 8;
  double noise = 0.02;
  unsigned seed = 7;
};

struct FixtureSpec {
  std::string scene_id = "synthetic";
  std::string object_id = "box";
  std::string method_id = "planted";
  int width = 64, height = 48;
  Rect object{20, 15, 10, 10};
  int views = 3;
  int shift = 1;
  FixtureMode mode = FixtureMode::perfect;
  double rho = 0.4;
  int semantic_margin = 2;
  float depth_background = 10.0f;
  float depth_object = 4.0f;
  std::optional<DumbbellSpec> dumbbell;

  int residual_rows() const {
    if (mode == FixtureMode::none) return object.h;
    if (mode == FixtureMode::perfect) return 0;
    return static_cast<int>(std::lround(rho * object.h));
  }
};

inline FixtureSpec fixture_spec_from_json(const nlohmann::json& j) {
  FixtureSpec s;
  try {
    s.scene_id = j.value("scene_id", s.scene_id);
    s.object_id = j.value("object_id", s.object_id);
    s.method_id = j.value("method_id", s.method_id);
    if (j.contains("grid")) {
      const auto g = j.at("grid").get<std::vector<int>>();
      if (g.size() != 2) throw Error(ErrorCode::invalid_argument, "grid must be [width, height]");
      s.width = g[0];
      s.height = g[1];
    }
    if (j.contains("object")) {
      const auto o = j.at("object").get<std::vector<int>>();
      if (o.size() != 4) throw Error(ErrorCode::invalid_argument, "object must be [x, y, w, h]");
      s.object = {o[0], o[1], o[2], o[3]};
    }
    s.views = j.value("views", s.views);
    s.shift = j.value("shift", s.shift);
    const auto mode = j.value("mode", std::string("perfect"));
    if (mode == "none") {
      s.mode = FixtureMode::none;
    } else if (mode == "perfect") {
      s.mode = FixtureMode::perfect;
    } else if (mode == "residual") {
      s.mode = FixtureMode::residual;
    } else {
      throw Error(ErrorCode::invalid_argument, "fixture mode must be none, perfect or residual");
    }
    s.rho = j.value("rho", s.rho);
    s.semantic_margin = j.value("semantic_margin", s.semantic_margin);
    if (j.contains("depth")) {
      s.depth_background = j.at("depth").value("background", s.depth_background);
      s.depth_object = j.at("depth").value("object", s.depth_object);
    }
    if (j.contains("dumbbell") && !j.at("dumbbell").is_null()) {
      const auto& d = j.at("dumbbell");
      DumbbellSpec db;
      db.n_object = d.value("n_object", db.n_object);
      db.n_background = d.value("n_background", db.n_background);
      db.n_bridge = d.value("n_bridge", db.n_bridge);
      db.residual_every = d.value("residual_every", db.residual_every);
      db.separation = d.value("separation", db.separation);
      db.radius = d.value("radius", db.radius);
      db.log_scale = d.value("log_scale", db.log_scale);
      db.feature_dim = d.value("feature_dim", db.feature_dim);
      db.noise = d.value("noise", db.noise);
      db.seed = d.value("seed", db.seed);
      s.dumbbell = db;
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::invalid_argument, std::string("fixture spec: ") + e.what());
  }

  if (s.width <= 0 || s.height <= 0) throw Error(ErrorCode::invalid_argument, "grid must be positive");
  if (s.views < 1) throw Error(ErrorCode::invalid_argument, "fixture needs at least one view");
  if (s.object.w < 2 || s.object.h < 1) throw Error(ErrorCode::invalid_argument, "object must be at least 2x1");
  if (!(s.rho >= 0.0 && s.rho <= 1.0)) throw Error(ErrorCode::invalid_argument, "rho must lie in [0,1]");
  if (s.semantic_margin < 0) throw Error(ErrorCode::invalid_argument, "semantic_margin must be >= 0");
  if (!(s.depth_object > 0.0f && s.depth_background > s.depth_object)) {
    throw Error(ErrorCode::invalid_argument, "depth must satisfy 0 < object < background");
  }
  // The table rectangle around the object and the semantic margin must stay in the grid for every view.
  const int max_dx = (s.views - 1) * s.shift;
  if (s.shift < 0 || s.object.x - 6 < 0 || s.object.y - 2 < 0 ||
      s.object.x + max_dx + std::max(s.object.w + 6, s.object.w + s.semantic_margin) > s.width ||
      s.object.y + s.object.h + 8 > s.height) {
    throw Error(ErrorCode::invalid_argument, "object (with its surrounding table) does not fit the grid");
  }
  if (s.dumbbell) {
    const auto& d = *s.dumbbell;
    if (d.n_object < 2 || d.n_background < 1 || d.residual_every < 2 || d.feature_dim < 3 || d.radius <= 0.0) {
      throw Error(ErrorCode::invalid_argument, "invalid dumbbell parameters");
    }
  }
  return s;
}

namespace detail {

using PixelPredicate = std::function<bool(int, int)>;

struct FixtureMask {
  std::string name;
  PixelPredicate inside;
};

inline BinaryMask rasterize(int w, int h, const PixelPredicate& inside) {
  BinaryMask m(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (inside(x, y)) m.set(x, y, true);
    }
  }
  return m;
}

// Reference IoU by pixel counting over the predicates.
inline double predicate_iou(int w, int h, const PixelPredicate& a, const PixelPredicate& b) {
  long inter = 0, uni = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const bool pa = a(x, y), pb = b(x, y);
      inter += (pa && pb) ? 1 : 0;
      uni += (pa || pb) ? 1 : 0;
    }
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// Exhaustive best injective matching; the smaller side is placed into the larger.
inline double brute_force_matching(const std::vector<std::vector<double>>& iou_ab) {
  const std::size_t n = iou_ab.size();
  const std::size_t m = n == 0 ? 0 : iou_ab[0].size();
  if (n == 0 || m == 0) return 0.0;
  const bool transpose = n > m;
  const std::size_t small = transpose ? m : n, large = transpose ? n : m;
  std::vector<std::size_t> perm(large);
  std::iota(perm.begin(), perm.end(), 0);
  double best = 0.0;
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < small; ++i) s += transpose ? iou_ab[perm[i]][i] : iou_ab[i][perm[i]];
    best = std::max(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

inline std::string view_name(int k) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03d", k);
  return buf;
}

inline GaussianCloud dumbbell_cloud(const DumbbellSpec& d, std::vector<std::uint8_t>& group) {
  std::mt19937 rng(d.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  GaussianCloud c;
  c.feature_dim = d.feature_dim;
  auto add = [&](double cx, double cy, double cz, std::size_t axis, std::uint8_t tag) {
    c.positions.push_back({static_cast<float>(cx), static_cast<float>(cy), static_cast<float>(cz)});
    const auto s = static_cast<float>(d.log_scale);
    c.log_scales.push_back({s, s, s});
    c.rotations.push_back({1.0f, 0.0f, 0.0f, 0.0f});
    c.opacity_logits.push_back(2.0f);
    for (int k = 0; k < 3; ++k) c.color_coeffs.push_back(tag == 1 ? 0.8f : 0.2f);
    for (std::size_t f = 0; f < d.feature_dim; ++f) {
      const double base = f == axis ? 1.0 : 0.0;
      c.features.push_back(static_cast<float>(base + d.noise * unit(rng)));
    }
    group.push_back(tag);
  };
  auto ball = [&](double cx) {
    double x, y, z;
    do {
      x = unit(rng);
      y = unit(rng);
      z = unit(rng);
    } while (x * x + y * y + z * z > 1.0);
    return std::array<double, 3>{cx + d.radius * x, d.radius * y, d.radius * z};
  };
  const double half = d.separation / 2.0;
  // 1 = object, 2 = background, 3 = bridge; features e0, e1, e2.
  for (std::size_t i = 0; i < d.n_object; ++i) {
    const auto p = ball(-half);
    add(p[0], p[1], p[2], 0, 1);
  }
  for (std::size_t i = 0; i < d.n_background; ++i) {
    const auto p = ball(half);
    add(p[0], p[1], p[2], 1, 2);
  }
  for (std::size_t i = 0; i < d.n_bridge; ++i) {
    const double t = d.n_bridge == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(d.n_bridge - 1);
    add(-half + t * d.separation, 0.0, 0.0, 2, 3);
  }
  c.validate();
  return c;
}

}  // namespace detail

// Writes manifest.json, rasters, expected.json and (with a dumbbell) the
// Gaussian scene into out_dir.
inline void gen_fixture(const FixtureSpec& s, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  for (const char* sub : {"object", "sem_pre", "sem_post", "depth_pre", "depth_post", "sam_pre", "sam_post"}) {
    fs::create_directories(out_dir / sub);
  }
  const int W = s.width, H = s.height;
  const int r_rows = s.residual_rows();

  nlohmann::json views = nlohmann::json::array();
  nlohmann::json expected_views = nlohmann::json::array();
  double sum_pre = 0.0, sum_post = 0.0, sum_sim = 0.0, sum_acc = 0.0;

  for (int k = 0; k < s.views; ++k) {
    const std::string id = detail::view_name(k);
    const Rect O{s.object.x + k * s.shift, s.object.y, s.object.w, s.object.h};
    const Rect R{O.x, O.y, O.w, r_rows};  // surviving part of the object
    const Rect T{O.x - 6, O.y - 2, O.w + 12, O.h + 10};
    const Rect Sem{O.x, O.y, O.w + s.semantic_margin, O.h};
    const Rect Lh{O.x, O.y, O.w / 2, O.h};
    const Rect Rh{O.x + O.w / 2, O.y, O.w - O.w / 2, O.h};
    const Rect B1{0, 0, std::min(10, W), std::min(8, H)};
    const Rect B2{std::max(0, W - 14), std::max(0, H - 12), std::min(14, W), std::min(12, H)};

    auto rect = [](Rect r) -> detail::PixelPredicate { return [r](int x, int y) { return r.contains(x, y); }; };
    auto minus = [](Rect a, Rect b) -> detail::PixelPredicate {
      return [a, b](int x, int y) { return a.contains(x, y) && !b.contains(x, y); };
    };
    const auto object = rect(O);

    nlohmann::json jv{{"view_id", id}};
    const auto obj_path = fs::path("object") / (id + ".png");
    save_mask(detail::rasterize(W, H, object), out_dir / obj_path);
    jv["object_mask"] = obj_path.generic_string();

    // Semantic masks.
    const auto sem_pre = rect(Sem);
    const auto pre_path = fs::path("sem_pre") / (id + ".png");
    save_mask(detail::rasterize(W, H, sem_pre), out_dir / pre_path);
    jv["semantic_pre"] = pre_path.generic_string();
    const double iou_pre = detail::predicate_iou(W, H, sem_pre, object);
    double iou_post = 0.0;
    bool detected_post = true;
    if (s.mode == FixtureMode::none) {
      jv["semantic_post"] = pre_path.generic_string();
      iou_post = iou_pre;
    } else if (r_rows == 0) {
      jv["semantic_post"] = nullptr;
      detected_post = false;
    } else {
      const auto sem_post = rect(R);
      const auto post_path = fs::path("sem_post") / (id + ".png");
      save_mask(detail::rasterize(W, H, sem_post), out_dir / post_path);
      jv["semantic_post"] = post_path.generic_string();
      iou_post = detail::predicate_iou(W, H, sem_post, object);
    }

    // Depth renders.
    auto depth_of = [&](const detail::PixelPredicate& near) {
      std::vector<float> v(static_cast<std::size_t>(W) * H, s.depth_background);
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          if (near(x, y)) v[static_cast<std::size_t>(y) * W + x] = s.depth_object;
        }
      }
      return DepthMap(W, H, std::move(v));
    };
    const auto dpre = fs::path("depth_pre") / (id + ".pfm");
    const auto dpost = fs::path("depth_post") / (id + ".pfm");
    save_depth(depth_of(object), out_dir / dpre);
    save_depth(depth_of(rect(R)), out_dir / dpost);
    jv["depth_pre"] = dpre.generic_string();
    jv["depth_post"] = dpost.generic_string();
    // Object pixels outside R change by background - object, all others by 0.
    const long changed = static_cast<long>(O.w) * (O.h - r_rows);
    double xi = 0.0, acc = 0.0;
    if (changed > 0) {
      const int n_bins = 256;
      const double delta = static_cast<double>(s.depth_background) - static_cast<double>(s.depth_object);
      xi = static_cast<double>((n_bins - 2) / 2 + 1) * delta / n_bins;
      acc = static_cast<double>(changed) / (static_cast<double>(O.w) * O.h);
    }

    // SAM sets.
    std::vector<detail::FixtureMask> sam_pre{{"object", object},        {"left_half", rect(Lh)},
                                             {"right_half", rect(Rh)},  {"table", minus(T, O)},
                                             {"background_1", rect(B1)}, {"background_2", rect(B2)}};
    std::vector<detail::FixtureMask> sam_post;
    if (s.mode == FixtureMode::none) {
      sam_post = sam_pre;
    } else {
      if (r_rows > 0) sam_post.push_back({"residual", rect(R)});
      sam_post.push_back({"table", r_rows > 0 ? minus(T, R) : rect(T)});
      sam_post.push_back({"background_1", rect(B1)});
      sam_post.push_back({"background_2", rect(B2)});
    }
    auto write_set = [&](const std::vector<detail::FixtureMask>& set, const char* dir) {
      const auto rel = fs::path(dir) / id;
      fs::create_directories(out_dir / rel);
      for (std::size_t i = 0; i < set.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "%02zu_%s.png", i, set[i].name.c_str());
        save_mask(detail::rasterize(W, H, set[i].inside), out_dir / rel / name);
      }
      return rel.generic_string();
    };
    jv["sam_pre"] = write_set(sam_pre, "sam_pre");
    jv["sam_post"] = write_set(sam_post, "sam_post");

    auto kept = [&](const std::vector<detail::FixtureMask>& set) {
      std::vector<const detail::FixtureMask*> out;
      for (const auto& m : set) {
        if (detail::predicate_iou(W, H, m.inside, object) >= 0.1) out.push_back(&m);
      }
      return out;
    };
    const auto ka = kept(sam_pre), kb = kept(sam_post);
    std::vector<std::vector<double>> table(ka.size(), std::vector<double>(kb.size()));
    for (std::size_t i = 0; i < ka.size(); ++i) {
      for (std::size_t j = 0; j < kb.size(); ++j) table[i][j] = detail::predicate_iou(W, H, ka[i]->inside, kb[j]->inside);
    }
    const std::size_t denom = std::max(ka.size(), kb.size());
    const double sim = denom == 0 ? 0.0 : detail::brute_force_matching(table) / static_cast<double>(denom);

    views.push_back(jv);
    expected_views.push_back({{"view_id", id},
                              {"iou_pre", iou_pre},
                              {"iou_post", iou_post},
                              {"iou_drop", iou_pre - iou_post},
                              {"detected_post", detected_post},
                              {"sim_sam", sim},
                              {"xi_depth", xi},
                              {"acc_depth", acc},
                              {"depth_degenerate", changed == 0}});
    sum_pre += iou_pre;
    sum_post += iou_post;
    sum_sim += sim;
    sum_acc += acc;
  }

  const double n = static_cast<double>(s.views);
  nlohmann::json manifest{{"schema_version", 1},
                          {"scene_id", s.scene_id},
                          {"object_id", s.object_id},
                          {"method_id", s.method_id},
                          {"views", views}};
  nlohmann::json expected{{"views", expected_views},
                          {"summary",
                           {{"miou_pre", sum_pre / n},
                            {"miou_post", sum_post / n},
                            {"iou_drop", sum_pre / n - sum_post / n},
                            {"mean_sim_sam", sum_sim / n},
                            {"mean_acc_depth", sum_acc / n}}}};

  if (s.dumbbell) {
    const auto& d = *s.dumbbell;
    std::vector<std::uint8_t> group;
    const GaussianCloud cloud = detail::dumbbell_cloud(d, group);
    std::vector<std::size_t> seed_idx, residual_idx, background_idx, bridge_idx;
    std::size_t object_rank = 0;
    for (std::size_t i = 0; i < group.size(); ++i) {
      if (group[i] == 1) {
        (object_rank++ % d.residual_every == 0 ? residual_idx : seed_idx).push_back(i);
      } else if (group[i] == 2) {
        background_idx.push_back(i);
      } else {
        bridge_idx.push_back(i);
      }
    }
    save_ply(cloud, out_dir / "scene.ply");
    save_removal_set(RemovalSet::from_indices(cloud.size(), seed_idx, "planted"), out_dir / "removed.txt");
    write_text_atomic(out_dir / "refine.json",
                      nlohmann::json{{"k_neighbors", 10}, {"delta", 0.8}, {"cut_percentile", 95.0}}.dump(2) + "\n");
    manifest["ply"] = "scene.ply";
    manifest["removal_set"] = "removed.txt";
    manifest["refine_config"] = "refine.json";
    expected["dumbbell"] = {{"seed", seed_idx},
                            {"residual", residual_idx},
                            {"background", background_idx},
                            {"bridge", bridge_idx}};
  }

  write_text_atomic(out_dir / "manifest.json", manifest.dump(2) + "\n");
  write_text_atomic(out_dir / "expected.json", expected.dump(2) + "\n");
}

inline void gen_fixture(const nlohmann::json& spec, const std::filesystem::path& out_dir) {
  gen_fixture(fixture_spec_from_json(spec), out_dir);
}

}  // namespace gsrm

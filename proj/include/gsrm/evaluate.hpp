#pragma once

// Batch evaluation of one scene manifest. Views are independent; each one is
// computed on a bounded worker pool and failures become flagged rows.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "gsrm/config.hpp"
#include "gsrm/depth_change.hpp"
#include "gsrm/manifest.hpp"
#include "gsrm/mask_similarity.hpp"
#include "gsrm/raster.hpp"
#include "gsrm/report.hpp"

namespace gsrm {

struct EvalOptions {
  // When set, each view's changed-depth mask is written here as <view_id>.png.
  std::optional<std::filesystem::path> depth_visualization_dir;
};

inline std::size_t resolve_workers(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("GSRM_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

namespace detail {

inline void add_failure(ViewRow& row, const std::string& metric, const std::exception& e) {
  row.status = RowStatus::error;
  row.flags.push_back(metric + "_error");
  if (!row.message.empty()) row.message += "; ";
  row.message += metric + ": " + e.what();
}

inline ViewRow evaluate_view(const ManifestView& v, const EvalConfig& cfg, const EvalOptions& opts) {
  ViewRow row;
  row.view_id = v.view_id;
  if (!v.skip_reason.empty()) {
    row.status = RowStatus::skipped;
    row.message = v.skip_reason;
    return row;
  }

  std::optional<BinaryMask> loaded;
  try {
    loaded = load_mask(*v.object_mask);
  } catch (const std::exception& e) {
    add_failure(row, "object_mask", e);
    return row;
  }
  const BinaryMask& object = *loaded;

  // An absent semantic mask is a non-detection with IoU 0.
  try {
    auto side_iou = [&](const std::optional<std::filesystem::path>& p) -> std::optional<double> {
      if (!p) return std::nullopt;
      const BinaryMask m = load_mask(*p);
      if (m.size() != object.size()) {
        throw Error(ErrorCode::dimension_mismatch,
                    p->string() + " is " + to_string(m.size()) + ", object mask is " + to_string(object.size()));
      }
      return iou(m, object);
    };
    const auto pre = side_iou(v.semantic_pre);
    const auto post = side_iou(v.semantic_post);
    row.detected_pre = pre.has_value();
    row.detected_post = post.has_value();
    row.iou_pre = pre.value_or(0.0);
    row.iou_post = post.value_or(0.0);
    row.iou_drop = iou_drop(*row.iou_pre, *row.iou_post);
    if (!row.detected_pre) row.flags.push_back("not_detected_pre");
    if (!row.detected_post) row.flags.push_back("not_detected_post");
  } catch (const std::exception& e) {
    row.iou_pre.reset();
    row.iou_post.reset();
    row.iou_drop.reset();
    add_failure(row, "semantic", e);
  }

  if (v.has_sam()) {
    try {
      const MaskSet a = load_mask_set(*v.sam_pre);
      const MaskSet b = load_mask_set(*v.sam_post);
      const auto r = sim_sam_detailed(a, b, object, cfg.sim_sam);
      row.sim_sam = r.value;
      row.n_sam_pre = r.kept_a.size();
      row.n_sam_post = r.kept_b.size();
      if (r.no_overlap) row.flags.push_back("sam_no_overlap");
    } catch (const std::exception& e) {
      add_failure(row, "sim_sam", e);
    }
  } else {
    row.flags.push_back("sam_missing");
  }

  if (v.has_depth()) {
    try {
      const DepthDiffMap diff = depth_diff(load_depth(*v.depth_pre), load_depth(*v.depth_post));
      const DepthThreshold t = ght_threshold(diff, cfg.ght);
      row.xi_depth = t.value;
      if (t.degenerate) row.flags.push_back("depth_degenerate");
      row.acc_depth = acc_depth(diff, object, t.value);
      if (opts.depth_visualization_dir) {
        save_mask(changed_pixels(diff, t.value), *opts.depth_visualization_dir / (v.view_id + ".png"));
      }
    } catch (const std::exception& e) {
      row.acc_depth.reset();
      add_failure(row, "depth", e);
    }
  } else {
    row.flags.push_back("depth_missing");
  }
  return row;
}

}  // namespace detail

inline EvaluationReport run_eval(const SceneManifest& manifest, const EvalConfig& cfg, const EvalOptions& opts = {}) {
  if (opts.depth_visualization_dir) std::filesystem::create_directories(*opts.depth_visualization_dir);

  std::vector<const ManifestView*> views;
  for (const auto& v : manifest.views) views.push_back(&v);
  std::sort(views.begin(), views.end(), [](const auto* a, const auto* b) { return a->view_id < b->view_id; });

  std::vector<ViewRow> rows(views.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < views.size(); i = next++) {
      try {
        rows[i] = detail::evaluate_view(*views[i], cfg, opts);
      } catch (const std::exception& e) {
        rows[i] = ViewRow{};
        rows[i].view_id = views[i]->view_id;
        detail::add_failure(rows[i], "view", e);
      }
    }
  };
  const std::size_t n_workers = std::min(resolve_workers(cfg.workers), std::max<std::size_t>(views.size(), 1));
  if (n_workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(work);
  }

  EvaluationReport report;
  report.scene_id = manifest.scene_id;
  report.object_id = manifest.object_id;
  report.method_id = manifest.method_id;
  report.rows = std::move(rows);
  report.summary = summarize_rows(report.rows, cfg.iou_thresholds, cfg.low_confidence_miou);
  report.provenance.config = to_json(cfg);
  report.provenance.config_hash = config_hash(cfg);
  return report;
}

inline bool has_view_failures(const EvaluationReport& r) {
  return std::any_of(r.rows.begin(), r.rows.end(), [](const ViewRow& row) { return row.status == RowStatus::error; });
}

}  // namespace gsrm

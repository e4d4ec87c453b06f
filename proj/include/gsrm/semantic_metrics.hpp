#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gsrm/error.hpp"

namespace gsrm {

// Per-view semantic segmentation outcome. A view where the segmenter
// produced no mask is recorded as not detected with IoU 0.
struct SemanticViewRecord {
  std::string view_id;
  double iou_pre = 0.0;
  double iou_post = 0.0;
  bool detected_pre = true;
  bool detected_post = true;

  static SemanticViewRecord make(std::string view_id, std::optional<double> iou_pre, std::optional<double> iou_post) {
    SemanticViewRecord r;
    r.view_id = std::move(view_id);
    r.detected_pre = iou_pre.has_value();
    r.detected_post = iou_post.has_value();
    r.iou_pre = iou_pre.value_or(0.0);
    r.iou_post = iou_post.value_or(0.0);
    return r;
  }
};

inline const std::vector<double>& default_iou_thresholds() {
  static const std::vector<double> thresholds{0.5, 0.7, 0.9};
  return thresholds;
}

// Below this mean pre-removal IoU the drop is bounded by the baseline itself
// and says little about removal quality.
inline constexpr double kLowConfidenceMiou = 0.2;

struct SemanticSceneSummary {
  std::size_t n_views = 0;
  double miou_pre = 0.0;
  double miou_post = 0.0;
  double iou_drop = 0.0;
  std::optional<double> pct_reduction;  // percent; empty when miou_pre == 0
  std::vector<std::pair<double, double>> acc_seg_at;   // threshold -> ratio
  std::vector<std::pair<double, double>> acc_post_at;  // threshold -> ratio
  bool low_confidence = false;
};

inline void check_ratio(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw Error(ErrorCode::invalid_argument, std::string(what) + " must lie in [0,1], got " + std::to_string(v));
  }
}

inline double iou_drop(double iou_pre, double iou_post) {
  check_ratio(iou_pre, "iou_pre");
  check_ratio(iou_post, "iou_post");
  return iou_pre - iou_post;
}

namespace detail {

inline void check_records(std::span<const SemanticViewRecord> records, double threshold) {
  if (records.empty()) throw Error(ErrorCode::empty_input, "no semantic view records");
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw Error(ErrorCode::invalid_argument, "IoU threshold must lie in (0,1], got " + std::to_string(threshold));
  }
}

}  // namespace detail

// Fraction of views where the object is no longer segmented: IoU_post < threshold.
inline double acc_seg(std::span<const SemanticViewRecord> records, double threshold) {
  detail::check_records(records, threshold);
  const auto below = std::count_if(records.begin(), records.end(),
                                   [&](const SemanticViewRecord& r) { return r.iou_post < threshold; });
  return static_cast<double>(below) / static_cast<double>(records.size());
}

// Fraction of views where the object is still segmented: IoU_post > threshold.
inline double acc_post_ratio(std::span<const SemanticViewRecord> records, double threshold) {
  detail::check_records(records, threshold);
  const auto above = std::count_if(records.begin(), records.end(),
                                   [&](const SemanticViewRecord& r) { return r.iou_post > threshold; });
  return static_cast<double>(above) / static_cast<double>(records.size());
}

inline SemanticSceneSummary summarize_scene(std::span<const SemanticViewRecord> records,
                                            std::span<const double> thresholds = default_iou_thresholds(),
                                            double low_confidence_miou = kLowConfidenceMiou) {
  if (records.empty()) throw Error(ErrorCode::empty_input, "no semantic view records");
  // Sum in view-id order so the result does not depend on record order.
  std::vector<const SemanticViewRecord*> ordered;
  ordered.reserve(records.size());
  for (const auto& r : records) {
    check_ratio(r.iou_pre, "iou_pre");
    check_ratio(r.iou_post, "iou_post");
    ordered.push_back(&r);
  }
  std::sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) {
    if (a->view_id != b->view_id) return a->view_id < b->view_id;
    if (a->iou_pre != b->iou_pre) return a->iou_pre < b->iou_pre;
    return a->iou_post < b->iou_post;
  });
  double sum_pre = 0.0;
  double sum_post = 0.0;
  for (const auto* r : ordered) {
    sum_pre += r->iou_pre;
    sum_post += r->iou_post;
  }
  SemanticSceneSummary s;
  s.n_views = records.size();
  s.miou_pre = sum_pre / static_cast<double>(records.size());
  s.miou_post = sum_post / static_cast<double>(records.size());
  s.iou_drop = s.miou_pre - s.miou_post;
  if (s.miou_pre > 0.0) s.pct_reduction = 100.0 * s.iou_drop / s.miou_pre;
  for (double t : thresholds) {
    s.acc_seg_at.emplace_back(t, acc_seg(records, t));
    s.acc_post_at.emplace_back(t, acc_post_ratio(records, t));
  }
  s.low_confidence = s.miou_pre < low_confidence_miou;
  return s;
}

}  // namespace gsrm

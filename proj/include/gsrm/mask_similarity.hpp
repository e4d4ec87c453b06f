#pragma once

// Similarity between the "anything" mask sets of a view before and after
// removal: keep the masks that overlap the object, match them 1-to-1 with
// maximum total IoU and normalize by the larger set.

#include <algorithm>
#include <cstddef>
#include <vector>

#include "gsrm/assignment.hpp"
#include "gsrm/error.hpp"
#include "gsrm/raster.hpp"

namespace gsrm {

enum class OverlapMode {
  iou,            // iou(mask, object) >= tau
  mask_fraction,  // |mask & object| / |mask| >= tau
};

struct SimSamConfig {
  double overlap_tau = 0.1;
  OverlapMode overlap_mode = OverlapMode::iou;
};

struct MaskPair {
  std::size_t index_a = 0;
  std::size_t index_b = 0;
  double iou = 0.0;
};

struct MaskMatching {
  std::vector<MaskPair> pairs;
  std::size_t n_filtered_a = 0;
  std::size_t n_filtered_b = 0;

  // Summed in ascending order so the value does not depend on pair order.
  double total_iou() const {
    std::vector<double> values;
    values.reserve(pairs.size());
    for (const auto& p : pairs) values.push_back(p.iou);
    std::sort(values.begin(), values.end());
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum;
  }
};

struct SimSamResult {
  double value = 0.0;
  bool no_overlap = false;  // both filtered sets empty
  MaskMatching matching;    // indices refer to the raw sets
  std::vector<std::size_t> kept_a;
  std::vector<std::size_t> kept_b;
};

inline double object_overlap(const BinaryMask& mask, const BinaryMask& object, OverlapMode mode) {
  if (mode == OverlapMode::iou) return iou(mask, object);
  if (mask.size() != object.size()) {
    throw Error(ErrorCode::dimension_mismatch,
                "overlap of " + to_string(mask.size()) + " and " + to_string(object.size()));
  }
  const auto m = mask.bits();
  const auto o = object.bits();
  std::size_t inter = 0;
  std::size_t area = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    inter += m[i] & o[i];
    area += m[i];
  }
  return area == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(area);
}

// Indices (ascending) of the masks that overlap the object by at least tau.
// An empty object overlaps nothing.
inline std::vector<std::size_t> object_mask_indices(const MaskSet& set, const BinaryMask& object, double tau = 0.1,
                                                    OverlapMode mode = OverlapMode::iou) {
  std::vector<std::size_t> kept;
  if (!set.empty() && set.mask_size() != object.size()) {
    throw Error(ErrorCode::dimension_mismatch,
                "mask set " + to_string(set.mask_size()) + " vs object " + to_string(object.size()));
  }
  if (object.empty()) return kept;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (object_overlap(set[i], object, mode) >= tau) kept.push_back(i);
  }
  return kept;
}

inline MaskSet filter_object_masks(const MaskSet& set, const BinaryMask& object, double tau = 0.1,
                                   OverlapMode mode = OverlapMode::iou) {
  MaskSet out;
  for (std::size_t i : object_mask_indices(set, object, tau, mode)) out.push_back(set[i]);
  return out;
}

// Maximum-total-IoU 1-to-1 matching. Zero-IoU pairs never appear.
inline MaskMatching match_masks(const MaskSet& a, const MaskSet& b) {
  if (!a.empty() && !b.empty() && a.mask_size() != b.mask_size()) {
    throw Error(ErrorCode::dimension_mismatch,
                "mask sets " + to_string(a.mask_size()) + " and " + to_string(b.mask_size()));
  }
  MaskMatching out;
  out.n_filtered_a = a.size();
  out.n_filtered_b = b.size();
  CostMatrix cost(a.size(), b.size());
  std::vector<double> ious(a.size() * b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double v = iou(a[i], b[j]);
      ious[i * b.size() + j] = v;
      cost(i, j) = -v;
    }
  }
  const Assignment assignment = solve_assignment(cost);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::size_t j = assignment.row_to_col[i];
    if (j == Assignment::npos) continue;
    const double v = ious[i * b.size() + j];
    if (v > 0.0) out.pairs.push_back({i, j, v});
  }
  return out;
}

inline SimSamResult sim_sam_detailed(const MaskSet& a_raw, const MaskSet& b_raw, const BinaryMask& object,
                                     const SimSamConfig& cfg = {}) {
  SimSamResult r;
  r.kept_a = object_mask_indices(a_raw, object, cfg.overlap_tau, cfg.overlap_mode);
  r.kept_b = object_mask_indices(b_raw, object, cfg.overlap_tau, cfg.overlap_mode);
  MaskSet a, b;
  for (std::size_t i : r.kept_a) a.push_back(a_raw[i]);
  for (std::size_t j : r.kept_b) b.push_back(b_raw[j]);
  r.matching = match_masks(a, b);
  for (auto& p : r.matching.pairs) {
    p.index_a = r.kept_a[p.index_a];
    p.index_b = r.kept_b[p.index_b];
  }
  const std::size_t denom = std::max(a.size(), b.size());
  if (denom == 0) {
    r.no_overlap = true;
    r.value = 0.0;
    return r;
  }
  r.value = r.matching.total_iou() / static_cast<double>(denom);
  return r;
}

inline double sim_sam(const MaskSet& a_raw, const MaskSet& b_raw, const BinaryMask& object,
                      const SimSamConfig& cfg = {}) {
  return sim_sam_detailed(a_raw, b_raw, object, cfg).value;
}

}  // namespace gsrm

#pragma once

// Depth-change accuracy: the share of object pixels whose rendered depth
// moved by more than an automatically selected threshold. The threshold is
// picked by Generalized Histogram Thresholding (Barron, ECCV 2020) on the
// histogram of absolute depth differences over the whole image.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "gsrm/error.hpp"
#include "gsrm/raster.hpp"

namespace gsrm {

class DepthDiffMap {
 public:
  DepthDiffMap(int width, int height, std::vector<float> diffs, std::vector<std::uint8_t> valid)
      : size_{width, height}, diffs_(std::move(diffs)), valid_(std::move(valid)) {
    check_size(size_);
    const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    if (diffs_.size() != n || valid_.size() != n) {
      throw Error(ErrorCode::invalid_argument, "depth difference buffers do not match " + to_string(size_));
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (valid_[i] && !(std::isfinite(diffs_[i]) && diffs_[i] >= 0.0f)) {
        throw Error(ErrorCode::invalid_argument, "valid depth differences must be finite and nonnegative");
      }
    }
  }

  int width() const noexcept { return size_.width; }
  int height() const noexcept { return size_.height; }
  Size2 size() const noexcept { return size_; }
  std::span<const float> diffs() const noexcept { return diffs_; }
  std::span<const std::uint8_t> valid() const noexcept { return valid_; }

  std::size_t valid_count() const {
    std::size_t n = 0;
    for (auto v : valid_) n += v;
    return n;
  }

 private:
  Size2 size_;
  std::vector<float> diffs_;
  std::vector<std::uint8_t> valid_;
};

inline DepthDiffMap depth_diff(const DepthMap& pre, const DepthMap& post) {
  if (pre.size() != post.size()) {
    throw Error(ErrorCode::dimension_mismatch,
                "depth maps " + to_string(pre.size()) + " and " + to_string(post.size()));
  }
  const std::size_t n = pre.pixel_count();
  std::vector<float> diffs(n, 0.0f);
  std::vector<std::uint8_t> valid(n, 0);
  const auto a = pre.values();
  const auto b = post.values();
  const auto va = pre.valid();
  const auto vb = post.valid();
  for (std::size_t i = 0; i < n; ++i) {
    if (va[i] && vb[i]) {
      valid[i] = 1;
      diffs[i] = std::abs(a[i] - b[i]);
    }
  }
  return DepthDiffMap(pre.width(), pre.height(), std::move(diffs), std::move(valid));
}

// GHT hyperparameters. The defaults (nu -> infinity, tau = 0, kappa = 0)
// are the limit in which GHT reduces to Otsu's method.
struct GhtConfig {
  int n_bins = 256;
  double nu = std::numeric_limits<double>::infinity();
  double tau = 0.0;
  double kappa = 0.0;
  double omega = 0.5;

  bool is_otsu_limit() const { return std::isinf(nu) && tau == 0.0 && kappa == 0.0; }

  void validate() const {
    if (n_bins < 2) throw Error(ErrorCode::invalid_argument, "GHT needs at least 2 bins");
    if (!(nu >= 0.0) || !(tau >= 0.0) || !(kappa >= 0.0) || !(omega >= 0.0 && omega <= 1.0)) {
      throw Error(ErrorCode::invalid_argument, "GHT hyperparameters must be nonnegative with omega in [0,1]");
    }
  }
};

// Index t of the last bin of the lower class; ties between equally scored
// splits resolve to the (floored) mean of their indices.
struct GhtSelection {
  std::size_t split = 0;
  double score = 0.0;
};

inline GhtSelection ght_select(std::span<const double> counts, std::span<const double> centers,
                               const GhtConfig& cfg = {}) {
  cfg.validate();
  const std::size_t n = counts.size();
  if (n < 2 || centers.size() != n) {
    throw Error(ErrorCode::invalid_argument, "histogram needs at least 2 bins with matching centers");
  }
  const auto clip = [](double z) { return std::max(z, 1e-30); };

  double total_w = 0.0, total_wx = 0.0, total_wxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(counts[i] >= 0.0)) throw Error(ErrorCode::invalid_argument, "histogram counts must be nonnegative");
    total_w += counts[i];
    total_wx += counts[i] * centers[i];
    total_wxx += counts[i] * centers[i] * centers[i];
  }

  std::vector<double> scores(n - 1);
  double cw = 0.0, cwx = 0.0, cwxx = 0.0;
  for (std::size_t t = 0; t + 1 < n; ++t) {
    cw += counts[t];
    cwx += counts[t] * centers[t];
    cwxx += counts[t] * centers[t] * centers[t];
    const double w0 = clip(cw);
    const double w1 = clip(total_w - cw);
    const double d0 = cwxx - cwx * cwx / w0;
    const double sx1 = total_wx - cwx;
    const double d1 = (total_wxx - cwxx) - sx1 * sx1 / w1;
    if (cfg.is_otsu_limit()) {
      scores[t] = -(d0 + d1);
      continue;
    }
    const double p0 = w0 / (w0 + w1);
    const double p1 = w1 / (w0 + w1);
    double v0, v1;
    if (std::isinf(cfg.nu)) {
      v0 = clip(cfg.tau * cfg.tau);
      v1 = v0;
    } else {
      v0 = clip((p0 * cfg.nu * cfg.tau * cfg.tau + d0) / (p0 * cfg.nu + w0));
      v1 = clip((p1 * cfg.nu * cfg.tau * cfg.tau + d1) / (p1 * cfg.nu + w1));
    }
    const double f0 = -d0 / v0 - w0 * std::log(v0) + 2.0 * (w0 + cfg.kappa * cfg.omega) * std::log(w0);
    const double f1 = -d1 / v1 - w1 * std::log(v1) + 2.0 * (w1 + cfg.kappa * (1.0 - cfg.omega)) * std::log(w1);
    scores[t] = f0 + f1;
  }

  double best = -std::numeric_limits<double>::infinity();
  for (double s : scores) {
    if (std::isnan(s)) throw Error(ErrorCode::numerical, "GHT score is NaN");
    best = std::max(best, s);
  }
  std::size_t sum_idx = 0, n_tied = 0;
  for (std::size_t t = 0; t < scores.size(); ++t) {
    if (scores[t] == best) {
      sum_idx += t;
      ++n_tied;
    }
  }
  return {sum_idx / n_tied, best};
}

struct DepthThreshold {
  double value = 0.0;
  bool degenerate = false;   // fewer than two distinct valid differences
  std::size_t split = 0;     // selected bin, meaningless when degenerate
  double max_diff = 0.0;
  std::vector<double> histogram;
};

// Histogram of all valid differences over [0, max_diff] in n_bins uniform
// bins; the threshold is the upper edge of the selected lower-class bin.
inline DepthThreshold ght_threshold(const DepthDiffMap& diff, const GhtConfig& cfg = {}) {
  cfg.validate();
  const auto d = diff.diffs();
  const auto valid = diff.valid();
  DepthThreshold out;
  bool any = false;
  float lo = 0.0f, hi = 0.0f;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!valid[i]) continue;
    if (!any) {
      lo = hi = d[i];
      any = true;
    } else {
      lo = std::min(lo, d[i]);
      hi = std::max(hi, d[i]);
    }
  }
  if (!any) throw Error(ErrorCode::empty_input, "no valid depth differences");
  out.max_diff = hi;
  if (lo == hi) {
    out.degenerate = true;
    out.value = hi;
    return out;
  }

  const std::size_t n_bins = static_cast<std::size_t>(cfg.n_bins);
  out.histogram.assign(n_bins, 0.0);
  const double max_diff = hi;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!valid[i]) continue;
    auto bin = static_cast<std::size_t>(std::floor(static_cast<double>(d[i]) * static_cast<double>(n_bins) / max_diff));
    out.histogram[std::min(bin, n_bins - 1)] += 1.0;
  }
  const double width = max_diff / static_cast<double>(n_bins);
  std::vector<double> centers(n_bins);
  for (std::size_t i = 0; i < n_bins; ++i) centers[i] = (static_cast<double>(i) + 0.5) * width;

  const auto sel = ght_select(out.histogram, centers, cfg);
  out.split = sel.split;
  out.value = static_cast<double>(sel.split + 1) * width;
  return out;
}

// Share of valid object pixels whose depth changed by strictly more than xi.
inline double acc_depth(const DepthDiffMap& diff, const BinaryMask& object, double xi) {
  if (object.size() != diff.size()) {
    throw Error(ErrorCode::dimension_mismatch,
                "object mask " + to_string(object.size()) + " vs depth " + to_string(diff.size()));
  }
  if (object.empty()) throw Error(ErrorCode::empty_input, "object mask is empty");
  const auto bits = object.bits();
  const auto d = diff.diffs();
  const auto valid = diff.valid();
  std::size_t total = 0, changed = 0;
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (!bits[i] || !valid[i]) continue;
    ++total;
    if (static_cast<double>(d[i]) > xi) ++changed;
  }
  if (total == 0) throw Error(ErrorCode::empty_input, "object has no pixel with valid depth in both renders");
  return static_cast<double>(changed) / static_cast<double>(total);
}

// Pixels whose depth changed beyond xi, for visual inspection.
inline BinaryMask changed_pixels(const DepthDiffMap& diff, double xi) {
  std::vector<std::uint8_t> bits(diff.diffs().size());
  const auto d = diff.diffs();
  const auto valid = diff.valid();
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = (valid[i] && static_cast<double>(d[i]) > xi) ? 1 : 0;
  return BinaryMask(diff.width(), diff.height(), std::move(bits));
}

}  // namespace gsrm

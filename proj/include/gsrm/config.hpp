#pragma once

// JSON configuration for evaluation and refinement. Every field is optional;
// absent fields keep the module defaults.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "gsrm/depth_change.hpp"
#include "gsrm/error.hpp"
#include "gsrm/file_util.hpp"
#include "gsrm/mask_similarity.hpp"
#include "gsrm/refinement.hpp"
#include "gsrm/semantic_metrics.hpp"
#include "json.hpp"

namespace gsrm {

inline constexpr const char* kToolVersion = "1.0.0";

struct EvalConfig {
  std::vector<double> iou_thresholds = default_iou_thresholds();
  SimSamConfig sim_sam;
  GhtConfig ght;
  double low_confidence_miou = kLowConfidenceMiou;
  std::size_t workers = 0;  // 0: GSRM_WORKERS or the hardware concurrency
};

namespace detail {

// Infinity is spelled "inf" in JSON.
inline double json_real(const nlohmann::json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
    throw Error(ErrorCode::format, std::string("config field '") + key + "' must be a number or \"inf\"");
  }
  if (!v.is_number()) throw Error(ErrorCode::format, std::string("config field '") + key + "' must be a number");
  return v.get<double>();
}

inline nlohmann::json json_real_value(double v) {
  if (std::isinf(v)) return "inf";
  return v;
}

inline nlohmann::json parse_json_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::format, path.string() + ": " + e.what());
  }
}

}  // namespace detail

inline RefineConfig refine_config_from_json(const nlohmann::json& j, RefineConfig cfg = {}) {
  try {
    cfg.k_neighbors = j.value("k_neighbors", cfg.k_neighbors);
    cfg.delta = detail::json_real(j, "delta", cfg.delta);
    cfg.cut_percentile = detail::json_real(j, "cut_percentile", cfg.cut_percentile);
    cfg.tv_weight = detail::json_real(j, "tv_weight", cfg.tv_weight);
    cfg.kl_smoothing = detail::json_real(j, "kl_smoothing", cfg.kl_smoothing);
    if (j.contains("label_weights")) {
      const auto w = j.at("label_weights").get<std::vector<double>>();
      if (w.size() != 2) throw Error(ErrorCode::format, "label_weights needs two entries (retain, remove)");
      cfg.label_weights = {w[0], w[1]};
    }
    cfg.max_iters = j.value("max_iters", cfg.max_iters);
    cfg.tol = detail::json_real(j, "tol", cfg.tol);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::format, std::string("refine config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

inline nlohmann::json to_json(const RefineConfig& cfg) {
  return {{"k_neighbors", cfg.k_neighbors},
          {"delta", cfg.delta},
          {"cut_percentile", cfg.cut_percentile},
          {"tv_weight", cfg.tv_weight},
          {"kl_smoothing", cfg.kl_smoothing},
          {"label_weights", {cfg.label_weights[0], cfg.label_weights[1]}},
          {"max_iters", cfg.max_iters},
          {"tol", cfg.tol}};
}

inline EvalConfig eval_config_from_json(const nlohmann::json& j) {
  EvalConfig cfg;
  try {
    if (j.contains("iou_thresholds")) cfg.iou_thresholds = j.at("iou_thresholds").get<std::vector<double>>();
    for (double t : cfg.iou_thresholds) {
      if (!(t > 0.0 && t <= 1.0)) throw Error(ErrorCode::invalid_argument, "IoU thresholds must lie in (0,1]");
    }
    if (j.contains("sim_sam")) {
      const auto& s = j.at("sim_sam");
      cfg.sim_sam.overlap_tau = detail::json_real(s, "overlap_tau", cfg.sim_sam.overlap_tau);
      const auto mode = s.value("overlap_mode", std::string("iou"));
      if (mode == "iou") {
        cfg.sim_sam.overlap_mode = OverlapMode::iou;
      } else if (mode == "mask_fraction") {
        cfg.sim_sam.overlap_mode = OverlapMode::mask_fraction;
      } else {
        throw Error(ErrorCode::format, "sim_sam.overlap_mode must be \"iou\" or \"mask_fraction\"");
      }
    }
    if (j.contains("ght")) {
      const auto& g = j.at("ght");
      cfg.ght.n_bins = g.value("n_bins", cfg.ght.n_bins);
      cfg.ght.nu = detail::json_real(g, "nu", cfg.ght.nu);
      cfg.ght.tau = detail::json_real(g, "tau", cfg.ght.tau);
      cfg.ght.kappa = detail::json_real(g, "kappa", cfg.ght.kappa);
      cfg.ght.omega = detail::json_real(g, "omega", cfg.ght.omega);
      cfg.ght.validate();
    }
    cfg.low_confidence_miou = detail::json_real(j, "low_confidence_miou", cfg.low_confidence_miou);
    cfg.workers = j.value("workers", cfg.workers);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::format, std::string("eval config: ") + e.what());
  }
  return cfg;
}

inline nlohmann::json to_json(const EvalConfig& cfg) {
  return {{"iou_thresholds", cfg.iou_thresholds},
          {"sim_sam",
           {{"overlap_tau", cfg.sim_sam.overlap_tau},
            {"overlap_mode", cfg.sim_sam.overlap_mode == OverlapMode::iou ? "iou" : "mask_fraction"}}},
          {"ght",
           {{"n_bins", cfg.ght.n_bins},
            {"nu", detail::json_real_value(cfg.ght.nu)},
            {"tau", cfg.ght.tau},
            {"kappa", cfg.ght.kappa},
            {"omega", cfg.ght.omega}}},
          {"low_confidence_miou", cfg.low_confidence_miou}};
}

inline EvalConfig load_eval_config(const std::filesystem::path& path) {
  return eval_config_from_json(detail::parse_json_file(path));
}

inline RefineConfig load_refine_config(const std::filesystem::path& path) {
  return refine_config_from_json(detail::parse_json_file(path));
}

// FNV-1a over the canonical JSON dump; worker count is excluded since it
// does not change results.
inline std::string config_hash(const EvalConfig& cfg) {
  const std::string text = to_json(cfg).dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace gsrm

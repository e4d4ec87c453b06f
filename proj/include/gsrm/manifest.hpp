#pragma once

// Scene manifests: one JSON file per (scene, object, removal method) listing
// the per-view inputs. Relative paths resolve against the manifest's folder.
//
// {
//   "schema_version": 1,
//   "scene_id": "counter", "object_id": "baking_tray", "method_id": "gaussian_cut",
//   "views": [{
//     "view_id": "000",
//     "object_mask": "gt/000.png",
//     "semantic_pre": "sem_pre/000.png",  "semantic_post": null,
//     "sam_pre": "sam_pre/000",           "sam_post": "sam_post/000",
//     "depth_pre": "depth_pre/000.pfm",   "depth_post": "depth_post/000.pfm"
//   }],
//   "ply": "scene.ply", "removal_set": "removed.txt", "refine_config": "refine.json"
// }
//
// A null (or absent) semantic mask means the segmenter found nothing; that
// view keeps IoU 0 for that side instead of being skipped.

#include <algorithm>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gsrm/config.hpp"
#include "gsrm/error.hpp"
#include "json.hpp"

namespace gsrm {

inline constexpr int kManifestSchemaVersion = 1;

struct ManifestView {
  std::string view_id;
  std::optional<std::filesystem::path> object_mask;
  std::optional<std::filesystem::path> semantic_pre;
  std::optional<std::filesystem::path> semantic_post;
  std::optional<std::filesystem::path> sam_pre;
  std::optional<std::filesystem::path> sam_post;
  std::optional<std::filesystem::path> depth_pre;
  std::optional<std::filesystem::path> depth_post;

  // Set when the view cannot be evaluated at all (no usable object mask).
  std::string skip_reason;
  bool has_sam() const { return sam_pre && sam_post; }
  bool has_depth() const { return depth_pre && depth_post; }
};

struct SceneManifest {
  std::filesystem::path path;
  std::string scene_id;
  std::string object_id;
  std::string method_id;
  std::vector<ManifestView> views;
  std::optional<std::filesystem::path> ply;
  std::optional<std::filesystem::path> removal_set;
  std::optional<std::filesystem::path> refine_config;

  // Referenced files that do not exist, one message per path.
  std::vector<std::string> issues;

  std::size_t usable_views() const {
    return static_cast<std::size_t>(
        std::count_if(views.begin(), views.end(), [](const ManifestView& v) { return v.skip_reason.empty(); }));
  }
};

namespace detail {

inline std::optional<std::filesystem::path> manifest_path(const nlohmann::json& obj, const char* key,
                                                          const std::filesystem::path& base) {
  if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
  if (!obj.at(key).is_string()) throw Error(ErrorCode::format, std::string("manifest field '") + key + "' must be a path");
  std::filesystem::path p = obj.at(key).get<std::string>();
  return p.is_absolute() ? p : base / p;
}

}  // namespace detail

// Parses a manifest and checks which inputs exist. Missing optional inputs
// are dropped (their metric is skipped for that view) and reported in
// `issues`; a view without its object mask is skipped entirely.
inline SceneManifest parse_manifest(const nlohmann::json& j, const std::filesystem::path& manifest_file) {
  SceneManifest m;
  m.path = manifest_file;
  const auto base = manifest_file.parent_path();
  try {
    const int version = j.value("schema_version", kManifestSchemaVersion);
    if (version != kManifestSchemaVersion) {
      throw Error(ErrorCode::format, "unsupported manifest schema_version " + std::to_string(version));
    }
    m.scene_id = j.value("scene_id", std::string{});
    m.object_id = j.value("object_id", std::string{});
    m.method_id = j.value("method_id", std::string{});
    m.ply = detail::manifest_path(j, "ply", base);
    m.removal_set = detail::manifest_path(j, "removal_set", base);
    m.refine_config = detail::manifest_path(j, "refine_config", base);
    if (!j.contains("views") || !j.at("views").is_array()) throw Error(ErrorCode::format, "manifest needs a 'views' array");

    std::set<std::string> ids;
    for (const auto& jv : j.at("views")) {
      ManifestView v;
      v.view_id = jv.at("view_id").get<std::string>();
      if (!ids.insert(v.view_id).second) throw Error(ErrorCode::format, "duplicate view_id '" + v.view_id + "'");
      v.object_mask = detail::manifest_path(jv, "object_mask", base);
      v.semantic_pre = detail::manifest_path(jv, "semantic_pre", base);
      v.semantic_post = detail::manifest_path(jv, "semantic_post", base);
      v.sam_pre = detail::manifest_path(jv, "sam_pre", base);
      v.sam_post = detail::manifest_path(jv, "sam_post", base);
      v.depth_pre = detail::manifest_path(jv, "depth_pre", base);
      v.depth_post = detail::manifest_path(jv, "depth_post", base);
      m.views.push_back(std::move(v));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::format, manifest_file.string() + ": " + e.what());
  }

  auto check = [&](ManifestView& v, std::optional<std::filesystem::path>& p, const char* what, bool directory) {
    if (!p) return;
    std::error_code ec;
    const bool ok = directory ? std::filesystem::is_directory(*p, ec) : std::filesystem::is_regular_file(*p, ec);
    if (!ok) {
      m.issues.push_back("view " + v.view_id + ": " + what + " missing: " + p->string());
      p.reset();
    }
  };
  for (auto& v : m.views) {
    if (!v.object_mask) {
      m.issues.push_back("view " + v.view_id + ": object_mask not given");
      v.skip_reason = "no object mask";
    } else {
      check(v, v.object_mask, "object_mask", false);
      if (!v.object_mask) v.skip_reason = "object mask missing";
    }
    check(v, v.semantic_pre, "semantic_pre", false);
    check(v, v.semantic_post, "semantic_post", false);
    check(v, v.sam_pre, "sam_pre", true);
    check(v, v.sam_post, "sam_post", true);
    check(v, v.depth_pre, "depth_pre", false);
    check(v, v.depth_post, "depth_post", false);
  }
  for (auto* p : {&m.ply, &m.removal_set, &m.refine_config}) {
    std::error_code ec;
    if (*p && !std::filesystem::is_regular_file(**p, ec)) {
      m.issues.push_back("scene file missing: " + (*p)->string());
      p->reset();
    }
  }
  std::sort(m.views.begin(), m.views.end(),
            [](const ManifestView& a, const ManifestView& b) { return a.view_id < b.view_id; });
  return m;
}

inline SceneManifest validate_manifest(const std::filesystem::path& path) {
  SceneManifest m = parse_manifest(detail::parse_json_file(path), path);
  if (m.usable_views() == 0) {
    throw Error(ErrorCode::empty_input, path.string() + ": manifest has no usable views");
  }
  return m;
}

}  // namespace gsrm

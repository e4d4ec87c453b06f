// gsrm: object-removal evaluation and refinement for Gaussian splat scenes.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gsrm/config.hpp"
#include "gsrm/evaluate.hpp"
#include "gsrm/fixture.hpp"
#include "gsrm/gaussian_cloud.hpp"
#include "gsrm/manifest.hpp"
#include "gsrm/refinement.hpp"
#include "gsrm/report.hpp"

namespace fs = std::filesystem;

namespace {

enum Exit : int { kOk = 0, kUsage = 1, kValidation = 2, kViewFailures = 3, kGraphEmpty = 4 };

struct EvalArgs {
  std::string manifest, config, out, format = "json", depth_vis;
  std::size_t workers = 0;
};

struct RefineArgs {
  std::string ply, removal, features, config, out, format = "index";
};

struct FixtureArgs {
  std::string spec, out, mode;
  std::optional<double> rho;
  bool dumbbell = false;
};

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string out, format = "table";
  bool check = false;
};

struct ValidateArgs {
  std::string manifest;
};

int cmd_validate(const ValidateArgs& a) {
  const auto m = gsrm::parse_manifest(gsrm::detail::parse_json_file(a.manifest), a.manifest);
  for (const auto& issue : m.issues) std::cout << "missing: " << issue << "\n";
  for (const auto& v : m.views) {
    if (!v.skip_reason.empty()) std::cout << "skip: view " << v.view_id << ": " << v.skip_reason << "\n";
  }
  std::cout << m.views.size() << " views, " << m.usable_views() << " usable, " << m.issues.size() << " issues\n";
  if (m.usable_views() == 0 || !m.issues.empty()) return kValidation;
  return kOk;
}

int cmd_eval(const EvalArgs& a) {
  gsrm::SceneManifest manifest;
  gsrm::EvalConfig cfg;
  try {
    manifest = gsrm::validate_manifest(a.manifest);
    if (!a.config.empty()) cfg = gsrm::load_eval_config(a.config);
  } catch (const gsrm::Error& e) {
    std::cerr << "validation failed: " << e.what() << "\n";
    return kValidation;
  }
  for (const auto& issue : manifest.issues) std::cerr << "warning: " << issue << "\n";
  if (a.workers > 0) cfg.workers = a.workers;
  gsrm::EvalOptions opts;
  if (!a.depth_vis.empty()) opts.depth_visualization_dir = fs::path(a.depth_vis);

  const auto report = gsrm::run_eval(manifest, cfg, opts);
  gsrm::emit_report(report, gsrm::report_format_from_string(a.format), a.out, cfg.iou_thresholds);
  const auto& s = report.summary;
  std::cout << report.scene_id << "/" << report.object_id << "/" << report.method_id << ": " << s.n_evaluated
            << " views evaluated, " << s.n_skipped << " skipped, " << s.n_errors << " with errors\n";
  if (gsrm::has_view_failures(report)) {
    for (const auto& row : report.rows) {
      if (row.status == gsrm::RowStatus::error) std::cerr << "view " << row.view_id << ": " << row.message << "\n";
    }
    return kViewFailures;
  }
  return kOk;
}

int cmd_refine(const RefineArgs& a) {
  gsrm::GaussianCloud cloud = gsrm::load_ply(a.ply);
  if (!a.features.empty()) gsrm::load_feature_sidecar(a.features, cloud);
  const gsrm::RemovalSet seed = gsrm::load_removal_set(a.removal, cloud.size());
  const gsrm::RefineConfig cfg = a.config.empty() ? gsrm::RefineConfig{} : gsrm::load_refine_config(a.config);
  if (a.format != "index" && a.format != "bitmask") {
    throw gsrm::Error(gsrm::ErrorCode::invalid_argument, "removal format must be index or bitmask");
  }

  const auto result = gsrm::refine(cloud, seed, cfg);
  if (result.status == gsrm::SolveStatus::graph_empty) {
    std::cerr << "graph empty: no candidate splats or edges survive filtering; seed left unchanged\n";
    return kGraphEmpty;
  }

  const fs::path out = a.out;
  fs::create_directories(out);
  const auto format = a.format == "bitmask" ? gsrm::RemovalFormat::bitmask : gsrm::RemovalFormat::index_list;
  gsrm::save_removal_set(result.refined_set, out / (a.format == "bitmask" ? "refined.bits" : "refined.txt"), format);
  gsrm::save_ply(cloud, &result.refined_set, out / "refined.ply");
  std::ostringstream trace;
  trace << "iteration,energy\n";
  char line[64];
  for (std::size_t i = 0; i < result.energy_trace.size(); ++i) {
    std::snprintf(line, sizeof(line), "%zu,%.17g\n", i, result.energy_trace[i]);
    trace << line;
  }
  gsrm::write_text_atomic(out / "energy_trace.csv", trace.str());

  std::cout << "refine: " << result.node_indices.size() << " nodes, " << result.n_edges << " edges, status "
            << gsrm::to_string(result.status) << "; seed " << seed.count() << " -> refined "
            << result.refined_set.count() << " splats\n";
  return kOk;
}

int cmd_fixture(const FixtureArgs& a) {
  nlohmann::json spec = a.spec.empty() ? nlohmann::json::object() : gsrm::detail::parse_json_file(a.spec);
  if (!a.mode.empty()) spec["mode"] = a.mode;
  if (a.rho) spec["rho"] = *a.rho;
  if (a.dumbbell && !spec.contains("dumbbell")) spec["dumbbell"] = nlohmann::json::object();
  gsrm::FixtureSpec s;
  try {
    s = gsrm::fixture_spec_from_json(spec);
  } catch (const gsrm::Error& e) {
    std::cerr << "invalid fixture spec: " << e.what() << "\n";
    return kValidation;
  }
  gsrm::gen_fixture(s, a.out);
  std::cout << "fixture written to " << a.out << "\n";
  return kOk;
}

int cmd_report(const ReportArgs& a) {
  std::vector<gsrm::EvaluationReport> reports;
  for (const auto& in : a.inputs) {
    auto loaded = gsrm::load_reports(in);
    reports.insert(reports.end(), loaded.begin(), loaded.end());
  }
  std::vector<double> thresholds = gsrm::default_iou_thresholds();
  if (!reports.empty() && reports.front().provenance.config.contains("iou_thresholds")) {
    thresholds = reports.front().provenance.config.at("iou_thresholds").get<std::vector<double>>();
  }
  if (a.check) {
    // Each stored summary must be reproducible from its own rows.
    for (const auto& r : reports) {
      const auto& c = r.provenance.config;
      const auto t = c.contains("iou_thresholds") ? c.at("iou_thresholds").get<std::vector<double>>() : thresholds;
      const double low = c.value("low_confidence_miou", gsrm::kLowConfidenceMiou);
      const auto again = gsrm::summarize_rows(r.rows, t, low);
      if (gsrm::to_json(again) != gsrm::to_json(r.summary)) {
        std::cerr << "summary of " << r.scene_id << "/" << r.object_id << "/" << r.method_id
                  << " does not match its rows\n";
        return kValidation;
      }
    }
  }
  const auto format = gsrm::report_format_from_string(a.format);
  if (a.out.empty() || a.out == "-") {
    if (format == gsrm::ReportFormat::table) {
      std::cout << gsrm::summary_table(reports);
    } else if (format == gsrm::ReportFormat::csv) {
      std::cout << gsrm::summary_csv(reports, thresholds);
    } else {
      nlohmann::json j{{"reports", nlohmann::json::array()}};
      for (const auto& r : reports) j["reports"].push_back(gsrm::to_json(r));
      std::cout << j.dump(2) << "\n";
    }
  } else {
    gsrm::emit_report(reports, format, a.out, thresholds);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evaluate and refine object removal in Gaussian splat scenes", "gsrm"};
  app.set_version_flag("--version", std::string(gsrm::kToolVersion));
  app.require_subcommand(1);

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Compute per-view removal metrics for a scene manifest");
  eval->add_option("manifest", ev.manifest, "Scene manifest (JSON)")->required()->check(CLI::ExistingFile);
  eval->add_option("-c,--config", ev.config, "Evaluation config (JSON)")->check(CLI::ExistingFile);
  eval->add_option("-o,--out", ev.out, "Report output path")->required();
  eval->add_option("-f,--format", ev.format, "json, csv or table")->check(CLI::IsMember({"json", "csv", "table"}));
  eval->add_option("--depth-vis", ev.depth_vis, "Directory for changed-depth masks");
  eval->add_option("-j,--workers", ev.workers, "Worker threads (default: GSRM_WORKERS or all cores)");

  RefineArgs rf;
  auto* refine = app.add_subcommand("refine", "Grow a removal set over semantically similar neighbours");
  refine->add_option("--ply", rf.ply, "Gaussian scene (binary PLY)")->required()->check(CLI::ExistingFile);
  refine->add_option("--removal", rf.removal, "Seed removal set")->required()->check(CLI::ExistingFile);
  refine->add_option("--features", rf.features, "Feature sidecar header (JSON)")->check(CLI::ExistingFile);
  refine->add_option("-c,--config", rf.config, "Refinement config (JSON)")->check(CLI::ExistingFile);
  refine->add_option("-o,--out", rf.out, "Output directory")->required();
  refine->add_option("--removal-format", rf.format, "index or bitmask")->check(CLI::IsMember({"index", "bitmask"}));

  FixtureArgs fx;
  auto* fixture = app.add_subcommand("gen-fixture", "Write a synthetic scene with known metric values");
  fixture->add_option("--spec", fx.spec, "Fixture spec (JSON)")->check(CLI::ExistingFile);
  fixture->add_option("--mode", fx.mode, "none, perfect or residual")
      ->check(CLI::IsMember({"none", "perfect", "residual"}));
  fixture->add_option("--rho", fx.rho, "Residual fraction for mode residual");
  fixture->add_flag("--dumbbell", fx.dumbbell, "Also write a Gaussian dumbbell scene");
  fixture->add_option("-o,--out", fx.out, "Output directory")->required();

  ReportArgs rp;
  auto* report = app.add_subcommand("report", "Merge and reformat evaluation reports");
  report->add_option("inputs", rp.inputs, "JSON reports")->required()->check(CLI::ExistingFile);
  report->add_option("-f,--format", rp.format, "json, csv or table")->check(CLI::IsMember({"json", "csv", "table"}));
  report->add_option("-o,--out", rp.out, "Output path (default: stdout)");
  report->add_flag("--check", rp.check, "Verify that every summary recomputes from its rows");

  ValidateArgs va;
  auto* validate = app.add_subcommand("validate", "Check that every file a manifest references exists");
  validate->add_option("manifest", va.manifest, "Scene manifest (JSON)")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << "\n" << app.help();
    return kUsage;
  }

  try {
    if (*eval) return cmd_eval(ev);
    if (*refine) return cmd_refine(rf);
    if (*fixture) return cmd_fixture(fx);
    if (*report) return cmd_report(rp);
    if (*validate) return cmd_validate(va);
  } catch (const gsrm::Error& e) {
    std::cerr << "error (" << gsrm::to_string(e.code()) << "): " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  }
  return kUsage;
}

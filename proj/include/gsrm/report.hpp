#pragma once

// Evaluation reports: per-view metric rows, the per-scene summary derived
// from them, and CSV / JSON / text-table renderings.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gsrm/config.hpp"
#include "gsrm/error.hpp"
#include "gsrm/file_util.hpp"
#include "gsrm/semantic_metrics.hpp"
#include "json.hpp"

namespace gsrm {

inline constexpr int kReportSchemaVersion = 1;

enum class RowStatus { ok, skipped, error };

inline const char* to_string(RowStatus s) {
  switch (s) {
    case RowStatus::ok: return "ok";
    case RowStatus::skipped: return "skipped";
    case RowStatus::error: return "error";
  }
  return "unknown";
}

inline RowStatus row_status_from_string(const std::string& s) {
  if (s == "ok") return RowStatus::ok;
  if (s == "skipped") return RowStatus::skipped;
  if (s == "error") return RowStatus::error;
  throw Error(ErrorCode::format, "unknown row status '" + s + "'");
}

struct ViewRow {
  std::string view_id;
  RowStatus status = RowStatus::ok;
  std::string message;  // skip reason or error text
  bool detected_pre = false;
  bool detected_post = false;
  std::optional<double> iou_pre;
  std::optional<double> iou_post;
  std::optional<double> iou_drop;
  std::optional<double> sim_sam;
  std::size_t n_sam_pre = 0;  // after the object-overlap filter
  std::size_t n_sam_post = 0;
  std::optional<double> xi_depth;
  std::optional<double> acc_depth;
  std::vector<std::string> flags;

  bool has_semantic() const { return iou_pre.has_value() && iou_post.has_value(); }
};

struct ReportSummary {
  std::size_t n_views = 0;
  std::size_t n_evaluated = 0;
  std::size_t n_skipped = 0;
  std::size_t n_errors = 0;
  std::optional<SemanticSceneSummary> semantic;
  std::optional<double> mean_sim_sam;
  std::size_t n_sim_sam = 0;
  std::optional<double> mean_acc_depth;
  std::size_t n_acc_depth = 0;
};

struct Provenance {
  std::string tool_version = kToolVersion;
  std::string config_hash;
  nlohmann::json config;
};

struct EvaluationReport {
  std::string scene_id;
  std::string object_id;
  std::string method_id;
  std::vector<ViewRow> rows;  // sorted by view id
  ReportSummary summary;
  Provenance provenance;
};

namespace detail {

// Mean over values visited in row order (rows are sorted by view id).
inline std::optional<double> mean_of(const std::vector<double>& values) {
  if (values.empty()) return std::nullopt;
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

}  // namespace detail

inline ReportSummary summarize_rows(const std::vector<ViewRow>& rows, std::span<const double> thresholds,
                                    double low_confidence_miou = kLowConfidenceMiou) {
  ReportSummary s;
  s.n_views = rows.size();
  std::vector<SemanticViewRecord> records;
  std::vector<double> sims, accs;
  for (const auto& r : rows) {
    if (r.status == RowStatus::skipped) {
      ++s.n_skipped;
      continue;
    }
    ++s.n_evaluated;
    if (r.status == RowStatus::error) ++s.n_errors;
    if (r.has_semantic()) {
      SemanticViewRecord rec;
      rec.view_id = r.view_id;
      rec.iou_pre = *r.iou_pre;
      rec.iou_post = *r.iou_post;
      rec.detected_pre = r.detected_pre;
      rec.detected_post = r.detected_post;
      records.push_back(std::move(rec));
    }
    if (r.sim_sam) sims.push_back(*r.sim_sam);
    if (r.acc_depth) accs.push_back(*r.acc_depth);
  }
  if (!records.empty()) s.semantic = summarize_scene(records, thresholds, low_confidence_miou);
  s.mean_sim_sam = detail::mean_of(sims);
  s.n_sim_sam = sims.size();
  s.mean_acc_depth = detail::mean_of(accs);
  s.n_acc_depth = accs.size();
  return s;
}

inline std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

// "drop / pct" cell, e.g. "0.62 / 98.4".
inline std::string drop_pct_cell(double drop, std::optional<double> pct) {
  return format_fixed(drop, 2) + " / " + (pct ? format_fixed(*pct, 1) : std::string("n/a"));
}

// ---- JSON -----------------------------------------------------------------

namespace detail {

inline nlohmann::json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline std::optional<double> opt_double(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

inline nlohmann::json threshold_table(const std::vector<std::pair<double, double>>& table) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [t, v] : table) out.push_back({{"threshold", t}, {"ratio", v}});
  return out;
}

inline std::vector<std::pair<double, double>> threshold_table(const nlohmann::json& j) {
  std::vector<std::pair<double, double>> out;
  for (const auto& e : j) out.emplace_back(e.at("threshold").get<double>(), e.at("ratio").get<double>());
  return out;
}

}  // namespace detail

inline nlohmann::json to_json(const ViewRow& r) {
  return {{"view_id", r.view_id},
          {"status", to_string(r.status)},
          {"message", r.message},
          {"detected_pre", r.detected_pre},
          {"detected_post", r.detected_post},
          {"iou_pre", detail::opt_json(r.iou_pre)},
          {"iou_post", detail::opt_json(r.iou_post)},
          {"iou_drop", detail::opt_json(r.iou_drop)},
          {"sim_sam", detail::opt_json(r.sim_sam)},
          {"n_sam_pre", r.n_sam_pre},
          {"n_sam_post", r.n_sam_post},
          {"xi_depth", detail::opt_json(r.xi_depth)},
          {"acc_depth", detail::opt_json(r.acc_depth)},
          {"flags", r.flags}};
}

inline ViewRow view_row_from_json(const nlohmann::json& j) {
  ViewRow r;
  r.view_id = j.at("view_id").get<std::string>();
  r.status = row_status_from_string(j.at("status").get<std::string>());
  r.message = j.value("message", std::string{});
  r.detected_pre = j.value("detected_pre", false);
  r.detected_post = j.value("detected_post", false);
  r.iou_pre = detail::opt_double(j, "iou_pre");
  r.iou_post = detail::opt_double(j, "iou_post");
  r.iou_drop = detail::opt_double(j, "iou_drop");
  r.sim_sam = detail::opt_double(j, "sim_sam");
  r.n_sam_pre = j.value("n_sam_pre", std::size_t{0});
  r.n_sam_post = j.value("n_sam_post", std::size_t{0});
  r.xi_depth = detail::opt_double(j, "xi_depth");
  r.acc_depth = detail::opt_double(j, "acc_depth");
  r.flags = j.value("flags", std::vector<std::string>{});
  return r;
}

inline nlohmann::json to_json(const ReportSummary& s) {
  nlohmann::json j{{"n_views", s.n_views},           {"n_evaluated", s.n_evaluated},
                   {"n_skipped", s.n_skipped},       {"n_errors", s.n_errors},
                   {"mean_sim_sam", detail::opt_json(s.mean_sim_sam)},
                   {"n_sim_sam", s.n_sim_sam},
                   {"mean_acc_depth", detail::opt_json(s.mean_acc_depth)},
                   {"n_acc_depth", s.n_acc_depth},  {"semantic", nullptr}};
  if (s.semantic) {
    const auto& sem = *s.semantic;
    j["semantic"] = {{"n_views", sem.n_views},
                     {"miou_pre", sem.miou_pre},
                     {"miou_post", sem.miou_post},
                     {"iou_drop", sem.iou_drop},
                     {"pct_reduction", detail::opt_json(sem.pct_reduction)},
                     {"drop_pct", drop_pct_cell(sem.iou_drop, sem.pct_reduction)},
                     {"acc_seg", detail::threshold_table(sem.acc_seg_at)},
                     {"acc_post", detail::threshold_table(sem.acc_post_at)},
                     {"low_confidence", sem.low_confidence}};
  }
  return j;
}

inline ReportSummary summary_from_json(const nlohmann::json& j) {
  ReportSummary s;
  s.n_views = j.at("n_views").get<std::size_t>();
  s.n_evaluated = j.at("n_evaluated").get<std::size_t>();
  s.n_skipped = j.at("n_skipped").get<std::size_t>();
  s.n_errors = j.at("n_errors").get<std::size_t>();
  s.mean_sim_sam = detail::opt_double(j, "mean_sim_sam");
  s.n_sim_sam = j.value("n_sim_sam", std::size_t{0});
  s.mean_acc_depth = detail::opt_double(j, "mean_acc_depth");
  s.n_acc_depth = j.value("n_acc_depth", std::size_t{0});
  if (j.contains("semantic") && !j.at("semantic").is_null()) {
    const auto& js = j.at("semantic");
    SemanticSceneSummary sem;
    sem.n_views = js.at("n_views").get<std::size_t>();
    sem.miou_pre = js.at("miou_pre").get<double>();
    sem.miou_post = js.at("miou_post").get<double>();
    sem.iou_drop = js.at("iou_drop").get<double>();
    sem.pct_reduction = detail::opt_double(js, "pct_reduction");
    sem.acc_seg_at = detail::threshold_table(js.at("acc_seg"));
    sem.acc_post_at = detail::threshold_table(js.at("acc_post"));
    sem.low_confidence = js.at("low_confidence").get<bool>();
    s.semantic = sem;
  }
  return s;
}

inline nlohmann::json to_json(const EvaluationReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) rows.push_back(to_json(row));
  return {{"schema", "gsrm-report"},
          {"schema_version", kReportSchemaVersion},
          {"scene_id", r.scene_id},
          {"object_id", r.object_id},
          {"method_id", r.method_id},
          {"rows", rows},
          {"summary", to_json(r.summary)},
          {"provenance",
           {{"tool_version", r.provenance.tool_version},
            {"config_hash", r.provenance.config_hash},
            {"config", r.provenance.config}}}};
}

inline EvaluationReport report_from_json(const nlohmann::json& j) {
  EvaluationReport r;
  try {
    if (j.value("schema", std::string{}) != "gsrm-report") throw Error(ErrorCode::format, "not a gsrm report");
    const int version = j.value("schema_version", 0);
    if (version != kReportSchemaVersion) {
      throw Error(ErrorCode::format, "unsupported report schema_version " + std::to_string(version));
    }
    r.scene_id = j.value("scene_id", std::string{});
    r.object_id = j.value("object_id", std::string{});
    r.method_id = j.value("method_id", std::string{});
    for (const auto& row : j.at("rows")) r.rows.push_back(view_row_from_json(row));
    r.summary = summary_from_json(j.at("summary"));
    const auto& p = j.at("provenance");
    r.provenance.tool_version = p.value("tool_version", std::string{});
    r.provenance.config_hash = p.value("config_hash", std::string{});
    r.provenance.config = p.value("config", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::format, std::string("report: ") + e.what());
  }
  return r;
}

inline EvaluationReport load_report(const std::filesystem::path& path) {
  return report_from_json(detail::parse_json_file(path));
}

// ---- CSV / table ------------------------------------------------------------

inline const char* kRowCsvHeader =
    "scene_id,object_id,method_id,view_id,status,detected_pre,detected_post,iou_pre,iou_post,iou_drop,"
    "sim_sam,n_sam_pre,n_sam_post,xi_depth,acc_depth,flags,message";

namespace detail {

inline std::string csv_num(const std::optional<double>& v) { return v ? format_fixed(*v, 4) : std::string{}; }

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

}  // namespace detail

// Per-view rows, one line each; floats with 4 decimals.
inline std::string rows_csv(const std::vector<EvaluationReport>& reports) {
  std::ostringstream out;
  out << kRowCsvHeader << "\n";
  for (const auto& r : reports) {
    for (const auto& row : r.rows) {
      out << detail::csv_field(r.scene_id) << ',' << detail::csv_field(r.object_id) << ','
          << detail::csv_field(r.method_id) << ',' << detail::csv_field(row.view_id) << ',' << to_string(row.status)
          << ',' << (row.detected_pre ? 1 : 0) << ',' << (row.detected_post ? 1 : 0) << ','
          << detail::csv_num(row.iou_pre) << ',' << detail::csv_num(row.iou_post) << ','
          << detail::csv_num(row.iou_drop) << ',' << detail::csv_num(row.sim_sam) << ',' << row.n_sam_pre << ','
          << row.n_sam_post << ',' << detail::csv_num(row.xi_depth) << ',' << detail::csv_num(row.acc_depth) << ','
          << detail::csv_field(detail::join(row.flags, ';')) << ',' << detail::csv_field(row.message) << "\n";
    }
  }
  return out.str();
}

inline std::string summary_csv_header(std::span<const double> thresholds) {
  std::string h = "scene_id,object_id,method_id,n_views,n_evaluated,n_skipped,n_errors,miou_pre,miou_post,iou_drop,"
                  "pct_reduction,drop_pct";
  for (double t : thresholds) h += ",acc_seg_" + format_fixed(t, 1);
  for (double t : thresholds) h += ",acc_post_pct_" + format_fixed(t, 1);
  return h + ",sim_sam,acc_depth,low_confidence";
}

// One line per report. Acceptance ratios for "still segmented" are emitted
// in percent, the other ratios as fractions.
inline std::string summary_csv(const std::vector<EvaluationReport>& reports, std::span<const double> thresholds) {
  std::ostringstream out;
  out << summary_csv_header(thresholds) << "\n";
  for (const auto& r : reports) {
    const auto& s = r.summary;
    out << detail::csv_field(r.scene_id) << ',' << detail::csv_field(r.object_id) << ','
        << detail::csv_field(r.method_id) << ',' << s.n_views << ',' << s.n_evaluated << ',' << s.n_skipped << ','
        << s.n_errors << ',';
    if (s.semantic) {
      const auto& sem = *s.semantic;
      out << format_fixed(sem.miou_pre, 4) << ',' << format_fixed(sem.miou_post, 4) << ','
          << format_fixed(sem.iou_drop, 4) << ',' << detail::csv_num(sem.pct_reduction) << ','
          << detail::csv_field(drop_pct_cell(sem.iou_drop, sem.pct_reduction));
      for (double t : thresholds) {
        std::optional<double> v;
        for (const auto& [tt, ratio] : sem.acc_seg_at) {
          if (tt == t) v = ratio;
        }
        out << ',' << detail::csv_num(v);
      }
      for (double t : thresholds) {
        std::optional<double> v;
        for (const auto& [tt, ratio] : sem.acc_post_at) {
          if (tt == t) v = 100.0 * ratio;
        }
        out << ',' << detail::csv_num(v);
      }
    } else {
      out << ",,,,";
      for (std::size_t i = 0; i < 2 * thresholds.size(); ++i) out << ',';
    }
    out << ',' << detail::csv_num(s.mean_sim_sam) << ',' << detail::csv_num(s.mean_acc_depth) << ','
        << ((s.semantic && s.semantic->low_confidence) ? 1 : 0) << "\n";
  }
  return out.str();
}

// Fixed-width text table with the two-decimal style of published results.
inline std::string summary_table(const std::vector<EvaluationReport>& reports) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-16s %-16s %-16s %8s %8s %14s %8s %8s\n", "scene", "object", "method",
                "mIoUpre", "mIoUpost", "drop / pct", "accDepth", "simSAM");
  out << line;
  for (const auto& r : reports) {
    const auto& s = r.summary;
    const std::string pre = s.semantic ? format_fixed(s.semantic->miou_pre, 2) : "-";
    const std::string post = s.semantic ? format_fixed(s.semantic->miou_post, 2) : "-";
    const std::string cell = s.semantic ? drop_pct_cell(s.semantic->iou_drop, s.semantic->pct_reduction) : "-";
    const std::string acc = s.mean_acc_depth ? format_fixed(*s.mean_acc_depth, 2) : "-";
    const std::string sim = s.mean_sim_sam ? format_fixed(*s.mean_sim_sam, 2) : "-";
    std::snprintf(line, sizeof(line), "%-16s %-16s %-16s %8s %8s %14s %8s %8s%s\n", r.scene_id.c_str(),
                  r.object_id.c_str(), r.method_id.c_str(), pre.c_str(), post.c_str(), cell.c_str(), acc.c_str(),
                  sim.c_str(), (s.semantic && s.semantic->low_confidence) ? "  (low confidence)" : "");
    out << line;
  }
  return out.str();
}

enum class ReportFormat { json, csv, table };

inline ReportFormat report_format_from_string(const std::string& s) {
  if (s == "json") return ReportFormat::json;
  if (s == "csv") return ReportFormat::csv;
  if (s == "table") return ReportFormat::table;
  throw Error(ErrorCode::invalid_argument, "unknown report format '" + s + "' (json, csv, table)");
}

// JSON: a single report object, or {"reports": [...]} for several.
// CSV: view rows at `path` plus the summary lines at <stem>.summary.csv.
// Table: the text summary table.
inline void emit_report(const std::vector<EvaluationReport>& reports, ReportFormat format,
                        const std::filesystem::path& path,
                        std::span<const double> thresholds = default_iou_thresholds()) {
  switch (format) {
    case ReportFormat::json: {
      nlohmann::json j;
      if (reports.size() == 1) {
        j = to_json(reports.front());
      } else {
        j = {{"reports", nlohmann::json::array()}};
        for (const auto& r : reports) j["reports"].push_back(to_json(r));
      }
      write_text_atomic(path, j.dump(2) + "\n");
      break;
    }
    case ReportFormat::csv: {
      write_text_atomic(path, rows_csv(reports));
      auto summary_path = path;
      summary_path.replace_extension(".summary.csv");
      write_text_atomic(summary_path, summary_csv(reports, thresholds));
      break;
    }
    case ReportFormat::table: write_text_atomic(path, summary_table(reports)); break;
  }
}

inline void emit_report(const EvaluationReport& report, ReportFormat format, const std::filesystem::path& path,
                        std::span<const double> thresholds = default_iou_thresholds()) {
  emit_report(std::vector<EvaluationReport>{report}, format, path, thresholds);
}

// Accepts a single report or a {"reports": [...]} bundle.
inline std::vector<EvaluationReport> load_reports(const std::filesystem::path& path) {
  const auto j = detail::parse_json_file(path);
  std::vector<EvaluationReport> out;
  if (j.contains("reports")) {
    for (const auto& r : j.at("reports")) out.push_back(report_from_json(r));
  } else {
    out.push_back(report_from_json(j));
  }
  return out;
}

}  // namespace gsrm

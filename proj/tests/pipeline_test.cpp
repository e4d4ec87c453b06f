#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include "gsrm/evaluate.hpp"
#include "gsrm/fixture.hpp"
#include "gsrm/manifest.hpp"
#include "gsrm/report.hpp"
#include "test_support.hpp"

namespace gsrm {
namespace {

using test::TempDir;
namespace fs = std::filesystem;

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(read_file_bytes(p)); }

void make_fixture(const fs::path& dir, const std::string& mode, double rho = 0.4, bool dumbbell = false) {
  nlohmann::json spec{{"mode", mode}, {"rho", rho}};
  if (dumbbell) spec["dumbbell"] = nlohmann::json::object();
  gen_fixture(spec, dir);
}

EvalConfig single_worker() {
  EvalConfig cfg;
  cfg.workers = 1;
  return cfg;
}

void expect_matches_expected(const EvaluationReport& r, const nlohmann::json& expected) {
  const auto& ev = expected.at("views");
  ASSERT_EQ(r.rows.size(), ev.size());
  for (std::size_t i = 0; i < ev.size(); ++i) {
    const auto& row = r.rows[i];
    SCOPED_TRACE(row.view_id);
    EXPECT_EQ(row.status, RowStatus::ok) << row.message;
    EXPECT_EQ(row.view_id, ev[i].at("view_id").get<std::string>());
    EXPECT_EQ(*row.iou_pre, ev[i].at("iou_pre").get<double>());
    EXPECT_EQ(*row.iou_post, ev[i].at("iou_post").get<double>());
    EXPECT_EQ(*row.iou_drop, ev[i].at("iou_drop").get<double>());
    EXPECT_EQ(row.detected_post, ev[i].at("detected_post").get<bool>());
    EXPECT_NEAR(*row.sim_sam, ev[i].at("sim_sam").get<double>(), 1e-12);
    EXPECT_EQ(*row.xi_depth, ev[i].at("xi_depth").get<double>());
    EXPECT_EQ(*row.acc_depth, ev[i].at("acc_depth").get<double>());
  }
  const auto& es = expected.at("summary");
  ASSERT_TRUE(r.summary.semantic);
  EXPECT_NEAR(r.summary.semantic->miou_pre, es.at("miou_pre").get<double>(), 1e-6);
  EXPECT_NEAR(r.summary.semantic->miou_post, es.at("miou_post").get<double>(), 1e-6);
  EXPECT_NEAR(r.summary.semantic->iou_drop, es.at("iou_drop").get<double>(), 1e-6);
  EXPECT_NEAR(*r.summary.mean_sim_sam, es.at("mean_sim_sam").get<double>(), 1e-6);
  EXPECT_NEAR(*r.summary.mean_acc_depth, es.at("mean_acc_depth").get<double>(), 1e-6);
}

TEST(Manifest, CompleteFixtureHasNoSkips) {
  TempDir dir;
  make_fixture(dir.path(), "perfect");
  const auto m = validate_manifest(dir / "manifest.json");
  EXPECT_EQ(m.views.size(), 3u);
  EXPECT_EQ(m.usable_views(), 3u);
  EXPECT_TRUE(m.issues.empty());
}

TEST(Manifest, MissingDepthSkipsOnlyTheDepthMetric) {
  TempDir dir;
  make_fixture(dir.path(), "perfect");
  fs::remove(dir / "depth_post/001.pfm");
  const auto m = validate_manifest(dir / "manifest.json");
  ASSERT_EQ(m.issues.size(), 1u);
  EXPECT_NE(m.issues[0].find("depth_post/001.pfm"), std::string::npos);
  const auto r = run_eval(m, single_worker());
  EXPECT_FALSE(r.rows[1].acc_depth.has_value());
  EXPECT_TRUE(r.rows[1].sim_sam.has_value());
  EXPECT_TRUE(r.rows[1].iou_pre.has_value());
  EXPECT_EQ(r.rows[1].status, RowStatus::ok);
  EXPECT_TRUE(r.rows[0].acc_depth.has_value());
  EXPECT_EQ(r.summary.n_acc_depth, 2u);
}

TEST(Manifest, NullPostSemanticIsNonDetection) {
  TempDir dir;
  make_fixture(dir.path(), "perfect");
  const auto r = run_eval(validate_manifest(dir / "manifest.json"), single_worker());
  for (const auto& row : r.rows) {
    EXPECT_FALSE(row.detected_post);
    EXPECT_EQ(*row.iou_post, 0.0);
    EXPECT_EQ(row.status, RowStatus::ok);
  }
}

TEST(Manifest, DuplicateViewIdsRejected) {
  TempDir dir;
  write_text_atomic(dir / "m.json", R"({"views": [{"view_id": "a"}, {"view_id": "a"}]})");
  EXPECT_THROW(validate_manifest(dir / "m.json"), Error);
}

TEST(Manifest, MalformedJsonRejected) {
  TempDir dir;
  write_text_atomic(dir / "m.json", "{not json");
  try {
    validate_manifest(dir / "m.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::format);
  }
}

TEST(Manifest, NoUsableViewsRejected) {
  TempDir dir;
  write_text_atomic(dir / "m.json", R"({"views": [{"view_id": "a", "object_mask": "nope.png"}]})");
  try {
    validate_manifest(dir / "m.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::empty_input);
  }
}

TEST(Eval, NoOpFixture) {
  TempDir dir;
  make_fixture(dir.path(), "none");
  const auto r = run_eval(validate_manifest(dir / "manifest.json"), single_worker());
  expect_matches_expected(r, read_json(dir / "expected.json"));
  for (const auto& row : r.rows) {
    EXPECT_EQ(*row.iou_drop, 0.0);
    EXPECT_EQ(*row.acc_depth, 0.0);
    EXPECT_EQ(*row.sim_sam, 1.0);
  }
}

TEST(Eval, PerfectRemovalFixture) {
  TempDir dir;
  make_fixture(dir.path(), "perfect");
  const auto r = run_eval(validate_manifest(dir / "manifest.json"), single_worker());
  expect_matches_expected(r, read_json(dir / "expected.json"));
  for (const auto& row : r.rows) {
    EXPECT_EQ(*row.iou_drop, *row.iou_pre);
    EXPECT_EQ(*row.acc_depth, 1.0);
    EXPECT_LE(*row.sim_sam, 0.2);
  }
}

TEST(Eval, ResidualFixture) {
  TempDir dir;
  make_fixture(dir.path(), "residual", 0.4);
  const auto expected = read_json(dir / "expected.json");
  EXPECT_EQ(expected.at("views")[0].at("acc_depth").get<double>(), 0.6);
  expect_matches_expected(run_eval(validate_manifest(dir / "manifest.json"), single_worker()), expected);
}

TEST(Eval, FullResidualIsDegenerate) {
  TempDir dir;
  make_fixture(dir.path(), "residual", 1.0);
  const auto r = run_eval(validate_manifest(dir / "manifest.json"), single_worker());
  expect_matches_expected(r, read_json(dir / "expected.json"));
  EXPECT_NE(std::find(r.rows[0].flags.begin(), r.rows[0].flags.end(), "depth_degenerate"), r.rows[0].flags.end());
}

TEST(Eval, DeterministicAcrossWorkersAndViewOrder) {
  TempDir dir;
  gen_fixture(nlohmann::json{{"mode", "residual"}, {"rho", 0.3}, {"views", 6}}, dir.path());
  auto m = validate_manifest(dir / "manifest.json");
  const auto base = to_json(run_eval(m, single_worker())).dump();
  EvalConfig many;
  many.workers = 4;
  EXPECT_EQ(to_json(run_eval(m, many)).dump(), base);

  auto j = read_json(dir / "manifest.json");
  auto views = j.at("views");
  std::mt19937 rng(1);
  std::vector<nlohmann::json> list(views.begin(), views.end());
  std::shuffle(list.begin(), list.end(), rng);
  j["views"] = list;
  write_text_atomic(dir / "shuffled.json", j.dump());
  EXPECT_EQ(to_json(run_eval(validate_manifest(dir / "shuffled.json"), single_worker())).dump(), base);
}

TEST(Eval, CorruptInputBecomesFlaggedRow) {
  TempDir dir;
  make_fixture(dir.path(), "perfect");
  write_text_atomic(dir / "sem_pre/002.png", "not a png");
  const auto r = run_eval(validate_manifest(dir / "manifest.json"), single_worker());
  EXPECT_EQ(r.rows[2].status, RowStatus::error);
  EXPECT_TRUE(r.rows[2].sim_sam.has_value());  // other metrics still computed
  EXPECT_TRUE(has_view_failures(r));
  EXPECT_EQ(r.rows[0].status, RowStatus::ok);
}

TEST(Eval, DepthVisualisationWritten) {
  TempDir dir;
  make_fixture(dir.path(), "perfect");
  EvalOptions opts;
  opts.depth_visualization_dir = dir / "vis";
  run_eval(validate_manifest(dir / "manifest.json"), single_worker(), opts);
  const auto changed = load_mask(dir / "vis/000.png");
  EXPECT_EQ(changed, load_mask(dir / "object/000.png"));
}

TEST(Eval, WorkerEnvironmentVariable) {
  ::setenv("GSRM_WORKERS", "3", 1);
  EXPECT_EQ(resolve_workers(0), 3u);
  EXPECT_EQ(resolve_workers(5), 5u);
  ::setenv("GSRM_WORKERS", "junk", 1);
  EXPECT_GE(resolve_workers(0), 1u);
  ::unsetenv("GSRM_WORKERS");
}

TEST(Report, EmptyRowsGiveHeaderOnlyCsv) {
  EvaluationReport r;
  const auto csv = rows_csv({r});
  EXPECT_EQ(csv, std::string(kRowCsvHeader) + "\n");
}

TEST(Report, JsonRoundTrip) {
  TempDir dir;
  make_fixture(dir.path(), "residual", 0.4);
  const auto r = run_eval(validate_manifest(dir / "manifest.json"), single_worker());
  emit_report(r, ReportFormat::json, dir / "r.json");
  const auto back = load_reports(dir / "r.json");
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(to_json(back[0]), to_json(r));
}

TEST(Report, SummaryRecomputesFromRows) {
  TempDir dir;
  make_fixture(dir.path(), "residual", 0.4);
  const auto r = run_eval(validate_manifest(dir / "manifest.json"), single_worker());
  emit_report(r, ReportFormat::json, dir / "r.json");
  const auto back = load_reports(dir / "r.json")[0];
  EXPECT_EQ(to_json(summarize_rows(back.rows, default_iou_thresholds())), to_json(back.summary));
}

TEST(Report, DropPctCell) {
  std::vector<ViewRow> rows(2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].view_id = std::to_string(i);
    rows[i].iou_pre = 0.63;
    rows[i].iou_post = 0.01;
    rows[i].detected_pre = rows[i].detected_post = true;
  }
  EvaluationReport r;
  r.rows = rows;
  r.summary = summarize_rows(rows, default_iou_thresholds());
  EXPECT_EQ(to_json(r.summary).at("semantic").at("drop_pct").get<std::string>(), "0.62 / 98.4");
  EXPECT_NE(summary_csv({r}, default_iou_thresholds()).find("0.62 / 98.4"), std::string::npos);
  EXPECT_NE(summary_table({r}).find("0.62 / 98.4"), std::string::npos);
}

TEST(Report, CsvUsesFourDecimals) {
  TempDir dir;
  make_fixture(dir.path(), "perfect");
  const auto r = run_eval(validate_manifest(dir / "manifest.json"), single_worker());
  emit_report(r, ReportFormat::csv, dir / "r.csv");
  std::ifstream in(dir / "r.csv");
  std::string header, line;
  std::getline(in, header);
  std::getline(in, line);
  EXPECT_NE(line.find(",0.8333,"), std::string::npos) << line;
  EXPECT_TRUE(fs::exists(dir / "r.summary.csv"));
}

TEST(Report, UnsupportedSchemaRejected) {
  TempDir dir;
  write_text_atomic(dir / "r.json", R"({"schema": "gsrm-report", "schema_version": 99})");
  EXPECT_THROW(load_reports(dir / "r.json"), Error);
}

TEST(Fixture, InvalidSpecRejected) {
  TempDir dir;
  EXPECT_THROW(gen_fixture(nlohmann::json{{"mode", "sideways"}}, dir.path()), Error);
  EXPECT_THROW(gen_fixture(nlohmann::json{{"rho", 1.5}}, dir.path()), Error);
  EXPECT_THROW(gen_fixture(nlohmann::json{{"grid", {20, 20}}}, dir.path()), Error);
}

TEST(Fixture, ExpectedValuesForModes) {
  TempDir dir;
  make_fixture(dir / "none", "none");
  make_fixture(dir / "perfect", "perfect");
  const auto none = read_json(dir / "none/expected.json").at("summary");
  EXPECT_EQ(none.at("iou_drop").get<double>(), 0.0);
  EXPECT_EQ(none.at("mean_acc_depth").get<double>(), 0.0);
  EXPECT_EQ(none.at("mean_sim_sam").get<double>(), 1.0);
  const auto perfect = read_json(dir / "perfect/expected.json").at("summary");
  EXPECT_EQ(perfect.at("iou_drop").get<double>(), perfect.at("miou_pre").get<double>());
  EXPECT_EQ(perfect.at("mean_acc_depth").get<double>(), 1.0);
}

TEST(Fixture, PlantedResidualRefinement) {
  TempDir dir;
  make_fixture(dir.path(), "perfect", 0.4, true);
  const auto cloud = load_ply(dir / "scene.ply");
  const auto seed = load_removal_set(dir / "removed.txt", cloud.size());
  const auto cfg = load_refine_config(dir / "refine.json");
  const auto r = refine(cloud, seed, cfg);
  const auto e = read_json(dir / "expected.json").at("dumbbell");
  for (std::size_t i : e.at("residual").get<std::vector<std::size_t>>()) EXPECT_TRUE(r.refined_set.contains(i)) << i;
  for (std::size_t i : e.at("background").get<std::vector<std::size_t>>()) EXPECT_FALSE(r.refined_set.contains(i)) << i;
}

// ---- command line -----------------------------------------------------------

struct CliRun {
  int code = -1;
  std::string output;
};

CliRun cli(const std::string& args, const fs::path& scratch) {
  const fs::path log = scratch / "cli.log";
  const std::string cmd = std::string(GSRM_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  return r;
}

TEST(Cli, UnknownFlagPrintsUsage) {
  TempDir dir;
  const auto r = cli("eval --bogus", dir.path());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("Usage"), std::string::npos) << r.output;
}

TEST(Cli, EvalNoOpSucceeds) {
  TempDir dir;
  make_fixture(dir / "fx", "none");
  const auto r = cli("eval " + (dir / "fx/manifest.json").string() + " -o " + (dir / "r.json").string(), dir.path());
  EXPECT_EQ(r.code, 0) << r.output;
  const auto rep = load_reports(dir / "r.json")[0];
  EXPECT_EQ(rep.summary.semantic->iou_drop, 0.0);
  EXPECT_EQ(*rep.summary.mean_acc_depth, 0.0);
  EXPECT_EQ(*rep.summary.mean_sim_sam, 1.0);
}

TEST(Cli, EvalWithViewFailureExitsThree) {
  TempDir dir;
  make_fixture(dir / "fx", "perfect");
  write_text_atomic(dir / "fx/depth_pre/001.pfm", "garbage");
  const auto r = cli("eval " + (dir / "fx/manifest.json").string() + " -o " + (dir / "r.json").string(), dir.path());
  EXPECT_EQ(r.code, 3) << r.output;
  EXPECT_TRUE(fs::exists(dir / "r.json"));
}

TEST(Cli, RefineEmptySeedExitsFour) {
  TempDir dir;
  make_fixture(dir / "fx", "perfect", 0.4, true);
  write_text_atomic(dir / "fx/empty.txt", "# removal-set count=220 provenance=none\n");
  const auto before = read_file_bytes(dir / "fx/empty.txt");
  const auto r = cli("refine --ply " + (dir / "fx/scene.ply").string() + " --removal " +
                         (dir / "fx/empty.txt").string() + " -o " + (dir / "out").string(),
                     dir.path());
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.output.find("graph empty"), std::string::npos) << r.output;
  EXPECT_EQ(read_file_bytes(dir / "fx/empty.txt"), before);
  EXPECT_FALSE(fs::exists(dir / "out/refined.txt"));
}

TEST(Cli, RefineWritesOutputs) {
  TempDir dir;
  make_fixture(dir / "fx", "perfect", 0.4, true);
  const auto r = cli("refine --ply " + (dir / "fx/scene.ply").string() + " --removal " +
                         (dir / "fx/removed.txt").string() + " -c " + (dir / "fx/refine.json").string() + " -o " +
                         (dir / "out").string(),
                     dir.path());
  EXPECT_EQ(r.code, 0) << r.output;
  const auto cloud = load_ply(dir / "fx/scene.ply");
  const auto refined = load_removal_set(dir / "out/refined.txt", cloud.size());
  EXPECT_EQ(refined.provenance, "refined");
  EXPECT_EQ(load_ply(dir / "out/refined.ply").size(), cloud.size() - refined.count());
  EXPECT_TRUE(fs::exists(dir / "out/energy_trace.csv"));
}

TEST(Cli, ValidateListsMissingFile) {
  TempDir dir;
  make_fixture(dir / "fx", "perfect");
  EXPECT_EQ(cli("validate " + (dir / "fx/manifest.json").string(), dir.path()).code, 0);
  fs::remove(dir / "fx/sam_post/002/00_table.png");
  fs::remove(dir / "fx/depth_pre/001.pfm");
  const auto r = cli("validate " + (dir / "fx/manifest.json").string(), dir.path());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("depth_pre/001.pfm"), std::string::npos) << r.output;
}

TEST(Cli, GenFixtureAndReport) {
  TempDir dir;
  EXPECT_EQ(cli("gen-fixture --mode residual --rho 0.4 -o " + (dir / "fx").string(), dir.path()).code, 0);
  EXPECT_EQ(cli("eval " + (dir / "fx/manifest.json").string() + " -o " + (dir / "a.json").string(), dir.path()).code,
            0);
  const auto r = cli("report --check -f table " + (dir / "a.json").string(), dir.path());
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("synthetic"), std::string::npos);
  EXPECT_EQ(cli("report -f csv -o " + (dir / "m.csv").string() + " " + (dir / "a.json").string() + " " +
                    (dir / "a.json").string(),
                dir.path())
                .code,
            0);
  EXPECT_EQ(cli("gen-fixture --mode sideways -o " + (dir / "x").string(), dir.path()).code, 1);
}

}  // namespace
}  // namespace gsrm

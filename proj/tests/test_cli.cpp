#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "cqcd/field_io.hpp"
#include "cqcd/image.hpp"
#include "cqcd/image_io.hpp"
#include "cqcd/simulator.hpp"
#include "json.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cqcd;
using cqcd::testing::scratch_dir;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// runs the cli, stdout captured, stderr dropped
Result cli(const std::string& args) {
  static int counter = 0;
  const fs::path capture = fs::temp_directory_path() / ("cqcd_cli_out_" + std::to_string(counter++));
  const std::string cmd = std::string("\"") + CQCD_BIN + "\" " + args + " > \"" + capture.string() + "\" 2>/dev/null";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(capture);
  fs::remove(capture);
  return r;
}

json parse(const Result& r) { return json::parse(r.out); }

int count_prefixed(const fs::path& dir, const std::string& prefix) {
  int n = 0;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().filename().string().starts_with(prefix)) ++n;
  return n;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST(Cli, SimulateWritesBundleDeterministically) {
  const auto dir = scratch_dir("cli_sim");
  const auto a = dir / "a", b = dir / "b";
  const auto r = cli("simulate " + q(a) + " --frames 3 --seed 5 --size 32");
  ASSERT_EQ(r.code, 0);
  const auto j = parse(r);
  EXPECT_EQ(j["frames"], 3);
  EXPECT_EQ(j["preset"], "mild");
  EXPECT_EQ(count_prefixed(a, "frame_"), 3);
  EXPECT_EQ(count_prefixed(a, "field_"), 3);
  EXPECT_TRUE(fs::exists(a / "clean.png"));
  ASSERT_EQ(cli("simulate --out " + q(b) + " --frames 3 --seed 5 --size 32").code, 0);
  for (const auto& e : fs::directory_iterator(a))
    EXPECT_EQ(slurp(e.path()), slurp(b / e.path().filename())) << e.path().filename();
}

TEST(Cli, ZeroFramesIsUsageError) {
  const auto dir = scratch_dir("cli_zero");
  EXPECT_EQ(cli("simulate " + q(dir / "x") + " --frames 0").code, 2);
}

TEST(Cli, UnknownPresetIsUsageError) {
  const auto dir = scratch_dir("cli_preset");
  EXPECT_EQ(cli("simulate " + q(dir / "x") + " --preset stormy").code, 2);
}

TEST(Cli, HelpExitsZero) { EXPECT_EQ(cli("--help").code, 0); }

TEST(Cli, TfRoundtrip) {
  const auto r = cli("tf-roundtrip --tf-level 2 --size 32");
  ASSERT_EQ(r.code, 0);
  const auto j = parse(r);
  EXPECT_LE(j["uep_residual"].get<double>(), 1e-12);
  EXPECT_LE(j["recon_error"].get<double>(), 1e-9);
  EXPECT_EQ(j["levels"], 2);
}

TEST(Cli, InspectBcIdentity) {
  const auto dir = scratch_dir("cli_bc");
  save_field(DisplacementField(16, 16), dir / "id.fld");
  const auto r = cli("inspect-bc " + q(dir / "id.fld") + " --mu-image " + q(dir / "mu.png"));
  ASSERT_EQ(r.code, 0);
  const auto j = parse(r);
  EXPECT_EQ(j["dilation_k"].get<double>(), 1.0);
  EXPECT_EQ(j["fold_count"], 0);
  EXPECT_TRUE(j["homeomorphic"].get<bool>());
  const Image mu = load_image(dir / "mu.png");
  for (double v : mu.data()) EXPECT_EQ(v, 0.0);
}

TEST(Cli, InspectBcFoldExitsOne) {
  const auto dir = scratch_dir("cli_bc_fold");
  DisplacementField f(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) f.dx[f.index(y, x)] = -2.0 * x;  // x -> -x
  save_field(f, dir / "fold.fld");
  const auto r = cli("inspect-bc " + q(dir / "fold.fld"));
  EXPECT_EQ(r.code, 1);
  EXPECT_GT(parse(r)["fold_count"].get<int>(), 0);
}

TEST(Cli, MissingFieldIsUsageError) {
  const auto dir = scratch_dir("cli_missing");
  EXPECT_EQ(cli("inspect-bc " + q(dir / "nope.fld")).code, 2);
}

TEST(Cli, EvaluateIdenticalImages) {
  const auto dir = scratch_dir("cli_eval");
  ASSERT_EQ(cli("simulate " + q(dir) + " --frames 2 --size 32").code, 0);
  const auto r = cli("evaluate --restored " + q(dir / "clean.png") + " --clean " + q(dir / "clean.png"));
  ASSERT_EQ(r.code, 0);
  const auto j = parse(r);
  EXPECT_EQ(j["psnr"], "inf");
  EXPECT_DOUBLE_EQ(j["ssim"].get<double>(), 1.0);
}

TEST(Cli, EvaluateFieldErrors) {
  const auto dir = scratch_dir("cli_epe");
  const auto bundle = dir / "bundle";
  ASSERT_EQ(cli("simulate " + q(bundle) + " --frames 3 --size 32 --seed 2").code, 0);
  // reference fields against themselves
  auto r = cli("evaluate --bundle " + q(bundle) + " --restored " + q(bundle / "clean.png") + " --fields " + q(bundle) +
               " --field-prefix field");
  ASSERT_EQ(r.code, 0);
  auto j = parse(r);
  EXPECT_EQ(j["mean_epe"].get<double>(), 0.0);
  ASSERT_EQ(j["epe"].size(), 3u);
  EXPECT_TRUE(j.contains("baseline"));
  // zero fields score exactly the zero-field baseline
  const auto zero = dir / "zero";
  fs::create_directories(zero);
  for (int t = 0; t < 3; ++t) save_field(DisplacementField(32, 32), zero / sim::numbered("inv_field", t, ".fld"));
  r = cli("evaluate --bundle " + q(bundle) + " --restored " + q(bundle / "clean.png") + " --fields " + q(zero));
  ASSERT_EQ(r.code, 0);
  j = parse(r);
  EXPECT_NEAR(j["mean_epe"].get<double>(), j["zero_field_mean_epe"].get<double>(), 1e-12);
  EXPECT_GT(j["zero_field_mean_epe"].get<double>(), 0.0);
}

TEST(Cli, EvaluateRejectsUnknownReportSchema) {
  const auto dir = scratch_dir("cli_schema");
  ASSERT_EQ(cli("simulate " + q(dir) + " --frames 2 --size 32").code, 0);
  std::ofstream(dir / "report.json") << R"({"schema_version": 99})";
  EXPECT_EQ(cli("evaluate --report " + q(dir / "report.json") + " --clean " + q(dir / "clean.png")).code, 2);
}

TEST(Cli, RestoreShortRun) {
  const auto dir = scratch_dir("cli_restore");
  const auto bundle = dir / "bundle", out = dir / "out";
  ASSERT_EQ(cli("simulate " + q(bundle) + " --frames 3 --size 24 --seed 4").code, 0);
  const auto r = cli("restore " + q(bundle) + " --out " + q(out) + " --epochs 4 --hidden 8 --phase-epochs 2 --quiet");
  ASSERT_EQ(r.code, 0);
  const auto j = parse(r);
  EXPECT_EQ(j["epochs_run"], 4);
  for (const char* f : {"restored.png", "config.json", "losses.csv", "report.json", "est_field_000.fld",
                        "inv_field_002.fld"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  std::ifstream csv(out / "losses.csv");
  int lines = 0;
  for (std::string line; std::getline(csv, line);) ++lines;
  EXPECT_EQ(lines, 5);
  const auto report = json::parse(slurp(out / "report.json"));
  EXPECT_EQ(report["schema_version"], 1);
  EXPECT_EQ(report["frames"], 3);
  EXPECT_EQ(report["fields"].size(), 3u);
  // the report feeds evaluate directly
  const auto ev = cli("evaluate --report " + q(out / "report.json") + " --bundle " + q(bundle));
  ASSERT_EQ(ev.code, 0);
  EXPECT_TRUE(parse(ev).contains("mean_epe"));
}

TEST(Cli, ConfigFileWithFlagPrecedence) {
  const auto dir = scratch_dir("cli_config");
  const auto bundle = dir / "bundle";
  ASSERT_EQ(cli("simulate " + q(bundle) + " --frames 2 --size 16").code, 0);
  std::ofstream(dir / "run.ini") << "epochs = 2\nhidden = 8\nlambda = 0.25\n";
  const auto r = cli("restore " + q(bundle) + " --config " + q(dir / "run.ini") + " --epochs 3 --quiet --out " +
                     q(dir / "out"));
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(parse(r)["epochs_run"], 3);
  const auto cfg = json::parse(slurp(dir / "out" / "config.json"));
  EXPECT_EQ(cfg["hidden"], 8);
  EXPECT_DOUBLE_EQ(cfg["lambda"].get<double>(), 0.25);
  EXPECT_EQ(cfg["total_epochs"], 3);

  std::ofstream(dir / "bad.ini") << "epochs = 2\nwarp_speed = 9\n";
  EXPECT_EQ(cli("restore " + q(bundle) + " --config " + q(dir / "bad.ini") + " --quiet --out " + q(dir / "out2")).code,
            2);
}

TEST(Cli, RestoreRejectsMismatchedFrames) {
  const auto dir = scratch_dir("cli_mismatch");
  save_image(cqcd::testing::random_image(16, 16, 1, 1), dir / "a.png");
  save_image(cqcd::testing::random_image(20, 16, 1, 2), dir / "b.png");
  EXPECT_EQ(cli("restore " + q(dir / "a.png") + " " + q(dir / "b.png") + " --epochs 1 --quiet --out " + q(dir / "o"))
                .code,
            2);
}

TEST(Cli, RestoreResumesFromCheckpoint) {
  const auto dir = scratch_dir("cli_resume");
  const auto bundle = dir / "bundle";
  ASSERT_EQ(cli("simulate " + q(bundle) + " --frames 2 --size 16 --seed 8").code, 0);
  const std::string common = " --hidden 8 --phase-epochs 2 --quiet";
  ASSERT_EQ(cli("restore " + q(bundle) + common + " --epochs 6 --out " + q(dir / "full")).code, 0);
  ASSERT_EQ(cli("restore " + q(bundle) + common + " --epochs 3 --checkpoint --out " + q(dir / "part")).code, 0);
  ASSERT_EQ(cli("restore " + q(bundle) + common + " --epochs 6 --resume " + q(dir / "part" / "checkpoint.bin") +
                " --out " + q(dir / "resumed"))
                .code,
            0);
  EXPECT_EQ(slurp(dir / "full" / "losses.csv"), slurp(dir / "resumed" / "losses.csv"));
  EXPECT_EQ(slurp(dir / "full" / "restored.png"), slurp(dir / "resumed" / "restored.png"));
}

TEST(Cli, GradientCheckPasses) {
  const auto r = cli("gradient-check --samples 16 --size 12");
  ASSERT_EQ(r.code, 0);
  EXPECT_LE(parse(r)["max_rel_grad_err"].get<double>(), 1e-4);
}

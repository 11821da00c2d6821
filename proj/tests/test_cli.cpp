#include "worldpose/synth.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>

using namespace worldpose;
namespace fs = std::filesystem;

namespace {

const fs::path& work_dir() {
  static const fs::path d = [] {
    const fs::path p = fs::temp_directory_path() / "worldpose_cli_test";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return d;
}

int run(const std::string& args) {
  const std::string cmd = std::string(WORLDPOSE_CLI_PATH) + " " + args + " > " + (work_dir() / "log.txt").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string log_text() { return io::read_file(work_dir() / "log.txt"); }

// A short scene keeps the end-to-end run fast.
fs::path short_scene(const std::string& name, double sigma = 0.0) {
  const fs::path dir = work_dir() / name;
  if (fs::exists(dir / "run.ini")) return dir;
  SceneConfig c = make_preset("follow-walk", 1, 2.0, sigma);
  c.frames = 30;
  const fs::path cfg = work_dir() / (name + ".scene");
  io::write_file(cfg, format_scene_config(c));
  EXPECT_EQ(run("synth --config " + cfg.string() + " --out " + dir.string()), 0) << log_text();
  return dir;
}

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run("--help"), 0);
  EXPECT_NE(log_text().find("reconstruct"), std::string::npos);
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("reconstruct"), 2);
  EXPECT_EQ(run("synth --preset follow-walk"), 2);
  EXPECT_EQ(run("track --scene x --mode sideways"), 2);
}

TEST(Cli, ValidationFailsBeforeAnyOutput) {
  const fs::path out = work_dir() / "never";
  EXPECT_EQ(run("synth --preset no-such-preset --out " + out.string()), 2);
  EXPECT_FALSE(fs::exists(out));
  const fs::path cfg = work_dir() / "missing_inputs.ini";
  io::write_file(cfg, "[input]\ncameras = nowhere.tum\ndetections = nowhere.ndj\n");
  EXPECT_EQ(run("reconstruct --config " + cfg.string() + " --out " + out.string()), 2);
  EXPECT_FALSE(fs::exists(out));
  EXPECT_NE(log_text().find("error"), std::string::npos);
  EXPECT_EQ(run("reconstruct --config " + cfg.string() + " --stage 4 --out " + out.string()), 2);
  EXPECT_FALSE(fs::exists(out));
}

TEST(Cli, SynthWritesSceneDirectory) {
  const fs::path dir = short_scene("scene");
  for (const char* name : {"scene_config", "cameras.tum", "detections.ndj", "gt_world.ndj", "run.ini"}) {
    EXPECT_TRUE(fs::is_regular_file(dir / name)) << name;
  }
  EXPECT_EQ(load_scene(dir).config().frames, 30);
}

TEST(Cli, ReconstructEvalAndDeterminism) {
  const fs::path dir = short_scene("noisy", 2.0);
  const fs::path a = work_dir() / "run_a", b = work_dir() / "run_b";
  ASSERT_EQ(run("reconstruct --config " + (dir / "run.ini").string() + " --out " + a.string()), 0) << log_text();
  ASSERT_EQ(run("reconstruct --config " + (dir / "run.ini").string() + " --out " + b.string()), 0) << log_text();
  for (const char* name : {"world.ndj", "cameras_metric.tum", "summary.json"}) {
    ASSERT_TRUE(fs::is_regular_file(a / name)) << name;
    EXPECT_EQ(io::read_file(a / name), io::read_file(b / name)) << name;
  }
  EXPECT_TRUE(fs::is_regular_file(a / "timing.json"));

  ASSERT_EQ(run("eval --pred " + a.string() + " --gt " + dir.string() + " --out " + a.string()), 0) << log_text();
  ASSERT_EQ(run("eval --pred " + b.string() + " --gt " + dir.string() + " --out " + b.string()), 0) << log_text();
  EXPECT_EQ(io::read_file(a / "metrics.txt"), io::read_file(b / "metrics.txt"));
  const MetricReport m = parse_metric_report(io::read_file(a / "metrics.txt"), "metrics.txt");
  EXPECT_GT(m.w_mpjpe, 0.0);
  EXPECT_LT(m.w_mpjpe, 1000.0);
  EXPECT_LE(m.pa_mpjpe, m.wa_mpjpe);
  EXPECT_LE(m.wa_mpjpe, m.w_mpjpe);
}

TEST(Cli, StageLimitAndThreadsOverride) {
  const fs::path dir = short_scene("scene");
  const fs::path one = work_dir() / "stage1", two = work_dir() / "stage1_threads";
  ASSERT_EQ(run("reconstruct --config " + (dir / "run.ini").string() + " --stage 1 --out " + one.string()), 0);
  ASSERT_EQ(run("reconstruct --config " + (dir / "run.ini").string() + " --stage 1 --threads 2 --out " + two.string()),
            0);
  EXPECT_EQ(io::read_file(one / "world.ndj"), io::read_file(two / "world.ndj"));
  EXPECT_EQ(io::read_file(one / "summary.json"), io::read_file(two / "summary.json"));
}

TEST(Cli, EvalRejectsMissingInputs) {
  const fs::path dir = short_scene("scene");
  EXPECT_EQ(run("eval --pred " + (work_dir() / "nothing").string() + " --gt " + dir.string()), 2);
  EXPECT_EQ(run("eval --pred " + dir.string() + " --gt " + dir.string()), 0);
  EXPECT_LT(parse_metric_report(log_text(), "log").w_mpjpe, 1e-9) << log_text();
}

TEST(Cli, TrackWritesAssignments) {
  const fs::path dir = short_scene("scene");
  const fs::path out = work_dir() / "track";
  ASSERT_EQ(run("track --scene " + dir.string() + " --alpha 2 --mode world --out " + out.string()), 0) << log_text();
  EXPECT_TRUE(fs::is_regular_file(out / "assignments.txt"));
  const auto j = nlohmann::json::parse(io::read_file(out / "idsw.json"));
  EXPECT_EQ(j["mode"], "world");
  EXPECT_GE(j["idsw"].get<int>(), 0);
  EXPECT_EQ(run("track --scene " + dir.string() + " --alpha 0 --mode world"), 2);
}

TEST(Cli, GradcheckPassesAndFlagsTightTolerance) {
  const fs::path dir = short_scene("scene");
  const std::string base = "gradcheck --config " + (dir / "run.ini").string() + " --configs 1 --coords 10 --stage 1";
  EXPECT_EQ(run(base), 0) << log_text();
  EXPECT_NE(log_text().find("PASS"), std::string::npos);
  EXPECT_EQ(run(base + " --tolerance 1e-300"), 3) << log_text();
  EXPECT_NE(log_text().find("FAIL"), std::string::npos);
}

TEST(Cli, OutputsCarryConfigHashAndEvalChecksSkeleton) {
  const fs::path dir = short_scene("scene");
  const fs::path out = work_dir() / "hashes";
  ASSERT_EQ(run("reconstruct --config " + (dir / "run.ini").string() + " --stage 2 --out " + out.string()), 0);
  const std::string hash = nlohmann::json::parse(io::read_file(out / "summary.json"))["config_hash"];
  EXPECT_FALSE(hash.empty());
  EXPECT_EQ(load_trajectory(out / "world.ndj").header["config_hash"], hash);
  EXPECT_NE(io::read_file(out / "cameras_metric.tum").find(hash), std::string::npos);

  ASSERT_EQ(run("eval --pred " + out.string() + " --gt " + dir.string() + " --out " + out.string()), 0);
  std::vector<std::string> keys;
  const auto metrics = nlohmann::ordered_json::parse(io::read_file(out / "metrics.json"));
  for (const auto& [k, v] : metrics.items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"w_mpjpe_mm", "wa_mpjpe_mm", "pa_mpjpe_mm", "accel_err_mm_s2", "skate_mm",
                                            "dropped_frames"}));

  WorldTrajectory gt = load_trajectory(dir / "gt_world.ndj");
  gt.header["skeleton_hash"] = "0000000000000000";
  write_trajectory(work_dir() / "other_skeleton.ndj", gt);
  EXPECT_EQ(run("eval --pred " + out.string() + " --gt " + (work_dir() / "other_skeleton.ndj").string()), 2);
  EXPECT_NE(log_text().find("skeleton"), std::string::npos);
}

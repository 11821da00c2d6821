// worldpose: reconstruct, synth, eval, track and gradcheck subcommands.

#include "worldpose/app.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

namespace wp = worldpose;

namespace {

wp::RunConfig run_config(const std::string& path, const std::optional<int>& threads, const std::optional<int>& stage,
                         const std::optional<std::uint64_t>& seed) {
  wp::RunConfig cfg = wp::load_run_config(path);
  if (threads) cfg.pipeline.threads = *threads;
  if (stage) {
    if (*stage < 1 || *stage > 3) throw wp::ValidationError("--stage must be 1, 2 or 3");
    cfg.pipeline.stages = *stage;
  }
  if (seed) cfg.seed = *seed;
  return cfg;
}

int cmd_reconstruct(const std::string& config, std::string out, const std::optional<int>& threads,
                    const std::optional<int>& stage, const std::optional<std::uint64_t>& seed) {
  const wp::RunConfig cfg = run_config(config, threads, stage, seed);
  if (out.empty()) out = cfg.out.string();
  if (out.empty()) throw wp::ValidationError("no output directory: pass --out or set run.out");
  const wp::Inputs in = wp::load_inputs(cfg);
  const wp::ReconstructResult r = wp::reconstruct_run(cfg, in);
  wp::write_reconstruction(r, out);
  for (const auto& w : r.windows) {
    std::cout << "window " << w.start << ": alpha " << w.summary.alpha << ", tracks " << w.scene.tracks.tracks.size()
              << (w.summary.fallback ? ", stage 3 fell back: " + w.summary.fallback_reason : std::string()) << '\n';
  }
  std::cout << "wrote " << out << '\n';
  return r.fallback ? wp::kExitFallback : wp::kExitOk;
}

int cmd_synth(const std::string& config, const std::string& preset, const std::string& out,
              const std::optional<std::uint64_t>& seed, const std::optional<double>& alpha_star,
              const std::optional<double>& sigma) {
  if (config.empty() == preset.empty()) throw wp::ValidationError("pass exactly one of --config and --preset");
  wp::SceneConfig sc;
  if (!config.empty()) {
    if (!std::filesystem::is_regular_file(config)) throw wp::ValidationError("scene config not found: " + config);
    sc = wp::parse_scene_config(wp::io::read_file(config));
    if (seed) sc.seed = *seed;
    if (alpha_star) sc.alpha_star = *alpha_star;
    if (sigma) sc.noise.pixel_sigma = *sigma;
  } else {
    sc = wp::make_preset(preset, seed.value_or(0), alpha_star.value_or(2.0), sigma.value_or(0.0));
  }
  sc.validate();
  const wp::Skeleton skel = wp::default_skeleton();
  const wp::SyntheticScene scene = wp::generate(sc, skel);
  wp::write_scene_with_run_config(scene, skel, out);
  std::cout << "wrote " << out << " (" << sc.frames << " frames, " << sc.people.size() << " people)\n";
  return wp::kExitOk;
}

int cmd_eval(const std::string& pred, const std::string& gt, double fps, const std::string& out) {
  const wp::WorldTrajectory p = wp::load_trajectory(wp::resolve_trajectory(pred));
  const wp::WorldTrajectory g = wp::load_trajectory(wp::resolve_trajectory(gt));
  const wp::MetricReport m = wp::evaluate_files(p, g, fps);
  std::cout << wp::format_metric_report(m);
  if (!out.empty()) wp::write_metric_files(m, out);
  return wp::kExitOk;
}

int cmd_track(const std::string& config, const std::string& scene, double alpha, const std::string& mode,
              const std::string& out, const wp::TrackerConfig& tcfg) {
  if (config.empty() == scene.empty()) throw wp::ValidationError("pass exactly one of --config and --scene");
  const wp::CueFrame frame = wp::parse_cue_frame(mode);
  std::filesystem::path cams, dets;
  bool c2w = false;
  if (!config.empty()) {
    const wp::RunConfig cfg = wp::load_run_config(config);
    cams = cfg.cameras;
    dets = cfg.detections;
    c2w = cfg.camera_to_world;
  } else {
    cams = std::filesystem::path(scene) / "cameras.tum";
    dets = std::filesystem::path(scene) / "detections.ndj";
  }
  for (const auto& p : {cams, dets}) {
    if (!std::filesystem::is_regular_file(p)) throw wp::ValidationError("input not found: " + p.string());
  }
  wp::TrajectoryOptions topt;
  topt.camera_to_world = c2w;
  const auto a = wp::run_tracker(wp::load_detections(dets), wp::load_camera_trajectory(cams, topt), alpha, frame, tcfg);
  const int idsw = wp::count_id_switches(a);
  std::cout << "mode " << mode << " alpha " << alpha << " idsw " << idsw << '\n';
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    wp::io::write_file(std::filesystem::path(out) / "assignments.txt", wp::format_assignments(a));
    const nlohmann::json j = {{"mode", mode}, {"alpha", alpha}, {"idsw", idsw}};
    wp::io::write_file(std::filesystem::path(out) / "idsw.json", j.dump(2) + "\n");
  }
  return wp::kExitOk;
}

int cmd_gradcheck(const std::string& config, int stage, const std::optional<std::uint64_t>& seed, int configs,
                  int coords, double tolerance) {
  const wp::RunConfig cfg = run_config(config, std::nullopt, std::nullopt, seed);
  const wp::Inputs in = wp::load_inputs(cfg);
  const wp::EnergyContext ctx = cfg.energy_context(in.skel);
  const int T = std::min(static_cast<int>(in.cameras.size()), cfg.pipeline.window);
  std::vector<wp::CameraPose> cams(in.cameras.begin(), in.cameras.begin() + T);
  std::vector<wp::Detection2D> dets;
  for (const auto& d : in.detections) {
    if (d.frame < T) dets.push_back(d);
  }
  const wp::SceneState scene = wp::initialize_scene(dets, cams, cfg.intrinsics(), cfg.pipeline.alpha0, cfg.pipeline.track);
  const wp::GradcheckReport r = wp::gradcheck_scene(scene, ctx, stage, configs, coords, cfg.seed);
  std::cout << "stage " << r.stage << ": " << r.variables << " variables, " << r.coords << " checked per configuration\n";
  for (std::size_t i = 0; i < r.errors.size(); ++i) std::cout << "  config " << i << ": max rel err " << r.errors[i] << '\n';
  const bool ok = r.worst < tolerance;
  std::cout << (ok ? "PASS" : "FAIL") << " worst " << r.worst << " tolerance " << tolerance << '\n';
  return ok ? wp::kExitOk : wp::kExitFallback;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Human and camera motion reconstruction from tracked 2D detections"};
  app.require_subcommand(1);

  std::string config, out, preset, pred, gt, scene, mode = "world";
  std::optional<int> threads, stage;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha_star, sigma;
  double fps = 0.0, alpha = 1.0, tolerance = 1e-5;
  int gc_stage = 3, configs = 10, coords = 200;
  wp::TrackerConfig tcfg;

  auto* rec = app.add_subcommand("reconstruct", "Run initialization and the three optimization stages");
  rec->add_option("--config", config, "Run configuration file")->required();
  rec->add_option("--out", out, "Output directory");
  rec->add_option("--threads", threads, "Worker threads");
  rec->add_option("--stage", stage, "Run stages 1..N");
  rec->add_option("--seed", seed, "Seed recorded with the run");

  auto* syn = app.add_subcommand("synth", "Generate a synthetic scene directory");
  syn->add_option("--config", config, "Scene configuration file");
  syn->add_option("--preset", preset, "Named preset");
  syn->add_option("--out", out, "Output directory")->required();
  syn->add_option("--seed", seed, "Noise seed");
  syn->add_option("--alpha-star", alpha_star, "True scale applied to the written cameras");
  syn->add_option("--sigma", sigma, "Pixel noise standard deviation");

  auto* ev = app.add_subcommand("eval", "Compare a world trajectory with ground truth");
  ev->add_option("--pred", pred, "Predicted trajectory file or directory")->required();
  ev->add_option("--gt", gt, "Ground-truth trajectory file or directory")->required();
  ev->add_option("--fps", fps, "Frame rate (default: from the ground truth)");
  ev->add_option("--out", out, "Directory for metrics.txt and metrics.json");

  auto* tr = app.add_subcommand("track", "Associate detections with location cues and count identity switches");
  tr->add_option("--config", config, "Run configuration naming cameras and detections");
  tr->add_option("--scene", scene, "Synthetic scene directory");
  tr->add_option("--alpha", alpha, "Scale applied to camera translations");
  tr->add_option("--mode", mode, "Cue frame")->check(CLI::IsMember({"camera", "world"}));
  tr->add_option("--gate", tcfg.gate, "Largest matchable cue distance");
  tr->add_option("--miss-tolerance", tcfg.miss_tolerance, "Frames a tracklet survives unseen");
  tr->add_option("--out", out, "Directory for assignments.txt and idsw.json");

  auto* gc = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  gc->add_option("--config", config, "Run configuration file")->required();
  gc->add_option("--stage", gc_stage, "Stage objective to check")->check(CLI::Range(1, 3));
  gc->add_option("--seed", seed, "Seed for perturbations and coordinate sampling");
  gc->add_option("--configs", configs, "Number of configurations");
  gc->add_option("--coords", coords, "Coordinates sampled per configuration");
  gc->add_option("--tolerance", tolerance, "Largest accepted relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return wp::kExitValidation;
  }

  try {
    if (rec->parsed()) return cmd_reconstruct(config, out, threads, stage, seed);
    if (syn->parsed()) return cmd_synth(config, preset, out, seed, alpha_star, sigma);
    if (ev->parsed()) return cmd_eval(pred, gt, fps, out);
    if (tr->parsed()) return cmd_track(config, scene, alpha, mode, out, tcfg);
    if (gc->parsed()) return cmd_gradcheck(config, gc_stage, seed, configs, coords, tolerance);
  } catch (const wp::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return wp::kExitValidation;
  } catch (const wp::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return wp::kExitValidation;
  } catch (const wp::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return wp::kExitFallback;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

#pragma once

// Subcommand bodies shared by the command-line tool and the tests.

#include "worldpose/config.hpp"
#include "worldpose/lbfgs.hpp"
#include "worldpose/metrics.hpp"
#include "worldpose/pipeline.hpp"
#include "worldpose/synth.hpp"
#include "worldpose/tracker.hpp"
#include "worldpose/trajectory_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace worldpose {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitFallback = 3;

struct Inputs {
  Skeleton skel;
  std::vector<CameraPose> cameras;
  std::vector<Detection2D> detections;
};

/// Loads and checks everything a run reads, before anything is computed or
/// written.
inline Inputs load_inputs(const RunConfig& cfg) {
  cfg.validate();
  Inputs in;
  in.skel = cfg.load_skeleton_or_default();
  TrajectoryOptions topt;
  topt.camera_to_world = cfg.camera_to_world;
  in.cameras = load_camera_trajectory(cfg.cameras, topt);
  if (in.cameras.size() < 3) throw ValidationError("camera trajectory needs at least 3 poses");
  for (const auto& c : in.cameras) c.validate();
  in.detections = load_detections(cfg.detections);
  const int T = static_cast<int>(in.cameras.size());
  for (const auto& d : in.detections) {
    if (d.frame < 0 || d.frame >= T) {
      throw ValidationError("detection frame " + std::to_string(d.frame) + " outside the camera trajectory");
    }
    if (!d.pose) {
      throw ValidationError("detection of id " + std::to_string(d.id) + " in frame " + std::to_string(d.frame) +
                            " lacks an initial pose");
    }
  }
  return in;
}

// ---------------------------------------------------------------------------
// reconstruct

struct ReconstructResult {
  std::vector<WindowResult> windows;
  WorldTrajectory trajectory;
  std::vector<CameraPose> metric_cameras;  // translations multiplied by the recovered scale
  nlohmann::json summary;
  nlohmann::json timing;
  bool fallback = false;
};

inline ReconstructResult reconstruct_run(const RunConfig& cfg, const Inputs& in) {
  EnergyContext ctx = cfg.energy_context(in.skel);
  ReconstructResult r;
  r.windows = reconstruct(in.detections, in.cameras, cfg.intrinsics(), ctx, cfg.pipeline);
  const std::string hash = config_hash(cfg);
  r.trajectory.header = {{"config_hash", hash}, {"skeleton_hash", in.skel.fingerprint()}, {"fps", cfg.fps}};
  nlohmann::json wins = nlohmann::json::array();
  nlohmann::json times = nlohmann::json::array();
  for (const auto& w : r.windows) {
    const RunSummary& s = w.summary;
    r.fallback = r.fallback || s.fallback;
    std::vector<TrajectoryRecord> recs;
    for (const auto& t : w.scene.tracks.tracks) {
      for (int f = 0; f < t.length(); ++f) {
        recs.push_back(make_record(w.start + t.t_start + f, t.person_id, t.segment, t.poses[f], in.skel));
      }
    }
    std::stable_sort(recs.begin(), recs.end(), [](const TrajectoryRecord& a, const TrajectoryRecord& b) {
      return a.frame != b.frame ? a.frame < b.frame : a.id < b.id;
    });
    r.trajectory.records.insert(r.trajectory.records.end(), recs.begin(), recs.end());
    for (int f = 0; f < w.scene.frame_count(); ++f) {
      CameraPose c = w.scene.cameras[f];
      c.T *= w.scene.alpha;
      r.metric_cameras.push_back(c);
    }
    nlohmann::json floors = nlohmann::json::array();
    for (const auto& g : s.floors) floors.push_back({g.a, g.b, g.c});
    nlohmann::json losses = nlohmann::json::array();
    for (int k = 0; k < 3; ++k) losses.push_back(s.ran[k] ? nlohmann::json(s.loss[k]) : nlohmann::json(nullptr));
    wins.push_back({{"start", w.start},
                    {"frames", w.scene.frame_count()},
                    {"tracks", w.scene.tracks.tracks.size()},
                    {"alpha", s.alpha},
                    {"searched_alpha", s.searched_alpha},
                    {"searched_alpha_stage3", s.searched_alpha3},
                    {"initial_loss", s.initial_loss},
                    {"stage_loss", losses},
                    {"floors", floors},
                    {"floor_of", s.floor_of},
                    {"failed_people", s.failed_people},
                    {"fallback", s.fallback},
                    {"fallback_reason", s.fallback_reason},
                    {"horizons", s.horizons}});
    times.push_back({{"start", w.start}, {"seconds", s.seconds}});
  }
  r.summary = {{"config_hash", hash}, {"stages", cfg.pipeline.stages}, {"fallback", r.fallback}, {"windows", wins}};
  r.timing = {{"config_hash", hash}, {"windows", times}};
  return r;
}

/// Writes world.ndj, cameras_metric.tum, summary.json and timing.json.
inline void write_reconstruction(const ReconstructResult& r, const std::filesystem::path& out) {
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) throw Error("cannot create " + out.string() + ": " + ec.message());
  const std::string hash = r.summary["config_hash"].get<std::string>();
  write_trajectory(out / "world.ndj", r.trajectory);
  write_camera_trajectory(out / "cameras_metric.tum", r.metric_cameras,
                          "# world-to-camera poses in meters\n# config_hash " + hash + "\n");
  io::write_file(out / "summary.json", r.summary.dump(2) + "\n");
  io::write_file(out / "timing.json", r.timing.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// eval

/// A trajectory file, or a directory holding world.ndj or gt_world.ndj.
inline std::filesystem::path resolve_trajectory(const std::filesystem::path& p) {
  if (std::filesystem::is_directory(p)) {
    for (const char* name : {"world.ndj", "gt_world.ndj"}) {
      if (std::filesystem::is_regular_file(p / name)) return p / name;
    }
    throw ValidationError("no world.ndj or gt_world.ndj in " + p.string());
  }
  if (!std::filesystem::is_regular_file(p)) throw ValidationError("trajectory not found: " + p.string());
  return p;
}

/// fps <= 0 takes the rate from the ground-truth header (30 when absent).
inline MetricReport evaluate_files(const WorldTrajectory& pred, const WorldTrajectory& gt, double fps = 0.0) {
  const std::string hp = pred.skeleton_hash(), hg = gt.skeleton_hash();
  if (!hp.empty() && !hg.empty() && hp != hg) {
    throw ValidationError("skeleton mismatch between prediction (" + hp + ") and ground truth (" + hg + ")");
  }
  if (!(fps > 0.0)) fps = gt.header.value("fps", 30.0);
  return evaluate(person_frames(pred), person_frames(gt), fps);
}

inline void write_metric_files(const MetricReport& m, const std::filesystem::path& out) {
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) throw Error("cannot create " + out.string() + ": " + ec.message());
  io::write_file(out / "metrics.txt", format_metric_report(m));
  io::write_file(out / "metrics.json", metric_report_json(m).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckReport {
  int stage = 0;
  int variables = 0;
  int coords = 0;
  std::vector<double> errors;  // one per configuration
  double worst = 0.0;
};

/// Prepares the scene for the stage (stage 3 gets floors, latents and the
/// full horizon) and compares gradients at seeded random perturbations of the
/// packed variables.
inline GradcheckReport gradcheck_scene(SceneState scene, const EnergyContext& ctx, int stage, int configs,
                                       int max_coords, std::uint64_t seed, double perturb = 0.01,
                                       double step = 1e-4) {
  if (stage < 1 || stage > 3) throw ValidationError("stage must be 1, 2 or 3");
  if (configs < 1 || max_coords < 1) throw ValidationError("need at least one configuration and coordinate");
  if (stage == 3) {
    init_floors(scene, *ctx.skel, 0.3, 4);
    init_motion(scene, *ctx.skel, ctx.prior);
    scene.horizon = scene.tracks.T_max;
    refresh_contacts(scene, ctx.prior);
  }
  const StageObjective obj(stage, scene, ctx);
  const Objective f = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) { return obj.evaluate(x, g); };
  const Eigen::VectorXd x0 = obj.pack();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  GradcheckReport rep;
  rep.stage = stage;
  rep.variables = obj.size();
  for (int c = 0; c < configs; ++c) {
    Eigen::VectorXd x = x0;
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += perturb * n01(rng);
    std::vector<Eigen::Index> idx(x.size());
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(max_coords)));
    std::sort(idx.begin(), idx.end());
    rep.coords = static_cast<int>(idx.size());
    const double e = check_gradient(f, x, step, 1e-3, idx);
    rep.errors.push_back(e);
    rep.worst = std::max(rep.worst, e);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// synth

/// Writes the four scene files plus run.ini, a run configuration that points
/// at them.
inline void write_scene_with_run_config(const SyntheticScene& sc, const Skeleton& skel,
                                        const std::filesystem::path& dir) {
  write_scene(sc, skel, dir);
  const CameraIntrinsics& k = sc.K;
  std::string run = "[input]\ncameras = cameras.tum\ndetections = detections.ndj\n\n[camera]\n";
  run += "fx = " + io::format_double(k.fx) + "\nfy = " + io::format_double(k.fy) + "\n";
  run += "cx = " + io::format_double(k.cx) + "\ncy = " + io::format_double(k.cy) + "\n";
  run += "fps = " + io::format_double(sc.config.fps) + "\n";
  io::write_file(dir / "run.ini", run);
}

}  // namespace worldpose

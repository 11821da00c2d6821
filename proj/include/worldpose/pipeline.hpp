#pragma once

// Staged reconstruction: world initialization from camera-frame estimates,
// then root fitting, joint smoothing with a shared scale, and the
// motion-prior rollout with contacts and an incrementally growing horizon.

#include "worldpose/lbfgs.hpp"
#include "worldpose/objective.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <string>
#include <thread>
#include <vector>

namespace worldpose {

struct StageSchedule {
  int stage = 1;
  int iterations = 30;  // stages 1 and 2
  int chunk = 10;       // stage 3 horizon increment
  int min_iterations = 5;
  int max_iterations = 20;
  double gamma = 1e-3;  // relative loss decrease that ends a chunk
  bool integrated = true;  // stage 3 solves in accumulated-offset coordinates

  void validate() const {
    if (stage < 1 || stage > 3) throw ValidationError("unknown stage " + std::to_string(stage));
    if (iterations < 1 || min_iterations < 1 || max_iterations < min_iterations) {
      throw ValidationError("iteration budgets must be positive and ordered");
    }
    if (chunk < 1) throw ValidationError("chunk size must be at least 1");
    if (!(gamma >= 0.0)) throw ValidationError("gamma must be nonnegative");
  }
};

/// 1-D search over the scale before the stage-3 solve. Candidates keep every
/// camera-frame pose fixed, so only the world-frame terms change.
struct ScaleSearch {
  bool enabled = true;
  double log_range = 3.0;  // search alpha * exp([-r, r])
  int steps = 121;
  int rounds = 2;

  void validate() const {
    if (!(log_range > 0.0) || steps < 3 || rounds < 1) throw ValidationError("bad scale search settings");
  }
};

struct PipelineConfig {
  SolverConfig solver;
  StageSchedule stage1{1, 30};
  StageSchedule stage2{2, 60};
  StageSchedule stage3{3, 1, 10, 40, 100, 1e-4};
  int stages = 3;  // run stages 1..stages
  int threads = 1;
  double alpha0 = 1.0;
  double floor_split_distance = 0.3;  // m, median foot offset that triggers floor clustering
  int max_floors = 4;
  int window = 100;
  TrackOptions track;
  ScaleSearch scale_search;

  void validate() const {
    solver.validate();
    stage1.validate();
    stage2.validate();
    stage3.validate();
    if (stages < 0 || stages > 3) throw ValidationError("stages must lie in 0..3");
    if (threads < 1) throw ValidationError("threads must be at least 1");
    if (!(alpha0 > 0.0)) throw ValidationError("initial scale must be positive");
    if (!(floor_split_distance > 0.0) || max_floors < 1) throw ValidationError("bad floor settings");
    if (window < 3) throw ValidationError("window must hold at least 3 frames");
    scale_search.validate();
  }
};

struct RunSummary {
  std::array<bool, 3> ran{};
  std::array<double, 3> loss{};
  std::array<double, 3> seconds{};
  double initial_loss = 0.0;  // stage-2 energy of the initialization
  double alpha = 1.0;
  std::vector<GroundPlane> floors;
  std::vector<int> floor_of;
  std::vector<int> failed_people;  // stage-1 solves that kept their initialization
  bool fallback = false;
  std::string fallback_reason;
  std::vector<int> horizons;  // stage-3 horizon per chunk
  double searched_alpha = 0.0;   // scale found before stage 2
  double searched_alpha3 = 0.0;  // scale found before the stage-3 solve
};

/// World-frame tracks from camera-frame estimates: p_w = R^T (p_c - alpha T).
/// Shape is averaged over each track's observed frames; gaps are infilled.
inline SceneState initialize_scene(const std::vector<Detection2D>& dets, const std::vector<CameraPose>& cams,
                                   const CameraIntrinsics& k, double alpha0, const TrackOptions& opt = {}) {
  if (cams.empty()) throw ValidationError("empty camera trajectory");
  for (const auto& d : dets) {
    if (!d.pose) {
      throw ValidationError("detection at frame " + std::to_string(d.frame) + " id " + std::to_string(d.id) +
                            " has no camera-frame pose estimate");
    }
  }
  SceneState s;
  s.cameras = cams;
  s.K = k;
  s.alpha = alpha0;
  s.tracks = build_tracks(dets, static_cast<int>(cams.size()), opt);
  for (auto& t : s.tracks.tracks) {
    ShapeVec beta = ShapeVec::Zero();
    for (int f = 0; f < t.length(); ++f) {
      if (!t.observed[f]) continue;
      t.poses[f] = init_world_pose(t.poses[f], cams[t.t_start + f], alpha0);
      beta += t.poses[f].shape;
    }
    beta /= t.observed_count();
    for (auto& p : t.poses) p.shape = beta;
    t = infill_missing(t);
  }
  s.floor_of.assign(s.tracks.tracks.size(), 0);
  s.validate();
  return s;
}

namespace pipeline_detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline SolverConfig with_budget(SolverConfig c, int iterations) {
  c.max_iterations = iterations;
  return c;
}

}  // namespace pipeline_detail

/// Root orientation and translation only. The energy separates over frames, so each observed frame
/// is its own six-variable problem.
inline void run_stage1(SceneState& scene, const EnergyContext& ctx, const StageSchedule& sched,
                       const SolverConfig& solver, RunSummary& summary, int threads = 1) {
  sched.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const int n = static_cast<int>(scene.tracks.tracks.size());
  const SolverConfig cfg = pipeline_detail::with_budget(solver, sched.iterations);
  std::vector<double> loss(n, 0.0);
  std::vector<std::uint8_t> failed(n, 0);
  std::atomic<int> next{0};
  auto worker = [&] {
    SceneState sub;
    sub.cameras = scene.cameras;
    sub.K = scene.K;
    sub.alpha = scene.alpha;
    sub.tracks.T = scene.tracks.T;
    sub.tracks.T_max = 1;
    sub.tracks.tracks.resize(1);
    for (int i = next++; i < n; i = next++) {
      Track& t = scene.tracks.tracks[i];
      Track& one = sub.tracks.tracks[0];
      one.person_id = t.person_id;
      one.t_end = 0;
      for (int f = 0; f < t.length(); ++f) {
        if (!t.observed[f]) continue;
        one.t_start = t.t_start + f;
        one.t_end = one.t_start + 1;
        one.poses = {t.poses[f]};
        one.observed = {1};
        one.kp = {t.kp[f]};
        one.conf = {t.conf[f]};
        const StageObjective obj(1, sub, ctx, {0});
        try {
          const SolveResult r = minimize(
              [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) { return obj.evaluate(x, g); }, obj.pack(), cfg);
          obj.unpack(r.x, sub);
          t.poses[f] = one.poses[0];
          loss[i] += r.f;
        } catch (const NumericalError&) {
          failed[i] = 1;
          loss[i] += obj.evaluate(obj.pack());
        }
      }
    }
  };
  const int workers = std::max(1, std::min(threads, n));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  summary.loss[0] = 0.0;
  for (int i = 0; i < n; ++i) {
    summary.loss[0] += loss[i];
    if (failed[i]) {
      summary.failed_people.push_back(i);
      log::warn("stage 1 failed for track " + std::to_string(i) + "; keeping its initialization");
    }
  }
  summary.ran[0] = true;
  summary.seconds[0] = pipeline_detail::seconds_since(t0);
}

/// Full pose, shape and the shared scale in one joint problem.
inline void run_stage2(SceneState& scene, const EnergyContext& ctx, const StageSchedule& sched,
                       const SolverConfig& solver, RunSummary& summary, bool fix_alpha = false) {
  sched.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const StageObjective obj(2, scene, ctx, {}, fix_alpha);
  const Eigen::VectorXd x0 = obj.pack();
  try {
    const SolveResult r = minimize([&](const Eigen::VectorXd& x, Eigen::VectorXd* g) { return obj.evaluate(x, g); }, x0,
                                   pipeline_detail::with_budget(solver, sched.iterations));
    obj.unpack(r.x, scene);
    summary.loss[1] = r.f;
  } catch (const NumericalError& e) {
    log::warn(std::string("stage 2 failed, keeping stage-1 result: ") + e.what());
    summary.loss[1] = obj.evaluate(x0);
  }
  summary.alpha = scene.alpha;
  summary.ran[1] = true;
  summary.seconds[1] = pipeline_detail::seconds_since(t0);
}

/// Single plane through everyone's lowest feet; when some track sits far off
/// that plane, tracks are clustered by foot height with one plane each.
inline void init_floors(SceneState& scene, const Skeleton& skel, double split_distance, int max_floors) {
  std::vector<std::vector<Vec3>> feet;
  std::vector<Vec3> all;
  for (const auto& t : scene.tracks.tracks) {
    feet.push_back(lowest_feet(t, skel));
    all.insert(all.end(), feet.back().begin(), feet.back().end());
  }
  const GroundPlane g = fit_ground(all);
  bool split = false;
  for (const auto& f : feet) {
    std::vector<double> d;
    for (const auto& p : f) d.push_back(std::abs(point_plane_distance(p, g)));
    if (median(d) > split_distance) split = true;
  }
  if (split && max_floors > 1) {
    const FloorAssignment a = cluster_floors(feet, max_floors);
    scene.floors = a.planes;
    scene.floor_of = a.cluster;
  } else {
    scene.floors = {g};
    scene.floor_of.assign(scene.tracks.tracks.size(), 0);
  }
}

/// Lifts stage-2 poses into motion states and encodes the latents that
/// reproduce them.
inline void init_motion(SceneState& scene, const Skeleton& skel, const PriorBackend& prior) {
  scene.motion.clear();
  for (const auto& t : scene.tracks.tracks) {
    const std::vector<MotionState> states = states_from_poses(t.poses, skel);
    MotionTrack m;
    m.body = BodyContext::make(skel, t.poses[0].shape);
    m.s0 = states[0];
    for (std::size_t f = 0; f + 1 < states.size(); ++f) m.z.push_back(encode_transition(states[f], states[f + 1], prior));
    scene.motion.push_back(std::move(m));
  }
}

/// Re-encodes the transitions past the current horizon from the last active
/// state so that the new frames follow the stage-2 velocities and body poses
/// held in the track poses.
inline void reanchor_motion(SceneState& scene, const Skeleton& skel, const PriorBackend& prior) {
  for (std::size_t i = 0; i < scene.motion.size(); ++i) {
    MotionTrack& m = scene.motion[i];
    const Track& t = scene.tracks.tracks[i];
    const int n = t.length();
    const int from = active_end(t, scene.horizon) - t.t_start - 1;
    if (from >= n - 1) continue;
    const std::vector<MotionState> target = states_from_poses(t.poses, skel);
    const std::vector<Latent> head(m.z.begin(), m.z.begin() + std::max(from, 0));
    MotionState cur = rollout(m.s0, head, prior, m.body).back();
    for (int f = std::max(from, 0); f + 1 < n; ++f) {
      m.z[f] = encode_transition(cur, target[f + 1], prior);
      cur = decode_step(m.z[f], cur, prior, m.body);
    }
  }
}

/// Recomputes contact probabilities of every frame from the full rollout.
inline void refresh_contacts(SceneState& scene, const PriorBackend& prior) {
  for (std::size_t i = 0; i < scene.motion.size(); ++i) {
    MotionTrack& m = scene.motion[i];
    const std::vector<MotionState> states = rollout(m.s0, m.z, prior, m.body);
    m.contacts = contact_probabilities(states, prior, scene.floor_for(i));
  }
}

/// Writes the full rollouts back into the track poses.
inline void commit_rollout(SceneState& scene, const PriorBackend& prior) {
  for (std::size_t i = 0; i < scene.motion.size(); ++i) {
    const MotionTrack& m = scene.motion[i];
    Track& t = scene.tracks.tracks[i];
    const ShapeVec beta = t.poses[0].shape;
    const std::vector<MotionState> states = rollout(m.s0, m.z, prior, m.body);
    for (int f = 0; f < t.length(); ++f) {
      if (!states[f].v.allFinite()) throw NumericalError("non-finite state in committed rollout");
      t.poses[f] = states[f].pose(beta);
    }
  }
}

/// World poses re-derived at a new scale with every camera-frame pose kept.
inline void rescale_scene(SceneState& scene, double alpha) {
  for (auto& t : scene.tracks.tracks) {
    for (int f = 0; f < t.length(); ++f) {
      const CameraPose& cam = scene.cameras[t.t_start + f];
      t.poses[f] = init_world_pose(world_to_camera_pose(t.poses[f], cam, scene.alpha), cam, alpha);
    }
  }
  scene.alpha = alpha;
}

/// Stage-3 energy over the full horizon after rescaling, with contacts held
/// at the given values and floors refit.
inline double rescaled_energy(const SceneState& scene, double alpha, const EnergyContext& ctx,
                              const std::vector<ContactProbabilities>& contacts, double split_distance,
                              int max_floors) {
  SceneState c = scene;
  rescale_scene(c, alpha);
  init_floors(c, *ctx.skel, split_distance, max_floors);
  init_motion(c, *ctx.skel, ctx.prior);
  c.horizon = c.tracks.T_max;
  for (std::size_t i = 0; i < c.motion.size(); ++i) c.motion[i].contacts = contacts[i];
  const double e = total_energy(3, c, ctx);
  return std::isfinite(e) ? e : std::numeric_limits<double>::infinity();
}

/// Grid search on log alpha refined by golden section; contacts are
/// re-estimated between rounds. Leaves the scene rescaled to the best value.
inline double search_scale(SceneState& scene, const EnergyContext& ctx, const ScaleSearch& opt,
                           double split_distance, int max_floors) {
  for (int round = 0; round < opt.rounds; ++round) {
    SceneState base = scene;
    init_floors(base, *ctx.skel, split_distance, max_floors);
    init_motion(base, *ctx.skel, ctx.prior);
    base.horizon = base.tracks.T_max;
    refresh_contacts(base, ctx.prior);
    std::vector<ContactProbabilities> contacts;
    for (const auto& m : base.motion) contacts.push_back(m.contacts);
    const double center = std::log(scene.alpha);
    const double step = 2.0 * opt.log_range / (opt.steps - 1);
    auto energy = [&](double la) {
      return rescaled_energy(scene, std::exp(la), ctx, contacts, split_distance, max_floors);
    };
    int best = 0;
    double best_e = std::numeric_limits<double>::infinity();
    for (int k = 0; k < opt.steps; ++k) {
      const double e = energy(center - opt.log_range + k * step);
      if (e < best_e) {
        best_e = e;
        best = k;
      }
    }
    if (!std::isfinite(best_e)) throw NumericalError("scale search found no finite energy");
    double lo = center - opt.log_range + std::max(0, best - 1) * step;
    double hi = center - opt.log_range + std::min(opt.steps - 1, best + 1) * step;
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = hi - phi * (hi - lo), b = lo + phi * (hi - lo);
    double fa = energy(a), fb = energy(b);
    for (int it = 0; it < 30; ++it) {
      if (fa < fb) {
        hi = b;
        b = a;
        fb = fa;
        a = hi - phi * (hi - lo);
        fa = energy(a);
      } else {
        lo = a;
        a = b;
        fa = fb;
        b = lo + phi * (hi - lo);
        fb = energy(b);
      }
    }
    double la = center - opt.log_range + best * step;
    if (std::min(fa, fb) < best_e) la = fa < fb ? a : b;
    rescale_scene(scene, std::exp(la));
  }
  return scene.alpha;
}

/// Rollout optimization over a horizon that grows chunk by chunk. Any
/// numerical failure restores the stage-2 scene and flags the run.
inline void run_stage3(SceneState& scene, const EnergyContext& ctx, const StageSchedule& sched,
                       const SolverConfig& solver, RunSummary& summary, double floor_split_distance = 0.3,
                       int max_floors = 4, const ScaleSearch& scale = {}) {
  sched.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const SceneState backup = scene;
  try {
    if (scale.enabled) summary.searched_alpha3 = search_scale(scene, ctx, scale, floor_split_distance, max_floors);
    init_floors(scene, *ctx.skel, floor_split_distance, max_floors);
    init_motion(scene, *ctx.skel, ctx.prior);
    const int t_max = scene.tracks.T_max;
    int h = std::min(sched.chunk, t_max);
    const SolverConfig cfg = pipeline_detail::with_budget(solver, sched.max_iterations);
    double f = 0.0;
    for (;;) {
      if (!summary.horizons.empty()) reanchor_motion(scene, *ctx.skel, ctx.prior);
      scene.horizon = h;
      summary.horizons.push_back(h);
      refresh_contacts(scene, ctx.prior);
      const StageObjective obj(3, scene, ctx);
      const IntegratedCoordinates coords(obj, ctx.prior.cv_sigma());
      const auto on_iter = [&](int iter, double f_old, double f_new) {
        return iter >= sched.min_iterations && f_old - f_new < sched.gamma * std::abs(f_old);
      };
      SolveResult r;
      if (sched.integrated) {
        r = minimize([&](const Eigen::VectorXd& y, Eigen::VectorXd* g) { return coords.evaluate(y, g); },
                     coords.to_coords(obj.pack()), cfg, on_iter);
        r.x = coords.from_coords(r.x);
      } else {
        r = minimize([&](const Eigen::VectorXd& x, Eigen::VectorXd* g) { return obj.evaluate(x, g); }, obj.pack(), cfg,
                     on_iter);
      }
      if (!std::isfinite(r.f)) throw NumericalError("non-finite stage-3 loss");
      obj.unpack(r.x, scene);
      f = r.f;
      if (h >= t_max) break;
      h = std::min(h + sched.chunk, t_max);
    }
    commit_rollout(scene, ctx.prior);
    summary.loss[2] = f;
  } catch (const NumericalError& e) {
    scene = backup;
    summary.fallback = true;
    summary.fallback_reason = e.what();
    summary.loss[2] = std::numeric_limits<double>::quiet_NaN();
    log::warn(std::string("stage 3 reverted to stage 2: ") + e.what());
  }
  summary.alpha = scene.alpha;
  summary.floors = scene.floors;
  summary.floor_of = scene.floor_of;
  summary.ran[2] = true;
  summary.seconds[2] = pipeline_detail::seconds_since(t0);
}

/// Initialization followed by the configured prefix of stages.
inline RunSummary run_pipeline(SceneState& scene, const EnergyContext& ctx, const PipelineConfig& cfg) {
  cfg.validate();
  RunSummary s;
  s.initial_loss = total_energy(2, scene, ctx);
  s.alpha = scene.alpha;
  s.floors = scene.floors;
  s.floor_of = scene.floor_of;
  if (cfg.stages >= 1) run_stage1(scene, ctx, cfg.stage1, cfg.solver, s, cfg.threads);
  if (cfg.stages >= 2 && cfg.scale_search.enabled) {
    try {
      s.searched_alpha = search_scale(scene, ctx, cfg.scale_search, cfg.floor_split_distance, cfg.max_floors);
    } catch (const NumericalError& e) {
      log::warn(std::string("scale search skipped: ") + e.what());
    }
  }
  if (cfg.stages >= 2) run_stage2(scene, ctx, cfg.stage2, cfg.solver, s);
  if (cfg.stages >= 3) run_stage3(scene, ctx, cfg.stage3, cfg.solver, s, cfg.floor_split_distance, cfg.max_floors, cfg.scale_search);
  return s;
}

struct WindowResult {
  int start = 0;  // first video frame of the window
  SceneState scene;
  RunSummary summary;
};

/// Splits the video into windows of cfg.window frames, reconstructs each
/// independently and returns them in order.
inline std::vector<WindowResult> reconstruct(const std::vector<Detection2D>& dets, const std::vector<CameraPose>& cams,
                                             const CameraIntrinsics& k, const EnergyContext& ctx,
                                             const PipelineConfig& cfg) {
  cfg.validate();
  std::vector<WindowResult> out;
  const int T = static_cast<int>(cams.size());
  for (int start = 0; start < T; start += cfg.window) {
    const int end = std::min(T, start + cfg.window);
    std::vector<CameraPose> wc(cams.begin() + start, cams.begin() + end);
    std::vector<Detection2D> wd;
    for (const auto& d : dets) {
      if (d.frame >= start && d.frame < end) {
        wd.push_back(d);
        wd.back().frame -= start;
      }
    }
    WindowResult w;
    w.start = start;
    w.scene = initialize_scene(wd, wc, k, cfg.alpha0, cfg.track);
    if (w.scene.tracks.tracks.empty()) {
      log::warn("no tracks in frames " + std::to_string(start) + ".." + std::to_string(end - 1));
    } else {
      w.summary = run_pipeline(w.scene, ctx, cfg);
    }
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace worldpose

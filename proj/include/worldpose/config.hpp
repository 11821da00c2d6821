#pragma once

// Run configuration: a sectioned key-value text file. Every value has a
// default, so a minimal file names only the input paths.
//
//   [input]   cameras, detections, camera_to_world, skeleton, shape_basis,
//             prior, pose_map
//   [camera]  width, height, fx, fy, cx, cy, fps
//   [weights] data, shape, pose, smooth, cvae, stab, skate, con,
//             contact_delta, sigma_gm
//   [solver]  history, step_scale, line_search_evals, stage1_iterations,
//             stage2_iterations, chunk, min_iterations, max_iterations, gamma,
//             integrated
//   [run]     stages, threads, seed, alpha0, window, floor_split_distance,
//             max_floors, max_gap, min_length, scale_search, out

#include "worldpose/body.hpp"
#include "worldpose/camera.hpp"
#include "worldpose/common.hpp"
#include "worldpose/energy.hpp"
#include "worldpose/motion_prior.hpp"
#include "worldpose/objective.hpp"
#include "worldpose/pipeline.hpp"
#include "worldpose/text_io.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace worldpose {

struct RunConfig {
  std::filesystem::path cameras, detections, skeleton, shape_basis, prior, pose_map, out;
  bool camera_to_world = false;
  int width = 0, height = 0;
  double fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;  // fx <= 0 selects the default intrinsics
  double fps = 30.0;
  LossWeights weights;
  PipelineConfig pipeline;
  std::uint64_t seed = 0;

  CameraIntrinsics intrinsics() const {
    if (fx > 0.0) return CameraIntrinsics{fx, fy > 0.0 ? fy : fx, cx, cy};
    return default_intrinsics(width, height);
  }

  /// Checks values and that referenced files exist.
  void validate() const {
    auto need = [](const std::filesystem::path& p, const char* what) {
      if (p.empty()) throw ValidationError(std::string("config: ") + what + " path is required");
      if (!std::filesystem::is_regular_file(p)) throw ValidationError(std::string("config: ") + what + " not found: " + p.string());
    };
    auto maybe = [](const std::filesystem::path& p, const char* what) {
      if (!p.empty() && !std::filesystem::is_regular_file(p)) {
        throw ValidationError(std::string("config: ") + what + " not found: " + p.string());
      }
    };
    need(cameras, "cameras");
    need(detections, "detections");
    maybe(skeleton, "skeleton");
    maybe(shape_basis, "shape_basis");
    maybe(prior, "prior");
    maybe(pose_map, "pose_map");
    if (skeleton.empty() != shape_basis.empty()) throw ValidationError("config: skeleton and shape_basis go together");
    if (fx <= 0.0 && (width <= 0 || height <= 0)) throw ValidationError("config: give fx/fy/cx/cy or the image size");
    if (!(fps > 0.0)) throw ValidationError("config: fps must be positive");
    intrinsics().validate();
    weights.validate();
    pipeline.validate();
  }

  Skeleton load_skeleton_or_default() const {
    return skeleton.empty() ? default_skeleton() : load_skeleton(skeleton, shape_basis);
  }

  EnergyContext energy_context(const Skeleton& skel) const {
    EnergyContext ctx;
    ctx.skel = &skel;
    ctx.weights = weights;
    if (!prior.empty()) ctx.prior = PriorBackend::mlp_cvae(std::make_shared<MlpPrior>(load_mlp_prior(prior)));
    if (!pose_map.empty()) ctx.pose_map = load_pose_prior_map(pose_map);
    return ctx;
  }
};

namespace config_detail {

using boost::property_tree::ptree;

inline double num(const ptree& t, const std::string& key, double def) {
  const auto v = t.get_optional<std::string>(key);
  if (!v) return def;
  double out;
  if (!io::parse_double(io::trim(*v), out)) throw ValidationError("config: bad number for '" + key + "': " + *v);
  return out;
}

inline int integer(const ptree& t, const std::string& key, int def) {
  const auto v = t.get_optional<std::string>(key);
  if (!v) return def;
  long long out;
  if (!io::parse_int(io::trim(*v), out)) throw ValidationError("config: bad integer for '" + key + "': " + *v);
  return static_cast<int>(out);
}

inline bool flag(const ptree& t, const std::string& key, bool def) {
  const auto v = t.get_optional<std::string>(key);
  if (!v) return def;
  const std::string s(io::trim(*v));
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ValidationError("config: bad boolean for '" + key + "': " + *v);
}

inline std::filesystem::path path(const ptree& t, const std::string& key, const std::filesystem::path& base) {
  const auto v = t.get_optional<std::string>(key);
  if (!v || io::trim(*v).empty()) return {};
  std::filesystem::path p(std::string(io::trim(*v)));
  return p.is_absolute() ? p : base / p;
}

/// "1 2 3" or "1,2,3"; the list must be a prefix of the stage order.
inline int stages(const ptree& t, int def) {
  const auto v = t.get_optional<std::string>("run.stages");
  if (!v) return def;
  std::string s = *v;
  for (char& c : s) {
    if (c == ',') c = ' ';
  }
  const auto f = io::split_ws(s);
  if (f.empty()) throw ValidationError("config: run.stages is empty");
  for (std::size_t i = 0; i < f.size(); ++i) {
    long long k;
    if (!io::parse_int(f[i], k) || k != static_cast<long long>(i + 1)) {
      throw ValidationError("config: run.stages must be a prefix of 1 2 3, got '" + *v + "'");
    }
  }
  if (f.size() > 3) throw ValidationError("config: at most three stages");
  return static_cast<int>(f.size());
}

}  // namespace config_detail

/// Relative paths resolve against base_dir.
inline RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {}) {
  using namespace config_detail;
  ptree t;
  std::istringstream in(text);
  try {
    boost::property_tree::read_ini(in, t);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  RunConfig c;
  c.cameras = path(t, "input.cameras", base_dir);
  c.detections = path(t, "input.detections", base_dir);
  c.camera_to_world = flag(t, "input.camera_to_world", false);
  c.skeleton = path(t, "input.skeleton", base_dir);
  c.shape_basis = path(t, "input.shape_basis", base_dir);
  c.prior = path(t, "input.prior", base_dir);
  c.pose_map = path(t, "input.pose_map", base_dir);
  c.width = integer(t, "camera.width", 0);
  c.height = integer(t, "camera.height", 0);
  c.fx = num(t, "camera.fx", 0.0);
  c.fy = num(t, "camera.fy", 0.0);
  c.cx = num(t, "camera.cx", 0.0);
  c.cy = num(t, "camera.cy", 0.0);
  c.fps = num(t, "camera.fps", c.fps);
  LossWeights& w = c.weights;
  w.data = num(t, "weights.data", w.data);
  w.shape = num(t, "weights.shape", w.shape);
  w.pose = num(t, "weights.pose", w.pose);
  w.smooth = num(t, "weights.smooth", w.smooth);
  w.cvae = num(t, "weights.cvae", w.cvae);
  w.stab = num(t, "weights.stab", w.stab);
  w.skate = num(t, "weights.skate", w.skate);
  w.con = num(t, "weights.con", w.con);
  w.contact_delta = num(t, "weights.contact_delta", w.contact_delta);
  w.sigma_gm = num(t, "weights.sigma_gm", w.sigma_gm);
  PipelineConfig& p = c.pipeline;
  p.solver.history = integer(t, "solver.history", p.solver.history);
  p.solver.step_scale = num(t, "solver.step_scale", p.solver.step_scale);
  p.solver.max_line_search_evals = integer(t, "solver.line_search_evals", p.solver.max_line_search_evals);
  p.stage1.iterations = integer(t, "solver.stage1_iterations", p.stage1.iterations);
  p.stage2.iterations = integer(t, "solver.stage2_iterations", p.stage2.iterations);
  p.stage3.chunk = integer(t, "solver.chunk", p.stage3.chunk);
  p.stage3.min_iterations = integer(t, "solver.min_iterations", p.stage3.min_iterations);
  p.stage3.max_iterations = integer(t, "solver.max_iterations", p.stage3.max_iterations);
  p.stage3.gamma = num(t, "solver.gamma", p.stage3.gamma);
  p.stage3.integrated = flag(t, "solver.integrated", p.stage3.integrated);
  p.stages = stages(t, p.stages);
  p.threads = integer(t, "run.threads", p.threads);
  p.alpha0 = num(t, "run.alpha0", p.alpha0);
  p.window = integer(t, "run.window", p.window);
  p.floor_split_distance = num(t, "run.floor_split_distance", p.floor_split_distance);
  p.max_floors = integer(t, "run.max_floors", p.max_floors);
  p.track.max_gap = integer(t, "run.max_gap", p.track.max_gap);
  p.track.min_length = integer(t, "run.min_length", p.track.min_length);
  p.scale_search.enabled = flag(t, "run.scale_search", p.scale_search.enabled);
  const auto seed = t.get_optional<std::string>("run.seed");
  if (seed) {
    long long s;
    if (!io::parse_int(io::trim(*seed), s) || s < 0) throw ValidationError("config: bad seed '" + *seed + "'");
    c.seed = static_cast<std::uint64_t>(s);
  }
  c.out = path(t, "run.out", base_dir);
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& file) {
  if (!std::filesystem::is_regular_file(file)) throw ValidationError("config file not found: " + file.string());
  return parse_run_config(io::read_file(file), file.parent_path());
}

/// Canonical text of every effective setting; its hash stamps the outputs.
inline std::string canonical_config(const RunConfig& c) {
  std::ostringstream o;
  auto num = [](double v) { return io::format_double(v); };
  auto file_tag = [](const std::filesystem::path& p) {
    return p.empty() ? std::string("-") : hex64(fnv1a(io::read_file(p)));
  };
  o << "cameras " << file_tag(c.cameras) << " c2w " << c.camera_to_world << '\n';
  o << "detections " << file_tag(c.detections) << '\n';
  o << "skeleton " << file_tag(c.skeleton) << ' ' << file_tag(c.shape_basis) << '\n';
  o << "prior " << file_tag(c.prior) << " pose_map " << file_tag(c.pose_map) << '\n';
  const CameraIntrinsics k = c.intrinsics();
  o << "K " << num(k.fx) << ' ' << num(k.fy) << ' ' << num(k.cx) << ' ' << num(k.cy) << " fps " << num(c.fps) << '\n';
  const LossWeights& w = c.weights;
  o << "weights";
  for (double v : {w.data, w.shape, w.pose, w.smooth, w.cvae, w.stab, w.skate, w.con, w.contact_delta, w.sigma_gm}) {
    o << ' ' << num(v);
  }
  const PipelineConfig& p = c.pipeline;
  o << "\nsolver " << p.solver.history << ' ' << num(p.solver.step_scale) << ' ' << p.solver.max_line_search_evals << ' '
    << p.stage1.iterations << ' ' << p.stage2.iterations << ' ' << p.stage3.chunk << ' ' << p.stage3.min_iterations
    << ' ' << p.stage3.max_iterations << ' ' << num(p.stage3.gamma) << ' ' << p.stage3.integrated << '\n';
  o << "run " << p.stages << ' ' << num(p.alpha0) << ' ' << p.window << ' ' << num(p.floor_split_distance) << ' '
    << p.max_floors << ' ' << p.track.max_gap << ' ' << p.track.min_length << ' ' << p.scale_search.enabled << ' '
    << c.seed << '\n';
  return o.str();
}

inline std::string config_hash(const RunConfig& c) { return hex64(fnv1a(canonical_config(c))); }

}  // namespace worldpose

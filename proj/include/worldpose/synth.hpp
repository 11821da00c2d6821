#pragma once

// Synthetic ground-truth scenes: walking people with exact stance phases,
// parametric camera paths, a known SLAM scale and noisy 2D detections.

#include "worldpose/body.hpp"
#include "worldpose/camera.hpp"
#include "worldpose/common.hpp"
#include "worldpose/ground.hpp"
#include "worldpose/tracks.hpp"
#include "worldpose/trajectory_io.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace worldpose {

struct PersonSpec {
  std::string family = "line";  // line | circle | sinusoid-walk
  double speed = 1.2;           // m/s along the path; 0 stands still
  Vec2 start = Vec2::Zero();
  double yaw = 0.0;             // rest pose faces +y; yaw rotates about +z
  double phase = 0.0;           // gait cycle offset in [0, 1)
  double radius = 4.0;          // circle; positive turns left
  double amplitude = 0.4;       // sinusoid-walk lateral amplitude, m
  double wavelength = 4.0;      // sinusoid-walk period along the path, m
  double floor = 0.0;           // height of the floor the person walks on
  std::array<double, 4> shape{};  // size, leg, torso and arm coefficients
};

struct CameraSpec {
  std::string family = "static";  // static | follow | orbit | lateral-track
  Vec3 position = Vec3(0, -6, 1.5);  // static/lateral start; follow offset from the root; orbit centre
  Vec3 target = Vec3(0, 0, 1.0);     // look-at point (follow: direction is -position)
  Vec3 velocity = Vec3::Zero();      // lateral-track, m/s
  double radius = 6.0;               // orbit
  double height = 1.5;               // orbit
  double angular_speed = 0.3;        // orbit, rad/s
  double jitter_rot = 0.0;           // per-frame random-walk rotation, rad
  int jump_every = 0;                // frames between sudden sideways jumps
  double jump_size = 0.0;            // m
};

struct NoiseSpec {
  double pixel_sigma = 0.0;
  double occlusion = 0.0;    // per joint per frame
  double dropout = 0.0;      // fraction of frames dropped per person
  int max_gap = 15;          // longest contiguous dropped run
  double init_rot = 0.0;     // rad, root orientation of the initial estimate
  double init_pose = 0.0;    // rad, per-joint body pose
  double init_shape = 0.0;
  double init_xy = 0.0;      // m, camera-frame x/y of the root
  double init_depth = 0.0;   // relative depth error
};

struct SceneConfig {
  std::string name = "custom";
  int frames = 100;
  double fps = 30.0;
  int width = 1280;
  int height = 720;
  double focal = 0.0;  // 0 selects the image diagonal
  double alpha_star = 1.0;
  std::uint64_t seed = 0;
  CameraSpec camera;
  NoiseSpec noise;
  std::vector<PersonSpec> people;

  void validate() const {
    if (frames < 3) throw ValidationError("scene needs at least 3 frames");
    if (!(fps > 0.0)) throw ValidationError("fps must be positive");
    if (!(alpha_star > 0.0)) throw ValidationError("alpha_star must be positive");
    if (width <= 0 || height <= 0 || focal < 0.0) throw ValidationError("bad image size or focal length");
    for (double p : {noise.occlusion, noise.dropout}) {
      if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("probabilities must lie in [0,1]");
    }
    if (noise.pixel_sigma < 0.0 || noise.max_gap < 1) throw ValidationError("bad noise settings");
    const std::string& cf = camera.family;
    if (cf != "static" && cf != "follow" && cf != "orbit" && cf != "lateral-track") {
      throw ValidationError("unknown camera family '" + cf + "'");
    }
    if (people.empty()) throw ValidationError("scene needs at least one person");
    for (const auto& p : people) {
      if (p.family != "line" && p.family != "circle" && p.family != "sinusoid-walk") {
        throw ValidationError("unknown trajectory family '" + p.family + "'");
      }
      if (p.speed < 0.0) throw ValidationError("speed must be nonnegative");
    }
  }

  CameraIntrinsics intrinsics() const {
    CameraIntrinsics k = default_intrinsics(width, height);
    if (focal > 0.0) k.fx = k.fy = focal;
    return k;
  }
};

struct SyntheticScene {
  SceneConfig config;
  CameraIntrinsics K;
  std::vector<CameraPose> cameras_metric;   // world-to-camera, meters
  std::vector<CameraPose> cameras_written;  // translations divided by alpha_star
  std::vector<std::vector<PoseParams>> gt;  // [person][frame], world frame
  // [person][frame][k] for the skeleton's foot joints.
  std::vector<std::vector<std::array<std::uint8_t, 4>>> contacts;
  std::vector<GroundPlane> floors;
  std::vector<int> floor_of;
  std::vector<Detection2D> detections;
};

// ---------------------------------------------------------------------------
// Paths parameterized by arc length.

namespace synth_detail {

inline Mat3 rot_x(double a) { return so3::exp(Vec3(a, 0, 0)); }
inline Mat3 rot_y(double a) { return so3::exp(Vec3(0, a, 0)); }
inline Mat3 rot_z(double a) { return so3::exp(Vec3(0, 0, a)); }
inline Vec2 forward_dir(double yaw) { return {-std::sin(yaw), std::cos(yaw)}; }
inline Vec2 left_dir(double yaw) { return {-std::cos(yaw), -std::sin(yaw)}; }

class Path {
 public:
  explicit Path(const PersonSpec& p) : p_(p) {
    if (p.family == "sinusoid-walk") {
      // Tabulate arc length against the along-track coordinate.
      const double k = 2.0 * std::numbers::pi / p.wavelength;
      const double dx = 1e-3;
      xs_.push_back(0.0);
      ss_.push_back(0.0);
      for (int i = 1; i < 200000; ++i) {
        const double x = i * dx;
        const double xm = x - 0.5 * dx;
        const double slope = p.amplitude * k * std::cos(k * xm);
        xs_.push_back(x);
        ss_.push_back(ss_.back() + dx * std::sqrt(1.0 + slope * slope));
      }
    }
  }

  void at(double s, Vec2& pos, double& yaw) const {
    const Vec2 f = forward_dir(p_.yaw);
    const Vec2 l = left_dir(p_.yaw);
    if (p_.family == "line" || p_.speed == 0.0) {
      pos = p_.start + s * f;
      yaw = p_.yaw;
    } else if (p_.family == "circle") {
      const Vec2 centre = p_.start + p_.radius * l;
      const double phi = s / p_.radius;
      const Vec2 r0 = p_.start - centre;
      pos = centre + Eigen::Rotation2Dd(phi) * r0;
      yaw = p_.yaw + phi;
    } else {
      const auto it = std::lower_bound(ss_.begin(), ss_.end(), s);
      std::size_t i = std::min<std::size_t>(std::max<std::ptrdiff_t>(it - ss_.begin(), 1), ss_.size() - 1);
      const double u = (s - ss_[i - 1]) / (ss_[i] - ss_[i - 1]);
      const double x = xs_[i - 1] + u * (xs_[i] - xs_[i - 1]);
      const double k = 2.0 * std::numbers::pi / p_.wavelength;
      // Lateral offset to the left of the initial heading.
      pos = p_.start + x * f - p_.amplitude * std::sin(k * x) * l;
      yaw = p_.yaw - std::atan(p_.amplitude * k * std::cos(k * x));
    }
  }

 private:
  PersonSpec p_;
  std::vector<double> xs_, ss_;
};

}  // namespace synth_detail

/// World-frame pose sequence of one walking person. Stance feet are pinned
/// exactly; swing feet follow a clearance arc solved by two-link IK.
inline std::vector<PoseParams> synthesize_walk(const PersonSpec& spec, const Skeleton& skel, int frames, double fps) {
  using namespace synth_detail;
  ShapeVec beta = ShapeVec::Zero();
  for (int i = 0; i < 4; ++i) beta[i] = spec.shape[i];
  const BoneOffsets bones = shape_to_bones(beta, skel);
  const double l1 = -bones(joint::left_knee, 2);
  const double l2 = -bones(joint::left_ankle, 2);
  const double leg = l1 + l2;
  const double ankle_height = -bones(joint::left_foot, 2);
  const double cycle_hz = 1.0;
  const double sin_a = spec.speed / (4.0 * cycle_hz * leg);
  if (sin_a >= 0.9) throw ValidationError("walking speed too high for the leg length");
  const double amp = std::asin(sin_a);
  const double clearance = spec.speed > 0.0 ? 0.1 : 0.0;
  const Path path(spec);
  const int hips[2] = {joint::left_hip, joint::right_hip};
  const int knees[2] = {joint::left_knee, joint::right_knee};
  const int ankles[2] = {joint::left_ankle, joint::right_ankle};

  auto footstep = [&](long k, Vec3& pos, double& yaw) {
    const double tau = (k + 0.5) / (2.0 * cycle_hz);
    Vec2 c;
    path.at(spec.speed * tau, c, yaw);
    const int side = static_cast<int>(((k % 2) + 2) % 2);
    const Vec3 lateral = rot_z(yaw) * Vec3(bones(hips[side], 0), 0, 0);
    pos = Vec3(c.x(), c.y(), spec.floor + ankle_height) + lateral;
  };

  std::vector<PoseParams> out(frames);
  for (int t = 0; t < frames; ++t) {
    const double tau = t / fps + spec.phase / cycle_hz;
    const double steps = 2.0 * cycle_hz * tau;
    const long k = static_cast<long>(std::floor(steps));
    const double u = steps - k;
    const int stance = static_cast<int>(((k % 2) + 2) % 2);
    const int swing = 1 - stance;
    Vec2 c;
    double yaw;
    path.at(spec.speed * tau, c, yaw);
    const Mat3 ry = rot_z(yaw);

    PoseParams& p = out[t];
    p.shape = beta;
    p.root_orient = Vec3(0, 0, yaw);

    // Stance leg: straight, pitching from +amp to -amp, heading locked to the plant.
    Vec3 plant;
    double plant_yaw;
    footstep(k, plant, plant_yaw);
    const double theta = amp * (1.0 - 2.0 * u);
    const Vec3 hip_stance = plant - rot_z(plant_yaw) * Vec3(0, leg * std::sin(theta), -leg * std::cos(theta));
    p.root_transl = hip_stance - ry * bones.row(hips[stance]).transpose();
    p.body_pose.row(hips[stance]) = so3::log(rot_z(plant_yaw - yaw) * rot_x(theta)).transpose();
    p.body_pose.row(knees[stance]).setZero();
    p.body_pose.row(ankles[stance]) = Vec3(-theta, 0, 0).transpose();

    // Swing leg: from the previous footstep to the next along a clearance arc.
    Vec3 from, to;
    double yaw_from, yaw_to;
    footstep(k - 1, from, yaw_from);
    footstep(k + 1, to, yaw_to);
    const Vec3 target = (1.0 - u) * from + u * to + Vec3(0, 0, clearance * std::sin(std::numbers::pi * u));
    const Vec3 hip_swing = p.root_transl + ry * bones.row(hips[swing]).transpose();
    const Vec3 v = ry.transpose() * (target - hip_swing);
    const double d = std::min(v.norm(), leg);
    const double cos_k = std::clamp((l1 * l1 + l2 * l2 - d * d) / (2.0 * l1 * l2), -1.0, 1.0);
    const double kappa = std::numbers::pi - std::acos(cos_k);
    const Vec3 a(0, -l2 * std::sin(kappa), -l1 - l2 * std::cos(kappa));
    const double az = -std::hypot(v.x(), v.z());
    const double roll = std::atan2(v.x() / az, v.z() / az);
    const double pitch = std::atan2(az, v.y()) - std::atan2(a.z(), a.y());
    const Mat3 hip_rot = rot_y(roll) * rot_x(pitch);
    const Mat3 knee_rot = rot_x(-kappa);
    p.body_pose.row(hips[swing]) = so3::log(hip_rot).transpose();
    p.body_pose.row(knees[swing]) = Vec3(-kappa, 0, 0).transpose();
    p.body_pose.row(ankles[swing]) = so3::log((hip_rot * knee_rot).transpose()).transpose();

    // Arms hang down and swing against the legs.
    const double pitch_of[2] = {stance == 0 ? theta : pitch, stance == 1 ? theta : pitch};
    p.body_pose.row(joint::left_shoulder) = so3::log(rot_x(-0.5 * pitch_of[0]) * rot_y(-1.3)).transpose();
    p.body_pose.row(joint::right_shoulder) = so3::log(rot_x(-0.5 * pitch_of[1]) * rot_y(1.3)).transpose();
    p.body_pose.row(joint::left_elbow) = Vec3(0, 0, -0.3).transpose();
    p.body_pose.row(joint::right_elbow) = Vec3(0, 0, 0.3).transpose();
  }
  return out;
}

/// Rotation whose rows are the camera right, down and forward axes.
inline Mat3 look_at(const Vec3& eye, const Vec3& target) {
  const Vec3 fwd = (target - eye).normalized();
  Vec3 right = fwd.cross(Vec3::UnitZ());
  if (right.norm() < 1e-9) right = Vec3::UnitX();
  right.normalize();
  const Vec3 down = fwd.cross(right);
  Mat3 r;
  r.row(0) = right.transpose();
  r.row(1) = down.transpose();
  r.row(2) = fwd.transpose();
  return r;
}

inline std::vector<CameraPose> synthesize_cameras(const SceneConfig& cfg, const std::vector<PoseParams>& lead,
                                                  std::mt19937_64& rng) {
  const CameraSpec& c = cfg.camera;
  std::vector<CameraPose> out;
  std::normal_distribution<double> n01(0.0, 1.0);
  Mat3 jitter = Mat3::Identity();
  Vec3 jump = Vec3::Zero();
  for (int t = 0; t < cfg.frames; ++t) {
    const double time = t / cfg.fps;
    Vec3 eye;
    Mat3 r;
    if (c.family == "static") {
      eye = c.position;
      r = look_at(eye, c.target);
    } else if (c.family == "lateral-track") {
      eye = c.position + time * c.velocity;
      r = look_at(c.position, c.target);
    } else if (c.family == "follow") {
      eye = lead[t].root_transl + c.position;
      r = look_at(c.position, Vec3::Zero());
    } else {
      const double phi = c.angular_speed * time;
      eye = c.position + Vec3(c.radius * std::cos(phi), c.radius * std::sin(phi), c.height);
      r = look_at(eye, c.target);
    }
    if (c.jitter_rot > 0.0) {
      jitter = so3::exp(c.jitter_rot * Vec3(n01(rng), n01(rng), n01(rng))) * jitter;
      r = jitter * r;
    }
    if (c.jump_every > 0 && t > 0 && t % c.jump_every == 0) {
      const double sign = n01(rng) > 0.0 ? 1.0 : -1.0;
      jump += sign * c.jump_size * r.row(0).transpose();
    }
    eye += jump;
    out.push_back(CameraPose::from_rt(r, -(r * eye), time));
  }
  return out;
}

inline std::vector<std::array<std::uint8_t, 4>> contact_labels(const std::vector<PoseParams>& poses,
                                                              const Skeleton& skel, const GroundPlane& floor) {
  const int n = static_cast<int>(poses.size());
  std::vector<Joints> j(n);
  for (int t = 0; t < n; ++t) j[t] = forward_kinematics(poses[t], skel);
  std::vector<std::array<std::uint8_t, 4>> out(n);
  for (int t = 0; t < n; ++t) {
    const int a = t + 1 < n ? t : t - 1;
    for (int k = 0; k < 4; ++k) {
      const int f = skel.foot_joints[k];
      const double h = std::abs(point_plane_distance(j[t].row(f).transpose(), floor));
      const double speed = n > 1 ? (j[a + 1].row(f) - j[a].row(f)).norm() : 0.0;
      out[t][k] = h < 0.02 && speed < 0.01 ? 1 : 0;
    }
  }
  return out;
}

/// Frames kept per person: dropout removes contiguous runs no longer than max_gap
/// until the requested fraction is gone. First and last frames are kept.
inline std::vector<std::uint8_t> dropout_mask(int frames, double fraction, int max_gap, std::mt19937_64& rng) {
  std::vector<std::uint8_t> keep(frames, 1);
  const int target = static_cast<int>(std::lround(fraction * frames));
  int dropped = 0;
  std::uniform_int_distribution<int> start_d(1, std::max(1, frames - 2));
  std::uniform_int_distribution<int> len_d(1, std::max(1, max_gap));
  for (int attempt = 0; dropped < target && attempt < 100000; ++attempt) {
    const int s = start_d(rng);
    const int len = std::min(len_d(rng), target - dropped);
    bool ok = true;
    // Gap after merging with neighbours must still respect max_gap, and the
    // track ends stay observed.
    int lo = s, hi = s + len - 1;
    if (hi >= frames - 1) ok = false;
    while (ok && lo > 0 && !keep[lo - 1]) --lo;
    while (ok && hi + 1 < frames && !keep[hi + 1]) ++hi;
    if (ok && hi - lo + 1 > max_gap) ok = false;
    if (!ok) continue;
    for (int f = s; f < s + len; ++f) {
      if (keep[f]) {
        keep[f] = 0;
        ++dropped;
      }
    }
  }
  return keep;
}

inline SyntheticScene generate(const SceneConfig& cfg, const Skeleton& skel) {
  cfg.validate();
  SyntheticScene sc;
  sc.config = cfg;
  sc.K = cfg.intrinsics();
  for (const auto& p : cfg.people) {
    sc.gt.push_back(synthesize_walk(p, skel, cfg.frames, cfg.fps));
    int floor = -1;
    for (std::size_t f = 0; f < sc.floors.size(); ++f) {
      if (sc.floors[f].c == p.floor) floor = static_cast<int>(f);
    }
    if (floor < 0) {
      floor = static_cast<int>(sc.floors.size());
      sc.floors.push_back(GroundPlane{0.0, 0.0, p.floor});
    }
    sc.floor_of.push_back(floor);
    sc.contacts.push_back(contact_labels(sc.gt.back(), skel, sc.floors[floor]));
  }
  // Independent streams so that noise settings never change the ground truth.
  std::mt19937_64 cam_rng(cfg.seed * 7919 + 17);
  sc.cameras_metric = synthesize_cameras(cfg, sc.gt[0], cam_rng);
  for (const auto& c : sc.cameras_metric) {
    CameraPose w = c;
    w.T = c.T / cfg.alpha_star;
    sc.cameras_written.push_back(w);
  }
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const NoiseSpec& nz = cfg.noise;
  for (std::size_t i = 0; i < cfg.people.size(); ++i) {
    const std::vector<std::uint8_t> keep = dropout_mask(cfg.frames, nz.dropout, nz.max_gap, rng);
    for (int t = 0; t < cfg.frames; ++t) {
      const CameraPose& cam = sc.cameras_metric[t];
      const PoseParams& pw = sc.gt[i][t];
      Detection2D d;
      d.frame = t;
      d.id = static_cast<int>(i);
      const Joints j = forward_kinematics(pw, skel);
      for (int k = 0; k < kNumJoints; ++k) {
        const Vec3 pc = world_to_camera(cam, 1.0, j.row(k).transpose());
        const double nx = n01(rng), ny = n01(rng);
        const bool occluded = u01(rng) < nz.occlusion;
        if (occluded || !(pc.z() > kDepthEps)) continue;
        const Vec2 px = project(sc.K, pc);
        d.kp(k, 0) = px.x() + nz.pixel_sigma * nx;
        d.kp(k, 1) = px.y() + nz.pixel_sigma * ny;
        d.conf[k] = 1.0;
      }
      PoseParams pc = world_to_camera_pose(pw, cam, 1.0);
      pc.root_orient = so3::log(so3::exp(nz.init_rot * Vec3(n01(rng), n01(rng), n01(rng))) * so3::exp(pc.root_orient));
      for (int k = 0; k < kNumJoints; ++k) {
        for (int a = 0; a < 3; ++a) pc.body_pose(k, a) += nz.init_pose * n01(rng);
      }
      for (int k = 0; k < kNumShape; ++k) pc.shape[k] += nz.init_shape * n01(rng);
      pc.root_transl.x() += nz.init_xy * n01(rng);
      pc.root_transl.y() += nz.init_xy * n01(rng);
      pc.root_transl.z() *= 1.0 + nz.init_depth * n01(rng);
      d.pose = pc;
      d.root3d = pc.root_transl;
      if (keep[t]) sc.detections.push_back(d);
    }
  }
  std::stable_sort(sc.detections.begin(), sc.detections.end(),
                   [](const Detection2D& a, const Detection2D& b) { return a.frame < b.frame; });
  return sc;
}

// ---------------------------------------------------------------------------
// Presets.

inline std::vector<std::string> preset_names() {
  return {"follow-walk", "orbit-two-people", "colinear-degenerate", "crossing", "two-floor", "lateral-static"};
}

inline SceneConfig make_preset(const std::string& name, std::uint64_t seed = 0, double alpha_star = 2.0,
                               double pixel_sigma = 0.0) {
  SceneConfig c;
  c.name = name;
  c.seed = seed;
  c.alpha_star = alpha_star;
  c.noise.pixel_sigma = pixel_sigma;
  PersonSpec a, b;
  if (name == "follow-walk") {
    a.family = "line";
    a.yaw = -std::numbers::pi / 2;  // walk along +x
    a.speed = 1.3;
    a.start = Vec2(-2.0, 0.0);
    a.shape = {0.5, -0.3, 0.2, 0.0};
    b.family = "line";
    b.yaw = std::numbers::pi / 4;  // walk diagonally back and left
    b.speed = 1.0;
    b.start = Vec2(1.5, 2.0);
    b.phase = 0.3;
    b.shape = {-0.4, 0.2, 0.0, 0.3};
    c.people = {a, b};
    c.camera.family = "follow";
    c.camera.position = Vec3(0.5, -5.5, 0.6);
  } else if (name == "orbit-two-people") {
    a.family = "circle";
    a.start = Vec2(-1.0, 0.0);
    a.yaw = 0.0;
    a.radius = 2.0;
    a.speed = 1.0;
    b.family = "sinusoid-walk";
    b.start = Vec2(1.0, -1.5);
    b.yaw = 0.0;
    b.speed = 0.9;
    b.phase = 0.5;
    c.people = {a, b};
    c.camera.family = "orbit";
    c.camera.position = Vec3(0, 0, 0);
    c.camera.radius = 7.0;
    c.camera.height = 1.6;
    c.camera.angular_speed = 0.25;
    c.camera.target = Vec3(0, 0, 1.0);
  } else if (name == "colinear-degenerate") {
    a.family = "line";
    a.yaw = 0.0;  // walk along +y, straight away from the camera
    a.speed = 1.2;
    a.start = Vec2(0.0, 0.0);
    c.people = {a};
    c.camera.family = "follow";
    c.camera.position = Vec3(0.0, -4.0, 0.5);
  } else if (name == "crossing") {
    // Two people walk across each other at different depths while the
    // camera tracks sideways with sudden jumps.
    a.family = "line";
    a.yaw = -std::numbers::pi / 2;
    a.speed = 1.2;
    a.start = Vec2(-2.0, 0.0);
    b.family = "line";
    b.yaw = std::numbers::pi / 2;
    b.speed = 1.2;
    b.start = Vec2(2.0, 1.2);
    b.phase = 0.25;
    c.people = {a, b};
    c.camera.family = "lateral-track";
    c.camera.position = Vec3(0.0, -6.0, 1.5);
    c.camera.target = Vec3(0.0, 0.6, 1.0);
    c.camera.velocity = Vec3(0.8, 0.0, 0.0);
    c.camera.jitter_rot = 0.004;
    c.camera.jump_every = 6;
    c.camera.jump_size = 0.5;
  } else if (name == "two-floor") {
    a.family = "line";
    a.yaw = -std::numbers::pi / 2;
    a.speed = 1.0;
    a.start = Vec2(-1.5, 0.0);
    b.family = "line";
    b.yaw = std::numbers::pi / 2;
    b.speed = 1.0;
    b.start = Vec2(1.5, 3.0);
    b.floor = 3.0;
    b.phase = 0.4;
    PersonSpec d = a;
    d.start = Vec2(-1.0, 1.2);
    d.phase = 0.7;
    c.people = {a, b, d};
    c.camera.family = "static";
    c.camera.position = Vec3(0.0, -9.0, 2.5);
    c.camera.target = Vec3(0.0, 1.5, 1.8);
  } else if (name == "lateral-static") {
    a.family = "line";
    a.speed = 0.0;
    a.start = Vec2(0.0, 0.0);
    a.yaw = 0.3;
    c.people = {a};
    c.camera.family = "lateral-track";
    c.camera.position = Vec3(-1.5, -5.0, 1.4);
    c.camera.target = Vec3(0.0, 0.0, 1.0);
    c.camera.velocity = Vec3(1.0, 0.0, 0.0);
  } else {
    throw ValidationError("unknown preset '" + name + "'");
  }
  return c;
}

// ---------------------------------------------------------------------------
// Scene config text (INI sections).

inline std::string vec_text(const Eigen::VectorXd& v) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) s += ' ';
    s += io::format_double(v[i]);
  }
  return s;
}

inline std::string format_scene_config(const SceneConfig& c) {
  std::string o;
  auto kv = [&](const std::string& k, const std::string& v) { o += k + " = " + v + "\n"; };
  auto num = [](double v) { return io::format_double(v); };
  o += "[scene]\n";
  kv("name", c.name);
  kv("frames", std::to_string(c.frames));
  kv("fps", num(c.fps));
  kv("width", std::to_string(c.width));
  kv("height", std::to_string(c.height));
  kv("focal", num(c.focal));
  kv("alpha_star", num(c.alpha_star));
  kv("seed", std::to_string(c.seed));
  kv("people", std::to_string(c.people.size()));
  o += "\n[camera]\n";
  kv("family", c.camera.family);
  kv("position", vec_text(c.camera.position));
  kv("target", vec_text(c.camera.target));
  kv("velocity", vec_text(c.camera.velocity));
  kv("radius", num(c.camera.radius));
  kv("height", num(c.camera.height));
  kv("angular_speed", num(c.camera.angular_speed));
  kv("jitter_rot", num(c.camera.jitter_rot));
  kv("jump_every", std::to_string(c.camera.jump_every));
  kv("jump_size", num(c.camera.jump_size));
  o += "\n[noise]\n";
  kv("pixel_sigma", num(c.noise.pixel_sigma));
  kv("occlusion", num(c.noise.occlusion));
  kv("dropout", num(c.noise.dropout));
  kv("max_gap", std::to_string(c.noise.max_gap));
  kv("init_rot", num(c.noise.init_rot));
  kv("init_pose", num(c.noise.init_pose));
  kv("init_shape", num(c.noise.init_shape));
  kv("init_xy", num(c.noise.init_xy));
  kv("init_depth", num(c.noise.init_depth));
  for (std::size_t i = 0; i < c.people.size(); ++i) {
    const PersonSpec& p = c.people[i];
    o += "\n[person" + std::to_string(i) + "]\n";
    kv("family", p.family);
    kv("speed", num(p.speed));
    kv("start", vec_text(p.start));
    kv("yaw", num(p.yaw));
    kv("phase", num(p.phase));
    kv("radius", num(p.radius));
    kv("amplitude", num(p.amplitude));
    kv("wavelength", num(p.wavelength));
    kv("floor", num(p.floor));
    kv("shape", vec_text(Eigen::Vector4d(p.shape[0], p.shape[1], p.shape[2], p.shape[3])));
  }
  return o;
}

namespace synth_detail {
inline double get_num(const boost::property_tree::ptree& t, const std::string& key, double def) {
  const auto v = t.get_optional<std::string>(key);
  if (!v) return def;
  double out;
  if (!io::parse_double(io::trim(*v), out)) throw ValidationError("bad number for '" + key + "': " + *v);
  return out;
}
inline Eigen::VectorXd get_vec(const boost::property_tree::ptree& t, const std::string& key, const Eigen::VectorXd& def) {
  const auto v = t.get_optional<std::string>(key);
  if (!v) return def;
  const auto f = io::split_ws(io::trim(*v));
  if (static_cast<Eigen::Index>(f.size()) != def.size()) throw ValidationError("'" + key + "' needs " + std::to_string(def.size()) + " numbers");
  Eigen::VectorXd out(def.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!io::parse_double(f[i], out[i])) throw ValidationError("bad number in '" + key + "'");
  }
  return out;
}
}  // namespace synth_detail

inline SceneConfig parse_scene_config(const std::string& text) {
  using synth_detail::get_num;
  using synth_detail::get_vec;
  boost::property_tree::ptree t;
  std::istringstream in(text);
  try {
    boost::property_tree::read_ini(in, t);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ValidationError(std::string("scene config: ") + e.what());
  }
  SceneConfig c;
  c.name = t.get<std::string>("scene.name", c.name);
  c.frames = static_cast<int>(get_num(t, "scene.frames", c.frames));
  c.fps = get_num(t, "scene.fps", c.fps);
  c.width = static_cast<int>(get_num(t, "scene.width", c.width));
  c.height = static_cast<int>(get_num(t, "scene.height", c.height));
  c.focal = get_num(t, "scene.focal", c.focal);
  c.alpha_star = get_num(t, "scene.alpha_star", c.alpha_star);
  c.seed = t.get<std::uint64_t>("scene.seed", 0);
  const int n = static_cast<int>(get_num(t, "scene.people", 0));
  CameraSpec& cam = c.camera;
  cam.family = t.get<std::string>("camera.family", cam.family);
  cam.position = get_vec(t, "camera.position", cam.position);
  cam.target = get_vec(t, "camera.target", cam.target);
  cam.velocity = get_vec(t, "camera.velocity", cam.velocity);
  cam.radius = get_num(t, "camera.radius", cam.radius);
  cam.height = get_num(t, "camera.height", cam.height);
  cam.angular_speed = get_num(t, "camera.angular_speed", cam.angular_speed);
  cam.jitter_rot = get_num(t, "camera.jitter_rot", cam.jitter_rot);
  cam.jump_every = static_cast<int>(get_num(t, "camera.jump_every", cam.jump_every));
  cam.jump_size = get_num(t, "camera.jump_size", cam.jump_size);
  NoiseSpec& nz = c.noise;
  nz.pixel_sigma = get_num(t, "noise.pixel_sigma", nz.pixel_sigma);
  nz.occlusion = get_num(t, "noise.occlusion", nz.occlusion);
  nz.dropout = get_num(t, "noise.dropout", nz.dropout);
  nz.max_gap = static_cast<int>(get_num(t, "noise.max_gap", nz.max_gap));
  nz.init_rot = get_num(t, "noise.init_rot", nz.init_rot);
  nz.init_pose = get_num(t, "noise.init_pose", nz.init_pose);
  nz.init_shape = get_num(t, "noise.init_shape", nz.init_shape);
  nz.init_xy = get_num(t, "noise.init_xy", nz.init_xy);
  nz.init_depth = get_num(t, "noise.init_depth", nz.init_depth);
  for (int i = 0; i < n; ++i) {
    const std::string s = "person" + std::to_string(i) + ".";
    PersonSpec p;
    p.family = t.get<std::string>(s + "family", p.family);
    p.speed = get_num(t, s + "speed", p.speed);
    p.start = get_vec(t, s + "start", p.start);
    p.yaw = get_num(t, s + "yaw", p.yaw);
    p.phase = get_num(t, s + "phase", p.phase);
    p.radius = get_num(t, s + "radius", p.radius);
    p.amplitude = get_num(t, s + "amplitude", p.amplitude);
    p.wavelength = get_num(t, s + "wavelength", p.wavelength);
    p.floor = get_num(t, s + "floor", p.floor);
    const Eigen::VectorXd sh = get_vec(t, s + "shape", Eigen::Vector4d::Zero());
    for (int k = 0; k < 4; ++k) p.shape[k] = sh[k];
    c.people.push_back(p);
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Scene directory: cameras.tum, detections.ndj, gt_world.ndj, scene_config.

struct SceneFiles {
  std::string config_text;
  std::vector<CameraPose> cameras;  // written (scale-ambiguous) poses
  std::vector<Detection2D> detections;
  WorldTrajectory gt;

  std::string config_hash() const { return hex64(fnv1a(config_text)); }
  SceneConfig config() const { return parse_scene_config(config_text); }
};

inline SceneFiles scene_files(const SyntheticScene& sc, const Skeleton& skel) {
  SceneFiles f;
  f.config_text = format_scene_config(sc.config);
  f.cameras = sc.cameras_written;
  f.detections = sc.detections;
  nlohmann::json floors = nlohmann::json::array();
  for (const auto& g : sc.floors) floors.push_back({g.a, g.b, g.c});
  f.gt.header = {{"config_hash", f.config_hash()},
                 {"skeleton_hash", skel.fingerprint()},
                 {"fps", sc.config.fps},
                 {"alpha_star", sc.config.alpha_star},
                 {"floors", floors},
                 {"floor_of", sc.floor_of}};
  for (int t = 0; t < sc.config.frames; ++t) {
    for (std::size_t i = 0; i < sc.gt.size(); ++i) {
      TrajectoryRecord r = make_record(t, static_cast<int>(i), 0, sc.gt[i][t], skel);
      r.contact = sc.contacts[i][t];
      f.gt.records.push_back(std::move(r));
    }
  }
  return f;
}

namespace synth_detail {
inline std::string camera_header(const SceneFiles& f) {
  return "# world-to-camera poses; translations in SLAM units\n# config_hash " + f.config_hash() + "\n";
}
}  // namespace synth_detail

inline void write_scene_files(const SceneFiles& f, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create " + dir.string() + ": " + ec.message());
  io::write_file(dir / "scene_config", f.config_text);
  write_camera_trajectory(dir / "cameras.tum", f.cameras, synth_detail::camera_header(f));
  write_detections(dir / "detections.ndj", f.detections);
  write_trajectory(dir / "gt_world.ndj", f.gt);
}

inline void write_scene(const SyntheticScene& sc, const Skeleton& skel, const std::filesystem::path& dir) {
  write_scene_files(scene_files(sc, skel), dir);
}

inline SceneFiles load_scene(const std::filesystem::path& dir) {
  for (const char* name : {"scene_config", "cameras.tum", "detections.ndj", "gt_world.ndj"}) {
    if (!std::filesystem::exists(dir / name)) throw ValidationError("missing " + (dir / name).string());
  }
  SceneFiles f;
  f.config_text = io::read_file(dir / "scene_config");
  f.cameras = load_camera_trajectory(dir / "cameras.tum");
  f.detections = load_detections(dir / "detections.ndj");
  f.gt = load_trajectory(dir / "gt_world.ndj");
  return f;
}

}  // namespace worldpose

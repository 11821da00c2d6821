#pragma once

#include "worldpose/body.hpp"
#include "worldpose/common.hpp"
#include "worldpose/so3.hpp"
#include "worldpose/text_io.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

namespace worldpose {

inline constexpr double kDepthEps = 1e-4;

struct CameraIntrinsics {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw ValidationError("focal lengths must be positive");
  }
};

/// Focal length equal to the image diagonal, principal point at the center.
inline CameraIntrinsics default_intrinsics(int width, int height) {
  const double diag = std::hypot(static_cast<double>(width), static_cast<double>(height));
  return {diag, diag, 0.5 * width, 0.5 * height};
}

/// World-to-camera transform p_c = R p_w + alpha T. The quaternion is kept as
/// read so that files round-trip exactly; R is its normalized rotation.
struct CameraPose {
  double timestamp = 0.0;
  Eigen::Quaterniond q = Eigen::Quaterniond::Identity();
  Vec3 T = Vec3::Zero();
  Mat3 R = Mat3::Identity();

  static CameraPose from_rt(const Mat3& r, const Vec3& t, double timestamp = 0.0) {
    CameraPose c;
    c.timestamp = timestamp;
    Eigen::Quaterniond q(r);
    q.normalize();
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    c.q = q;
    c.R = q.toRotationMatrix();
    c.T = t;
    return c;
  }

  static CameraPose identity(double timestamp = 0.0) { return from_rt(Mat3::Identity(), Vec3::Zero(), timestamp); }

  void validate() const {
    const double orth = (R * R.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (!(orth < 1e-9) || !(std::abs(R.determinant() - 1.0) < 1e-9)) {
      throw ValidationError("camera rotation is not a proper rotation");
    }
    if (!T.allFinite()) throw ValidationError("camera translation is not finite");
  }
};

inline Vec3 world_to_camera(const CameraPose& cam, double alpha, const Vec3& p) {
  return cam.R * p + alpha * cam.T;
}

inline Vec3 camera_to_world(const CameraPose& cam, double alpha, const Vec3& p_cam) {
  return cam.R.transpose() * (p_cam - alpha * cam.T);
}

inline Vec3 camera_center(const CameraPose& cam, double alpha) {
  return -alpha * (cam.R.transpose() * cam.T);
}

inline Vec2 project(const CameraIntrinsics& k, const Vec3& p) {
  if (!(p.z() > kDepthEps)) throw BehindCameraError("point at depth " + io::format_double(p.z()) + " is behind the camera");
  return {k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy};
}

/// Lifts a camera-frame body estimate into the world frame given the camera
/// pose and scale. Body pose and shape are copied.
inline PoseParams init_world_pose(const PoseParams& p_cam, const CameraPose& cam, double alpha) {
  PoseParams out = p_cam;
  out.root_orient = so3::log(cam.R.transpose() * so3::exp(p_cam.root_orient));
  out.root_transl = cam.R.transpose() * p_cam.root_transl - alpha * (cam.R.transpose() * cam.T);
  return out;
}

/// Inverse of init_world_pose.
inline PoseParams world_to_camera_pose(const PoseParams& p_world, const CameraPose& cam, double alpha) {
  PoseParams out = p_world;
  out.root_orient = so3::log(cam.R * so3::exp(p_world.root_orient));
  out.root_transl = cam.R * p_world.root_transl + alpha * cam.T;
  return out;
}

// ---------------------------------------------------------------------------
// TUM trajectory files: `timestamp tx ty tz qx qy qz qw`.

struct TrajectoryOptions {
  // The file stores camera-to-world poses and must be inverted on load.
  bool camera_to_world = false;
  double unit_tolerance = 1e-3;
};

inline std::vector<CameraPose> parse_camera_trajectory(std::string_view text, const std::string& source,
                                                       const TrajectoryOptions& opt = {}) {
  std::vector<CameraPose> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    const auto body = io::strip_comment(line);
    if (body.empty()) continue;
    const auto f = io::split_ws(body);
    if (f.size() != 8) throw ParseError(source, line_no, "expected 8 fields, got " + std::to_string(f.size()));
    double v[8];
    for (int i = 0; i < 8; ++i) {
      if (!io::parse_double(f[i], v[i]) || !std::isfinite(v[i])) {
        throw ParseError(source, line_no, "bad number '" + std::string(f[i]) + "'");
      }
    }
    CameraPose c;
    c.timestamp = v[0];
    c.T = Vec3(v[1], v[2], v[3]);
    c.q = Eigen::Quaterniond(v[7], v[4], v[5], v[6]);
    const double n = c.q.norm();
    if (!(n > 0.0)) throw ParseError(source, line_no, "zero quaternion");
    if (std::abs(n - 1.0) > opt.unit_tolerance) {
      log::warn(source + ":" + std::to_string(line_no) + ": quaternion norm " + io::format_double(n) +
                " renormalized");
    }
    c.R = c.q.normalized().toRotationMatrix();
    if (opt.camera_to_world) {
      const Mat3 r = c.R.transpose();
      const Vec3 t = -(r * c.T);
      c = CameraPose::from_rt(r, t, c.timestamp);
    }
    out.push_back(c);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const CameraPose& a, const CameraPose& b) { return a.timestamp < b.timestamp; });
  return out;
}

inline std::vector<CameraPose> load_camera_trajectory(const std::filesystem::path& path,
                                                      const TrajectoryOptions& opt = {}) {
  return parse_camera_trajectory(io::read_file(path), path.string(), opt);
}

inline std::string format_camera_trajectory(const std::vector<CameraPose>& cams, const std::string& header = {}) {
  std::string out = header;
  out += "# timestamp tx ty tz qx qy qz qw\n";
  for (const auto& c : cams) {
    const double v[8] = {c.timestamp, c.T.x(), c.T.y(), c.T.z(), c.q.x(), c.q.y(), c.q.z(), c.q.w()};
    for (int i = 0; i < 8; ++i) {
      if (i) out += ' ';
      out += io::format_double(v[i]);
    }
    out += '\n';
  }
  return out;
}

inline void write_camera_trajectory(const std::filesystem::path& path, const std::vector<CameraPose>& cams,
                                    const std::string& header = {}) {
  io::write_file(path, format_camera_trajectory(cams, header));
}

}  // namespace worldpose

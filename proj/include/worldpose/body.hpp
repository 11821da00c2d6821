#pragma once

// Joints-only articulated body: 22-joint kinematic tree with linear shape
// blending on bone offsets. Coordinates are z-up; the rest pose faces +y.

#include "worldpose/common.hpp"
#include "worldpose/so3.hpp"
#include "worldpose/text_io.hpp"

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

namespace worldpose {

inline constexpr int kNumJoints = 22;
inline constexpr int kNumShape = 16;
inline constexpr int kPoseDim = 3 + 3 * kNumJoints + kNumShape + 3;  // flat PoseParams

using JointMatrix = Eigen::Matrix<double, kNumJoints, 3, Eigen::RowMajor>;
using Joints = JointMatrix;       // positions, meters
using BoneOffsets = JointMatrix;  // offset of each joint from its parent, parent frame
using BodyPose = JointMatrix;     // per-joint axis-angle, radians
using ShapeVec = Eigen::Matrix<double, kNumShape, 1>;

namespace joint {
enum : int {
  pelvis = 0, left_hip, right_hip, spine1, left_knee, right_knee, spine2,
  left_ankle, right_ankle, spine3, left_foot, right_foot, neck,
  left_collar, right_collar, head, left_shoulder, right_shoulder,
  left_elbow, right_elbow, left_wrist, right_wrist
};
}

inline constexpr std::array<int, 4> kFootJoints = {joint::left_ankle, joint::right_ankle,
                                                   joint::left_foot, joint::right_foot};

struct PoseParams {
  Vec3 root_orient = Vec3::Zero();
  BodyPose body_pose = BodyPose::Zero();
  ShapeVec shape = ShapeVec::Zero();
  Vec3 root_transl = Vec3::Zero();

  bool finite() const {
    return root_orient.allFinite() && body_pose.allFinite() && shape.allFinite() &&
           root_transl.allFinite();
  }
};

/// Flat layout: root orient (3), body pose (66), shape (16), root translation (3).
inline Eigen::Matrix<double, kPoseDim, 1> flatten(const PoseParams& p) {
  Eigen::Matrix<double, kPoseDim, 1> v;
  v.segment<3>(0) = p.root_orient;
  v.segment<3 * kNumJoints>(3) = Eigen::Map<const Eigen::Matrix<double, 3 * kNumJoints, 1>>(p.body_pose.data());
  v.segment<kNumShape>(3 + 3 * kNumJoints) = p.shape;
  v.segment<3>(3 + 3 * kNumJoints + kNumShape) = p.root_transl;
  return v;
}

inline PoseParams unflatten(const double* v) {
  PoseParams p;
  p.root_orient = Eigen::Map<const Vec3>(v);
  p.body_pose = Eigen::Map<const BodyPose>(v + 3);
  p.shape = Eigen::Map<const ShapeVec>(v + 3 + 3 * kNumJoints);
  p.root_transl = Eigen::Map<const Vec3>(v + 3 + 3 * kNumJoints + kNumShape);
  return p;
}

struct Skeleton {
  std::array<int, kNumJoints> parents{};
  BoneOffsets template_offsets = BoneOffsets::Zero();
  // Maps shape coefficients to bone-offset deltas; row 3*j+k is joint j, axis k.
  Eigen::Matrix<double, 3 * kNumJoints, kNumShape> shape_basis =
      Eigen::Matrix<double, 3 * kNumJoints, kNumShape>::Zero();
  std::array<int, 4> foot_joints = kFootJoints;

  void validate() const {
    if (parents[0] != -1) throw StructuralError("joint 0 must be the root (parent -1)");
    for (int j = 1; j < kNumJoints; ++j) {
      if (parents[j] < 0 || parents[j] >= j) {
        throw StructuralError("joint " + std::to_string(j) +
                              " must have a parent with a smaller index (got " +
                              std::to_string(parents[j]) + ")");
      }
    }
    if (!template_offsets.allFinite()) throw StructuralError("non-finite template offsets");
    if (!shape_basis.allFinite()) throw StructuralError("non-finite shape basis");
    for (int f : foot_joints) {
      if (f < 0 || f >= kNumJoints) throw StructuralError("foot joint index out of range");
    }
  }

  std::string fingerprint() const {
    std::string s;
    for (int j = 0; j < kNumJoints; ++j) {
      s += std::to_string(parents[j]);
      for (int k = 0; k < 3; ++k) s += ' ' + io::format_double(template_offsets(j, k));
      s += '\n';
    }
    for (Eigen::Index i = 0; i < shape_basis.size(); ++i) s += io::format_double(shape_basis.data()[i]) + ' ';
    return hex64(fnv1a(s));
  }
};

inline const std::array<const char*, kNumJoints>& joint_names() {
  static const std::array<const char*, kNumJoints> names = {
      "pelvis", "left_hip", "right_hip", "spine1", "left_knee", "right_knee",
      "spine2", "left_ankle", "right_ankle", "spine3", "left_foot", "right_foot",
      "neck", "left_collar", "right_collar", "head", "left_shoulder", "right_shoulder",
      "left_elbow", "right_elbow", "left_wrist", "right_wrist"};
  return names;
}

/// Built-in 1.7 m figure. Left-side joints sit at -x.
inline Skeleton default_skeleton() {
  Skeleton s;
  s.parents = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19};
  s.template_offsets << 0.0, 0.0, 0.0,       //
      -0.09, 0.0, -0.08,                     // left_hip
      0.09, 0.0, -0.08,                      // right_hip
      0.0, 0.0, 0.10,                        // spine1
      0.0, 0.0, -0.40,                       // left_knee
      0.0, 0.0, -0.40,                       // right_knee
      0.0, 0.0, 0.13,                        // spine2
      0.0, 0.0, -0.40,                       // left_ankle
      0.0, 0.0, -0.40,                       // right_ankle
      0.0, 0.0, 0.05,                        // spine3
      0.0, 0.12, -0.05,                      // left_foot
      0.0, 0.12, -0.05,                      // right_foot
      0.0, 0.0, 0.22,                        // neck
      -0.07, 0.0, 0.15,                      // left_collar
      0.07, 0.0, 0.15,                       // right_collar
      0.0, 0.0, 0.10,                        // head
      -0.11, 0.0, 0.02,                      // left_shoulder
      0.11, 0.0, 0.02,                       // right_shoulder
      -0.26, 0.0, 0.0,                       // left_elbow
      0.26, 0.0, 0.0,                        // right_elbow
      -0.25, 0.0, 0.0,                       // left_wrist
      0.25, 0.0, 0.0;                        // right_wrist

  auto set = [&](int j, int coeff, const Vec3& d) {
    for (int k = 0; k < 3; ++k) s.shape_basis(3 * j + k, coeff) = d[k];
  };
  for (int j = 1; j < kNumJoints; ++j) {
    const Vec3 o = s.template_offsets.row(j).transpose();
    set(j, 0, 0.06 * o);  // overall size
  }
  for (int j : {joint::left_knee, joint::right_knee, joint::left_ankle, joint::right_ankle}) {
    set(j, 1, 0.05 * Vec3(s.template_offsets.row(j).transpose()));  // leg length
  }
  for (int j : {joint::spine1, joint::spine2, joint::spine3, joint::neck, joint::head}) {
    set(j, 2, 0.05 * Vec3(s.template_offsets.row(j).transpose()));  // torso length
  }
  for (int j : {joint::left_elbow, joint::right_elbow, joint::left_wrist, joint::right_wrist}) {
    set(j, 3, 0.05 * Vec3(s.template_offsets.row(j).transpose()));  // arm length
  }
  set(joint::left_collar, 4, Vec3(-0.01, 0.0, 0.0));
  set(joint::right_collar, 4, Vec3(0.01, 0.0, 0.0));
  set(joint::left_hip, 5, Vec3(-0.01, 0.0, 0.0));
  set(joint::right_hip, 5, Vec3(0.01, 0.0, 0.0));
  // Remaining coefficients: small fixed smooth patterns over the tree.
  for (int c = 6; c < kNumShape; ++c) {
    for (int j = 1; j < kNumJoints; ++j) {
      for (int k = 0; k < 3; ++k) {
        s.shape_basis(3 * j + k, c) = 0.004 * std::sin(1.3 * (j + 1) * (c + 1) + 0.7 * k);
      }
    }
  }
  return s;
}

inline BoneOffsets shape_to_bones(const ShapeVec& beta, const Skeleton& skel) {
  BoneOffsets out = skel.template_offsets;
  const Eigen::Matrix<double, 3 * kNumJoints, 1> delta = skel.shape_basis * beta;
  out += Eigen::Map<const BoneOffsets>(delta.data());
  return out;
}

inline ShapeVec shape_to_bones_vjp(const BoneOffsets& grad_bones, const Skeleton& skel) {
  const Eigen::Map<const Eigen::Matrix<double, 3 * kNumJoints, 1>> g(grad_bones.data());
  return skel.shape_basis.transpose() * g;
}

struct FkCache {
  std::array<Mat3, kNumJoints> local;   // exp(body_pose[j])
  std::array<Mat3, kNumJoints> global;  // world rotation of joint j's frame
  Mat3 root;                            // exp(root_orient)
};

/// Joint positions from root orientation, per-joint rotations, shaped bones and
/// root translation. Joint 0's frame is exp(root_orient) * exp(body_pose[0]).
inline Joints forward_kinematics(const Vec3& root_orient, const BodyPose& body,
                                 const BoneOffsets& bones, const Vec3& transl,
                                 const std::array<int, kNumJoints>& parents,
                                 FkCache* cache = nullptr) {
  FkCache local_cache;
  FkCache& c = cache ? *cache : local_cache;
  Joints out;
  c.root = so3::exp(root_orient);
  for (int j = 0; j < kNumJoints; ++j) c.local[j] = so3::exp(body.row(j).transpose());
  c.global[0] = c.root * c.local[0];
  out.row(0) = (transl + bones.row(0).transpose()).transpose();
  for (int j = 1; j < kNumJoints; ++j) {
    const int p = parents[j];
    c.global[j] = c.global[p] * c.local[j];
    out.row(j) = out.row(p) + (c.global[p] * bones.row(j).transpose()).transpose();
  }
  return out;
}

struct FkGradient {
  Vec3 root_orient = Vec3::Zero();
  BodyPose body = BodyPose::Zero();
  BoneOffsets bones = BoneOffsets::Zero();
  Vec3 transl = Vec3::Zero();
};

/// Reverse pass of forward_kinematics for an adjoint on the joint positions.
inline FkGradient forward_kinematics_vjp(const Vec3& root_orient, const BodyPose& body,
                                         const BoneOffsets& bones,
                                         const std::array<int, kNumJoints>& parents,
                                         const FkCache& c, const Joints& grad_joints) {
  FkGradient g;
  Joints gp = grad_joints;
  std::array<Mat3, kNumJoints> gG;
  for (auto& m : gG) m.setZero();
  for (int j = kNumJoints - 1; j >= 1; --j) {
    const int p = parents[j];
    const Vec3 gpj = gp.row(j).transpose();
    gp.row(p) += gp.row(j);
    gG[p] += gpj * bones.row(j);
    g.bones.row(j) = (c.global[p].transpose() * gpj).transpose();
    gG[p] += gG[j] * c.local[j].transpose();
    const Mat3 g_local = c.global[p].transpose() * gG[j];
    g.body.row(j) = so3::exp_vjp(body.row(j).transpose(), c.local[j], g_local).transpose();
  }
  g.transl = gp.row(0).transpose();
  g.bones.row(0) = gp.row(0);
  const Mat3 g_root = gG[0] * c.local[0].transpose();
  g.root_orient = so3::exp_vjp(root_orient, c.root, g_root);
  const Mat3 g_local0 = c.root.transpose() * gG[0];
  g.body.row(0) = so3::exp_vjp(body.row(0).transpose(), c.local[0], g_local0).transpose();
  return g;
}

inline Joints forward_kinematics(const PoseParams& pose, const Skeleton& skel) {
  return forward_kinematics(pose.root_orient, pose.body_pose, shape_to_bones(pose.shape, skel),
                            pose.root_transl, skel.parents);
}

/// Gradient of a scalar loss with respect to every PoseParams field.
struct PoseGradient {
  Vec3 root_orient = Vec3::Zero();
  BodyPose body_pose = BodyPose::Zero();
  ShapeVec shape = ShapeVec::Zero();
  Vec3 root_transl = Vec3::Zero();
};

inline PoseGradient forward_kinematics_vjp(const PoseParams& pose, const Skeleton& skel,
                                           const Joints& grad_joints) {
  FkCache cache;
  const BoneOffsets bones = shape_to_bones(pose.shape, skel);
  forward_kinematics(pose.root_orient, pose.body_pose, bones, pose.root_transl, skel.parents, &cache);
  const FkGradient g = forward_kinematics_vjp(pose.root_orient, pose.body_pose, bones, skel.parents,
                                              cache, grad_joints);
  PoseGradient out;
  out.root_orient = g.root_orient;
  out.body_pose = g.body;
  out.shape = shape_to_bones_vjp(g.bones, skel);
  out.root_transl = g.transl;
  return out;
}

/// Rotations along the SO(3) geodesic, translation linearly, shape from `a`.
inline PoseParams interpolate_pose(const PoseParams& a, const PoseParams& b, double u) {
  if (u <= 0.0) return a;
  if (u >= 1.0) return b;
  PoseParams out;
  out.root_orient = so3::slerp(a.root_orient, b.root_orient, u);
  for (int j = 0; j < kNumJoints; ++j) {
    out.body_pose.row(j) =
        so3::slerp(a.body_pose.row(j).transpose(), b.body_pose.row(j).transpose(), u).transpose();
  }
  out.shape = a.shape;
  out.root_transl = (1.0 - u) * a.root_transl + u * b.root_transl;
  return out;
}

// ---------------------------------------------------------------------------
// Skeleton files: a text table `index parent dx dy dz` plus a binary shape basis.

inline Skeleton load_skeleton(const std::filesystem::path& table_path,
                              const std::filesystem::path& basis_path) {
  Skeleton s;
  std::array<bool, kNumJoints> seen{};
  const std::string text = io::read_file(table_path);
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string_view line(text.data() + pos, (nl == std::string::npos ? text.size() : nl) - pos);
    pos = (nl == std::string::npos) ? text.size() + 1 : nl + 1;
    ++line_no;
    const auto body = io::strip_comment(line);
    if (body.empty()) continue;
    const auto f = io::split_ws(body);
    if (f.size() != 5) throw ParseError(table_path.string(), line_no, "expected 5 fields");
    long long idx = 0, parent = 0;
    if (!io::parse_int(f[0], idx) || !io::parse_int(f[1], parent)) {
      throw ParseError(table_path.string(), line_no, "bad joint index");
    }
    if (idx < 0 || idx >= kNumJoints) {
      throw StructuralError("skeleton table has joint index " + std::to_string(idx) +
                            "; expected exactly " + std::to_string(kNumJoints) + " joints");
    }
    if (seen[idx]) throw ParseError(table_path.string(), line_no, "duplicate joint index");
    seen[idx] = true;
    s.parents[idx] = static_cast<int>(parent);
    for (int k = 0; k < 3; ++k) {
      double v;
      if (!io::parse_double(f[2 + k], v)) throw ParseError(table_path.string(), line_no, "bad offset");
      s.template_offsets(idx, k) = v;
    }
  }
  for (int j = 0; j < kNumJoints; ++j) {
    if (!seen[j]) throw StructuralError("skeleton table is missing joint " + std::to_string(j));
  }
  const Eigen::MatrixXd basis = io::read_matrix(basis_path);
  if (basis.rows() != 3 * kNumJoints || basis.cols() != kNumShape) {
    throw StructuralError("shape basis must be 66x16, got " + std::to_string(basis.rows()) + "x" +
                          std::to_string(basis.cols()));
  }
  s.shape_basis = basis;
  s.validate();
  return s;
}

inline void write_skeleton(const Skeleton& s, const std::filesystem::path& table_path,
                           const std::filesystem::path& basis_path) {
  std::string out = "# index parent_index dx dy dz  (meters, parent frame, z-up, rest pose faces +y)\n";
  for (int j = 0; j < kNumJoints; ++j) {
    out += std::to_string(j) + ' ' + std::to_string(s.parents[j]);
    for (int k = 0; k < 3; ++k) out += ' ' + io::format_double(s.template_offsets(j, k));
    out += "  # " + std::string(joint_names()[j]) + '\n';
  }
  io::write_file(table_path, out);
  io::write_matrix(basis_path, s.shape_basis);
}

}  // namespace worldpose

#pragma once

#include "worldpose/body.hpp"
#include "worldpose/camera.hpp"
#include "worldpose/ground.hpp"
#include "worldpose/motion_prior.hpp"
#include "worldpose/tracks.hpp"

#include <Eigen/Core>

#include <cmath>
#include <filesystem>
#include <vector>

namespace worldpose {

struct LossWeights {
  double data = 0.001;
  double shape = 0.05;
  double pose = 0.04;
  double smooth = 5.0;
  double cvae = 0.075;
  double stab = 1.0;
  double skate = 100.0;
  double con = 10.0;
  double contact_delta = 0.08;  // m
  double sigma_gm = 100.0;      // px

  void validate() const {
    for (double w : {data, shape, pose, smooth, cvae, stab, skate, con}) {
      if (!(w >= 0.0)) throw ValidationError("loss weights must be nonnegative");
    }
    if (!(contact_delta > 0.0)) throw ValidationError("contact threshold must be positive");
    if (!(sigma_gm > 0.0)) throw ValidationError("robust scale must be positive");
  }
};

// Geman-McClure on a squared residual norm; optionally returns d rho / d r2.
inline double robust_gm(double r2, double sigma, double* d_dr2 = nullptr) {
  const double s2 = sigma * sigma;
  const double den = s2 + r2;
  if (d_dr2) *d_dr2 = s2 * s2 / (den * den);
  return s2 * r2 / den;
}

inline double robust_gm(const Eigen::VectorXd& r, double sigma) { return robust_gm(r.squaredNorm(), sigma); }

/// Reprojection energy of one person in one frame. Joints with zero
/// confidence or at non-positive depth are skipped.
inline double e_data_frame(const Joints& joints, const CameraPose& cam, double alpha, const CameraIntrinsics& k,
                           const Keypoints& kp, const Confidences& conf, double sigma_gm, Joints* grad_joints = nullptr,
                           double* grad_alpha = nullptr) {
  double e = 0.0;
  for (int j = 0; j < kNumJoints; ++j) {
    const double psi = conf[j];
    if (psi == 0.0) continue;
    const Vec3 pc = cam.R * joints.row(j).transpose() + alpha * cam.T;
    if (!(pc.z() > kDepthEps)) continue;
    const double iz = 1.0 / pc.z();
    const Vec2 r(k.fx * pc.x() * iz + k.cx - kp(j, 0), k.fy * pc.y() * iz + k.cy - kp(j, 1));
    double d;
    e += psi * robust_gm(r.squaredNorm(), sigma_gm, grad_joints || grad_alpha ? &d : nullptr);
    if (grad_joints || grad_alpha) {
      const Vec2 gr = 2.0 * psi * d * r;
      const Vec3 gpc(gr.x() * k.fx * iz, gr.y() * k.fy * iz,
                     -(gr.x() * k.fx * pc.x() + gr.y() * k.fy * pc.y()) * iz * iz);
      if (grad_joints) grad_joints->row(j) += (cam.R.transpose() * gpc).transpose();
      if (grad_alpha) *grad_alpha += gpc.dot(cam.T);
    }
  }
  return e;
}

/// Sum of squared joint displacements between consecutive entries.
inline double e_smooth(const std::vector<Joints>& joints, std::vector<Joints>* grad = nullptr) {
  double e = 0.0;
  for (std::size_t t = 0; t + 1 < joints.size(); ++t) {
    const Joints d = joints[t] - joints[t + 1];
    e += d.squaredNorm();
    if (grad) {
      (*grad)[t] += 2.0 * d;
      (*grad)[t + 1] -= 2.0 * d;
    }
  }
  return e;
}

inline double e_shape(const ShapeVec& beta, ShapeVec* grad = nullptr) {
  if (grad) *grad += 2.0 * beta;
  return beta.squaredNorm();
}

inline constexpr int kPoseLatentDim = 32;

/// Affine stand-in for a learned pose latent: zeta = A (theta - mean).
struct PosePriorMap {
  Eigen::Matrix<double, kPoseLatentDim, 3 * kNumJoints> A;
  Eigen::Matrix<double, 3 * kNumJoints, 1> mean;

  static PosePriorMap identity() {
    PosePriorMap m;
    m.A.setZero();
    m.A.leftCols<kPoseLatentDim>().setIdentity();
    m.mean.setZero();
    return m;
  }

  Eigen::Matrix<double, kPoseLatentDim, 1> encode(const BodyPose& theta) const {
    const Eigen::Map<const Eigen::Matrix<double, 3 * kNumJoints, 1>> t(theta.data());
    return A * (t - mean);
  }
};

/// Binary matrix file of shape 33 x 66: the 32 rows of A, then the mean.
inline PosePriorMap load_pose_prior_map(const std::filesystem::path& path) {
  const Eigen::MatrixXd m = io::read_matrix(path);
  if (m.rows() != kPoseLatentDim + 1 || m.cols() != 3 * kNumJoints) {
    throw ValidationError("pose prior map must be 33x66 (A rows, then mean), got " + std::to_string(m.rows()) + "x" +
                          std::to_string(m.cols()));
  }
  if (!m.allFinite()) throw ValidationError("pose prior map has non-finite entries");
  PosePriorMap p;
  p.A = m.topRows<kPoseLatentDim>();
  p.mean = m.row(kPoseLatentDim).transpose();
  return p;
}

inline void write_pose_prior_map(const std::filesystem::path& path, const PosePriorMap& p) {
  Eigen::MatrixXd m(kPoseLatentDim + 1, 3 * kNumJoints);
  m.topRows<kPoseLatentDim>() = p.A;
  m.row(kPoseLatentDim) = p.mean.transpose();
  io::write_matrix(path, m);
}

inline double e_pose(const BodyPose& theta, const PosePriorMap& map, BodyPose* grad = nullptr) {
  const auto zeta = map.encode(theta);
  if (grad) {
    const Eigen::Matrix<double, 3 * kNumJoints, 1> g = 2.0 * map.A.transpose() * zeta;
    *grad += Eigen::Map<const BodyPose>(g.data());
  }
  return zeta.squaredNorm();
}

/// Sum of transition-prior NLL over a rollout: zs[t] drives states[t] -> states[t+1].
inline double e_cvae(const std::vector<Latent>& zs, const std::vector<MotionState>& states, const PriorBackend& prior,
                     std::vector<Latent>* grad_z = nullptr, std::vector<StateVec>* grad_states = nullptr) {
  double e = 0.0;
  for (std::size_t t = 0; t < zs.size(); ++t) {
    if (grad_z && grad_states) {
      e += prior_nll_vjp(zs[t], states[t], prior, 1.0, (*grad_z)[t], (*grad_states)[t]);
    } else {
      e += prior_nll(zs[t], states[t], prior);
    }
  }
  return e;
}

/// Consistency of the stored joint and velocity blocks with the pose blocks.
inline double e_stab(const std::vector<MotionState>& states, const BodyContext& ctx,
                     std::vector<StateVec>* grad = nullptr) {
  const int n = static_cast<int>(states.size());
  double e = 0.0;
  for (int t = 0; t < n; ++t) {
    FkCache cache;
    const Joints fk = state_fk(states[t], ctx, &cache);
    const Joints d = states[t].joints() - fk;
    e += d.squaredNorm();
    if (grad) {
      Eigen::Map<Joints>((*grad)[t].data() + block::joints) += 2.0 * d;
      const FkGradient g = forward_kinematics_vjp(states[t].orient(), states[t].body(), ctx.bones, ctx.parents, cache,
                                                  -2.0 * d);
      (*grad)[t].segment<3>(block::orient) += g.root_orient;
      Eigen::Map<BodyPose>((*grad)[t].data() + block::body) += g.body;
      (*grad)[t].segment<3>(block::transl) += g.transl;
    }
  }
  if (n < 2) return e;
  for (int t = 0; t < n; ++t) {
    const int a = t + 1 < n ? t : t - 1;  // difference taken over frames a, a+1
    const Vec3 dv = states[t].vel() - (states[a + 1].transl() - states[a].transl());
    const Joints dj = states[t].jvel() - (states[a + 1].joints() - states[a].joints());
    e += dv.squaredNorm() + dj.squaredNorm();
    if (grad) {
      (*grad)[t].segment<3>(block::vel) += 2.0 * dv;
      (*grad)[a + 1].segment<3>(block::transl) -= 2.0 * dv;
      (*grad)[a].segment<3>(block::transl) += 2.0 * dv;
      Eigen::Map<Joints>((*grad)[t].data() + block::jvel) += 2.0 * dj;
      Eigen::Map<Joints>((*grad)[a + 1].data() + block::joints) -= 2.0 * dj;
      Eigen::Map<Joints>((*grad)[a].data() + block::joints) += 2.0 * dj;
    }
  }
  return e;
}

// Smoothing keeps the unsquared norm differentiable at zero displacement.
inline constexpr double kSkateEps = 1e-6;

/// Contact-weighted foot displacement between consecutive frames.
inline double e_skate(const std::vector<Joints>& joints, const ContactProbabilities& c,
                      std::vector<Joints>* grad = nullptr, double eps = kSkateEps) {
  double e = 0.0;
  for (std::size_t t = 0; t + 1 < joints.size(); ++t) {
    for (int j = 0; j < kNumJoints; ++j) {
      const double w = c[t][j];
      if (w == 0.0) continue;
      const Vec3 d = (joints[t].row(j) - joints[t + 1].row(j)).transpose();
      const double r = std::sqrt(d.squaredNorm() + eps * eps);
      e += w * (r - eps);
      if (grad) {
        const Vec3 g = w * d / r;
        (*grad)[t].row(j) += g.transpose();
        (*grad)[t + 1].row(j) -= g.transpose();
      }
    }
  }
  return e;
}

/// Hinge on the unsigned point-plane distance beyond delta.
inline double e_contact(const std::vector<Joints>& joints, const ContactProbabilities& c, const GroundPlane& g,
                        double delta, std::vector<Joints>* grad = nullptr, Vec3* grad_g = nullptr) {
  double e = 0.0;
  for (std::size_t t = 0; t < joints.size(); ++t) {
    for (int j = 0; j < kNumJoints; ++j) {
      const double w = c[t][j];
      if (w == 0.0) continue;
      Vec3 gp, gg;
      const double d = point_plane_distance(joints[t].row(j).transpose(), g, &gp, &gg);
      const double excess = std::abs(d) - delta;
      if (excess <= 0.0) continue;
      e += w * excess;
      const double s = d > 0.0 ? w : -w;
      if (grad) (*grad)[t].row(j) += s * gp.transpose();
      if (grad_g) *grad_g += s * gg;
    }
  }
  return e;
}

}  // namespace worldpose

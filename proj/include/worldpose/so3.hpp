#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>

namespace worldpose {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

namespace so3 {

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

/// Axial vector of the antisymmetric part: returns w with <M, [a]x>_F = w.a.
inline Vec3 vee_antisym(const Mat3& m) {
  return Vec3(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1));
}

/// Rodrigues map from axis-angle (radians) to a rotation matrix.
inline Mat3 exp(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  const Mat3 k = skew(w);
  if (theta2 < 1e-16) {
    return Mat3::Identity() + k + 0.5 * k * k;
  }
  const double theta = std::sqrt(theta2);
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / theta2;
  return Mat3::Identity() + a * k + b * k * k;
}

/// Inverse of exp with angle in [0, pi]. Goes through a quaternion so the
/// result stays well conditioned near pi.
inline Vec3 log(const Mat3& r) {
  Eigen::Quaterniond q(r);
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const Vec3 v = q.vec();
  const double n = v.norm();
  if (n < 1e-12) {
    const double w = q.w();
    return (2.0 / w) * (1.0 - n * n / (3.0 * w * w)) * v;
  }
  return (2.0 * std::atan2(n, q.w()) / n) * v;
}

/// Left Jacobian: exp(w + dw) ~= exp(J_l(w) dw) exp(w).
inline Mat3 left_jacobian(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  const Mat3 k = skew(w);
  if (theta2 < 1e-12) {
    return Mat3::Identity() + 0.5 * k + (1.0 / 6.0) * k * k;
  }
  const double theta = std::sqrt(theta2);
  const double a = (1.0 - std::cos(theta)) / theta2;
  const double b = (theta - std::sin(theta)) / (theta2 * theta);
  return Mat3::Identity() + a * k + b * k * k;
}

inline Mat3 left_jacobian_inv(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  const Mat3 k = skew(w);
  if (theta2 < 1e-12) {
    return Mat3::Identity() - 0.5 * k + (1.0 / 12.0) * k * k;
  }
  const double theta = std::sqrt(theta2);
  const double half = 0.5 * theta;
  const double c = 1.0 / theta2 - std::cos(half) / (2.0 * theta * std::sin(half));
  return Mat3::Identity() - 0.5 * k + c * k * k;
}

/// Pulls an adjoint dL/dR back to dL/dw for R = exp(w).
inline Vec3 exp_vjp(const Vec3& w, const Mat3& r, const Mat3& grad_r) {
  const Vec3 g = vee_antisym(grad_r * r.transpose());
  return left_jacobian(w).transpose() * g;
}

inline Vec3 exp_vjp(const Vec3& w, const Mat3& grad_r) {
  return exp_vjp(w, exp(w), grad_r);
}

/// log(exp(u) exp(a)): compose a left increment u onto rotation a.
inline Vec3 compose(const Vec3& u, const Vec3& a) {
  return log(exp(u) * exp(a));
}

/// Adjoints of compose() with respect to u and a, given the adjoint of the result.
inline void compose_vjp(const Vec3& u, const Vec3& a, const Vec3& result,
                        const Vec3& grad_result, Vec3& grad_u, Vec3& grad_a) {
  const Vec3 e = left_jacobian_inv(result).transpose() * grad_result;
  grad_u = left_jacobian(u).transpose() * e;
  grad_a = left_jacobian(a).transpose() * (exp(u).transpose() * e);
}

/// Unit quaternion with nonnegative scalar part.
inline Eigen::Quaterniond to_quaternion(const Vec3& w) {
  const double theta = w.norm();
  Eigen::Quaterniond q;
  if (theta < 1e-12) {
    q = Eigen::Quaterniond(1.0, 0.5 * w.x(), 0.5 * w.y(), 0.5 * w.z());
    q.normalize();
  } else {
    q = Eigen::Quaterniond(Eigen::AngleAxisd(theta, w / theta));
  }
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return q;
}

inline Vec3 from_quaternion(const Eigen::Quaterniond& q_in) {
  Eigen::Quaterniond q = q_in.normalized();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const Vec3 v = q.vec();
  const double n = v.norm();
  if (n < 1e-12) return 2.0 * v / q.w();
  return (2.0 * std::atan2(n, q.w()) / n) * v;
}

/// Geodesic interpolation between two axis-angle rotations along the shorter arc.
inline Vec3 slerp(const Vec3& a, const Vec3& b, double u) {
  const Eigen::Quaterniond qa = to_quaternion(a);
  Eigen::Quaterniond qb = to_quaternion(b);
  if (qa.dot(qb) < 0.0) qb.coeffs() = -qb.coeffs();
  return from_quaternion(qa.slerp(u, qb));
}

inline double angle_between(const Mat3& a, const Mat3& b) {
  return log(a.transpose() * b).norm();
}

}  // namespace so3
}  // namespace worldpose

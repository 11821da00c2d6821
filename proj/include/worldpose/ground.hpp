#pragma once

#include "worldpose/common.hpp"
#include "worldpose/so3.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

namespace worldpose {

/// Height-field plane z = a x + b y + c in world coordinates.
struct GroundPlane {
  double a = 0.0, b = 0.0, c = 0.0;

  Vec3 coeffs() const { return {a, b, c}; }
  static GroundPlane from(const Vec3& g) { return {g[0], g[1], g[2]}; }
};

/// Signed distance, positive above the plane.
inline double point_plane_distance(const Vec3& p, const GroundPlane& g) {
  return (p.z() - g.a * p.x() - g.b * p.y() - g.c) / std::sqrt(1.0 + g.a * g.a + g.b * g.b);
}

/// Signed distance plus its gradients with respect to the point and to (a, b, c).
inline double point_plane_distance(const Vec3& p, const GroundPlane& g, Vec3* grad_p, Vec3* grad_g) {
  const double n2 = 1.0 + g.a * g.a + g.b * g.b;
  const double n = std::sqrt(n2);
  const double h = p.z() - g.a * p.x() - g.b * p.y() - g.c;
  if (grad_p) *grad_p = Vec3(-g.a, -g.b, 1.0) / n;
  if (grad_g) {
    const double k = h / (n2 * n);
    *grad_g = Vec3(-p.x() / n - k * g.a, -p.y() / n - k * g.b, -1.0 / n);
  }
  return h / n;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + mid));
  return m;
}

/// Least-squares height-field fit. Falls back to a horizontal plane at the
/// median height when the points do not determine a usable plane.
inline GroundPlane fit_ground(const std::vector<Vec3>& pts) {
  auto fallback = [&](const char* why) {
    std::vector<double> z;
    z.reserve(pts.size());
    for (const auto& p : pts) z.push_back(p.z());
    log::warn(std::string("ground fit: ") + why + "; using a horizontal plane at the median height");
    return GroundPlane{0.0, 0.0, median(z)};
  };
  if (pts.size() < 3) return fallback("fewer than 3 points");
  Eigen::MatrixXd A(pts.size(), 3);
  Eigen::VectorXd z(pts.size());
  Vec3 mean = Vec3::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  // Centre x/y for conditioning.
  for (std::size_t i = 0; i < pts.size(); ++i) {
    A(i, 0) = pts[i].x() - mean.x();
    A(i, 1) = pts[i].y() - mean.y();
    A(i, 2) = 1.0;
    z[i] = pts[i].z();
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  if (s[2] <= 1e-9 * s[0]) return fallback("points are collinear");
  const Vec3 sol = svd.solve(z);
  if (std::abs(sol[0]) >= 1.0 || std::abs(sol[1]) >= 1.0) return fallback("plane is too steep");
  return {sol[0], sol[1], sol[2] - sol[0] * mean.x() - sol[1] * mean.y()};
}

inline double plane_residual(const std::vector<Vec3>& pts, const GroundPlane& g) {
  double r = 0.0;
  for (const auto& p : pts) {
    const double e = p.z() - g.a * p.x() - g.b * p.y() - g.c;
    r += e * e;
  }
  return r;
}

struct FloorAssignment {
  std::vector<int> cluster;          // per person
  std::vector<GroundPlane> planes;   // per cluster
  int count() const { return static_cast<int>(planes.size()); }
};

/// Groups people by median foot height: the smallest number of clusters
/// whose height spread stays below max_spread, capped at max_clusters.
/// Cluster ids increase with height.
inline std::vector<int> cluster_heights(const std::vector<double>& heights, int max_clusters,
                                        double max_spread = 0.5) {
  const int n = static_cast<int>(heights.size());
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return heights[a] < heights[b]; });
  std::vector<int> label(n, 0);
  if (n == 0) return label;
  // Greedy interval cover is optimal for the count.
  std::vector<int> starts = {0};
  for (int k = 1; k < n; ++k) {
    if (heights[order[k]] - heights[order[starts.back()]] >= max_spread) starts.push_back(k);
  }
  if (static_cast<int>(starts.size()) > std::max(1, max_clusters)) {
    // Too many groups: cut only at the largest gaps.
    std::vector<int> gaps(n - 1);
    for (int k = 0; k + 1 < n; ++k) gaps[k] = k + 1;
    std::stable_sort(gaps.begin(), gaps.end(), [&](int a, int b) {
      return heights[order[a]] - heights[order[a - 1]] > heights[order[b]] - heights[order[b - 1]];
    });
    starts.assign(1, 0);
    for (int k = 0; k < std::max(1, max_clusters) - 1; ++k) starts.push_back(gaps[k]);
    std::sort(starts.begin(), starts.end());
  }
  int c = 0;
  for (int k = 0; k < n; ++k) {
    if (c + 1 < static_cast<int>(starts.size()) && k == starts[c + 1]) ++c;
    label[order[k]] = c;
  }
  return label;
}

/// Splits people onto floors by their foot heights and fits one plane per floor.
inline FloorAssignment cluster_floors(const std::vector<std::vector<Vec3>>& feet_per_person, int max_clusters,
                                      double max_spread = 0.5) {
  std::vector<double> heights;
  for (const auto& f : feet_per_person) {
    std::vector<double> z;
    for (const auto& p : f) z.push_back(p.z());
    heights.push_back(median(z));
  }
  FloorAssignment out;
  out.cluster = cluster_heights(heights, max_clusters, max_spread);
  const int k = out.cluster.empty() ? 1 : *std::max_element(out.cluster.begin(), out.cluster.end()) + 1;
  for (int c = 0; c < k; ++c) {
    std::vector<Vec3> pts;
    for (std::size_t i = 0; i < feet_per_person.size(); ++i) {
      if (out.cluster[i] == c) pts.insert(pts.end(), feet_per_person[i].begin(), feet_per_person[i].end());
    }
    out.planes.push_back(fit_ground(pts));
  }
  return out;
}

}  // namespace worldpose

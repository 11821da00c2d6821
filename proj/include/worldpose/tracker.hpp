#pragma once

// Location-cue tracking harness: per-detection cues in the camera or the
// world frame, gated optimal assignment and identity-switch counting.

#include "worldpose/camera.hpp"
#include "worldpose/common.hpp"
#include "worldpose/tracks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace worldpose {

struct LocationCue {
  Vec2 xy = Vec2::Zero();  // normalized horizontal location
  double nearness = 0.0;   // raw Z of the location
};

/// Axis-aligned box used to normalize cue positions; near_lo/near_hi
/// normalize nearness when distances are computed.
struct CueBounds {
  Vec2 lo = Vec2::Zero();
  Vec2 hi = Vec2::Ones();
  double near_lo = 0.0;
  double near_hi = 1.0;

  static CueBounds of(const std::vector<Vec3>& pts) {
    CueBounds b;
    if (pts.empty()) return b;
    b.lo = b.hi = pts[0].head<2>();
    b.near_lo = b.near_hi = pts[0].z();
    for (const auto& p : pts) {
      b.lo = b.lo.cwiseMin(p.head<2>());
      b.hi = b.hi.cwiseMax(p.head<2>());
      b.near_lo = std::min(b.near_lo, p.z());
      b.near_hi = std::max(b.near_hi, p.z());
    }
    return b;
  }

  Vec2 normalize(const Vec2& p) const {
    Vec2 out;
    for (int k = 0; k < 2; ++k) {
      const double w = hi[k] - lo[k];
      out[k] = w > 0.0 ? (p[k] - lo[k]) / w : 0.0;
    }
    return out;
  }

  double normalize_nearness(double z) const {
    const double w = near_hi - near_lo;
    return w > 0.0 ? (z - near_lo) / w : 0.0;
  }
};

enum class CueFrame { camera, world };

inline CueFrame parse_cue_frame(const std::string& s) {
  if (s == "camera") return CueFrame::camera;
  if (s == "world") return CueFrame::world;
  throw ValidationError("unknown tracking mode '" + s + "' (camera|world)");
}

/// World location of a camera-frame point: R^T (p_c - alpha T).
inline Vec3 world_location(const Vec3& p_cam, const CameraPose& cam, double alpha) {
  if (!(alpha > 0.0)) throw ValidationError("alpha must be positive");
  return camera_to_world(cam, alpha, p_cam);
}

inline LocationCue make_cue(const Vec3& p, const CueBounds& bounds) { return {bounds.normalize(p.head<2>()), p.z()}; }

inline LocationCue world_location_cue(const Vec3& p_cam, const CameraPose& cam, double alpha, const CueBounds& bounds) {
  return make_cue(world_location(p_cam, cam, alpha), bounds);
}

/// Distance between cues with nearness mapped through the bounds.
inline double cue_distance(const LocationCue& a, const LocationCue& b, const CueBounds& bounds) {
  const double dn = bounds.normalize_nearness(a.nearness) - bounds.normalize_nearness(b.nearness);
  return std::sqrt((a.xy - b.xy).squaredNorm() + dn * dn);
}

// ---------------------------------------------------------------------------
// Rectangular assignment (Hungarian method, shortest augmenting paths).

/// Minimum-cost assignment of rows to columns; returns the column of each row
/// or -1. Every row is matched when rows <= cols.
inline std::vector<int> hungarian(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows()), m = static_cast<int>(cost.cols());
  if (n == 0 || m == 0) return std::vector<int>(n, -1);
  const bool flip = n > m;
  const Eigen::MatrixXd c = flip ? Eigen::MatrixXd(cost.transpose()) : cost;
  const int r = static_cast<int>(c.rows()), k = static_cast<int>(c.cols());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(r + 1, 0.0), v(k + 1, 0.0);
  std::vector<int> p(k + 1, 0), way(k + 1, 0);
  for (int i = 1; i <= r; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(k + 1, inf);
    std::vector<char> used(k + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= k; ++j) {
        if (used[j]) continue;
        const double cur = c(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= k; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> row_of_col(k, -1);
  for (int j = 1; j <= k; ++j) row_of_col[j - 1] = p[j] - 1;
  std::vector<int> out(n, -1);
  if (!flip) {
    for (int j = 0; j < k; ++j) {
      if (row_of_col[j] >= 0) out[row_of_col[j]] = j;
    }
  } else {
    // Rows of c are the original columns.
    for (int j = 0; j < k; ++j) {
      if (row_of_col[j] >= 0) out[j] = row_of_col[j];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tracker.

struct TrackerConfig {
  double gate = 0.25;      // largest cue distance that may be matched
  int miss_tolerance = 10; // frames a tracklet survives unseen

  void validate() const {
    if (!(gate > 0.0) || miss_tolerance < 0) throw ValidationError("bad tracker gate or miss tolerance");
  }
};

struct Tracklet {
  int id = 0;
  LocationCue cue;
  int last_frame = 0;
};

struct TrackerState {
  TrackerConfig config;
  CueBounds bounds;
  std::vector<Tracklet> active;
  int next_id = 0;
};

/// Matches the frame's cues to active tracklets; returns one id per cue.
/// Pairs beyond the gate stay unmatched and spawn new ids.
inline std::vector<int> associate(TrackerState& state, const std::vector<LocationCue>& cues, int frame) {
  const TrackerConfig& cfg = state.config;
  cfg.validate();
  std::erase_if(state.active, [&](const Tracklet& t) { return frame - t.last_frame > cfg.miss_tolerance + 1; });
  const int n = static_cast<int>(state.active.size()), m = static_cast<int>(cues.size());
  // Gated pairs cost more than any admissible set of matches, so the solver
  // only takes them when nothing else fits; they are rejected afterwards.
  const double big = 1e6;
  Eigen::MatrixXd cost(n, m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      const double d = cue_distance(state.active[i].cue, cues[j], state.bounds);
      cost(i, j) = d <= cfg.gate ? d : big;
    }
  }
  const std::vector<int> match = hungarian(cost);
  std::vector<int> ids(m, -1);
  for (int i = 0; i < n; ++i) {
    const int j = match[i];
    if (j < 0 || cost(i, j) >= big) continue;
    ids[j] = state.active[i].id;
    state.active[i].cue = cues[j];
    state.active[i].last_frame = frame;
  }
  for (int j = 0; j < m; ++j) {
    if (ids[j] >= 0) continue;
    ids[j] = state.next_id++;
    state.active.push_back({ids[j], cues[j], frame});
  }
  return ids;
}

struct Assignment {
  int frame = 0;
  int source_id = 0;  // id carried by the detection (ground truth on synthetic data)
  int track_id = 0;
};

/// Runs the tracker over a detection stream whose records carry root3d.
/// World cues use cams and alpha; camera cues use the camera-frame location.
inline std::vector<Assignment> run_tracker(const std::vector<Detection2D>& dets, const std::vector<CameraPose>& cams,
                                           double alpha, CueFrame mode, const TrackerConfig& cfg = {}) {
  cfg.validate();
  std::vector<Vec3> pts;
  pts.reserve(dets.size());
  for (const auto& d : dets) {
    if (!d.root3d) throw ValidationError("detection in frame " + std::to_string(d.frame) + " lacks root3d");
    if (d.frame < 0 || d.frame >= static_cast<int>(cams.size())) {
      throw ValidationError("detection frame " + std::to_string(d.frame) + " has no camera pose");
    }
    pts.push_back(mode == CueFrame::world ? world_location(*d.root3d, cams[d.frame], alpha) : *d.root3d);
  }
  TrackerState state;
  state.config = cfg;
  state.bounds = CueBounds::of(pts);
  std::map<int, std::vector<std::size_t>> by_frame;
  for (std::size_t i = 0; i < dets.size(); ++i) by_frame[dets[i].frame].push_back(i);
  std::vector<Assignment> out;
  for (const auto& [frame, idx] : by_frame) {
    std::vector<LocationCue> cues;
    for (std::size_t i : idx) cues.push_back(make_cue(pts[i], state.bounds));
    const std::vector<int> ids = associate(state, cues, frame);
    for (std::size_t k = 0; k < idx.size(); ++k) out.push_back({frame, dets[idx[k]].id, ids[k]});
  }
  return out;
}

/// Identity switches: each time a source identity's track id differs from the
/// one it last had.
inline int count_id_switches(const std::vector<Assignment>& a) {
  std::vector<Assignment> s = a;
  std::stable_sort(s.begin(), s.end(), [](const Assignment& x, const Assignment& y) { return x.frame < y.frame; });
  std::map<int, int> last;
  int switches = 0;
  for (const auto& e : s) {
    const auto it = last.find(e.source_id);
    if (it != last.end() && it->second != e.track_id) ++switches;
    last[e.source_id] = e.track_id;
  }
  return switches;
}

inline std::string format_assignments(const std::vector<Assignment>& a) {
  std::string out = "# frame source_id track_id\n";
  for (const auto& e : a) {
    out += std::to_string(e.frame) + ' ' + std::to_string(e.source_id) + ' ' + std::to_string(e.track_id) + '\n';
  }
  return out;
}

}  // namespace worldpose

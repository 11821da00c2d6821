#pragma once

#include "worldpose/body.hpp"
#include "worldpose/camera.hpp"
#include "worldpose/ground.hpp"
#include "worldpose/motion_prior.hpp"
#include "worldpose/tracks.hpp"

#include <vector>

namespace worldpose {

/// Stage-3 variables of one track: initial state, per-transition latents and
/// the contact probabilities held fixed during a horizon chunk.
struct MotionTrack {
  MotionState s0;
  std::vector<Latent> z;  // z[t] drives frame t -> t+1, length = track length - 1
  ContactProbabilities contacts;
  BodyContext body;
};

struct SceneState {
  std::vector<CameraPose> cameras;  // one per video frame, world-to-camera
  CameraIntrinsics K;
  double alpha = 1.0;
  std::vector<GroundPlane> floors{GroundPlane{}};
  TrackSet tracks;              // world-frame poses
  std::vector<int> floor_of;    // floor index per track
  std::vector<MotionTrack> motion;  // filled while stage 3 runs
  int horizon = 0;                  // active rollout length in stage 3

  int frame_count() const { return static_cast<int>(cameras.size()); }

  const GroundPlane& floor_for(std::size_t track) const {
    const int f = track < floor_of.size() ? floor_of[track] : 0;
    return floors.at(static_cast<std::size_t>(f));
  }

  void validate() const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ValidationError("scale alpha must be positive");
    if (tracks.T != frame_count()) throw ValidationError("camera trajectory length does not match frame count");
    for (const auto& c : cameras) c.validate();
    K.validate();
  }
};

/// Joint positions of every frame of a track.
inline std::vector<Joints> track_joints(const Track& t, const Skeleton& skel) {
  std::vector<Joints> out;
  out.reserve(t.poses.size());
  for (const auto& p : t.poses) out.push_back(forward_kinematics(p, skel));
  return out;
}

/// Lowest foot joint of every frame, a proxy for the ground contact point.
inline std::vector<Vec3> lowest_feet(const Track& t, const Skeleton& skel) {
  std::vector<Vec3> out;
  for (const auto& j : track_joints(t, skel)) {
    int best = skel.foot_joints[0];
    for (int f : skel.foot_joints) {
      if (j(f, 2) < j(best, 2)) best = f;
    }
    out.push_back(j.row(best).transpose());
  }
  return out;
}

}  // namespace worldpose

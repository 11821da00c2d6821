#pragma once

// Stage objectives: the weighted energy sums of the three optimization
// stages over a flat variable vector, with analytic gradients.

#include "worldpose/energy.hpp"
#include "worldpose/scene.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

namespace worldpose {

struct EnergyContext {
  const Skeleton* skel = nullptr;
  LossWeights weights;
  PriorBackend prior = PriorBackend::constant_velocity();
  PosePriorMap pose_map = PosePriorMap::identity();
};

/// Unweighted term values; total is the weighted stage sum.
struct TermValues {
  double data = 0.0, shape = 0.0, pose = 0.0, smooth = 0.0, cvae = 0.0, stab = 0.0, skate = 0.0, con = 0.0;
  double total = 0.0;
};

class StageObjective {
 public:
  /// people: indices of the tracks included (all when empty). alpha is a free
  /// variable in stages 2 and 3 unless fix_alpha is set.
  StageObjective(int stage, const SceneState& scene, const EnergyContext& ctx, std::vector<int> people = {},
                 bool fix_alpha = false)
      : stage_(stage), scene_(&scene), ctx_(&ctx), people_(std::move(people)) {
    if (stage < 1 || stage > 3) throw ValidationError("unknown stage " + std::to_string(stage));
    if (people_.empty()) {
      people_.resize(scene.tracks.tracks.size());
      std::iota(people_.begin(), people_.end(), 0);
    }
    free_alpha_ = stage >= 2 && !fix_alpha;
    int off = free_alpha_ ? 1 : 0;
    if (stage == 3) {
      floor_offset_ = off;
      off += 3 * static_cast<int>(scene.floors.size());
      if (scene.motion.size() != scene.tracks.tracks.size()) throw StructuralError("stage 3 needs motion tracks");
    }
    for (int i : people_) {
      offsets_.push_back(off);
      const int n = active_length(i);
      if (stage == 1) off += 6 * n;
      else if (stage == 2) off += kNumShape + 72 * n;
      else off += kStateDim + kLatentDim * (n - 1);
    }
    size_ = off;
  }

  int size() const { return size_; }
  int stage() const { return stage_; }
  std::size_t num_people() const { return people_.size(); }

  /// Offset of the first latent of the k-th included person and the number
  /// of latents (stage 3).
  std::pair<int, int> latent_block(std::size_t k) const {
    return {offsets_[k] + kStateDim, active_length(people_[k]) - 1};
  }

  int active_length(int i) const {
    const Track& t = scene_->tracks.tracks[i];
    return stage_ == 3 ? active_end(t, scene_->horizon) - t.t_start : t.length();
  }

  Eigen::VectorXd pack() const {
    Eigen::VectorXd x(size_);
    if (free_alpha_) x[0] = std::log(scene_->alpha);
    if (stage_ == 3) {
      for (std::size_t f = 0; f < scene_->floors.size(); ++f) x.segment<3>(floor_offset_ + 3 * f) = scene_->floors[f].coeffs();
    }
    for (std::size_t k = 0; k < people_.size(); ++k) {
      const int i = people_[k];
      const Track& t = scene_->tracks.tracks[i];
      int o = offsets_[k];
      const int n = active_length(i);
      if (stage_ == 1) {
        for (int f = 0; f < n; ++f, o += 6) {
          x.segment<3>(o) = t.poses[f].root_orient;
          x.segment<3>(o + 3) = t.poses[f].root_transl;
        }
      } else if (stage_ == 2) {
        x.segment<kNumShape>(o) = t.poses[0].shape;
        o += kNumShape;
        for (int f = 0; f < n; ++f, o += 72) {
          x.segment<3>(o) = t.poses[f].root_orient;
          x.segment<66>(o + 3) = Eigen::Map<const Eigen::Matrix<double, 66, 1>>(t.poses[f].body_pose.data());
          x.segment<3>(o + 69) = t.poses[f].root_transl;
        }
      } else {
        const MotionTrack& m = scene_->motion[i];
        x.segment<kStateDim>(o) = m.s0.v;
        o += kStateDim;
        for (int f = 0; f + 1 < n; ++f, o += kLatentDim) x.segment<kLatentDim>(o) = m.z[f];
      }
    }
    return x;
  }

  /// Writes variables back. Stage 3 updates s0 and latents only; call
  /// commit_rollout to refresh the poses.
  void unpack(const Eigen::VectorXd& x, SceneState& scene) const {
    if (free_alpha_) scene.alpha = std::exp(x[0]);
    if (stage_ == 3) {
      for (std::size_t f = 0; f < scene.floors.size(); ++f) {
        scene.floors[f] = GroundPlane::from(x.segment<3>(floor_offset_ + 3 * f));
      }
    }
    for (std::size_t k = 0; k < people_.size(); ++k) {
      const int i = people_[k];
      Track& t = scene.tracks.tracks[i];
      int o = offsets_[k];
      const int n = active_length(i);
      if (stage_ == 1) {
        for (int f = 0; f < n; ++f, o += 6) {
          t.poses[f].root_orient = x.segment<3>(o);
          t.poses[f].root_transl = x.segment<3>(o + 3);
        }
      } else if (stage_ == 2) {
        const ShapeVec beta = x.segment<kNumShape>(o);
        o += kNumShape;
        for (int f = 0; f < n; ++f, o += 72) {
          t.poses[f].shape = beta;
          t.poses[f].root_orient = x.segment<3>(o);
          t.poses[f].body_pose = Eigen::Map<const BodyPose>(x.data() + o + 3);
          t.poses[f].root_transl = x.segment<3>(o + 69);
        }
      } else {
        MotionTrack& m = scene.motion[i];
        m.s0.v = x.segment<kStateDim>(o);
        o += kStateDim;
        for (int f = 0; f + 1 < n; ++f, o += kLatentDim) m.z[f] = x.segment<kLatentDim>(o);
      }
    }
  }

  /// Energy at x; grad (if given) is resized and filled. Returns +inf when a
  /// rollout diverges.
  double evaluate(const Eigen::VectorXd& x, Eigen::VectorXd* grad = nullptr, TermValues* terms = nullptr) const {
    if (x.size() != size_) throw StructuralError("variable vector has the wrong size");
    if (grad) grad->setZero(size_);
    TermValues tv;
    const double alpha = free_alpha_ ? std::exp(x[0]) : scene_->alpha;
    double g_alpha = 0.0;
    const LossWeights& w = ctx_->weights;
    try {
      for (std::size_t k = 0; k < people_.size(); ++k) {
        if (stage_ == 1) eval_stage1(k, x, alpha, grad, tv, g_alpha);
        else if (stage_ == 2) eval_stage2(k, x, alpha, grad, tv, g_alpha);
        else eval_stage3(k, x, alpha, grad, tv, g_alpha);
      }
    } catch (const RolloutDivergence&) {
      if (terms) *terms = TermValues{};
      if (grad) grad->setZero();
      return std::numeric_limits<double>::infinity();
    }
    if (stage_ == 1) {
      tv.total = w.data * tv.data;
    } else if (stage_ == 2) {
      tv.total = w.data * tv.data + w.shape * tv.shape + w.pose * tv.pose + w.smooth * tv.smooth;
    } else {
      tv.total = w.data * tv.data + w.shape * tv.shape + w.pose * tv.pose + w.cvae * tv.cvae + w.stab * tv.stab +
                 w.skate * tv.skate + w.con * tv.con;
    }
    if (grad && free_alpha_) (*grad)[0] = g_alpha * alpha;
    if (terms) *terms = tv;
    return tv.total;
  }

 private:
  double data_term(const Track& t, int f, const Joints& j, double alpha, Joints* gj, double* ga) const {
    if (!t.observed[f]) return 0.0;
    const int frame = t.t_start + f;
    return e_data_frame(j, scene_->cameras[frame], alpha, scene_->K, t.kp[f], t.conf[f], ctx_->weights.sigma_gm, gj, ga);
  }

  void eval_stage1(std::size_t k, const Eigen::VectorXd& x, double alpha, Eigen::VectorXd* grad, TermValues& tv,
                   double& g_alpha) const {
    const int i = people_[k];
    const Track& t = scene_->tracks.tracks[i];
    const Skeleton& skel = *ctx_->skel;
    const double wd = ctx_->weights.data;
    int o = offsets_[k];
    for (int f = 0; f < active_length(i); ++f, o += 6) {
      if (!t.observed[f]) continue;
      const PoseParams& p = t.poses[f];
      const BoneOffsets bones = shape_to_bones(p.shape, skel);
      FkCache cache;
      const Vec3 orient = x.segment<3>(o);
      const Joints j = forward_kinematics(orient, p.body_pose, bones, x.segment<3>(o + 3), skel.parents, &cache);
      Joints gj = Joints::Zero();
      double ga = 0.0;
      tv.data += data_term(t, f, j, alpha, grad ? &gj : nullptr, grad ? &ga : nullptr);
      if (grad) {
        const FkGradient g = forward_kinematics_vjp(orient, p.body_pose, bones, skel.parents, cache, wd * gj);
        grad->segment<3>(o) += g.root_orient;
        grad->segment<3>(o + 3) += g.transl;
        g_alpha += wd * ga;
      }
    }
  }

  void eval_stage2(std::size_t k, const Eigen::VectorXd& x, double alpha, Eigen::VectorXd* grad, TermValues& tv,
                   double& g_alpha) const {
    const int i = people_[k];
    const Track& t = scene_->tracks.tracks[i];
    const Skeleton& skel = *ctx_->skel;
    const LossWeights& w = ctx_->weights;
    const int n = active_length(i);
    int o = offsets_[k];
    const ShapeVec beta = x.segment<kNumShape>(o);
    const BoneOffsets bones = shape_to_bones(beta, skel);
    ShapeVec g_beta = ShapeVec::Zero();
    tv.shape += e_shape(beta, grad ? &g_beta : nullptr);
    g_beta *= w.shape;
    const int base = o + kNumShape;
    std::vector<Joints> joints(n);
    std::vector<FkCache> caches(n);
    std::vector<Joints> gj(n, Joints::Zero());
    for (int f = 0; f < n; ++f) {
      const int of = base + 72 * f;
      const Eigen::Map<const BodyPose> body(x.data() + of + 3);
      joints[f] = forward_kinematics(x.segment<3>(of), body, bones, x.segment<3>(of + 69), skel.parents, &caches[f]);
      double ga = 0.0;
      tv.data += data_term(t, f, joints[f], alpha, grad ? &gj[f] : nullptr, grad ? &ga : nullptr);
      BodyPose gb = BodyPose::Zero();
      tv.pose += e_pose(body, ctx_->pose_map, grad ? &gb : nullptr);
      if (grad) {
        gj[f] *= w.data;
        g_alpha += w.data * ga;
        Eigen::Map<BodyPose>(grad->data() + of + 3) += w.pose * gb;
      }
    }
    std::vector<Joints> gs(n, Joints::Zero());
    tv.smooth += e_smooth(joints, grad ? &gs : nullptr);
    if (!grad) return;
    for (int f = 0; f < n; ++f) {
      const int of = base + 72 * f;
      const Eigen::Map<const BodyPose> body(x.data() + of + 3);
      const Joints g = gj[f] + w.smooth * gs[f];
      const FkGradient fg = forward_kinematics_vjp(x.segment<3>(of), body, bones, skel.parents, caches[f], g);
      grad->segment<3>(of) += fg.root_orient;
      Eigen::Map<BodyPose>(grad->data() + of + 3) += fg.body;
      grad->segment<3>(of + 69) += fg.transl;
      g_beta += shape_to_bones_vjp(fg.bones, skel);
    }
    grad->segment<kNumShape>(o) += g_beta;
  }

  void eval_stage3(std::size_t k, const Eigen::VectorXd& x, double alpha, Eigen::VectorXd* grad, TermValues& tv,
                   double& g_alpha) const {
    const int i = people_[k];
    const Track& t = scene_->tracks.tracks[i];
    const MotionTrack& m = scene_->motion[i];
    const LossWeights& w = ctx_->weights;
    const PriorBackend& prior = ctx_->prior;
    const int n = active_length(i);
    const int o = offsets_[k];
    const int floor = static_cast<std::size_t>(i) < scene_->floor_of.size() ? scene_->floor_of[i] : 0;
    const GroundPlane g = GroundPlane::from(x.segment<3>(floor_offset_ + 3 * floor));

    MotionState s0;
    s0.v = x.segment<kStateDim>(o);
    std::vector<Latent> zs(n - 1);
    for (int f = 0; f + 1 < n; ++f) zs[f] = x.segment<kLatentDim>(o + kStateDim + kLatentDim * f);
    const std::vector<MotionState> states = rollout(s0, zs, prior, m.body);

    std::vector<Joints> joints(n);
    std::vector<FkCache> caches(n);
    for (int f = 0; f < n; ++f) joints[f] = state_fk(states[f], m.body, &caches[f]);
    const ContactProbabilities contacts(m.contacts.begin(), m.contacts.begin() + n);

    std::vector<Joints> gj(n, Joints::Zero());
    std::vector<StateVec> gs(n, StateVec::Zero());
    std::vector<Latent> gz(n - 1, Latent::Zero());
    const bool want = grad != nullptr;

    tv.shape += e_shape(t.poses[0].shape);
    for (int f = 0; f < n; ++f) {
      Joints gd = Joints::Zero();
      double ga = 0.0;
      tv.data += data_term(t, f, joints[f], alpha, want ? &gd : nullptr, want ? &ga : nullptr);
      BodyPose gb = BodyPose::Zero();
      tv.pose += e_pose(states[f].body(), ctx_->pose_map, want ? &gb : nullptr);
      if (want) {
        gj[f] += w.data * gd;
        g_alpha += w.data * ga;
        Eigen::Map<BodyPose>(gs[f].data() + block::body) += w.pose * gb;
      }
    }
    {
      std::vector<Latent> gz_c(n - 1, Latent::Zero());
      std::vector<StateVec> gs_c(n, StateVec::Zero());
      tv.cvae += e_cvae(zs, states, prior, want ? &gz_c : nullptr, want ? &gs_c : nullptr);
      if (want) {
        for (int f = 0; f + 1 < n; ++f) gz[f] += w.cvae * gz_c[f];
        for (int f = 0; f < n; ++f) gs[f] += w.cvae * gs_c[f];
      }
    }
    {
      std::vector<StateVec> gs_s(n, StateVec::Zero());
      tv.stab += e_stab(states, m.body, want ? &gs_s : nullptr);
      if (want) {
        for (int f = 0; f < n; ++f) gs[f] += w.stab * gs_s[f];
      }
    }
    {
      std::vector<Joints> gk(n, Joints::Zero());
      tv.skate += e_skate(joints, contacts, want ? &gk : nullptr);
      std::vector<Joints> gc(n, Joints::Zero());
      Vec3 gg = Vec3::Zero();
      tv.con += e_contact(joints, contacts, g, w.contact_delta, want ? &gc : nullptr, want ? &gg : nullptr);
      if (want) {
        for (int f = 0; f < n; ++f) gj[f] += w.skate * gk[f] + w.con * gc[f];
        grad->segment<3>(floor_offset_ + 3 * floor) += w.con * gg;
      }
    }
    if (!want) return;
    for (int f = 0; f < n; ++f) {
      const FkGradient fg =
          forward_kinematics_vjp(states[f].orient(), states[f].body(), m.body.bones, m.body.parents, caches[f], gj[f]);
      gs[f].segment<3>(block::orient) += fg.root_orient;
      Eigen::Map<BodyPose>(gs[f].data() + block::body) += fg.body;
      gs[f].segment<3>(block::transl) += fg.transl;
    }
    StateVec g0;
    std::vector<Latent> gzr;
    rollout_vjp(states, zs, prior, m.body, gs, g0, gzr);
    grad->segment<kStateDim>(o) += g0;
    for (int f = 0; f + 1 < n; ++f) grad->segment<kLatentDim>(o + kStateDim + kLatentDim * f) += gz[f] + gzr[f];
  }

  int stage_;
  const SceneState* scene_;
  const EnergyContext* ctx_;
  std::vector<int> people_;
  std::vector<int> offsets_;
  bool free_alpha_ = false;
  int floor_offset_ = 0;
  int size_ = 0;
};

/// Invertible linear change of the stage-3 latents into accumulated offsets:
/// root channels are summed twice and body channels once, scaled by the
/// constant-velocity sigmas. The energy is unchanged; the solver sees each
/// frame's displacement as its own coordinate.
class IntegratedCoordinates {
 public:
  IntegratedCoordinates(const StageObjective& obj, const Latent& sigma) : obj_(&obj), sigma_(sigma) {
    if (obj.stage() != 3) throw ValidationError("integrated coordinates apply to stage 3 only");
  }

  Eigen::VectorXd to_coords(const Eigen::VectorXd& x) const {
    Eigen::VectorXd y = x;
    for_blocks([&](int o, int m, int c, int order) {
      double acc = 0.0, vel = 0.0;
      for (int k = 0; k < m; ++k) {
        const double inc = sigma_[c] * x[o + kLatentDim * k + c];
        if (order == 2) {
          vel += inc;
          acc += vel;
        } else {
          acc += inc;
        }
        y[o + kLatentDim * k + c] = acc;
      }
    });
    return y;
  }

  Eigen::VectorXd from_coords(const Eigen::VectorXd& y) const {
    Eigen::VectorXd x = y;
    for_blocks([&](int o, int m, int c, int order) {
      auto at = [&](int k) { return k < 0 ? 0.0 : y[o + kLatentDim * k + c]; };
      for (int k = 0; k < m; ++k) {
        const double d = order == 2 ? at(k) - 2.0 * at(k - 1) + at(k - 2) : at(k) - at(k - 1);
        x[o + kLatentDim * k + c] = d / sigma_[c];
      }
    });
    return x;
  }

  /// Gradient with respect to the coordinates given the latent gradient.
  Eigen::VectorXd pull_gradient(const Eigen::VectorXd& gx) const {
    Eigen::VectorXd gy = gx;
    for_blocks([&](int o, int m, int c, int order) {
      auto at = [&](int k) { return k >= m ? 0.0 : gx[o + kLatentDim * k + c]; };
      for (int k = 0; k < m; ++k) {
        const double d = order == 2 ? at(k) - 2.0 * at(k + 1) + at(k + 2) : at(k) - at(k + 1);
        gy[o + kLatentDim * k + c] = d / sigma_[c];
      }
    });
    return gy;
  }

  double evaluate(const Eigen::VectorXd& y, Eigen::VectorXd* grad = nullptr, TermValues* terms = nullptr) const {
    Eigen::VectorXd gx;
    const double f = obj_->evaluate(from_coords(y), grad ? &gx : nullptr, terms);
    if (grad) *grad = pull_gradient(gx);
    return f;
  }

 private:
  template <class F>
  void for_blocks(F&& fn) const {
    for (std::size_t k = 0; k < obj_->num_people(); ++k) {
      const auto [o, m] = obj_->latent_block(k);
      for (int c = 0; c < kLatentDim; ++c) fn(o, m, c, c < 6 ? 2 : 1);
    }
  }

  const StageObjective* obj_;
  Latent sigma_;
};

/// Weighted stage energy at the scene's current variables.
inline double total_energy(int stage, const SceneState& scene, const EnergyContext& ctx, TermValues* terms = nullptr) {
  const StageObjective obj(stage, scene, ctx);
  return obj.evaluate(obj.pack(), nullptr, terms);
}

/// Rolls out the stage-3 variables over the active horizon.
inline std::vector<MotionState> rollout_track(const SceneState& scene, int i, const PriorBackend& prior) {
  const Track& t = scene.tracks.tracks[i];
  const MotionTrack& m = scene.motion[i];
  const int n = active_end(t, scene.horizon) - t.t_start;
  const std::vector<Latent> zs(m.z.begin(), m.z.begin() + (n - 1));
  return rollout(m.s0, zs, prior, m.body);
}

}  // namespace worldpose

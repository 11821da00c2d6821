#pragma once

#include "worldpose/body.hpp"
#include "worldpose/common.hpp"
#include "worldpose/ground.hpp"
#include "worldpose/text_io.hpp"

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <filesystem>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

namespace worldpose {

inline constexpr int kStateDim = 210;
inline constexpr int kLatentDim = 48;

namespace block {
inline constexpr int transl = 0;
inline constexpr int orient = 3;
inline constexpr int body = 6;
inline constexpr int vel = 72;
inline constexpr int angvel = 75;
inline constexpr int joints = 78;
inline constexpr int jvel = 144;
}  // namespace block

using StateVec = Eigen::Matrix<double, kStateDim, 1>;
using Latent = Eigen::Matrix<double, kLatentDim, 1>;

/// Augmented per-frame state. Velocities are per frame.
struct MotionState {
  StateVec v = StateVec::Zero();

  auto transl() { return v.segment<3>(block::transl); }
  auto transl() const { return v.segment<3>(block::transl); }
  auto orient() { return v.segment<3>(block::orient); }
  auto orient() const { return v.segment<3>(block::orient); }
  auto vel() { return v.segment<3>(block::vel); }
  auto vel() const { return v.segment<3>(block::vel); }
  auto angvel() { return v.segment<3>(block::angvel); }
  auto angvel() const { return v.segment<3>(block::angvel); }
  Eigen::Map<BodyPose> body() { return Eigen::Map<BodyPose>(v.data() + block::body); }
  Eigen::Map<const BodyPose> body() const { return Eigen::Map<const BodyPose>(v.data() + block::body); }
  Eigen::Map<Joints> joints() { return Eigen::Map<Joints>(v.data() + block::joints); }
  Eigen::Map<const Joints> joints() const { return Eigen::Map<const Joints>(v.data() + block::joints); }
  Eigen::Map<Joints> jvel() { return Eigen::Map<Joints>(v.data() + block::jvel); }
  Eigen::Map<const Joints> jvel() const { return Eigen::Map<const Joints>(v.data() + block::jvel); }

  PoseParams pose(const ShapeVec& shape) const {
    PoseParams p;
    p.root_orient = orient();
    p.body_pose = body();
    p.shape = shape;
    p.root_transl = transl();
    return p;
  }
};

/// Skeleton and shaped bones needed to turn a pose block into joint positions.
struct BodyContext {
  std::array<int, kNumJoints> parents{};
  BoneOffsets bones = BoneOffsets::Zero();

  static BodyContext make(const Skeleton& s, const ShapeVec& beta) { return {s.parents, shape_to_bones(beta, s)}; }
};

inline Joints state_fk(const MotionState& s, const BodyContext& ctx, FkCache* cache = nullptr) {
  return forward_kinematics(s.orient(), s.body(), ctx.bones, s.transl(), ctx.parents, cache);
}

// ---------------------------------------------------------------------------
// Small dense networks.

enum class Activation { linear, relu, tanh, softplus };

inline Activation parse_activation(std::string_view s) {
  if (s == "linear") return Activation::linear;
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "softplus") return Activation::softplus;
  throw ValidationError("unknown activation '" + std::string(s) + "'");
}

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::softplus: return "softplus";
  }
  return "linear";
}

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct DenseLayer {
  Eigen::MatrixXd W;  // out x in
  Eigen::VectorXd b;
  Activation act = Activation::linear;
};

struct Mlp {
  std::string name;
  std::vector<DenseLayer> layers;

  int in_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().W.cols()); }
  int out_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().W.rows()); }

  struct Cache {
    std::vector<Eigen::VectorXd> pre;   // pre-activation per layer
    std::vector<Eigen::VectorXd> post;  // input to each layer, then final output
  };

  Eigen::VectorXd forward(const Eigen::VectorXd& x, Cache* cache = nullptr) const {
    Eigen::VectorXd h = x;
    if (cache) {
      cache->pre.clear();
      cache->post.assign(1, x);
    }
    for (const auto& l : layers) {
      Eigen::VectorXd z = l.W * h + l.b;
      if (cache) cache->pre.push_back(z);
      switch (l.act) {
        case Activation::linear: break;
        case Activation::relu: z = z.cwiseMax(0.0); break;
        case Activation::tanh: z = z.array().tanh(); break;
        case Activation::softplus: z = z.unaryExpr([](double v) { return softplus(v); }); break;
      }
      h = std::move(z);
      if (cache) cache->post.push_back(h);
    }
    return h;
  }

  /// Input adjoint for an output adjoint, using the cache of a forward pass.
  Eigen::VectorXd vjp(const Cache& cache, const Eigen::VectorXd& grad_out) const {
    Eigen::VectorXd g = grad_out;
    for (int i = static_cast<int>(layers.size()) - 1; i >= 0; --i) {
      const auto& l = layers[i];
      const Eigen::VectorXd& z = cache.pre[i];
      switch (l.act) {
        case Activation::linear: break;
        case Activation::relu: g = (z.array() > 0.0).select(g, 0.0); break;
        case Activation::tanh: g = g.array() * (1.0 - z.array().tanh().square()); break;
        case Activation::softplus: g = g.array() * z.unaryExpr([](double v) { return sigmoid(v); }).array(); break;
      }
      g = l.W.transpose() * g;
    }
    return g;
  }
};

enum class SigmaMode { softplus, exp, fixed };

/// Conditional VAE transition prior loaded from exported weights.
struct MlpPrior {
  Mlp prior;     // s_prev -> [mu, sigma_raw] (or mu only with fixed sigma)
  Mlp decoder;   // [z, s_prev] -> state delta
  Mlp encoder;   // [s_prev, s_cur] -> [mu, ...]
  Mlp contact;   // s -> contact logits
  SigmaMode sigma_mode = SigmaMode::softplus;
  Eigen::VectorXd fixed_sigma;
  std::vector<int> contact_joints;

  void validate() const {
    auto need = [](const Mlp& m, int in, int out, bool at_least = false) {
      if (m.layers.empty()) throw ValidationError("network '" + m.name + "' has no layers");
      for (std::size_t i = 0; i + 1 < m.layers.size(); ++i) {
        if (m.layers[i].W.rows() != m.layers[i + 1].W.cols()) {
          throw ValidationError("network '" + m.name + "' has inconsistent layer sizes");
        }
      }
      for (const auto& l : m.layers) {
        if (l.b.size() != l.W.rows()) throw ValidationError("network '" + m.name + "' bias size mismatch");
        if (!l.W.allFinite() || !l.b.allFinite()) throw ValidationError("network '" + m.name + "' has non-finite weights");
      }
      if (m.in_dim() != in || (at_least ? m.out_dim() < out : m.out_dim() != out)) {
        throw ValidationError("network '" + m.name + "' must map " + std::to_string(in) + " -> " +
                              std::to_string(out) + ", got " + std::to_string(m.in_dim()) + " -> " +
                              std::to_string(m.out_dim()));
      }
    };
    need(prior, kStateDim, sigma_mode == SigmaMode::fixed ? kLatentDim : 2 * kLatentDim);
    need(decoder, kLatentDim + kStateDim, kStateDim);
    need(encoder, 2 * kStateDim, kLatentDim, true);
    need(contact, kStateDim, static_cast<int>(contact_joints.size()));
    for (int j : contact_joints) {
      if (j < 0 || j >= kNumJoints) throw ValidationError("contact joint index out of range");
    }
    if (sigma_mode == SigmaMode::fixed) {
      if (fixed_sigma.size() != kLatentDim) throw ValidationError("fixed sigma must have 48 entries");
      if (!(fixed_sigma.array() > 0.0).all()) throw ValidationError("fixed sigma values must be strictly positive");
    }
  }
};

/// Constant-velocity prior: z holds whitened root linear / angular
/// accelerations and body-pose increments on a fixed subset of joints.
struct CvParams {
  double sigma_vel = 0.005;    // m / frame^2
  double sigma_angvel = 0.01;  // rad / frame^2
  double sigma_pose = 0.1;     // rad / frame
  // Contact heuristic.
  double h0 = 0.08;
  double v0 = 0.03;
  double k_h = 200.0;
  double k_v = 200.0;
  std::vector<int> contact_joints = {kFootJoints.begin(), kFootJoints.end()};

  void validate() const {
    if (!(sigma_vel > 0.0) || !(sigma_angvel > 0.0) || !(sigma_pose > 0.0)) {
      throw ValidationError("constant-velocity sigmas must be strictly positive");
    }
  }
};

// Joints whose rotation increments occupy z[6:48], three coordinates each.
inline constexpr std::array<int, 14> kLatentJoints = {1, 2, 3, 4, 5, 6, 7, 8, 9, 12, 16, 17, 18, 19};

struct PriorBackend {
  enum class Kind { constant_velocity, mlp_cvae };
  Kind kind = Kind::constant_velocity;
  CvParams cv;
  std::shared_ptr<const MlpPrior> mlp;

  static PriorBackend constant_velocity(const CvParams& p = {}) {
    p.validate();
    return {Kind::constant_velocity, p, nullptr};
  }
  static PriorBackend mlp_cvae(std::shared_ptr<const MlpPrior> m) {
    m->validate();
    PriorBackend b;
    b.kind = Kind::mlp_cvae;
    b.mlp = std::move(m);
    return b;
  }

  const std::vector<int>& contact_joints() const {
    return kind == Kind::mlp_cvae ? mlp->contact_joints : cv.contact_joints;
  }

  /// Per-dimension scale of the constant-velocity latent.
  Latent cv_sigma() const {
    Latent s;
    s.segment<3>(0).setConstant(cv.sigma_vel);
    s.segment<3>(3).setConstant(cv.sigma_angvel);
    s.segment<kLatentDim - 6>(6).setConstant(cv.sigma_pose);
    return s;
  }
};

// ---------------------------------------------------------------------------
// Constant-velocity transition.

inline MotionState cv_predict(const MotionState& s, const BodyContext& ctx) {
  MotionState out = s;
  out.transl() = s.transl() + s.vel();
  out.orient() = so3::compose(s.angvel(), s.orient());
  out.joints() = state_fk(out, ctx);
  out.jvel() = out.joints() - s.joints();
  return out;
}

inline Latent encode_transition(const MotionState& prev, const MotionState& cur, const PriorBackend& prior) {
  if (prior.kind == PriorBackend::Kind::mlp_cvae) {
    Eigen::VectorXd x(2 * kStateDim);
    x << prev.v, cur.v;
    return prior.mlp->encoder.forward(x).head<kLatentDim>();
  }
  // The predicted state keeps prev's velocities and body pose, so the
  // deviation on those blocks is cur minus prev.
  Latent z;
  z.segment<3>(0) = (cur.vel() - prev.vel()) / prior.cv.sigma_vel;
  z.segment<3>(3) = (cur.angvel() - prev.angvel()) / prior.cv.sigma_angvel;
  for (std::size_t i = 0; i < kLatentJoints.size(); ++i) {
    const int j = kLatentJoints[i];
    z.segment<3>(6 + 3 * i) = (cur.body().row(j) - prev.body().row(j)).transpose() / prior.cv.sigma_pose;
  }
  return z;
}

inline MotionState decode_step(const Latent& z, const MotionState& prev, const PriorBackend& prior,
                               const BodyContext& ctx) {
  if (prior.kind == PriorBackend::Kind::mlp_cvae) {
    Eigen::VectorXd x(kLatentDim + kStateDim);
    x << z, prev.v;
    MotionState out;
    out.v = prev.v + prior.mlp->decoder.forward(x);
    return out;
  }
  MotionState out = prev;
  out.transl() = prev.transl() + prev.vel();
  out.orient() = so3::compose(prev.angvel(), prev.orient());
  for (std::size_t i = 0; i < kLatentJoints.size(); ++i) {
    const int j = kLatentJoints[i];
    out.body().row(j) += prior.cv.sigma_pose * z.segment<3>(6 + 3 * i).transpose();
  }
  out.vel() = prev.vel() + prior.cv.sigma_vel * z.segment<3>(0);
  out.angvel() = prev.angvel() + prior.cv.sigma_angvel * z.segment<3>(3);
  out.joints() = state_fk(out, ctx);
  out.jvel() = out.joints() - prev.joints();
  return out;
}

/// Adjoints of decode_step. grad_prev and grad_z are accumulated into.
inline void decode_step_vjp(const Latent& z, const MotionState& prev, const MotionState& cur,
                            const PriorBackend& prior, const BodyContext& ctx, const StateVec& grad_cur,
                            StateVec& grad_prev, Latent& grad_z) {
  if (prior.kind == PriorBackend::Kind::mlp_cvae) {
    Eigen::VectorXd x(kLatentDim + kStateDim);
    x << z, prev.v;
    Mlp::Cache cache;
    prior.mlp->decoder.forward(x, &cache);
    const Eigen::VectorXd gx = prior.mlp->decoder.vjp(cache, grad_cur);
    grad_z += gx.head<kLatentDim>();
    grad_prev += grad_cur + gx.tail<kStateDim>();
    return;
  }
  MotionState g;
  g.v = grad_cur;
  // jvel' = joints' - joints
  Joints gj = g.joints() + g.jvel();
  Eigen::Map<Joints>(grad_prev.data() + block::joints) -= g.jvel();
  // joints' = FK(pose')
  FkCache cache;
  state_fk(cur, ctx, &cache);
  const FkGradient fg = forward_kinematics_vjp(cur.orient(), cur.body(), ctx.bones, ctx.parents, cache, gj);
  const Vec3 g_transl = g.transl() + fg.transl;
  const Vec3 g_orient = g.orient() + fg.root_orient;
  const BodyPose g_body = g.body() + fg.body;

  grad_prev.segment<3>(block::transl) += g_transl;
  grad_prev.segment<3>(block::vel) += g_transl;
  Vec3 g_angvel, g_orient_prev;
  so3::compose_vjp(prev.angvel(), prev.orient(), cur.orient(), g_orient, g_angvel, g_orient_prev);
  grad_prev.segment<3>(block::orient) += g_orient_prev;
  grad_prev.segment<3>(block::angvel) += g_angvel;
  Eigen::Map<BodyPose>(grad_prev.data() + block::body) += g_body;
  for (std::size_t i = 0; i < kLatentJoints.size(); ++i) {
    grad_z.segment<3>(6 + 3 * i) += prior.cv.sigma_pose * g_body.row(kLatentJoints[i]).transpose();
  }
  grad_prev.segment<3>(block::vel) += g.vel();
  grad_z.segment<3>(0) += prior.cv.sigma_vel * g.vel();
  grad_prev.segment<3>(block::angvel) += g.angvel();
  grad_z.segment<3>(3) += prior.cv.sigma_angvel * g.angvel();
}

namespace detail {
inline double gauss_nll(const Latent& z, const Latent& mu, const Latent& sigma) {
  const double log_sqrt_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  double nll = 0.0;
  for (int d = 0; d < kLatentDim; ++d) {
    const double r = (z[d] - mu[d]) / sigma[d];
    nll += std::log(sigma[d]) + log_sqrt_2pi + 0.5 * r * r;
  }
  return nll;
}

inline void mlp_prior_params(const MlpPrior& m, const StateVec& s, Latent& mu, Latent& sigma, Latent* dsigma_draw,
                             Mlp::Cache* cache) {
  const Eigen::VectorXd out = m.prior.forward(s, cache);
  mu = out.head<kLatentDim>();
  if (m.sigma_mode == SigmaMode::fixed) {
    sigma = m.fixed_sigma;
    if (dsigma_draw) dsigma_draw->setZero();
    return;
  }
  for (int d = 0; d < kLatentDim; ++d) {
    const double raw = out[kLatentDim + d];
    if (m.sigma_mode == SigmaMode::softplus) {
      sigma[d] = softplus(raw);
      if (dsigma_draw) (*dsigma_draw)[d] = sigmoid(raw);
    } else {
      sigma[d] = std::exp(raw);
      if (dsigma_draw) (*dsigma_draw)[d] = sigma[d];
    }
  }
}
}  // namespace detail

/// Negative log density of z under the transition prior conditioned on s_prev.
/// The constant-velocity latent is already whitened, so its density is a unit
/// normal in z together with the log-scale normalizer of the physical units.
inline double prior_nll(const Latent& z, const MotionState& prev, const PriorBackend& prior) {
  if (prior.kind == PriorBackend::Kind::mlp_cvae) {
    Latent mu, sigma;
    detail::mlp_prior_params(*prior.mlp, prev.v, mu, sigma, nullptr, nullptr);
    return detail::gauss_nll(z, mu, sigma);
  }
  const Latent sigma = prior.cv_sigma();
  const double log_sqrt_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  return sigma.array().log().sum() + kLatentDim * log_sqrt_2pi + 0.5 * z.squaredNorm();
}

/// Gradient of prior_nll; accumulates into grad_z and grad_prev.
inline double prior_nll_vjp(const Latent& z, const MotionState& prev, const PriorBackend& prior, double scale,
                            Latent& grad_z, StateVec& grad_prev) {
  if (prior.kind == PriorBackend::Kind::mlp_cvae) {
    const MlpPrior& m = *prior.mlp;
    Latent mu, sigma, dsig;
    Mlp::Cache cache;
    detail::mlp_prior_params(m, prev.v, mu, sigma, &dsig, &cache);
    Eigen::VectorXd gout = Eigen::VectorXd::Zero(m.prior.out_dim());
    for (int d = 0; d < kLatentDim; ++d) {
      const double r = (z[d] - mu[d]) / sigma[d];
      grad_z[d] += scale * r / sigma[d];
      gout[d] = -scale * r / sigma[d];
      if (m.sigma_mode != SigmaMode::fixed) gout[kLatentDim + d] = scale * (1.0 / sigma[d] - r * r / sigma[d]) * dsig[d];
    }
    grad_prev += m.prior.vjp(cache, gout);
    return detail::gauss_nll(z, mu, sigma);
  }
  grad_z += scale * z;
  return prior_nll(z, prev, prior);
}

/// s_t = decode_step(z_t, s_{t-1}) for t = 1..H; returns H+1 states.
inline std::vector<MotionState> rollout(const MotionState& s0, const std::vector<Latent>& zs, const PriorBackend& prior,
                                        const BodyContext& ctx) {
  std::vector<MotionState> out;
  out.reserve(zs.size() + 1);
  out.push_back(s0);
  for (std::size_t t = 0; t < zs.size(); ++t) {
    out.push_back(decode_step(zs[t], out.back(), prior, ctx));
    if (!out.back().v.allFinite()) throw RolloutDivergence(static_cast<int>(t) + 1);
  }
  return out;
}

/// Pulls per-state adjoints back to the initial state and the latents.
/// grad_states is consumed (it holds the running adjoint).
inline void rollout_vjp(const std::vector<MotionState>& states, const std::vector<Latent>& zs,
                        const PriorBackend& prior, const BodyContext& ctx, std::vector<StateVec>& grad_states,
                        StateVec& grad_s0, std::vector<Latent>& grad_zs) {
  grad_zs.assign(zs.size(), Latent::Zero());
  for (int t = static_cast<int>(zs.size()); t >= 1; --t) {
    decode_step_vjp(zs[t - 1], states[t - 1], states[t], prior, ctx, grad_states[t], grad_states[t - 1],
                    grad_zs[t - 1]);
  }
  grad_s0 = grad_states[0];
}

/// Per-frame contact probability for every joint (zero off the contact set).
using ContactProbabilities = std::vector<Eigen::Matrix<double, kNumJoints, 1>>;

inline ContactProbabilities contact_probabilities(const std::vector<MotionState>& states, const PriorBackend& prior,
                                                  const GroundPlane& ground) {
  ContactProbabilities out(states.size(), Eigen::Matrix<double, kNumJoints, 1>::Zero());
  if (prior.kind == PriorBackend::Kind::mlp_cvae) {
    for (std::size_t t = 0; t < states.size(); ++t) {
      const Eigen::VectorXd logits = prior.mlp->contact.forward(states[t].v);
      for (std::size_t k = 0; k < prior.mlp->contact_joints.size(); ++k) {
        out[t][prior.mlp->contact_joints[k]] = sigmoid(logits[k]);
      }
    }
    return out;
  }
  const CvParams& p = prior.cv;
  const int n = static_cast<int>(states.size());
  for (int t = 0; t < n; ++t) {
    for (int j : p.contact_joints) {
      const Vec3 x = states[t].joints().row(j).transpose();
      double speed = 0.0;
      if (n > 1) {
        const int a = t + 1 < n ? t : t - 1;
        speed = (states[a + 1].joints().row(j) - states[a].joints().row(j)).norm();
      }
      const double h = point_plane_distance(x, ground);
      out[t][j] = sigmoid(p.k_h * (p.h0 - h)) * sigmoid(p.k_v * (p.v0 - speed));
    }
  }
  return out;
}

/// Lifts a pose sequence into augmented states using forward differences;
/// the last frame repeats the previous velocities.
inline std::vector<MotionState> states_from_poses(const std::vector<PoseParams>& poses, const Skeleton& skel) {
  const int n = static_cast<int>(poses.size());
  if (n < 2) throw ValidationError("states_from_poses needs at least 2 frames");
  std::vector<MotionState> s(n);
  for (int t = 0; t < n; ++t) {
    s[t].transl() = poses[t].root_transl;
    s[t].orient() = poses[t].root_orient;
    s[t].body() = poses[t].body_pose;
    s[t].joints() = forward_kinematics(poses[t], skel);
  }
  for (int t = 0; t + 1 < n; ++t) {
    s[t].vel() = s[t + 1].transl() - s[t].transl();
    s[t].angvel() = so3::log(so3::exp(s[t + 1].orient()) * so3::exp(s[t].orient()).transpose());
    s[t].jvel() = s[t + 1].joints() - s[t].joints();
  }
  s[n - 1].vel() = s[n - 2].vel();
  s[n - 1].angvel() = s[n - 2].angvel();
  s[n - 1].jvel() = s[n - 2].jvel();
  return s;
}

// ---------------------------------------------------------------------------
// Weight file: text header terminated by `end_header`, then little-endian
// float64 payload. Per layer: W (out x in, row-major) then b (out).

inline MlpPrior load_mlp_prior(const std::filesystem::path& path) {
  const std::string bytes = io::read_file(path);
  const std::string src = path.string();
  const std::string marker = "end_header\n";
  const auto end = bytes.find(marker);
  if (end == std::string::npos) throw ParseError(src, 0, "missing end_header");
  const std::string_view header(bytes.data(), end);
  MlpPrior m;
  std::vector<Mlp*> order;
  Mlp* current = nullptr;
  std::size_t expected_layers = 0;
  std::size_t line_no = 0, pos = 0;
  bool magic = false;
  while (pos < header.size()) {
    const auto nl = header.find('\n', pos);
    const std::string_view line = header.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? header.size() : nl + 1;
    ++line_no;
    const auto body = io::strip_comment(line);
    if (body.empty()) continue;
    const auto f = io::split_ws(body);
    if (!magic) {
      if (f.size() != 2 || f[0] != "worldpose-mlp-cvae" || f[1] != "1") {
        throw ParseError(src, line_no, "expected 'worldpose-mlp-cvae 1'");
      }
      magic = true;
    } else if (f[0] == "sigma" && f.size() == 2) {
      if (f[1] == "softplus") m.sigma_mode = SigmaMode::softplus;
      else if (f[1] == "exp") m.sigma_mode = SigmaMode::exp;
      else if (f[1] == "fixed") m.sigma_mode = SigmaMode::fixed;
      else throw ParseError(src, line_no, "unknown sigma mode");
    } else if (f[0] == "contact_joints") {
      for (std::size_t i = 1; i < f.size(); ++i) {
        long long j;
        if (!io::parse_int(f[i], j)) throw ParseError(src, line_no, "bad contact joint");
        m.contact_joints.push_back(static_cast<int>(j));
      }
    } else if (f[0] == "network" && f.size() == 3) {
      if (current && current->layers.size() != expected_layers) throw ParseError(src, line_no, "layer count mismatch");
      if (f[1] == "prior") current = &m.prior;
      else if (f[1] == "decoder") current = &m.decoder;
      else if (f[1] == "encoder") current = &m.encoder;
      else if (f[1] == "contact") current = &m.contact;
      else throw ParseError(src, line_no, "unknown network '" + std::string(f[1]) + "'");
      current->name = std::string(f[1]);
      long long n;
      if (!io::parse_int(f[2], n) || n < 1) throw ParseError(src, line_no, "bad layer count");
      expected_layers = static_cast<std::size_t>(n);
      order.push_back(current);
    } else if (f[0] == "dense" && f.size() == 4) {
      if (!current) throw ParseError(src, line_no, "dense layer outside a network");
      long long in, out;
      if (!io::parse_int(f[1], in) || !io::parse_int(f[2], out) || in < 1 || out < 1) {
        throw ParseError(src, line_no, "bad layer size");
      }
      DenseLayer l;
      l.W.resize(out, in);
      l.b.resize(out);
      try {
        l.act = parse_activation(f[3]);
      } catch (const ValidationError& e) {
        throw ParseError(src, line_no, e.what());
      }
      current->layers.push_back(std::move(l));
    } else {
      throw ParseError(src, line_no, "unrecognised header line");
    }
  }
  if (current && current->layers.size() != expected_layers) throw ParseError(src, line_no, "layer count mismatch");
  std::size_t need = 0;
  for (const Mlp* net : order) {
    for (const auto& l : net->layers) need += static_cast<std::size_t>(l.W.size() + l.b.size());
  }
  if (m.sigma_mode == SigmaMode::fixed) need += kLatentDim;
  const char* p = bytes.data() + end + marker.size();
  const std::size_t have = bytes.size() - end - marker.size();
  if (have != need * 8) {
    throw ParseError(src, 0, "payload has " + std::to_string(have) + " bytes, header implies " + std::to_string(need * 8));
  }
  auto next = [&]() {
    double v;
    std::memcpy(&v, p, 8);
    p += 8;
    return v;
  };
  for (Mlp* net : order) {
    for (auto& l : net->layers) {
      for (Eigen::Index r = 0; r < l.W.rows(); ++r) {
        for (Eigen::Index c = 0; c < l.W.cols(); ++c) l.W(r, c) = next();
      }
      for (Eigen::Index r = 0; r < l.b.size(); ++r) l.b[r] = next();
    }
  }
  if (m.sigma_mode == SigmaMode::fixed) {
    m.fixed_sigma.resize(kLatentDim);
    for (int d = 0; d < kLatentDim; ++d) m.fixed_sigma[d] = next();
  }
  m.validate();
  return m;
}

inline void write_mlp_prior(const std::filesystem::path& path, const MlpPrior& m) {
  std::string out = "worldpose-mlp-cvae 1\n";
  out += std::string("sigma ") +
         (m.sigma_mode == SigmaMode::softplus ? "softplus" : m.sigma_mode == SigmaMode::exp ? "exp" : "fixed") + "\n";
  out += "contact_joints";
  for (int j : m.contact_joints) out += ' ' + std::to_string(j);
  out += '\n';
  const Mlp* nets[] = {&m.prior, &m.decoder, &m.encoder, &m.contact};
  const char* names[] = {"prior", "decoder", "encoder", "contact"};
  for (int i = 0; i < 4; ++i) {
    out += std::string("network ") + names[i] + ' ' + std::to_string(nets[i]->layers.size()) + '\n';
    for (const auto& l : nets[i]->layers) {
      out += "dense " + std::to_string(l.W.cols()) + ' ' + std::to_string(l.W.rows()) + ' ' + activation_name(l.act) + '\n';
    }
  }
  out += "end_header\n";
  auto put = [&](double v) {
    char b[8];
    std::memcpy(b, &v, 8);
    out.append(b, 8);
  };
  for (const Mlp* net : nets) {
    for (const auto& l : net->layers) {
      for (Eigen::Index r = 0; r < l.W.rows(); ++r) {
        for (Eigen::Index c = 0; c < l.W.cols(); ++c) put(l.W(r, c));
      }
      for (Eigen::Index r = 0; r < l.b.size(); ++r) put(l.b[r]);
    }
  }
  if (m.sigma_mode == SigmaMode::fixed) {
    for (Eigen::Index d = 0; d < m.fixed_sigma.size(); ++d) put(m.fixed_sigma[d]);
  }
  io::write_file(path, out);
}

}  // namespace worldpose

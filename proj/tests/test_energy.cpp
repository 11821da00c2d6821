#include "worldpose/energy.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace worldpose;

namespace {

const Skeleton& skel() {
  static const Skeleton s = default_skeleton();
  return s;
}

BodyContext body_ctx() { return BodyContext::make(skel(), ShapeVec::Zero()); }

Joints random_joints(std::mt19937_64& rng, double scale = 0.5) {
  const Eigen::VectorXd v = testutil::random_vector(rng, 3 * kNumJoints, scale);
  return Eigen::Map<const Joints>(v.data());
}

// Flat views so the finite-difference helper can drive sequence energies.
Eigen::VectorXd flat(const std::vector<Joints>& j) {
  Eigen::VectorXd v(3 * kNumJoints * j.size());
  for (std::size_t t = 0; t < j.size(); ++t) v.segment<3 * kNumJoints>(3 * kNumJoints * t) = j[t].reshaped<Eigen::RowMajor>();
  return v;
}

std::vector<Joints> unflat(const Eigen::VectorXd& v) {
  std::vector<Joints> j(v.size() / (3 * kNumJoints));
  for (std::size_t t = 0; t < j.size(); ++t) {
    j[t] = v.segment<3 * kNumJoints>(3 * kNumJoints * t).reshaped<Eigen::RowMajor>(kNumJoints, 3);
  }
  return j;
}

Eigen::VectorXd flat_states(const std::vector<MotionState>& s) {
  Eigen::VectorXd v(kStateDim * s.size());
  for (std::size_t t = 0; t < s.size(); ++t) v.segment<kStateDim>(kStateDim * t) = s[t].v;
  return v;
}

std::vector<MotionState> unflat_states(const Eigen::VectorXd& v) {
  std::vector<MotionState> s(v.size() / kStateDim);
  for (std::size_t t = 0; t < s.size(); ++t) s[t].v = v.segment<kStateDim>(kStateDim * t);
  return s;
}

std::vector<PoseParams> walking_poses(int n) {
  std::vector<PoseParams> p(n);
  for (int t = 0; t < n; ++t) {
    p[t].root_transl = Vec3(0.03 * t, 0.01 * t, 0.9);
    p[t].root_orient = Vec3(0, 0, 0.05 * t);
    p[t].body_pose(1, 0) = 0.3 * std::sin(0.4 * t);
    p[t].body_pose(2, 0) = -0.3 * std::sin(0.4 * t);
  }
  return p;
}

ContactProbabilities random_contacts(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  ContactProbabilities c(n, Eigen::Matrix<double, kNumJoints, 1>::Zero());
  for (auto& f : c) {
    for (int j : kFootJoints) f[j] = u(rng);
  }
  return c;
}

}  // namespace

TEST(Energy, GemanMcClureExamples) {
  const double s = 100.0;
  EXPECT_NEAR(robust_gm(s * s, s), s * s / 2, 1e-9);
  EXPECT_NEAR(robust_gm(1e4 * s * s, s) / (s * s), 1.0, 2e-4);
  EXPECT_LT(robust_gm(1e4 * s * s, s), s * s);
  EXPECT_NEAR(robust_gm(Eigen::Vector2d(3, 4), s), 250000.0 / 10025.0, 1e-12);
  EXPECT_EQ(robust_gm(0.0, s), 0.0);
  double prev = 0.0;
  for (double r2 = 1.0; r2 < 1e8; r2 *= 3.0) {
    const double v = robust_gm(r2, s);
    EXPECT_GT(v, prev);
    EXPECT_LT(v, s * s);
    prev = v;
  }
}

TEST(Energy, GemanMcClureDerivative) {
  for (double r2 : {0.0, 1.0, 100.0, 1e4, 1e6}) {
    double d;
    robust_gm(r2, 100.0, &d);
    const double h = 1e-4 * std::max(1.0, r2);
    EXPECT_NEAR(d, (robust_gm(r2 + h, 100.0) - robust_gm(std::max(r2 - h, 0.0), 100.0)) / (r2 + h - std::max(r2 - h, 0.0)),
                1e-6);
  }
}

TEST(Energy, DataTermVanishesAtExactProjection) {
  std::mt19937_64 rng(1);
  const CameraIntrinsics k{1000, 1000, 640, 360};
  const CameraPose cam = CameraPose::from_rt(so3::exp(Vec3(0.1, -0.2, 0.05)), Vec3(0.2, -0.1, 5.0));
  const Joints j = random_joints(rng);
  Keypoints kp;
  for (int i = 0; i < kNumJoints; ++i) kp.row(i) = project(k, world_to_camera(cam, 2.0, j.row(i).transpose())).transpose();
  const Confidences conf = Confidences::Constant(0.8);
  EXPECT_LT(e_data_frame(j, cam, 2.0, k, kp, conf, 100.0), 1e-18);
  EXPECT_GT(e_data_frame(j, cam, 2.2, k, kp, conf, 100.0), 1e-3);
  EXPECT_EQ(e_data_frame(j, cam, 2.2, k, kp, Confidences::Zero(), 100.0), 0.0);
}

TEST(Energy, DataTermScaleInvariance) {
  std::mt19937_64 rng(2);
  const CameraIntrinsics k{900, 900, 500, 400};
  const CameraPose cam = CameraPose::from_rt(so3::exp(Vec3(0.3, 0.1, -0.2)), Vec3(0.1, 0.4, 4.0));
  const Joints j = random_joints(rng);
  Keypoints kp = Keypoints::Constant(420.0);
  const Confidences conf = Confidences::Constant(1.0);
  const double e1 = e_data_frame(j, cam, 1.0, k, kp, conf, 100.0);
  for (double a : {0.5, 2.0, 3.7}) EXPECT_NEAR(e_data_frame(a * j, cam, a, k, kp, conf, 100.0), e1, 1e-9 * e1);
}

TEST(Energy, DataTermGradient) {
  std::mt19937_64 rng(3);
  const CameraIntrinsics k{1000, 1000, 640, 360};
  for (int trial = 0; trial < 10; ++trial) {
    const CameraPose cam =
        CameraPose::from_rt(so3::exp(testutil::random_vector(rng, 3, 0.3)), Vec3(0.1, -0.2, 3.0) + testutil::random_vector(rng, 3, 0.2));
    const Joints j = random_joints(rng);
    Keypoints kp;
    for (int i = 0; i < kNumJoints; ++i) {
      kp.row(i) = project(k, world_to_camera(cam, 1.5, j.row(i).transpose())).transpose() +
                  testutil::random_vector(rng, 2, 80.0).transpose();
    }
    Confidences conf = Confidences::Constant(0.7);
    conf[4] = 0.0;
    Joints gj = Joints::Zero();
    double ga = 0.0;
    const double alpha = 1.3;
    e_data_frame(j, cam, alpha, k, kp, conf, 100.0, &gj, &ga);
    Eigen::VectorXd x(3 * kNumJoints + 1);
    x << j.reshaped<Eigen::RowMajor>(), alpha;
    Eigen::VectorXd g(x.size());
    g << gj.reshaped<Eigen::RowMajor>(), ga;
    const auto f = [&](const Eigen::VectorXd& v) {
      const Joints jj = v.head<3 * kNumJoints>().reshaped<Eigen::RowMajor>(kNumJoints, 3);
      return e_data_frame(jj, cam, v[3 * kNumJoints], k, kp, conf, 100.0);
    };
    EXPECT_LT(testutil::max_rel_error(g, testutil::numeric_gradient(f, x)), 1e-6);
    EXPECT_TRUE(gj.row(4).isZero());
  }
}

TEST(Energy, SmoothExample) {
  std::vector<Joints> j(2, Joints::Zero());
  j[1].col(0).setConstant(0.1);
  EXPECT_NEAR(e_smooth(j), 0.22, 1e-15);
  EXPECT_EQ(e_smooth({Joints::Ones()}), 0.0);
}

TEST(Energy, SmoothGradient) {
  std::mt19937_64 rng(4);
  std::vector<Joints> j;
  for (int t = 0; t < 5; ++t) j.push_back(random_joints(rng));
  std::vector<Joints> g(5, Joints::Zero());
  e_smooth(j, &g);
  const auto f = [](const Eigen::VectorXd& v) { return e_smooth(unflat(v)); };
  EXPECT_LT(testutil::max_rel_error(flat(g), testutil::numeric_gradient(f, flat(j), 1e-3)), 1e-8);
}

TEST(Energy, ShapeAndPoseTerms) {
  ShapeVec b = ShapeVec::Zero();
  b[0] = 3.0;
  b[5] = -4.0;
  ShapeVec gb = ShapeVec::Zero();
  EXPECT_EQ(e_shape(b, &gb), 25.0);
  EXPECT_EQ(gb, 2.0 * b);

  BodyPose theta = BodyPose::Zero();
  theta(0, 1) = 2.0;   // flat index 1, inside the identity block
  theta(20, 0) = 5.0;  // flat index 60, outside it
  EXPECT_EQ(e_pose(theta, PosePriorMap::identity()), 4.0);
}

TEST(Energy, PoseTermGradientAndFile) {
  std::mt19937_64 rng(5);
  PosePriorMap m;
  m.A = Eigen::Map<const Eigen::MatrixXd>(testutil::random_vector(rng, kPoseLatentDim * 3 * kNumJoints, 0.2).data(),
                                          kPoseLatentDim, 3 * kNumJoints);
  m.mean = testutil::random_vector(rng, 3 * kNumJoints, 0.1);
  const Eigen::VectorXd x = testutil::random_vector(rng, 3 * kNumJoints, 0.5);
  BodyPose g = BodyPose::Zero();
  e_pose(Eigen::Map<const BodyPose>(x.data()), m, &g);
  const auto f = [&](const Eigen::VectorXd& v) { return e_pose(Eigen::Map<const BodyPose>(v.data()), m); };
  EXPECT_LT(testutil::max_rel_error(Eigen::Map<const Eigen::VectorXd>(g.data(), g.size()), testutil::numeric_gradient(f, x, 1e-3)),
            1e-8);

  const auto dir = std::filesystem::temp_directory_path() / "worldpose_test_posemap";
  std::filesystem::create_directories(dir);
  write_pose_prior_map(dir / "map.bin", m);
  const PosePriorMap back = load_pose_prior_map(dir / "map.bin");
  EXPECT_EQ(back.A, m.A);
  EXPECT_EQ(back.mean, m.mean);
  io::write_matrix(dir / "bad.bin", Eigen::MatrixXd::Zero(32, 66));
  EXPECT_THROW(load_pose_prior_map(dir / "bad.bin"), ValidationError);
  std::filesystem::remove_all(dir);
}

TEST(Energy, CvaeTermGradient) {
  std::mt19937_64 rng(6);
  const PriorBackend prior = PriorBackend::constant_velocity();
  std::vector<MotionState> s(4);
  std::vector<Latent> z;
  for (int t = 0; t < 3; ++t) z.push_back(testutil::random_vector(rng, kLatentDim, 1.0));
  std::vector<Latent> gz(3, Latent::Zero());
  std::vector<StateVec> gs(4, StateVec::Zero());
  const double e = e_cvae(z, s, prior, &gz, &gs);
  EXPECT_NEAR(e, e_cvae(z, s, prior), 1e-12);
  for (int t = 0; t < 3; ++t) EXPECT_LT((gz[t] - z[t]).norm(), 1e-15);
  EXPECT_NEAR(e - e_cvae(std::vector<Latent>(3, Latent::Zero()), s, prior),
              0.5 * (z[0].squaredNorm() + z[1].squaredNorm() + z[2].squaredNorm()), 1e-9);
}

TEST(Energy, StabilityVanishesOnConsistentStates) {
  const auto s = states_from_poses(walking_poses(6), skel());
  EXPECT_LT(e_stab(s, body_ctx()), 1e-24);
  auto broken = s;
  broken[2].vel() += Vec3(0.01, 0, 0);
  EXPECT_NEAR(e_stab(broken, body_ctx()), 1e-4, 1e-12);
}

TEST(Energy, StabilityGradient) {
  std::mt19937_64 rng(7);
  auto s = states_from_poses(walking_poses(4), skel());
  for (auto& st : s) st.v += testutil::random_vector(rng, kStateDim, 0.02);
  std::vector<StateVec> g(s.size(), StateVec::Zero());
  e_stab(s, body_ctx(), &g);
  Eigen::VectorXd ga(kStateDim * s.size());
  for (std::size_t t = 0; t < s.size(); ++t) ga.segment<kStateDim>(kStateDim * t) = g[t];
  const auto f = [](const Eigen::VectorXd& v) { return e_stab(unflat_states(v), body_ctx()); };
  EXPECT_LT(testutil::max_rel_error(ga, testutil::numeric_gradient(f, flat_states(s))), 1e-6);
}

TEST(Energy, SkateValues) {
  std::mt19937_64 rng(8);
  const Joints a = random_joints(rng);
  ContactProbabilities c(2, Eigen::Matrix<double, kNumJoints, 1>::Zero());
  c[0][joint::left_ankle] = 0.5;
  EXPECT_EQ(e_skate({a, a}, c), 0.0);
  Joints b = a;
  b(joint::left_ankle, 0) += 0.3;
  b(joint::left_ankle, 1) += 0.4;
  b(joint::head, 2) += 1.0;  // no contact weight
  EXPECT_NEAR(e_skate({a, b}, c), 0.5 * (std::sqrt(0.25 + kSkateEps * kSkateEps) - kSkateEps), 1e-15);
  EXPECT_NEAR(e_skate({a, b}, c, nullptr, 0.0), 0.25, 1e-15);
}

TEST(Energy, SkateGradient) {
  std::mt19937_64 rng(9);
  std::vector<Joints> j;
  for (int t = 0; t < 4; ++t) j.push_back(random_joints(rng));
  const auto c = random_contacts(rng, 4);
  std::vector<Joints> g(4, Joints::Zero());
  e_skate(j, c, &g);
  const auto f = [&](const Eigen::VectorXd& v) { return e_skate(unflat(v), c); };
  EXPECT_LT(testutil::max_rel_error(flat(g), testutil::numeric_gradient(f, flat(j))), 1e-6);
}

TEST(Energy, ContactHinge) {
  ContactProbabilities c(1, Eigen::Matrix<double, kNumJoints, 1>::Zero());
  c[0][joint::right_foot] = 0.5;
  Joints j = Joints::Zero();
  const GroundPlane g{0.0, 0.0, 1.0};
  j(joint::right_foot, 2) = 1.05;
  EXPECT_EQ(e_contact({j}, c, g, 0.08), 0.0);
  j(joint::right_foot, 2) = 1.2;
  EXPECT_NEAR(e_contact({j}, c, g, 0.08), 0.5 * 0.12, 1e-12);
  j(joint::right_foot, 2) = 0.7;
  EXPECT_NEAR(e_contact({j}, c, g, 0.08), 0.5 * 0.22, 1e-12);
}

TEST(Energy, ContactGradient) {
  std::mt19937_64 rng(10);
  std::vector<Joints> j;
  for (int t = 0; t < 4; ++t) j.push_back(random_joints(rng, 1.0));
  const auto c = random_contacts(rng, 4);
  const GroundPlane g{0.1, -0.2, 0.05};
  std::vector<Joints> gj(4, Joints::Zero());
  Vec3 gg = Vec3::Zero();
  e_contact(j, c, g, 0.08, &gj, &gg);
  const Eigen::VectorXd x = flat(j);
  Eigen::VectorXd xa(x.size() + 3), ga(x.size() + 3);
  xa << x, g.coeffs();
  ga << flat(gj), gg;
  const auto f = [&](const Eigen::VectorXd& v) {
    return e_contact(unflat(v.head(x.size())), c, GroundPlane::from(v.tail<3>()), 0.08);
  };
  EXPECT_LT(testutil::max_rel_error(ga, testutil::numeric_gradient(f, xa, 1e-7)), 1e-5);
}

TEST(Energy, WeightValidation) {
  LossWeights w;
  EXPECT_NO_THROW(w.validate());
  w.skate = -1.0;
  EXPECT_THROW(w.validate(), ValidationError);
  w = LossWeights{};
  w.sigma_gm = 0.0;
  EXPECT_THROW(w.validate(), ValidationError);
}

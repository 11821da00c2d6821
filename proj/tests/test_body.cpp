#include "worldpose/body.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <numbers>

using namespace worldpose;

namespace {

PoseParams random_pose(std::mt19937_64& rng) {
  PoseParams p;
  p.root_orient = testutil::random_vector(rng, 3, 0.8);
  const Eigen::VectorXd b = testutil::random_vector(rng, 66, 0.4);
  p.body_pose = Eigen::Map<const BodyPose>(b.data());
  p.shape = testutil::random_vector(rng, 16, 1.0);
  p.root_transl = testutil::random_vector(rng, 3, 2.0);
  return p;
}

// Rest positions accumulated by walking the parent chain.
Joints rest_positions(const Skeleton& s) {
  Joints j;
  for (int i = 0; i < kNumJoints; ++i) {
    Vec3 p = s.template_offsets.row(i).transpose();
    for (int a = s.parents[i]; a >= 0; a = s.parents[a]) p += s.template_offsets.row(a).transpose();
    j.row(i) = p.transpose();
  }
  return j;
}

}  // namespace

TEST(Body, DefaultSkeletonIsValid) {
  const Skeleton s = default_skeleton();
  EXPECT_NO_THROW(s.validate());
  const Joints rest = rest_positions(s);
  // Head top to toe roughly a 1.7 m figure.
  const double height = rest.col(2).maxCoeff() - rest.col(2).minCoeff();
  EXPECT_GT(height, 1.4);
  EXPECT_LT(height, 1.8);
}

TEST(Body, ZeroPoseGivesRestPositions) {
  const Skeleton s = default_skeleton();
  const Joints j = forward_kinematics(PoseParams{}, s);
  EXPECT_LT((j - rest_positions(s)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(j.row(0).norm(), 0.0);
}

TEST(Body, TranslationEquivariance) {
  const Skeleton s = default_skeleton();
  std::mt19937_64 rng(7);
  for (int k = 0; k < 10; ++k) {
    PoseParams p = random_pose(rng);
    const Joints a = forward_kinematics(p, s);
    const Vec3 d(1, 2, 3);
    p.root_transl += d;
    const Joints b = forward_kinematics(p, s);
    EXPECT_LT((b.rowwise() - d.transpose() - a).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Body, SingleBoneRotatedAboutZ) {
  Skeleton s = default_skeleton();
  s.template_offsets.setZero();
  s.template_offsets.row(1) << 0, 1, 0;
  PoseParams p;
  p.root_orient = Vec3(0, 0, std::numbers::pi / 2.0);
  p.root_transl = Vec3(0.5, -0.25, 2.0);
  const Joints j = forward_kinematics(p, s);
  EXPECT_LT((j.row(1).transpose() - (Vec3(-1, 0, 0) + p.root_transl)).norm(), 1e-12);
}

TEST(Body, RootRotationEquivariance) {
  const Skeleton s = default_skeleton();
  std::mt19937_64 rng(8);
  for (int k = 0; k < 10; ++k) {
    PoseParams p = random_pose(rng);
    const Joints a = forward_kinematics(p, s);
    const Mat3 r = so3::exp(testutil::random_vector(rng, 3, 1.0));
    p.root_orient = so3::log(r * so3::exp(p.root_orient));
    const Joints b = forward_kinematics(p, s);
    for (int i = 0; i < kNumJoints; ++i) {
      const Vec3 expect = p.root_transl + r * (a.row(i).transpose() - p.root_transl);
      EXPECT_LT((b.row(i).transpose() - expect).norm(), 1e-12);
    }
  }
}

TEST(Body, ShapeToBonesZeroAndLinear) {
  const Skeleton s = default_skeleton();
  EXPECT_EQ(shape_to_bones(ShapeVec::Zero(), s), s.template_offsets);
  std::mt19937_64 rng(9);
  const ShapeVec b0 = testutil::random_vector(rng, 16, 1.0);
  const BoneOffsets d1 = shape_to_bones(b0, s) - s.template_offsets;
  const BoneOffsets d2 = shape_to_bones(2.0 * b0, s) - s.template_offsets;
  EXPECT_LT((d2 - 2.0 * d1).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Body, ShapeToBonesMatchesHandProduct) {
  const Skeleton s = default_skeleton();
  std::mt19937_64 rng(10);
  const ShapeVec beta = testutil::random_vector(rng, 16, 1.0);
  const BoneOffsets got = shape_to_bones(beta, s);
  for (int j = 0; j < kNumJoints; ++j) {
    for (int k = 0; k < 3; ++k) {
      double acc = s.template_offsets(j, k);
      for (int c = 0; c < kNumShape; ++c) acc += s.shape_basis(3 * j + k, c) * beta[c];
      EXPECT_NEAR(got(j, k), acc, 1e-14);
    }
  }
}

TEST(Body, BoneLengthsPreservedAcrossPoses) {
  const Skeleton s = default_skeleton();
  std::mt19937_64 rng(11);
  PoseParams p = random_pose(rng);
  const BoneOffsets bones = shape_to_bones(p.shape, s);
  for (int k = 0; k < 20; ++k) {
    const Eigen::VectorXd b = testutil::random_vector(rng, 66, 1.0);
    p.body_pose = Eigen::Map<const BodyPose>(b.data());
    p.root_orient = testutil::random_vector(rng, 3, 1.0);
    const Joints j = forward_kinematics(p, s);
    for (int i = 1; i < kNumJoints; ++i) {
      EXPECT_NEAR((j.row(i) - j.row(s.parents[i])).norm(), bones.row(i).norm(), 1e-9);
    }
  }
}

TEST(Body, GradientMatchesFiniteDifferences) {
  const Skeleton s = default_skeleton();
  std::mt19937_64 rng(12);
  for (int k = 0; k < 10; ++k) {
    const PoseParams p = random_pose(rng);
    Joints w;
    const Eigen::VectorXd wv = testutil::random_vector(rng, 66, 1.0);
    w = Eigen::Map<const Joints>(wv.data());
    auto f = [&](const Eigen::VectorXd& x) {
      return (forward_kinematics(unflatten(x.data()), s).array() * w.array()).sum();
    };
    const PoseGradient g = forward_kinematics_vjp(p, s, w);
    PoseParams gp;
    gp.root_orient = g.root_orient;
    gp.body_pose = g.body_pose;
    gp.shape = g.shape;
    gp.root_transl = g.root_transl;
    const Eigen::VectorXd analytic = flatten(gp);
    const Eigen::VectorXd numeric = testutil::numeric_gradient(f, flatten(p));
    EXPECT_LT(testutil::max_rel_error(analytic, numeric), 1e-5);
  }
}

TEST(Body, InterpolateEndpointsExact) {
  std::mt19937_64 rng(13);
  const PoseParams a = random_pose(rng);
  PoseParams b = random_pose(rng);
  b.shape = a.shape;
  EXPECT_EQ(flatten(interpolate_pose(a, b, 0.0)), flatten(a));
  EXPECT_EQ(flatten(interpolate_pose(a, b, 1.0)), flatten(b));
}

TEST(Body, InterpolateMidpoints) {
  PoseParams a, b;
  b.root_transl = Vec3(2, 0, 0);
  b.root_orient = Vec3(0, 0, std::numbers::pi / 2.0);
  const PoseParams m = interpolate_pose(a, b, 0.5);
  EXPECT_LT((m.root_transl - Vec3(1, 0, 0)).norm(), 1e-15);
  EXPECT_LT((m.root_orient - Vec3(0, 0, std::numbers::pi / 4.0)).norm(), 1e-12);
}

TEST(Body, SkeletonFileRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "worldpose_test_skel";
  std::filesystem::create_directories(dir);
  const Skeleton s = default_skeleton();
  write_skeleton(s, dir / "skeleton.txt", dir / "shape_basis.bin");
  const Skeleton r = load_skeleton(dir / "skeleton.txt", dir / "shape_basis.bin");
  EXPECT_EQ(r.parents, s.parents);
  EXPECT_EQ(r.template_offsets, s.template_offsets);
  EXPECT_EQ(r.shape_basis, s.shape_basis);
  EXPECT_EQ(r.fingerprint(), s.fingerprint());
}

TEST(Body, ShippedSkeletonMatchesBuiltin) {
  const std::filesystem::path data = std::filesystem::path(WORLDPOSE_SOURCE_DIR) / "data";
  const Skeleton r = load_skeleton(data / "skeleton.txt", data / "shape_basis.bin");
  EXPECT_EQ(r.fingerprint(), default_skeleton().fingerprint());
}

TEST(Body, SkeletonFileErrors) {
  const auto dir = std::filesystem::temp_directory_path() / "worldpose_test_skel_bad";
  std::filesystem::create_directories(dir);
  const Skeleton s = default_skeleton();
  write_skeleton(s, dir / "skeleton.txt", dir / "shape_basis.bin");
  std::string text = io::read_file(dir / "skeleton.txt");
  // A joint whose parent comes after it breaks the tree ordering.
  const auto pos = text.find("\n4 1 ");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 5, "\n4 6 ");
  io::write_file(dir / "cyclic.txt", text);
  EXPECT_THROW(load_skeleton(dir / "cyclic.txt", dir / "shape_basis.bin"), StructuralError);
  io::write_file(dir / "short.txt", "0 -1 0 0 0\n");
  EXPECT_THROW(load_skeleton(dir / "short.txt", dir / "shape_basis.bin"), StructuralError);
  io::write_file(dir / "garbage.txt", "0 -1 0 0\n");
  try {
    load_skeleton(dir / "garbage.txt", dir / "shape_basis.bin");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1u);
  }
}

#include "worldpose/metrics.hpp"
#include "worldpose/so3.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace worldpose;

namespace {

PointSet random_points(std::mt19937_64& rng, int n) {
  PointSet p(n, 3);
  for (int i = 0; i < n; ++i) p.row(i) = testutil::random_vector(rng, 3, 1.0).transpose();
  return p;
}

Joints random_joints(std::mt19937_64& rng, double scale = 0.5) {
  Joints j;
  for (int i = 0; i < kNumJoints; ++i) j.row(i) = testutil::random_vector(rng, 3, scale).transpose();
  return j;
}

Alignment random_similarity(std::mt19937_64& rng) {
  Alignment a;
  a.R = so3::exp(testutil::random_vector(rng, 3, 1.0));
  a.t = testutil::random_vector(rng, 3, 2.0);
  a.s = 0.5 + std::abs(testutil::random_vector(rng, 1, 1.0)[0]);
  return a;
}

Joints transform(const Alignment& a, const Joints& j) {
  const PointSet p = j;
  return a.apply(p);
}

// Walking body with noisy predictions that drift away over time.
void random_pair(std::mt19937_64& rng, JointSequence& pred, JointSequence& gt, int frames = 15) {
  const Joints body = random_joints(rng);
  pred.clear();
  gt.clear();
  for (int t = 0; t < frames; ++t) {
    Joints g = body;
    g.rowwise() += Eigen::RowVector3d(0.04 * t, 0.01 * t, 0.0);
    gt.push_back(g);
    Joints p = g + 0.02 * random_joints(rng, 1.0);
    p.rowwise() += Eigen::RowVector3d(0.002 * t * t, -0.001 * t, 0.2);
    pred.push_back(p);
  }
}

}  // namespace

TEST(Metrics, ProcrustesRecoversSimilarity) {
  std::mt19937_64 rng(1);
  for (int k = 0; k < 20; ++k) {
    const PointSet x = random_points(rng, 25);
    const Alignment truth = random_similarity(rng);
    const Alignment a = procrustes(x, truth.apply(x), AlignMode::similarity);
    EXPECT_LT((a.R - truth.R).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((a.t - truth.t).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_NEAR(a.s, truth.s, 1e-9);
  }
}

TEST(Metrics, ProcrustesRigidKeepsUnitScale) {
  std::mt19937_64 rng(2);
  const PointSet x = random_points(rng, 10);
  Alignment truth = random_similarity(rng);
  truth.s = 1.0;
  const Alignment a = procrustes(x, truth.apply(x), AlignMode::rigid);
  EXPECT_EQ(a.s, 1.0);
  EXPECT_LT((a.R - truth.R).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((a.apply(x) - truth.apply(x)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Metrics, ProcrustesExcludesReflections) {
  std::mt19937_64 rng(3);
  const PointSet x = random_points(rng, 12);
  PointSet y = x;
  y.col(2) *= -1.0;
  for (const auto mode : {AlignMode::rigid, AlignMode::similarity}) {
    const Alignment a = procrustes(x, y, mode);
    EXPECT_NEAR(a.R.determinant(), 1.0, 1e-12);
    EXPECT_NEAR((a.R.transpose() * a.R - Mat3::Identity()).norm(), 0.0, 1e-12);
  }
}

TEST(Metrics, ProcrustesRejectsBadInput) {
  std::mt19937_64 rng(4);
  EXPECT_THROW(procrustes(random_points(rng, 5), random_points(rng, 6), AlignMode::rigid), ValidationError);
  EXPECT_THROW(procrustes(random_points(rng, 2), random_points(rng, 2), AlignMode::rigid), DegeneracyError);
  PointSet line(5, 3);
  for (int i = 0; i < 5; ++i) line.row(i) = Eigen::RowVector3d(i, 2.0 * i, -1.0 * i);
  EXPECT_THROW(procrustes(line, line, AlignMode::similarity), DegeneracyError);
}

TEST(Metrics, IdenticalSequencesScoreZero) {
  std::mt19937_64 rng(5);
  JointSequence pred, gt;
  random_pair(rng, pred, gt);
  EXPECT_NEAR(w_mpjpe(gt, gt), 0.0, 1e-9);
  EXPECT_NEAR(wa_mpjpe(gt, gt), 0.0, 1e-9);
  EXPECT_NEAR(pa_mpjpe(gt, gt), 0.0, 1e-9);
  EXPECT_EQ(accel_error(gt, gt, 30.0), 0.0);
}

TEST(Metrics, ConstantOffsetExample) {
  std::mt19937_64 rng(6);
  JointSequence gt, pred;
  for (int t = 0; t < 5; ++t) {
    gt.push_back(random_joints(rng));
    // Each frame shifted differently, so no single rigid map removes it.
    Joints p = gt.back();
    p.rowwise() += Eigen::RowVector3d(t % 2 ? 0.01 : -0.01, 0.0, 0.0);
    pred.push_back(p);
  }
  EXPECT_NEAR(w_mpjpe(pred, gt), 20.0 * 2.0 / 5.0, 1e-6);
  EXPECT_NEAR(pa_mpjpe(pred, gt), 0.0, 1e-9);
}

TEST(Metrics, AlignmentInvariances) {
  std::mt19937_64 rng(7);
  JointSequence pred, gt;
  random_pair(rng, pred, gt);
  Alignment rigid = random_similarity(rng);
  rigid.s = 1.0;
  JointSequence moved;
  for (const auto& j : pred) moved.push_back(transform(rigid, j));
  EXPECT_NEAR(w_mpjpe(moved, gt), w_mpjpe(pred, gt), 1e-8);
  EXPECT_NEAR(wa_mpjpe(moved, gt), wa_mpjpe(pred, gt), 1e-8);
  JointSequence per_frame;
  for (const auto& j : pred) per_frame.push_back(transform(random_similarity(rng), j));
  EXPECT_NEAR(pa_mpjpe(per_frame, gt), pa_mpjpe(pred, gt), 1e-8);
}

TEST(Metrics, ChainOfAlignments) {
  std::mt19937_64 rng(8);
  for (int k = 0; k < 100; ++k) {
    JointSequence pred, gt;
    random_pair(rng, pred, gt);
    const double pa = pa_mpjpe(pred, gt), wa = wa_mpjpe(pred, gt), w = w_mpjpe(pred, gt);
    EXPECT_LE(pa, wa);
    EXPECT_LE(wa, w);
  }
}

TEST(Metrics, OscillationAcceleration) {
  JointSequence still(30, Joints::Zero()), osc(30, Joints::Zero());
  for (int t = 0; t < 30; ++t) osc[t].col(0).setConstant(t % 2 ? -0.001 : 0.001);
  // |x[t+1] - 2 x[t] + x[t-1]| = 4 mm per frame^2, times 30^2.
  EXPECT_NEAR(accel_error(osc, still, 30.0) / 3600.0, 1.0, 1e-6);
  EXPECT_NEAR(accel_error(still, osc, 30.0) / 3600.0, 1.0, 1e-6);
}

TEST(Metrics, AccelerationIgnoresConstantVelocity) {
  std::mt19937_64 rng(9);
  const Joints body = random_joints(rng);
  JointSequence a, b;
  for (int t = 0; t < 10; ++t) {
    a.push_back(body);
    Joints m = body;
    m.rowwise() += Eigen::RowVector3d(0.05 * t, -0.02 * t, 0.0);
    b.push_back(m);
  }
  EXPECT_NEAR(accel_error(b, a, 30.0), 0.0, 1e-9);
  EXPECT_THROW(accel_error(JointSequence(2, body), JointSequence(2, body), 30.0), ValidationError);
  EXPECT_THROW(w_mpjpe(JointSequence(2, body), JointSequence(3, body)), ValidationError);
}

TEST(Metrics, SkateMeasuresHorizontalSlip) {
  JointSequence j(3, Joints::Zero());
  const int ankle = kFootJoints[0];
  j[1].row(ankle) = Eigen::RowVector3d(0.003, 0.004, 0.5);
  j[2].row(ankle) = Eigen::RowVector3d(0.003, 0.004, 0.0);
  ContactLabels labels(3, {0, 0, 0, 0});
  EXPECT_FALSE(skate_metric(j, labels));
  labels[0][0] = labels[1][0] = labels[2][0] = 1;
  // 5 mm then 0 mm; vertical motion ignored.
  EXPECT_NEAR(*skate_metric(j, labels), 2.5, 1e-9);
  labels[2][0] = 0;
  EXPECT_NEAR(*skate_metric(j, labels), 5.0, 1e-9);
  EXPECT_THROW(skate_metric(j, ContactLabels(2)), ValidationError);
}

TEST(Metrics, EvaluatePairsFramesAndCountsDrops) {
  std::mt19937_64 rng(10);
  JointSequence pred, gt;
  random_pair(rng, pred, gt, 8);
  PersonFrames p, g;
  for (int t = 0; t < 8; ++t) {
    g.joints[t] = gt[t];
    if (t != 7) p.joints[t] = pred[t];
  }
  p.joints[20] = pred[0];
  const MetricReport r = evaluate({{1, p}}, {{1, g}}, 30.0);
  const JointSequence pp(pred.begin(), pred.begin() + 7), gg(gt.begin(), gt.begin() + 7);
  EXPECT_EQ(r.dropped_frames, 2);
  EXPECT_NEAR(r.w_mpjpe, w_mpjpe(pp, gg), 1e-12);
  EXPECT_NEAR(r.wa_mpjpe, wa_mpjpe(pp, gg), 1e-12);
  EXPECT_NEAR(r.pa_mpjpe, pa_mpjpe(pp, gg), 1e-12);
  EXPECT_NEAR(r.accel_error, accel_error(pp, gg, 30.0), 1e-9);
  EXPECT_FALSE(r.skate);

  EXPECT_EQ(evaluate({{1, p}}, {{1, g}, {2, g}}, 30.0).dropped_frames, 10);
  EXPECT_THROW(evaluate({}, {{1, g}}, 30.0), ValidationError);
}

TEST(Metrics, EvaluateRejectsUnknownIds) {
  PersonFrames a;
  a.joints[0] = Joints::Zero();
  EXPECT_THROW(evaluate({{5, a}}, {{1, a}}, 30.0), ValidationError);
}

TEST(Metrics, ReportRoundTrip) {
  MetricReport r;
  r.w_mpjpe = 101.25;
  r.wa_mpjpe = 30.5;
  r.pa_mpjpe = 12.125;
  r.accel_error = 6900.75;
  r.dropped_frames = 3;
  const std::string absent = format_metric_report(r);
  EXPECT_NE(absent.find("skate_mm absent"), std::string::npos);
  EXPECT_EQ(format_metric_report(parse_metric_report(absent, "m")), absent);
  r.skate = 1.0 / 3.0;
  const std::string text = format_metric_report(r);
  const MetricReport back = parse_metric_report(text, "m");
  EXPECT_EQ(*back.skate, *r.skate);
  EXPECT_EQ(format_metric_report(back), text);
  EXPECT_EQ(metric_report_json(back).dump(), metric_report_json(r).dump());
  EXPECT_THROW(parse_metric_report("w_mpjpe_mm 1\n", "m"), ParseError);
  EXPECT_THROW(parse_metric_report("w_mpjpe_mm 1 2\n", "m"), ParseError);
}

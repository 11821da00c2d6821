#pragma once

// Alignment-based joint errors, acceleration error and the foot-skate
// diagnostic. Inputs are meters; reported values are millimeters.

#include "worldpose/body.hpp"
#include "worldpose/common.hpp"
#include "worldpose/text_io.hpp"

#include <Eigen/SVD>
#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace worldpose {

using PointSet = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

enum class AlignMode { rigid, similarity };

struct Alignment {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
  double s = 1.0;

  Vec3 apply(const Vec3& x) const { return s * (R * x) + t; }
  PointSet apply(const PointSet& x) const {
    PointSet y = (s * (x * R.transpose())).rowwise() + t.transpose();
    return y;
  }
};

/// Least-squares (R, t[, s]) mapping X onto Y, reflections excluded.
inline Alignment procrustes(const PointSet& X, const PointSet& Y, AlignMode mode) {
  if (X.rows() != Y.rows()) throw ValidationError("procrustes needs equal point counts");
  if (X.rows() < 3) throw DegeneracyError("procrustes needs at least 3 points");
  const Eigen::RowVector3d mx = X.colwise().mean();
  const Eigen::RowVector3d my = Y.colwise().mean();
  const PointSet xc = X.rowwise() - mx;
  const PointSet yc = Y.rowwise() - my;
  const Mat3 cov = yc.transpose() * xc;
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  if (!(sv[0] > 0.0) || sv[1] <= 1e-12 * sv[0]) throw DegeneracyError("point configuration is rank deficient");
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  Alignment a;
  a.R = svd.matrixU() * d * svd.matrixV().transpose();
  if (mode == AlignMode::similarity) {
    const double var_x = xc.squaredNorm();
    a.s = (sv.asDiagonal() * d).trace() / var_x;
  }
  a.t = my.transpose() - a.s * (a.R * mx.transpose());
  return a;
}

using JointSequence = std::vector<Joints>;

namespace metrics_detail {

inline void check_lengths(const JointSequence& pred, const JointSequence& gt) {
  if (pred.size() != gt.size()) {
    throw ValidationError("sequence length mismatch: " + std::to_string(pred.size()) + " vs " + std::to_string(gt.size()));
  }
  if (pred.empty()) throw ValidationError("empty sequence");
}

inline PointSet stack(const JointSequence& s) {
  PointSet p(static_cast<Eigen::Index>(s.size()) * kNumJoints, 3);
  for (std::size_t t = 0; t < s.size(); ++t) p.middleRows(static_cast<Eigen::Index>(t) * kNumJoints, kNumJoints) = s[t];
  return p;
}

inline double mean_error_mm(const PointSet& a, const PointSet& b) { return 1000.0 * (a - b).rowwise().norm().mean(); }

}  // namespace metrics_detail

/// Rigid alignment fit on the first frame only, applied to every frame.
inline double w_mpjpe(const JointSequence& pred, const JointSequence& gt) {
  metrics_detail::check_lengths(pred, gt);
  const Alignment a = procrustes(pred[0], gt[0], AlignMode::rigid);
  return metrics_detail::mean_error_mm(a.apply(metrics_detail::stack(pred)), metrics_detail::stack(gt));
}

/// One rigid alignment fit on all frames.
inline double wa_mpjpe(const JointSequence& pred, const JointSequence& gt) {
  metrics_detail::check_lengths(pred, gt);
  const PointSet p = metrics_detail::stack(pred);
  const PointSet g = metrics_detail::stack(gt);
  return metrics_detail::mean_error_mm(procrustes(p, g, AlignMode::rigid).apply(p), g);
}

/// Similarity alignment per frame.
inline double pa_mpjpe(const JointSequence& pred, const JointSequence& gt) {
  metrics_detail::check_lengths(pred, gt);
  double sum = 0.0;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    const PointSet p = pred[t];
    const PointSet g = gt[t];
    sum += (procrustes(p, g, AlignMode::similarity).apply(p) - g).rowwise().norm().sum();
  }
  return 1000.0 * sum / (static_cast<double>(pred.size()) * kNumJoints);
}

/// Mean | |a_pred| - |a_gt| | over joints and interior frames, mm/s^2.
inline double accel_error(const JointSequence& pred, const JointSequence& gt, double fps) {
  metrics_detail::check_lengths(pred, gt);
  if (pred.size() < 3) throw ValidationError("acceleration error needs at least 3 frames");
  double sum = 0.0;
  for (std::size_t t = 1; t + 1 < pred.size(); ++t) {
    const Joints ap = (pred[t + 1] - 2.0 * pred[t] + pred[t - 1]) * (fps * fps);
    const Joints ag = (gt[t + 1] - 2.0 * gt[t] + gt[t - 1]) * (fps * fps);
    sum += (ap.rowwise().norm() - ag.rowwise().norm()).cwiseAbs().sum();
  }
  return 1000.0 * sum / (static_cast<double>(pred.size() - 2) * kNumJoints);
}

using ContactLabels = std::vector<std::array<std::uint8_t, 4>>;

/// Mean horizontal displacement of feet labeled in contact on both frames of
/// a consecutive pair, mm. Absent when no such pair exists.
inline std::optional<double> skate_metric(const JointSequence& joints, const ContactLabels& labels,
                                          const std::array<int, 4>& foot_joints = kFootJoints) {
  if (labels.size() != joints.size()) throw ValidationError("contact labels must cover every frame");
  double sum = 0.0;
  long count = 0;
  for (std::size_t t = 0; t + 1 < joints.size(); ++t) {
    for (int k = 0; k < 4; ++k) {
      if (!labels[t][k] || !labels[t + 1][k]) continue;
      const int j = foot_joints[k];
      sum += (joints[t + 1].row(j).head<2>() - joints[t].row(j).head<2>()).norm();
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return 1000.0 * sum / count;
}

struct MetricReport {
  double w_mpjpe = 0.0;
  double wa_mpjpe = 0.0;
  double pa_mpjpe = 0.0;
  double accel_error = 0.0;
  std::optional<double> skate;
  long dropped_frames = 0;
};

/// One person's frames as a sparse map so that missing frames can be paired.
struct PersonFrames {
  std::map<int, Joints> joints;
  std::map<int, std::array<std::uint8_t, 4>> contact;
};

/// Pairs predictions with ground truth by id and frame. Frames present on one
/// side only are dropped and counted. Averages pool all paired frames.
inline MetricReport evaluate(const std::map<int, PersonFrames>& pred, const std::map<int, PersonFrames>& gt,
                             double fps) {
  for (const auto& [id, p] : pred) {
    if (!gt.count(id)) throw ValidationError("predicted id " + std::to_string(id) + " has no ground truth");
  }
  MetricReport r;
  double w = 0.0, wa = 0.0, pa = 0.0, acc = 0.0, skate = 0.0;
  long frames = 0, acc_frames = 0, skate_pairs = 0;
  for (const auto& [id, g] : gt) {
    const auto it = pred.find(id);
    if (it == pred.end()) {
      r.dropped_frames += static_cast<long>(g.joints.size());
      continue;
    }
    const PersonFrames& p = it->second;
    std::vector<int> common;
    for (const auto& [f, j] : g.joints) {
      if (p.joints.count(f)) common.push_back(f);
    }
    r.dropped_frames += static_cast<long>(g.joints.size() + p.joints.size() - 2 * common.size());
    if (common.empty()) continue;
    JointSequence ps, gs;
    for (int f : common) {
      ps.push_back(p.joints.at(f));
      gs.push_back(g.joints.at(f));
    }
    const double n = static_cast<double>(common.size());
    w += n * w_mpjpe(ps, gs);
    wa += n * wa_mpjpe(ps, gs);
    pa += n * pa_mpjpe(ps, gs);
    frames += static_cast<long>(common.size());
    // Accelerations and skating only over runs of consecutive frames.
    std::size_t a = 0;
    while (a < common.size()) {
      std::size_t b = a + 1;
      while (b < common.size() && common[b] == common[b - 1] + 1) ++b;
      const JointSequence rp(ps.begin() + a, ps.begin() + b), rg(gs.begin() + a, gs.begin() + b);
      if (b - a >= 3) {
        acc += static_cast<double>(b - a - 2) * accel_error(rp, rg, fps);
        acc_frames += static_cast<long>(b - a - 2);
      }
      if (!g.contact.empty()) {
        ContactLabels labels;
        for (std::size_t k = a; k < b; ++k) {
          const auto c = g.contact.find(common[k]);
          labels.push_back(c == g.contact.end() ? std::array<std::uint8_t, 4>{} : c->second);
        }
        long pairs = 0;
        for (std::size_t k = 0; k + 1 < labels.size(); ++k) {
          for (int q = 0; q < 4; ++q) pairs += labels[k][q] && labels[k + 1][q];
        }
        if (const auto s = skate_metric(rp, labels)) {
          skate += *s * pairs;
          skate_pairs += pairs;
        }
      }
      a = b;
    }
  }
  if (frames == 0) throw ValidationError("no frames shared between prediction and ground truth");
  r.w_mpjpe = w / frames;
  r.wa_mpjpe = wa / frames;
  r.pa_mpjpe = pa / frames;
  r.accel_error = acc_frames ? acc / acc_frames : 0.0;
  if (skate_pairs) r.skate = skate / skate_pairs;
  return r;
}

inline std::string format_metric_report(const MetricReport& r) {
  std::string o;
  o += "w_mpjpe_mm " + io::format_double(r.w_mpjpe) + "\n";
  o += "wa_mpjpe_mm " + io::format_double(r.wa_mpjpe) + "\n";
  o += "pa_mpjpe_mm " + io::format_double(r.pa_mpjpe) + "\n";
  o += "accel_err_mm_s2 " + io::format_double(r.accel_error) + "\n";
  o += "skate_mm " + (r.skate ? io::format_double(*r.skate) : std::string("absent")) + "\n";
  o += "dropped_frames " + std::to_string(r.dropped_frames) + "\n";
  return o;
}

inline nlohmann::ordered_json metric_report_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  j["w_mpjpe_mm"] = r.w_mpjpe;
  j["wa_mpjpe_mm"] = r.wa_mpjpe;
  j["pa_mpjpe_mm"] = r.pa_mpjpe;
  j["accel_err_mm_s2"] = r.accel_error;
  j["skate_mm"] = r.skate ? nlohmann::ordered_json(*r.skate) : nlohmann::ordered_json(nullptr);
  j["dropped_frames"] = r.dropped_frames;
  return j;
}

inline MetricReport parse_metric_report(std::string_view text, const std::string& src) {
  MetricReport r;
  std::map<std::string, std::string> kv;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = std::min(text.find('\n', pos), text.size());
    const std::string_view line = io::trim(text.substr(pos, nl - pos));
    ++line_no;
    pos = nl + 1;
    if (line.empty()) continue;
    const auto f = io::split_ws(line);
    if (f.size() != 2) throw ParseError(src, line_no, "expected 'key value'");
    kv[std::string(f[0])] = std::string(f[1]);
  }
  auto num = [&](const char* key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw ParseError(src, 0, std::string("missing key ") + key);
    double v;
    if (!io::parse_double(it->second, v)) throw ParseError(src, 0, std::string("bad value for ") + key);
    return v;
  };
  r.w_mpjpe = num("w_mpjpe_mm");
  r.wa_mpjpe = num("wa_mpjpe_mm");
  r.pa_mpjpe = num("pa_mpjpe_mm");
  r.accel_error = num("accel_err_mm_s2");
  if (kv.count("skate_mm") && kv["skate_mm"] != "absent") r.skate = num("skate_mm");
  r.dropped_frames = static_cast<long>(num("dropped_frames"));
  return r;
}

}  // namespace worldpose

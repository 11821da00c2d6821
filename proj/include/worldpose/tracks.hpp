#pragma once

#include "worldpose/body.hpp"
#include "worldpose/common.hpp"
#include "worldpose/text_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace worldpose {

using Keypoints = Eigen::Matrix<double, kNumJoints, 2, Eigen::RowMajor>;
using Confidences = Eigen::Matrix<double, kNumJoints, 1>;

struct Detection2D {
  int frame = 0;
  int id = 0;
  Keypoints kp = Keypoints::Zero();
  Confidences conf = Confidences::Zero();
  std::optional<PoseParams> pose;  // camera-frame initial estimate
  std::optional<Vec3> root3d;      // camera-frame root location, tracker input
};

struct Track {
  int person_id = 0;
  int segment = 0;  // > 0 when a long absence split the id
  int t_start = 0;
  int t_end = 0;  // exclusive
  // Indexed by frame - t_start.
  std::vector<PoseParams> poses;
  std::vector<std::uint8_t> observed;
  std::vector<Keypoints> kp;
  std::vector<Confidences> conf;

  int length() const { return t_end - t_start; }
  bool observed_at(int frame) const {
    return frame >= t_start && frame < t_end && observed[frame - t_start] != 0;
  }
  int observed_count() const { return static_cast<int>(std::count(observed.begin(), observed.end(), 1)); }
};

struct TrackSet {
  std::vector<Track> tracks;
  int T = 0;
  int T_max = 0;
};

struct TrackOptions {
  int max_gap = 60;     // longer absences split an id into segments
  int min_length = 3;   // shorter tracks are dropped
};

inline TrackSet build_tracks(const std::vector<Detection2D>& dets, int T, const TrackOptions& opt = {}) {
  std::map<int, std::vector<const Detection2D*>> by_id;
  for (const auto& d : dets) {
    if (d.frame < 0 || d.frame >= T) {
      throw IngestionError("detection frame " + std::to_string(d.frame) + " outside [0, " + std::to_string(T) + ")");
    }
    if ((d.conf.array() < 0.0).any() || (d.conf.array() > 1.0).any() || !d.conf.allFinite()) {
      throw IngestionError("confidence outside [0,1] at frame " + std::to_string(d.frame) + " id " +
                           std::to_string(d.id));
    }
    by_id[d.id].push_back(&d);
  }
  TrackSet out;
  out.T = T;
  for (auto& [id, list] : by_id) {
    std::stable_sort(list.begin(), list.end(), [](auto* a, auto* b) { return a->frame < b->frame; });
    for (std::size_t i = 1; i < list.size(); ++i) {
      if (list[i]->frame == list[i - 1]->frame) {
        throw IngestionError("duplicate detection for id " + std::to_string(id) + " at frame " +
                             std::to_string(list[i]->frame));
      }
    }
    std::size_t begin = 0;
    int segment = 0;
    while (begin < list.size()) {
      std::size_t end = begin + 1;
      while (end < list.size() && list[end]->frame - list[end - 1]->frame - 1 <= opt.max_gap) ++end;
      Track t;
      t.person_id = id;
      t.segment = segment++;
      t.t_start = list[begin]->frame;
      t.t_end = list[end - 1]->frame + 1;
      const int n = t.length();
      if (n < opt.min_length) {
        log::warn("dropping track " + std::to_string(id) + "/" + std::to_string(t.segment) + " of length " +
                  std::to_string(n));
      } else {
        t.poses.assign(n, PoseParams{});
        t.observed.assign(n, 0);
        t.kp.assign(n, Keypoints::Zero());
        t.conf.assign(n, Confidences::Zero());
        for (std::size_t i = begin; i < end; ++i) {
          const int k = list[i]->frame - t.t_start;
          t.observed[k] = 1;
          t.kp[k] = list[i]->kp;
          t.conf[k] = list[i]->conf;
          if (list[i]->pose) t.poses[k] = *list[i]->pose;
        }
        out.T_max = std::max(out.T_max, n);
        out.tracks.push_back(std::move(t));
      }
      begin = end;
    }
  }
  return out;
}

/// Fills unobserved frames by geodesic interpolation between the nearest
/// observed neighbours. Observed frames and the mask are left untouched.
inline Track infill_missing(const Track& in) {
  Track t = in;
  std::vector<int> obs;
  for (int k = 0; k < t.length(); ++k) {
    if (t.observed[k]) obs.push_back(k);
  }
  if (obs.empty()) throw IngestionError("track " + std::to_string(t.person_id) + " has no observations");
  if (obs.size() == 1) {
    log::warn("track " + std::to_string(t.person_id) + " has a single observation; holding it constant");
  }
  for (int k = 0; k < t.length(); ++k) {
    if (t.observed[k]) continue;
    const auto next = std::lower_bound(obs.begin(), obs.end(), k);
    if (next == obs.begin()) {
      t.poses[k] = t.poses[*next];
    } else if (next == obs.end()) {
      t.poses[k] = t.poses[obs.back()];
    } else {
      const int a = *(next - 1);
      const int b = *next;
      t.poses[k] = interpolate_pose(t.poses[a], t.poses[b], static_cast<double>(k - a) / (b - a));
    }
  }
  return t;
}

/// End frame (exclusive) of the part of a track covered by a rollout horizon.
inline int active_end(const Track& t, int horizon) { return std::min(t.t_end, t.t_start + horizon); }

template <class S>
struct TimelineTrack {
  std::vector<S> frames;             // one entry per video frame
  std::vector<std::uint8_t> valid;   // 1 inside the active interval
};

/// Places track-local rollouts onto the video timeline. Rollouts may be padded
/// up to T_max; entries past the active interval are masked out.
template <class S>
std::vector<TimelineTrack<S>> scatter_to_timeline(const std::vector<std::vector<S>>& rollouts, const TrackSet& ts,
                                                  int horizon) {
  if (rollouts.size() != ts.tracks.size()) throw StructuralError("one rollout per track expected");
  std::vector<TimelineTrack<S>> out(ts.tracks.size());
  for (std::size_t i = 0; i < ts.tracks.size(); ++i) {
    const Track& t = ts.tracks[i];
    const auto& r = rollouts[i];
    const int active = active_end(t, horizon) - t.t_start;
    if (static_cast<int>(r.size()) > std::max(ts.T_max, horizon)) {
      throw StructuralError("rollout of length " + std::to_string(r.size()) + " exceeds padded length");
    }
    if (static_cast<int>(r.size()) < active) throw StructuralError("rollout shorter than the active interval");
    out[i].frames.assign(ts.T, S{});
    out[i].valid.assign(ts.T, 0);
    for (int k = 0; k < active; ++k) {
      out[i].frames[t.t_start + k] = r[k];
      out[i].valid[t.t_start + k] = 1;
    }
  }
  return out;
}

template <class S>
std::vector<std::vector<S>> gather_from_timeline(const std::vector<TimelineTrack<S>>& timeline, const TrackSet& ts,
                                                 int horizon) {
  std::vector<std::vector<S>> out(ts.tracks.size());
  for (std::size_t i = 0; i < ts.tracks.size(); ++i) {
    const Track& t = ts.tracks[i];
    for (int f = t.t_start; f < active_end(t, horizon); ++f) out[i].push_back(timeline[i].frames[f]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Detection stream: one JSON object per line,
// {"frame":F,"id":I,"kp":[x,y,c,...66],"pose":[...88],"root3d":[x,y,z]}.

inline std::vector<double> to_vector(const PoseParams& p) {
  const auto v = flatten(p);
  return {v.data(), v.data() + v.size()};
}

inline nlohmann::json detection_to_json(const Detection2D& d) {
  nlohmann::json j;
  j["frame"] = d.frame;
  j["id"] = d.id;
  std::vector<double> kp;
  kp.reserve(3 * kNumJoints);
  for (int i = 0; i < kNumJoints; ++i) {
    kp.push_back(d.kp(i, 0));
    kp.push_back(d.kp(i, 1));
    kp.push_back(d.conf[i]);
  }
  j["kp"] = kp;
  if (d.pose) j["pose"] = to_vector(*d.pose);
  if (d.root3d) j["root3d"] = std::vector<double>{d.root3d->x(), d.root3d->y(), d.root3d->z()};
  return j;
}

inline std::vector<double> json_numbers(const nlohmann::json& j, const char* key, std::size_t n,
                                        const std::string& src, std::size_t line) {
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != n) {
    throw ParseError(src, line, std::string("field '") + key + "' must be an array of " + std::to_string(n));
  }
  std::vector<double> out;
  out.reserve(n);
  for (const auto& v : j[key]) {
    if (!v.is_number()) throw ParseError(src, line, std::string("non-numeric entry in '") + key + "'");
    out.push_back(v.get<double>());
  }
  return out;
}

inline Detection2D detection_from_json(const nlohmann::json& j, const std::string& src, std::size_t line) {
  Detection2D d;
  if (!j.contains("frame") || !j["frame"].is_number_integer() || !j.contains("id") ||
      !j["id"].is_number_integer()) {
    throw ParseError(src, line, "record needs integer 'frame' and 'id'");
  }
  d.frame = j["frame"].get<int>();
  d.id = j["id"].get<int>();
  const auto kp = json_numbers(j, "kp", 3 * kNumJoints, src, line);
  for (int i = 0; i < kNumJoints; ++i) {
    d.kp(i, 0) = kp[3 * i];
    d.kp(i, 1) = kp[3 * i + 1];
    d.conf[i] = kp[3 * i + 2];
  }
  if (j.contains("pose")) d.pose = unflatten(json_numbers(j, "pose", kPoseDim, src, line).data());
  if (j.contains("root3d")) {
    const auto r = json_numbers(j, "root3d", 3, src, line);
    d.root3d = Vec3(r[0], r[1], r[2]);
  }
  return d;
}

/// Iterates the non-empty records of an NDJSON text; header records
/// ({"header": ...}) are passed to on_header when given.
template <class F, class H>
void for_each_ndjson(std::string_view text, const std::string& src, F&& on_record, H&& on_header) {
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (io::trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(src, line_no, e.what());
    }
    if (!j.is_object()) throw ParseError(src, line_no, "record is not an object");
    if (j.contains("header")) {
      on_header(j["header"], line_no);
      continue;
    }
    on_record(j, line_no);
  }
}

inline std::vector<Detection2D> parse_detections(std::string_view text, const std::string& src) {
  std::vector<Detection2D> out;
  for_each_ndjson(
      text, src, [&](const nlohmann::json& j, std::size_t line) { out.push_back(detection_from_json(j, src, line)); },
      [](const nlohmann::json&, std::size_t) {});
  return out;
}

inline std::vector<Detection2D> load_detections(const std::filesystem::path& path) {
  return parse_detections(io::read_file(path), path.string());
}

inline std::string format_detections(const std::vector<Detection2D>& dets) {
  std::string out;
  for (const auto& d : dets) {
    out += detection_to_json(d).dump();
    out += '\n';
  }
  return out;
}

inline void write_detections(const std::filesystem::path& path, const std::vector<Detection2D>& dets) {
  io::write_file(path, format_detections(dets));
}

}  // namespace worldpose

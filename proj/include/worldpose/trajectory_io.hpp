#pragma once

// World trajectory files: an NDJSON header record followed by one record per
// person and frame,
// {"contact":[4]?,"frame":F,"id":I,"joints":[66],"pose":[88],"segment":S}.

#include "worldpose/body.hpp"
#include "worldpose/common.hpp"
#include "worldpose/metrics.hpp"
#include "worldpose/text_io.hpp"
#include "worldpose/tracks.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace worldpose {

struct TrajectoryRecord {
  int frame = 0;
  int id = 0;
  int segment = 0;
  PoseParams pose;
  Joints joints = Joints::Zero();
  std::optional<std::array<std::uint8_t, 4>> contact;
};

struct WorldTrajectory {
  nlohmann::json header = nlohmann::json::object();  // config_hash, skeleton_hash, ...
  std::vector<TrajectoryRecord> records;

  std::string skeleton_hash() const { return header.value("skeleton_hash", std::string()); }
};

inline TrajectoryRecord make_record(int frame, int id, int segment, const PoseParams& pose, const Skeleton& skel) {
  TrajectoryRecord r;
  r.frame = frame;
  r.id = id;
  r.segment = segment;
  r.pose = pose;
  r.joints = forward_kinematics(pose, skel);
  return r;
}

inline std::string format_trajectory(const WorldTrajectory& w) {
  std::string out;
  out += nlohmann::json{{"header", w.header}}.dump();
  out += '\n';
  for (const auto& r : w.records) {
    nlohmann::json j;
    j["frame"] = r.frame;
    j["id"] = r.id;
    j["segment"] = r.segment;
    j["pose"] = to_vector(r.pose);
    j["joints"] = std::vector<double>(r.joints.data(), r.joints.data() + r.joints.size());
    if (r.contact) j["contact"] = std::vector<int>(r.contact->begin(), r.contact->end());
    out += j.dump();
    out += '\n';
  }
  return out;
}

inline WorldTrajectory parse_trajectory(std::string_view text, const std::string& src) {
  WorldTrajectory w;
  for_each_ndjson(
      text, src,
      [&](const nlohmann::json& j, std::size_t line) {
        TrajectoryRecord r;
        for (const char* key : {"frame", "id", "segment"}) {
          if (!j.contains(key) || !j[key].is_number_integer()) {
            throw ParseError(src, line, std::string("record needs integer '") + key + "'");
          }
        }
        r.frame = j["frame"].get<int>();
        r.id = j["id"].get<int>();
        r.segment = j["segment"].get<int>();
        r.pose = unflatten(json_numbers(j, "pose", kPoseDim, src, line).data());
        const auto jt = json_numbers(j, "joints", 3 * kNumJoints, src, line);
        r.joints = Eigen::Map<const Joints>(jt.data());
        if (j.contains("contact")) {
          const auto c = json_numbers(j, "contact", 4, src, line);
          std::array<std::uint8_t, 4> a{};
          for (int k = 0; k < 4; ++k) {
            if (c[k] != 0.0 && c[k] != 1.0) throw ParseError(src, line, "contact labels must be 0 or 1");
            a[k] = static_cast<std::uint8_t>(c[k]);
          }
          r.contact = a;
        }
        w.records.push_back(std::move(r));
      },
      [&](const nlohmann::json& h, std::size_t line) {
        if (!h.is_object()) throw ParseError(src, line, "header must be an object");
        w.header = h;
      });
  return w;
}

inline WorldTrajectory load_trajectory(const std::filesystem::path& path) {
  return parse_trajectory(io::read_file(path), path.string());
}

inline void write_trajectory(const std::filesystem::path& path, const WorldTrajectory& w) {
  io::write_file(path, format_trajectory(w));
}

/// Groups records by id for evaluation.
inline std::map<int, PersonFrames> person_frames(const WorldTrajectory& w) {
  std::map<int, PersonFrames> out;
  for (const auto& r : w.records) {
    PersonFrames& p = out[r.id];
    p.joints[r.frame] = r.joints;
    if (r.contact) p.contact[r.frame] = *r.contact;
  }
  return out;
}

}  // namespace worldpose

// Copyright 2026 The CAP Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cap/episode.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "cap/error.hpp"

namespace cap {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

json pose_to_json(const RigidTransform& t) {
  const Quat& q = t.rotation();
  const Vec3& p = t.translation();
  return json{{"q", {q.w(), q.x(), q.y(), q.z()}},
              {"t", {p.x(), p.y(), p.z()}}};
}

RigidTransform pose_from_json(const json& j) {
  const auto& q = j.at("q");
  const auto& t = j.at("t");
  const Quat quat(q.at(0).get<double>(), q.at(1).get<double>(),
                  q.at(2).get<double>(), q.at(3).get<double>());
  const Vec3 trans(t.at(0).get<double>(), t.at(1).get<double>(),
                   t.at(2).get<double>());
  if (std::abs(quat.coeffs().norm() - 1.0) > 1e-9 || !trans.allFinite()) {
    throw std::invalid_argument("pose quaternion is not unit norm");
  }
  return RigidTransform::from_unit_quaternion(quat, trans);
}

json anchor_to_json(const std::optional<ContactAnchor>& a) {
  if (!a) return nullptr;
  return json{{"point", {a->point.x(), a->point.y(), a->point.z()}},
              {"frame", a->frame == AnchorFrame::kCamera ? "camera" : "world"},
              {"frozen", a->frozen}};
}

std::optional<ContactAnchor> anchor_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  ContactAnchor a;
  const auto& p = j.at("point");
  a.point = Vec3(p.at(0).get<double>(), p.at(1).get<double>(),
                 p.at(2).get<double>());
  const std::string frame = j.at("frame").get<std::string>();
  if (frame == "camera") {
    a.frame = AnchorFrame::kCamera;
  } else if (frame == "world") {
    a.frame = AnchorFrame::kWorld;
  } else {
    throw std::invalid_argument("unknown anchor frame " + frame);
  }
  a.frozen = j.at("frozen").get<bool>();
  return a;
}

json intrinsics_to_json(const CameraIntrinsics& k) {
  return json{{"fx", k.fx}, {"fy", k.fy},       {"cx", k.cx},
              {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

CameraIntrinsics intrinsics_from_json(const json& j) {
  CameraIntrinsics k;
  k.fx = j.at("fx").get<double>();
  k.fy = j.at("fy").get<double>();
  k.cx = j.at("cx").get<double>();
  k.cy = j.at("cy").get<double>();
  k.width = j.at("width").get<int>();
  k.height = j.at("height").get<int>();
  k.validate();
  return k;
}

void ensure_loaded(const Episode& e, Frame& f) {
  if (f.rgb.empty() && !f.rgb_ref.empty()) {
    if (!e.source_dir) {
      throw Error(ErrorCode::kImageReadFailure,
                  "frame " + std::to_string(f.index) + " has no image data");
    }
    f.rgb = read_png_rgb(*e.source_dir / f.rgb_ref);
  }
  if (f.depth.empty() && !f.depth_ref.empty()) {
    if (!e.source_dir) {
      throw Error(ErrorCode::kImageReadFailure,
                  "frame " + std::to_string(f.index) + " has no depth data");
    }
    f.depth = read_png_depth(*e.source_dir / f.depth_ref);
  }
}

}  // namespace

std::string to_string(Task task) {
  switch (task) {
    case Task::kPick: return "pick";
    case Task::kOpen: return "open";
    case Task::kClose: return "close";
  }
  return "pick";
}

Task task_from_string(const std::string& name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (lower == "pick") return Task::kPick;
  if (lower == "open") return Task::kOpen;
  if (lower == "close") return Task::kClose;
  throw Error(ErrorCode::kInvalidArgument, "unknown task '" + name + "'");
}

void Episode::validate() const {
  for (size_t i = 1; i < frames.size(); ++i) {
    if (frames[i].index <= frames[i - 1].index) {
      throw Error(ErrorCode::kInvalidArgument,
                  "frame indices must be strictly increasing");
    }
  }
  if (contact_frame &&
      (*contact_frame < 0 || *contact_frame >= static_cast<int>(frames.size()))) {
    throw Error(ErrorCode::kInvalidArgument, "contact_frame out of range");
  }
  const auto with_anchor = std::count_if(
      frames.begin(), frames.end(), [](const Frame& f) { return f.anchor; });
  if (with_anchor != 0 && with_anchor != static_cast<long>(frames.size())) {
    throw Error(ErrorCode::kInvalidArgument,
                "either all frames carry an anchor or none does");
  }
  for (const Frame& f : frames) {
    const bool ok = f.aperture_cmd >= 0.0 && f.aperture_cmd <= 1.0 &&
                    f.aperture_meas >= 0.0 && f.aperture_meas <= 1.0;
    if (!ok) {
      throw Error(ErrorCode::kInvalidArgument, "aperture outside [0, 1]");
    }
    const bool size_ok =
        (f.rgb.empty() ||
         (f.rgb.width == kFrameSize && f.rgb.height == kFrameSize)) &&
        (f.depth.empty() ||
         (f.depth.width == kFrameSize && f.depth.height == kFrameSize));
    if (!size_ok) {
      throw Error(ErrorCode::kInvalidArgument, "frames must be 224x224");
    }
  }
}

bool Episode::mirrored() const {
  const auto it = metadata.find("mirrored");
  return it != metadata.end() && it->second == "true";
}

bool same_content(const Episode& a, const Episode& b) {
  return a.id == b.id && a.task == b.task && a.seed == b.seed &&
         a.frames == b.frames && a.contact_frame == b.contact_frame &&
         a.intrinsics.fx == b.intrinsics.fx &&
         a.intrinsics.fy == b.intrinsics.fy &&
         a.intrinsics.cx == b.intrinsics.cx &&
         a.intrinsics.cy == b.intrinsics.cy &&
         a.intrinsics.width == b.intrinsics.width &&
         a.intrinsics.height == b.intrinsics.height &&
         a.metadata == b.metadata;
}

std::string frame_rgb_ref(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "rgb/%06d.png", index);
  return buf;
}

std::string frame_depth_ref(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "depth/%06d.png", index);
  return buf;
}

fs::path write_episode(const Episode& e, const fs::path& dir) {
  e.validate();
  fs::create_directories(dir / "rgb");
  fs::create_directories(dir / "depth");

  for (const Frame& f : e.frames) {
    auto emit = [&](const std::string& ref, bool loaded, auto&& write) {
      if (ref.empty()) return;
      const fs::path target = dir / ref;
      if (loaded) {
        write(target);
      } else if (e.source_dir && fs::exists(*e.source_dir / ref)) {
        const fs::path src = *e.source_dir / ref;
        if (!fs::exists(target) || !fs::equivalent(src, target)) {
          fs::copy_file(src, target, fs::copy_options::overwrite_existing);
        }
      }
    };
    emit(f.rgb_ref, !f.rgb.empty(),
         [&](const fs::path& p) { write_png(p, f.rgb); });
    emit(f.depth_ref, !f.depth.empty(),
         [&](const fs::path& p) { write_png(p, f.depth); });
  }

  {
    std::ofstream out(dir / "frames.jsonl", std::ios::trunc);
    for (const Frame& f : e.frames) {
      json j{{"index", f.index},
             {"pose", pose_to_json(f.pose)},
             {"aperture_cmd", f.aperture_cmd},
             {"aperture_meas", f.aperture_meas},
             {"rgb", f.rgb_ref},
             {"depth", f.depth_ref},
             {"anchor", anchor_to_json(f.anchor)}};
      out << j.dump() << '\n';
    }
    if (!out) {
      throw Error(ErrorCode::kInvalidArgument,
                  "cannot write " + (dir / "frames.jsonl").string());
    }
  }

  json manifest{{"schema_version", kEpisodeSchemaVersion},
                {"id", e.id},
                {"task", to_string(e.task)},
                {"seed", e.seed},
                {"contact_frame", e.contact_frame ? json(*e.contact_frame)
                                                  : json(nullptr)},
                {"intrinsics", intrinsics_to_json(e.intrinsics)},
                {"metadata", e.metadata},
                {"frame_count", e.frames.size()}};
  const fs::path manifest_path = dir / "manifest.json";
  std::ofstream out(manifest_path, std::ios::trunc);
  out << manifest.dump(2) << '\n';
  return manifest_path;
}

Episode read_episode(const fs::path& dir, bool load) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream min(manifest_path);
  if (!min) {
    throw Error(ErrorCode::kMissingManifest,
                "no manifest at " + manifest_path.string());
  }
  json manifest;
  try {
    manifest = json::parse(min);
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::kMissingManifest,
                "unreadable manifest: " + std::string(ex.what()));
  }
  const int version = manifest.value("schema_version", -1);
  if (version != kEpisodeSchemaVersion) {
    throw Error(ErrorCode::kSchemaVersionMismatch,
                "schema_version " + std::to_string(version) + ", expected " +
                    std::to_string(kEpisodeSchemaVersion));
  }

  Episode e;
  try {
    e.id = manifest.at("id").get<std::string>();
    e.task = task_from_string(manifest.at("task").get<std::string>());
    e.seed = manifest.at("seed").get<uint64_t>();
    if (!manifest.at("contact_frame").is_null()) {
      e.contact_frame = manifest.at("contact_frame").get<int>();
    }
    e.intrinsics = intrinsics_from_json(manifest.at("intrinsics"));
    e.metadata =
        manifest.at("metadata").get<std::map<std::string, std::string>>();
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::kMissingManifest,
                "malformed manifest: " + std::string(ex.what()));
  }
  const size_t frame_count = manifest.at("frame_count").get<size_t>();
  e.source_dir = dir;

  std::ifstream fin(dir / "frames.jsonl");
  std::string line;
  int line_no = 0;
  while (std::getline(fin, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      Frame f;
      f.index = j.at("index").get<int>();
      f.pose = pose_from_json(j.at("pose"));
      f.aperture_cmd = j.at("aperture_cmd").get<double>();
      f.aperture_meas = j.at("aperture_meas").get<double>();
      f.rgb_ref = j.at("rgb").get<std::string>();
      f.depth_ref = j.at("depth").get<std::string>();
      f.anchor = anchor_from_json(j.at("anchor"));
      e.frames.push_back(std::move(f));
    } catch (const std::exception& ex) {
      throw Error(ErrorCode::kCorruptFrameLine,
                  "frames.jsonl line " + std::to_string(line_no) + ": " +
                      ex.what());
    }
  }
  if (e.frames.size() != frame_count) {
    throw Error(ErrorCode::kCorruptFrameLine,
                "frames.jsonl line " + std::to_string(line_no + 1) +
                    ": expected " + std::to_string(frame_count) +
                    " frames, found " + std::to_string(e.frames.size()));
  }
  if (load) load_images(e);
  e.validate();
  return e;
}

void load_images(Episode& e) {
  for (Frame& f : e.frames) ensure_loaded(e, f);
}

std::vector<double> aperture_from_centroids(const CentroidTrack& track) {
  if (!(track.d_open > track.d_closed) || track.d_closed < 0.0) {
    throw Error(ErrorCode::kDegenerateCalibration,
                "need d_open > d_closed >= 0");
  }
  if (track.left.size() != track.right.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "left and right centroid tracks differ in length");
  }
  std::vector<double> out(track.left.size());
  const double span = track.d_open - track.d_closed;
  for (size_t i = 0; i < out.size(); ++i) {
    const double d = (track.left[i] - track.right[i]).norm();
    out[i] = std::clamp((d - track.d_closed) / span, 0.0, 1.0);
  }
  return out;
}

CentroidTrack calibrate_from_first_frame(std::vector<Vec2> left,
                                         std::vector<Vec2> right,
                                         double d_closed) {
  CentroidTrack t;
  if (left.empty() || right.empty()) {
    throw Error(ErrorCode::kDegenerateCalibration, "empty centroid track");
  }
  t.d_open = (left.front() - right.front()).norm();
  t.d_closed = d_closed;
  t.left = std::move(left);
  t.right = std::move(right);
  return t;
}

std::vector<int> static_filter_indices(const Episode& e,
                                       const StaticFilterConfig& cfg) {
  std::vector<int> kept;
  if (e.frames.empty()) return kept;
  kept.push_back(0);
  double trans = 0.0, rot = 0.0, aper = 0.0;
  for (size_t i = 1; i < e.frames.size(); ++i) {
    const Frame& prev = e.frames[i - 1];
    const Frame& cur = e.frames[i];
    trans += translation_distance(prev.pose, cur.pose);
    rot += rotation_distance(prev.pose.rotation(), cur.pose.rotation());
    aper += std::abs(cur.aperture_cmd - prev.aperture_cmd);
    if (trans > cfg.trans_thresh || rot > cfg.rot_thresh ||
        aper > cfg.aper_thresh) {
      kept.push_back(static_cast<int>(i));
      trans = rot = aper = 0.0;
    }
  }
  return kept;
}

Episode filter_static(const Episode& e, const StaticFilterConfig& cfg) {
  if (e.frames.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "episode has no frames");
  }
  const std::vector<int> kept = static_filter_indices(e, cfg);
  Episode out = e;
  out.frames.clear();
  for (int i : kept) out.frames.push_back(e.frames[i]);
  if (e.contact_frame) {
    int mapped = 0;
    for (size_t k = 0; k < kept.size(); ++k) {
      if (kept[k] <= *e.contact_frame) mapped = static_cast<int>(k);
    }
    out.contact_frame = mapped;
  }
  return out;
}

Episode mirror_episode(const Episode& e) {
  Episode out = e;
  for (Frame& f : out.frames) {
    ensure_loaded(e, f);
    if (f.rgb.empty() || f.depth.empty()) {
      throw Error(ErrorCode::kImageReadFailure,
                  "frame " + std::to_string(f.index) + " has no images");
    }
    f.rgb = flip_horizontal(f.rgb);
    f.depth = flip_horizontal(f.depth);
    f.pose = mirror_transform(f.pose);
    if (f.anchor) f.anchor = mirror_anchor(*f.anchor);
  }
  out.metadata["mirrored"] = e.mirrored() ? "false" : "true";
  out.source_dir.reset();
  return out;
}

Episode mirror_trajectory(const Episode& e) {
  Episode out = e;
  for (Frame& f : out.frames) {
    f.pose = mirror_transform(f.pose);
    if (f.anchor) f.anchor = mirror_anchor(*f.anchor);
  }
  out.metadata["mirrored"] = e.mirrored() ? "false" : "true";
  return out;
}

}  // namespace cap

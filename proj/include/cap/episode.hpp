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

#ifndef CAP_EPISODE_HPP_
#define CAP_EPISODE_HPP_

// Recorded demonstrations: in-memory types, the on-disk directory format,
// and the preprocessing passes (aperture estimation, static-frame filtering,
// trajectory mirroring).
//
// Directory layout:
//   manifest.json      episode header (schema_version, task, intrinsics, ...)
//   frames.jsonl       one JSON record per frame
//   rgb/%06d.png       8-bit RGB
//   depth/%06d.png     16-bit gray, millimeters, 0 = no depth

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cap/geometry.hpp"
#include "cap/image.hpp"

namespace cap {

inline constexpr int kEpisodeSchemaVersion = 1;
inline constexpr int kFrameSize = 224;

enum class Task { kPick, kOpen, kClose };

std::string to_string(Task task);
// Accepts "pick"/"Pick"/"PICK" etc. Throws kInvalidArgument otherwise.
Task task_from_string(const std::string& name);

struct Frame {
  int index = 0;
  RigidTransform pose;  // camera pose A_t in world
  double aperture_cmd = 1.0;
  double aperture_meas = 1.0;
  std::string rgb_ref;
  std::string depth_ref;
  std::optional<ContactAnchor> anchor;

  // Pixel payloads; empty when not loaded.
  RgbImage rgb;
  DepthImageMm depth;

  bool operator==(const Frame&) const = default;
};

struct Episode {
  std::string id;
  Task task = Task::kPick;
  uint64_t seed = 0;
  std::vector<Frame> frames;
  std::optional<int> contact_frame;
  CameraIntrinsics intrinsics;
  std::map<std::string, std::string> metadata;

  // Directory the episode was read from; used to lazily load images.
  std::optional<std::filesystem::path> source_dir;

  // Throws kInvalidArgument on a broken invariant.
  void validate() const;
  bool mirrored() const;
};

bool same_content(const Episode& a, const Episode& b);

std::string frame_rgb_ref(int index);
std::string frame_depth_ref(int index);

// Writes manifest, frames and any loaded images. Images that are not loaded
// are copied from `e.source_dir` when it exists. Returns the manifest path.
std::filesystem::path write_episode(const Episode& e,
                                    const std::filesystem::path& dir);
// Throws kMissingManifest, kSchemaVersionMismatch, kCorruptFrameLine.
Episode read_episode(const std::filesystem::path& dir,
                     bool load_images = true);

// Loads frame images in place from `e.source_dir` if they are empty.
// Throws kImageReadFailure.
void load_images(Episode& e);

struct CentroidTrack {
  std::vector<Vec2> left;
  std::vector<Vec2> right;
  double d_open = 0.0;
  double d_closed = 0.0;
};

// aperture = clamp((|l - r| - d_closed) / (d_open - d_closed), 0, 1).
// Throws kDegenerateCalibration if d_open <= d_closed.
std::vector<double> aperture_from_centroids(const CentroidTrack& track);

// Calibrates d_open from the first frame, where the gripper is fully open.
CentroidTrack calibrate_from_first_frame(std::vector<Vec2> left,
                                         std::vector<Vec2> right,
                                         double d_closed);

struct StaticFilterConfig {
  double trans_thresh = 0.003;  // meters
  double rot_thresh = 0.1;      // radians
  double aper_thresh = 0.05;    // aperture units, commanded channel
};

// Indices of the frames kept by the forward scan.
std::vector<int> static_filter_indices(const Episode& e,
                                       const StaticFilterConfig& cfg = {});
// Keeps the selected frames; contact_frame maps to the nearest kept frame at
// or before it. Frame indices keep their original values.
Episode filter_static(const Episode& e, const StaticFilterConfig& cfg = {});

// Flips images left-right, conjugates poses by the x mirror and mirrors
// anchors; toggles metadata["mirrored"]. Throws kImageReadFailure when
// images are neither loaded nor readable from source_dir.
Episode mirror_episode(const Episode& e);

// Pose/anchor part of mirror_episode for episodes recorded without images.
Episode mirror_trajectory(const Episode& e);

}  // namespace cap

#endif  // CAP_EPISODE_HPP_

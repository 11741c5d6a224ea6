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


#ifndef CAP_TESTS_SUPPORT_HPP_
#define CAP_TESTS_SUPPORT_HPP_

#include <filesystem>
#include <random>
#include <string>

#include "cap/episode.hpp"
#include "cap/geometry.hpp"

namespace cap::test {

inline RigidTransform random_transform(std::mt19937_64& g, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, 1.0);
  const Quat q(n(g), n(g), n(g), n(g));
  return RigidTransform(q, Vec3(n(g), n(g), n(g)) * scale);
}

inline Vec3 random_point(std::mt19937_64& g, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, 1.0);
  return Vec3(n(g), n(g), n(g)) * scale;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("cap_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// n frames translating by `step` along x per frame, unloaded images.
inline Episode line_episode(int n, double step, double aperture_step = 0.0) {
  Episode e;
  e.id = "synthetic";
  e.task = Task::kPick;
  e.seed = 1;
  for (int i = 0; i < n; ++i) {
    Frame f;
    f.index = i;
    f.pose = RigidTransform::from_translation(Vec3(step * i, 0.0, 0.0));
    f.aperture_cmd = 1.0 - aperture_step * i;
    f.aperture_meas = f.aperture_cmd;
    f.rgb_ref = frame_rgb_ref(i);
    f.depth_ref = frame_depth_ref(i);
    e.frames.push_back(f);
  }
  return e;
}

}  // namespace cap::test

#endif  // CAP_TESTS_SUPPORT_HPP_

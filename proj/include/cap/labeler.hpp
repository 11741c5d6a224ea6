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

#ifndef CAP_LABELER_HPP_
#define CAP_LABELER_HPP_

// Hindsight contact labeling: find the contact frame from the aperture
// trace, define the anchor between the fingertips at contact, and carry it
// back through the recorded camera poses. After contact the anchor is
// frozen.

#include <span>

#include "cap/episode.hpp"
#include "cap/geometry.hpp"

namespace cap {

struct ContactDetectionConfig {
  double stall_eps = 0.01;
  int stall_window = 5;
  double min_close = 0.2;

  void validate() const;
};

struct GripperGeometry {
  // Point centered between the fingertips, camera frame.
  Vec3 tip_offset = Vec3(0.0, 0.05, 0.13);
};

// Smallest t with a[0] - a[t] >= min_close and a[t] - a[min(t + k, end)] <
// stall_eps for k = 1..stall_window. Throws kNoContactFound.
int detect_contact(std::span<const double> apertures,
                   const ContactDetectionConfig& cfg = {});

struct LabelOptions {
  // Use e.contact_frame instead of detection. Always on for Close episodes,
  // whose contact frame is marked during collection.
  bool use_recorded_contact = false;
};

Episode label_anchors(const Episode& e, const ContactDetectionConfig& cfg = {},
                      const GripperGeometry& g = {},
                      const LabelOptions& options = {});

}  // namespace cap

#endif  // CAP_LABELER_HPP_

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

#include "cap/labeler.hpp"

#include <algorithm>
#include <sstream>
#include <string>
#include <vector>

#include "cap/error.hpp"

namespace cap {

void ContactDetectionConfig::validate() const {
  if (!(stall_eps > 0.0) || stall_window < 1 ||
      !(min_close > 0.0 && min_close <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "contact detection needs stall_eps > 0, stall_window >= 1, "
                "min_close in (0, 1]");
  }
}

int detect_contact(std::span<const double> a,
                   const ContactDetectionConfig& cfg) {
  cfg.validate();
  if (a.empty()) {
    throw Error(ErrorCode::kNoContactFound, "empty aperture trace");
  }
  const int end = static_cast<int>(a.size()) - 1;
  // Closed-by-enough test tolerates the rounding of decimal apertures.
  constexpr double kSlack = 1e-12;
  for (int t = 0; t <= end; ++t) {
    if (a[0] - a[t] < cfg.min_close - kSlack) continue;
    bool stalled = true;
    for (int k = 1; k <= cfg.stall_window && stalled; ++k) {
      stalled = a[t] - a[std::min(t + k, end)] < cfg.stall_eps;
    }
    if (stalled) return t;
  }
  throw Error(ErrorCode::kNoContactFound,
              "aperture never closes and stalls");
}

Episode label_anchors(const Episode& e, const ContactDetectionConfig& cfg,
                      const GripperGeometry& g, const LabelOptions& options) {
  if (e.frames.empty()) {
    throw Error(ErrorCode::kNoContactFound, "episode has no frames");
  }
  int c;
  if (options.use_recorded_contact || e.task == Task::kClose) {
    if (!e.contact_frame) {
      throw Error(ErrorCode::kNoContactFound,
                  "episode " + e.id + " has no recorded contact frame");
    }
    c = *e.contact_frame;
  } else {
    std::vector<double> apertures;
    apertures.reserve(e.frames.size());
    for (const Frame& f : e.frames) apertures.push_back(f.aperture_meas);
    c = detect_contact(apertures, cfg);
  }

  Episode out = e;
  out.contact_frame = c;
  ContactAnchor at_contact;
  at_contact.point = g.tip_offset;
  at_contact.frame = AnchorFrame::kCamera;
  at_contact.frozen = true;
  const RigidTransform& contact_pose = e.frames[c].pose;
  for (int t = 0; t < static_cast<int>(out.frames.size()); ++t) {
    Frame& f = out.frames[t];
    if (t < c) {
      ContactAnchor a = propagate_anchor(f.pose, contact_pose, at_contact);
      a.frozen = false;
      f.anchor = a;
    } else {
      f.anchor = at_contact;
    }
  }
  std::ostringstream meta;
  meta.precision(17);
  meta << "stall_eps=" << cfg.stall_eps << ";stall_window=" << cfg.stall_window
       << ";min_close=" << cfg.min_close;
  out.metadata["label_config"] = meta.str();
  return out;
}

}  // namespace cap

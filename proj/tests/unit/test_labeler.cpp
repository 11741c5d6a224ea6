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


#include <random>

#include "cap/egogym.hpp"
#include "cap/episode.hpp"
#include "cap/error.hpp"
#include "cap/labeler.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace cap;

namespace {

std::vector<double> stall_profile(int n, int contact, double from, double rate) {
  std::vector<double> a;
  for (int t = 0; t < n; ++t) a.push_back(t < contact ? from - rate * t : from - rate * contact);
  return a;
}

Episode with_apertures(Episode e, const std::vector<double>& a) {
  for (size_t i = 0; i < e.frames.size(); ++i) {
    e.frames[i].aperture_meas = a[i];
    e.frames[i].aperture_cmd = a[i];
  }
  return e;
}

}  // namespace

TEST_CASE("detect_contact examples") {
  const std::vector<double> a{1.0, 0.8, 0.6, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5};
  CHECK(detect_contact(a) == 3);
  const std::vector<double> b{1.0, 0.7, 0.4, 0.4, 0.4, 0.4, 0.4, 0.4};
  CHECK(detect_contact(b) == 2);
  const std::vector<double> open(12, 1.0);
  CHECK_THROWS_AS(detect_contact(open), Error);
  try {
    detect_contact(open);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNoContactFound);
  }
  CHECK_THROWS_AS(detect_contact(std::vector<double>{}), Error);
}

TEST_CASE("detect_contact agrees with a brute-force scan") {
  std::mt19937_64 g(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const ContactDetectionConfig cfg;
  for (int i = 0; i < 300; ++i) {
    std::vector<double> a{1.0};
    for (int t = 1; t < 30; ++t) {
      a.push_back(std::clamp(a.back() - (u(g) < 0.5 ? 0.15 * u(g) : 0.004 * u(g)), 0.0, 1.0));
    }
    int oracle = -1;
    for (int t = 0; t < 30 && oracle < 0; ++t) {
      bool ok = a[0] - a[t] >= cfg.min_close;
      for (int k = 1; k <= cfg.stall_window && ok; ++k) {
        ok = a[t] - a[std::min(t + k, 29)] < cfg.stall_eps;
      }
      if (ok) oracle = t;
    }
    if (oracle < 0) {
      CHECK_THROWS_AS(detect_contact(a, cfg), Error);
    } else {
      CHECK(detect_contact(a, cfg) == oracle);
    }
  }
}

TEST_CASE("config validation") {
  ContactDetectionConfig c;
  c.stall_eps = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.stall_window = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.min_close = 1.5;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("stationary camera gives identical anchors") {
  Episode e = with_apertures(test::line_episode(12, 0.0), stall_profile(12, 4, 1.0, 0.15));
  const Episode l = label_anchors(e);
  REQUIRE(l.contact_frame == 4);
  const GripperGeometry g;
  for (const auto& f : l.frames) {
    REQUIRE(f.anchor.has_value());
    CHECK(f.anchor->point == g.tip_offset);
  }
  CHECK(l.metadata.count("label_config") == 1);
}

TEST_CASE("retreating camera pushes frame-0 anchor forward") {
  Episode e = with_apertures(test::line_episode(8, 0.0), stall_profile(8, 2, 1.0, 0.2));
  // Frame 0 sits 0.1 m behind the contact pose along its own -z.
  e.frames[0].pose = RigidTransform::from_translation(Vec3(0, 0, -0.1));
  const Episode l = label_anchors(e);
  REQUIRE(l.contact_frame == 2);
  const Vec3 pc = GripperGeometry{}.tip_offset;
  CHECK(l.frames[0].anchor->point.z() == doctest::Approx(pc.z() + 0.1));
  CHECK_FALSE(l.frames[0].anchor->frozen);
  CHECK(l.frames[2].anchor->frozen);
}

TEST_CASE("labeling invariants on random trajectories") {
  std::mt19937_64 g(99);
  for (int ep = 0; ep < 50; ++ep) {
    Episode e = with_apertures(test::line_episode(20, 0.0), stall_profile(20, 7, 1.0, 0.1));
    for (auto& f : e.frames) f.pose = test::random_transform(g, 0.3);
    const Episode l = label_anchors(e);
    const int c = *l.contact_frame;
    const Vec3 world = transform_point(l.frames[c].pose, l.frames[c].anchor->point);
    for (int t = 0; t < c; ++t) {
      CHECK((transform_point(l.frames[t].pose, l.frames[t].anchor->point) - world).norm() < 1e-9);
    }
    for (size_t t = c; t < l.frames.size(); ++t) {
      CHECK(l.frames[t].anchor->point == l.frames[c].anchor->point);
      CHECK(l.frames[t].anchor->frozen);
    }

    const Episode lm = label_anchors(mirror_trajectory(e));
    CHECK(lm.contact_frame == l.contact_frame);
    for (size_t t = 0; t < l.frames.size(); ++t) {
      CHECK((lm.frames[t].anchor->point - mirror_point(l.frames[t].anchor->point)).norm() < 1e-9);
    }
  }
}

TEST_CASE("labeling commutes with static filtering") {
  Episode e = with_apertures(test::line_episode(30, 0.002), stall_profile(30, 8, 1.0, 0.1));
  for (auto& f : e.frames) {
    f.pose = compose(f.pose, RigidTransform::from_axis_angle(Vec3(0, 0.01 * f.index, 0), Vec3::Zero()));
  }
  const Episode before = filter_static(label_anchors(e));
  const Episode after = label_anchors(filter_static(e));
  REQUIRE(before.frames.size() == after.frames.size());
  for (size_t i = 0; i < before.frames.size(); ++i) {
    CHECK((before.frames[i].anchor->point - after.frames[i].anchor->point).norm() < 1e-9);
  }
}

TEST_CASE("recorded contact frame bypasses detection") {
  Episode e = test::line_episode(6, 0.01);
  e.contact_frame = 3;
  LabelOptions o;
  o.use_recorded_contact = true;
  const Episode l = label_anchors(e, {}, {}, o);
  CHECK(l.contact_frame == 3);
  e.task = Task::kClose;
  CHECK(label_anchors(e).contact_frame == 3);
}

TEST_CASE("frame-0 anchors of simulator demos hit the grasp point") {
  int within = 0;
  const int n = 40;
  for (int i = 0; i < n; ++i) {
    egogym::CollectOptions co;
    co.render_images = false;
    const egogym::CollectedEpisode c = egogym::collect_oracle_episode(Task::kPick, 500 + i, co);
    REQUIRE(c.success);
    const Episode l = label_anchors(c.episode);
    const Vec3 world = transform_point(l.frames[0].pose, l.frames[0].anchor->point);
    within += (world - c.grasp_point_world).norm() < 0.01;
  }
  CHECK(within == n);
}

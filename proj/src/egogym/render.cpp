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

#include <algorithm>
#include <cmath>

#include "cap/egogym.hpp"
#include "intersect.hpp"

namespace cap::egogym {
namespace {

using detail::Interval;

const Vec3 kLight = Vec3(0.0, -0.45, 1.0).normalized();
constexpr double kAmbient = 0.35;
constexpr double kDiffuse = 0.65;
constexpr double kNear = 1e-6;

struct Prepared {
  const Solid* solid;
  Mat3 rotation;       // solid to world
  Vec3 origin;         // camera center in solid coordinates
  Mat3 dir;            // camera ray direction to solid coordinates
  int u0, u1, v0, v1;  // inclusive pixel rectangle
};

bool prepare(const Solid& s, const Mat3& rc, const Vec3& tc,
             const CameraIntrinsics& k, Prepared& out) {
  out.solid = &s;
  out.rotation = quaternion_to_matrix(s.pose.rotation());
  const Mat3 rt = out.rotation.transpose();
  out.origin = rt * (tc - s.pose.translation());
  out.dir = rt * rc;

  Vec3 h = s.half_extents;
  if (s.primitive == Primitive::kSphere) h = Vec3::Constant(h.x());
  if (s.primitive == Primitive::kCylinder) h = Vec3(h.x(), h.x(), h.z());
  const Mat3 to_cam = rc.transpose() * out.rotation;
  const Vec3 center_cam = rc.transpose() * (s.pose.translation() - tc);
  double umin = 1e30, umax = -1e30, vmin = 1e30, vmax = -1e30;
  for (int i = 0; i < 8; ++i) {
    const Vec3 corner((i & 1) ? h.x() : -h.x(), (i & 2) ? h.y() : -h.y(),
                      (i & 4) ? h.z() : -h.z());
    const Vec3 p = center_cam + to_cam * corner;
    if (p.z() <= 1e-3) {
      out.u0 = 0;
      out.v0 = 0;
      out.u1 = k.width - 1;
      out.v1 = k.height - 1;
      return true;
    }
    const double u = k.fx * p.x() / p.z() + k.cx;
    const double v = k.fy * p.y() / p.z() + k.cy;
    umin = std::min(umin, u);
    umax = std::max(umax, u);
    vmin = std::min(vmin, v);
    vmax = std::max(vmax, v);
  }
  const auto clampi = [](double x, int hi) {
    return static_cast<int>(std::clamp(x, -1.0, static_cast<double>(hi)));
  };
  out.u0 = std::max(0, clampi(std::floor(umin) - 2, k.width));
  out.u1 = std::min(k.width - 1, clampi(std::ceil(umax) + 2, k.width));
  out.v0 = std::max(0, clampi(std::floor(vmin) - 2, k.height));
  out.v1 = std::min(k.height - 1, clampi(std::ceil(vmax) + 2, k.height));
  return out.u0 <= out.u1 && out.v0 <= out.v1;
}

inline std::optional<Interval> hit(const Solid& s, const Vec3& o,
                                   const Vec3& d) {
  switch (s.primitive) {
    case Primitive::kBox:
      return detail::box_interval(o, d, s.half_extents);
    case Primitive::kSphere:
      return detail::sphere_interval(o, d, s.half_extents.x());
    case Primitive::kCylinder:
      return detail::cylinder_interval(o, d, s.half_extents.x(),
                                       s.half_extents.z());
  }
  return std::nullopt;
}

uint8_t shade(uint8_t c, double intensity) {
  return static_cast<uint8_t>(
      std::clamp(std::lround(c * intensity), 0L, 255L));
}

}  // namespace

RenderOutput render_solids(const std::vector<Solid>& solids,
                           const RigidTransform& camera_pose,
                           const CameraIntrinsics& k) {
  const int w = k.width, h = k.height;
  RenderOutput out;
  out.rgb = RgbImage(w, h);
  out.depth = DepthMap(w, h, 0.0);
  out.segmentation = SegmentationMap(w, h, kBackgroundId);
  for (size_t i = 0; i < out.rgb.pixels.size(); i += 3) {
    out.rgb.pixels[i] = kBackgroundColor.r;
    out.rgb.pixels[i + 1] = kBackgroundColor.g;
    out.rgb.pixels[i + 2] = kBackgroundColor.b;
  }

  const Mat3 rc = quaternion_to_matrix(camera_pose.rotation());
  const Vec3& tc = camera_pose.translation();
  std::vector<double> ray_u(w), ray_v(h);
  for (int u = 0; u < w; ++u) ray_u[u] = (u - k.cx) / k.fx;
  for (int v = 0; v < h; ++v) ray_v[v] = (v - k.cy) / k.fy;

  std::vector<double> best(static_cast<size_t>(w) * h,
                           std::numeric_limits<double>::infinity());
  for (const Solid& s : solids) {
    Prepared p;
    if (!prepare(s, rc, tc, k, p)) continue;
    const Vec3 c0 = p.dir.col(0), c1 = p.dir.col(1), c2 = p.dir.col(2);
    for (int v = p.v0; v <= p.v1; ++v) {
      const Vec3 row = c1 * ray_v[v] + c2;
      for (int u = p.u0; u <= p.u1; ++u) {
        const Vec3 d = c0 * ray_u[u] + row;
        const auto iv = hit(s, p.origin, d);
        if (!iv || iv->t1 < iv->t0 || iv->t0 <= kNear) continue;
        const size_t idx = static_cast<size_t>(v) * w + u;
        if (!(iv->t0 < best[idx])) continue;
        best[idx] = iv->t0;
        const Vec3 n = p.rotation * iv->normal;
        const double lambert =
            std::max(0.0, n.x() * kLight.x() + n.y() * kLight.y() +
                              n.z() * kLight.z());
        const double intensity = kAmbient + kDiffuse * lambert;
        out.rgb.pixels[idx * 3] = shade(s.color.r, intensity);
        out.rgb.pixels[idx * 3 + 1] = shade(s.color.g, intensity);
        out.rgb.pixels[idx * 3 + 2] = shade(s.color.b, intensity);
        out.depth.pixels[idx] = iv->t0;
        out.segmentation.pixels[idx] = s.body_id;
      }
    }
  }
  return out;
}

Observation render(const SceneSpec& scene, const SimState& state,
                   const SimConfig& cfg) {
  RenderOutput r = render_solids(scene_solids(scene, state, cfg.gripper),
                                 state.ee_pose, cfg.intrinsics);
  Observation obs;
  obs.rgb = std::move(r.rgb);
  obs.depth = std::move(r.depth);
  obs.segmentation = std::move(r.segmentation);
  obs.camera_pose = state.ee_pose;
  obs.aperture_meas = state.aperture_meas;
  if (scene.task == Task::kPick) {
    if (state.target >= 0) {
      obs.privileged = state.object_poses[state.target];
      obs.privileged_body = scene.objects[state.target].id;
    }
  } else if (!scene.articulations.empty()) {
    const auto& a = scene.articulations[state.goal];
    obs.privileged = handle_pose(a, state.q[state.goal]);
    obs.privileged_body = a.handle_id;
  }
  return obs;
}

std::optional<RayHit> ray_cast(const std::vector<Solid>& solids,
                               const Vec3& origin, const Vec3& direction) {
  std::optional<RayHit> best;
  for (const Solid& s : solids) {
    const auto iv = detail::world_interval(s, origin, direction);
    if (!iv || iv->t0 <= kNear) continue;
    if (!best || iv->t0 < best->t) {
      best = RayHit{iv->t0, s.body_id, origin + iv->t0 * direction};
    }
  }
  return best;
}

double signed_distance(const Solid& s, const Vec3& p) {
  const Mat3 r = quaternion_to_matrix(s.pose.rotation());
  return detail::local_sdf(s, r.transpose() * (p - s.pose.translation()));
}

}  // namespace cap::egogym

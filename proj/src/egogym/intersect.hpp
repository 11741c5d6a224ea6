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

#ifndef CAP_EGOGYM_INTERSECT_HPP_
#define CAP_EGOGYM_INTERSECT_HPP_

// Ray/primitive intervals in the primitive's local frame. Every formula is
// written so that negating the x components of the ray negates the x
// components of the result exactly.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "cap/egogym.hpp"

namespace cap::egogym::detail {

struct Interval {
  double t0 = 0.0;
  double t1 = 0.0;
  Vec3 normal = Vec3::Zero();  // outward local normal at t0
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline bool slab(double o, double d, double h, int axis, double& t0,
                 double& t1, int& entry_axis, double& entry_sign) {
  if (d == 0.0) return std::abs(o) <= h;
  const double inv = 1.0 / d;
  double a = (-h - o) * inv;
  double b = (h - o) * inv;
  double sign = -1.0;  // entering through the -h face
  if (a > b) {
    std::swap(a, b);
    sign = 1.0;
  }
  if (a > t0) {
    t0 = a;
    entry_axis = axis;
    entry_sign = sign;
  }
  t1 = std::min(t1, b);
  return t0 <= t1;
}

inline std::optional<Interval> box_interval(const Vec3& o, const Vec3& d,
                                            const Vec3& h) {
  double t0 = -kInf, t1 = kInf, sign = 0.0;
  int axis = -1;
  for (int i = 0; i < 3; ++i) {
    if (!slab(o[i], d[i], h[i], i, t0, t1, axis, sign)) return std::nullopt;
  }
  Interval out{t0, t1, Vec3::Zero()};
  if (axis >= 0) out.normal[axis] = sign;
  return out;
}

inline std::optional<Interval> sphere_interval(const Vec3& o, const Vec3& d,
                                               double r) {
  const double a = d.x() * d.x() + d.y() * d.y() + d.z() * d.z();
  const double b = o.x() * d.x() + o.y() * d.y() + o.z() * d.z();
  const double c = o.x() * o.x() + o.y() * o.y() + o.z() * o.z() - r * r;
  const double disc = b * b - a * c;
  if (disc < 0.0 || a == 0.0) return std::nullopt;
  const double sq = std::sqrt(disc);
  Interval out{(-b - sq) / a, (-b + sq) / a, Vec3::Zero()};
  out.normal = (o + out.t0 * d) / r;
  return out;
}

inline std::optional<Interval> cylinder_interval(const Vec3& o, const Vec3& d,
                                                 double r, double hz) {
  double s0 = -kInf, s1 = kInf;
  const double a = d.x() * d.x() + d.y() * d.y();
  const double c = o.x() * o.x() + o.y() * o.y() - r * r;
  if (a == 0.0) {
    if (c > 0.0) return std::nullopt;
  } else {
    const double b = o.x() * d.x() + o.y() * d.y();
    const double disc = b * b - a * c;
    if (disc < 0.0) return std::nullopt;
    const double sq = std::sqrt(disc);
    s0 = (-b - sq) / a;
    s1 = (-b + sq) / a;
  }
  double z0 = -kInf, z1 = kInf, sign = 0.0;
  int axis = -1;
  if (!slab(o.z(), d.z(), hz, 2, z0, z1, axis, sign)) return std::nullopt;
  const double t0 = std::max(s0, z0);
  const double t1 = std::min(s1, z1);
  if (t0 > t1) return std::nullopt;
  Interval out{t0, t1, Vec3::Zero()};
  if (s0 >= z0) {
    const Vec3 p = o + t0 * d;
    out.normal = Vec3(p.x() / r, p.y() / r, 0.0);
  } else {
    out.normal = Vec3(0.0, 0.0, sign);
  }
  return out;
}

inline std::optional<Interval> local_interval(const Solid& s, const Vec3& o,
                                              const Vec3& d) {
  switch (s.primitive) {
    case Primitive::kBox:
      return box_interval(o, d, s.half_extents);
    case Primitive::kSphere:
      return sphere_interval(o, d, s.half_extents.x());
    case Primitive::kCylinder:
      return cylinder_interval(o, d, s.half_extents.x(), s.half_extents.z());
  }
  return std::nullopt;
}

// World ray against a solid; the parameter t is shared by both frames.
inline std::optional<Interval> world_interval(const Solid& s, const Vec3& o,
                                              const Vec3& d) {
  const Mat3 r = quaternion_to_matrix(s.pose.rotation());
  const Vec3 lo = r.transpose() * (o - s.pose.translation());
  const Vec3 ld = r.transpose() * d;
  return local_interval(s, lo, ld);
}

inline double local_sdf(const Solid& s, const Vec3& p) {
  switch (s.primitive) {
    case Primitive::kBox: {
      const Vec3 q = p.cwiseAbs() - s.half_extents;
      return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
    }
    case Primitive::kSphere:
      return p.norm() - s.half_extents.x();
    case Primitive::kCylinder: {
      const double dx = std::hypot(p.x(), p.y()) - s.half_extents.x();
      const double dz = std::abs(p.z()) - s.half_extents.z();
      return std::hypot(std::max(dx, 0.0), std::max(dz, 0.0)) +
             std::min(std::max(dx, dz), 0.0);
    }
  }
  return 0.0;
}

}  // namespace cap::egogym::detail

#endif  // CAP_EGOGYM_INTERSECT_HPP_

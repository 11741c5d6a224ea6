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

#include "cap/geometry.hpp"

#include <cmath>
#include <string>

#include "cap/error.hpp"

namespace cap {
namespace {

bool finite(const Vec3& v) { return v.allFinite(); }

Quat normalized(const Quat& q) {
  const double n = std::sqrt(q.w() * q.w() + q.x() * q.x() + q.y() * q.y() +
                             q.z() * q.z());
  return Quat(q.w() / n, q.x() / n, q.y() / n, q.z() / n);
}

}  // namespace

RigidTransform::RigidTransform()
    : rotation_(1.0, 0.0, 0.0, 0.0), translation_(Vec3::Zero()) {}

RigidTransform::RigidTransform(const Quat& rotation, const Vec3& translation)
    : translation_(translation) {
  const double n2 = rotation.coeffs().squaredNorm();
  if (!std::isfinite(n2) || n2 < 1e-24 || !finite(translation)) {
    throw Error(ErrorCode::kInvalidArgument,
                "rigid transform needs a finite non-zero quaternion and a "
                "finite translation");
  }
  rotation_ = normalized(rotation);
}

RigidTransform RigidTransform::from_unit_quaternion(const Quat& rotation,
                                                    const Vec3& translation) {
  RigidTransform t;
  t.rotation_ = rotation;
  t.translation_ = translation;
  return t;
}

RigidTransform RigidTransform::from_translation(const Vec3& t) {
  return RigidTransform(Quat(1.0, 0.0, 0.0, 0.0), t);
}

RigidTransform RigidTransform::from_axis_angle(const Vec3& axis_angle,
                                               const Vec3& t) {
  return RigidTransform(rotation_exp(axis_angle), t);
}

RigidTransform RigidTransform::from_matrix(const Mat3& r, const Vec3& t) {
  return RigidTransform(Quat(r), t);
}

Mat3 RigidTransform::rotation_matrix() const {
  return quaternion_to_matrix(rotation_);
}

Mat4 RigidTransform::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation_matrix();
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

bool RigidTransform::operator==(const RigidTransform& other) const {
  return rotation_.coeffs() == other.rotation_.coeffs() &&
         translation_ == other.translation_;
}

Mat3 quaternion_to_matrix(const Quat& q) {
  const double w = q.w(), x = q.x(), y = q.y(), z = q.z();
  Mat3 r;
  r(0, 0) = 1.0 - 2.0 * (y * y + z * z);
  r(0, 1) = 2.0 * (x * y - w * z);
  r(0, 2) = 2.0 * (x * z + w * y);
  r(1, 0) = 2.0 * (x * y + w * z);
  r(1, 1) = 1.0 - 2.0 * (x * x + z * z);
  r(1, 2) = 2.0 * (y * z - w * x);
  r(2, 0) = 2.0 * (x * z - w * y);
  r(2, 1) = 2.0 * (y * z + w * x);
  r(2, 2) = 1.0 - 2.0 * (x * x + y * y);
  return r;
}

Quat quaternion_multiply(const Quat& a, const Quat& b) {
  return Quat(a.w() * b.w() - a.x() * b.x() - a.y() * b.y() - a.z() * b.z(),
              a.w() * b.x() + a.x() * b.w() + a.y() * b.z() - a.z() * b.y(),
              a.w() * b.y() - a.x() * b.z() + a.y() * b.w() + a.z() * b.x(),
              a.w() * b.z() + a.x() * b.y() - a.y() * b.x() + a.z() * b.w());
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  const Vec3 t = a.rotation_matrix() * b.translation() + a.translation();
  return RigidTransform(quaternion_multiply(a.rotation(), b.rotation()), t);
}

RigidTransform inverse(const RigidTransform& t) {
  const Quat& q = t.rotation();
  const Quat conj(q.w(), -q.x(), -q.y(), -q.z());
  const Vec3 ti = -(quaternion_to_matrix(conj) * t.translation());
  return RigidTransform(conj, ti);
}

Vec3 transform_point(const RigidTransform& t, const Vec3& p) {
  return t.rotation_matrix() * p + t.translation();
}

Vec3 rotate_vector(const RigidTransform& t, const Vec3& v) {
  return t.rotation_matrix() * v;
}

Vec3 rotation_log(const Quat& q_in) {
  Quat q = normalized(q_in);
  if (q.w() < 0.0) q = Quat(-q.w(), -q.x(), -q.y(), -q.z());
  const Vec3 v(q.x(), q.y(), q.z());
  const double s = v.norm();
  if (s < 1e-12) {
    // 2 * v / w to second order.
    return v * (2.0 / q.w());
  }
  const double angle = 2.0 * std::atan2(s, q.w());
  return v * (angle / s);
}

Quat rotation_exp(const Vec3& r) {
  const double angle = r.norm();
  double k;  // sin(angle / 2) / angle
  if (angle < 1e-8) {
    k = 0.5 - angle * angle / 48.0;
  } else {
    k = std::sin(0.5 * angle) / angle;
  }
  return normalized(Quat(std::cos(0.5 * angle), k * r.x(), k * r.y(),
                         k * r.z()));
}

double rotation_distance(const Quat& a, const Quat& b) {
  const Quat ac(a.w(), -a.x(), -a.y(), -a.z());
  const Quat d = quaternion_multiply(ac, b);
  const double s = Vec3(d.x(), d.y(), d.z()).norm();
  return 2.0 * std::atan2(s, std::abs(d.w()));
}

double translation_distance(const RigidTransform& a, const RigidTransform& b) {
  return (a.translation() - b.translation()).norm();
}

RigidTransform relative(const RigidTransform& from, const RigidTransform& to) {
  return compose(inverse(from), to);
}

void CameraIntrinsics::validate() const {
  const bool ok = fx > 0.0 && fy > 0.0 && width > 0 && height > 0 &&
                  cx >= 0.0 && cx < width && cy >= 0.0 && cy < height;
  if (!ok) {
    throw Error(ErrorCode::kInvalidArgument, "invalid camera intrinsics");
  }
}

Mat3 CameraIntrinsics::matrix() const {
  Mat3 k = Mat3::Zero();
  k(0, 0) = fx;
  k(1, 1) = fy;
  k(0, 2) = cx;
  k(1, 2) = cy;
  k(2, 2) = 1.0;
  return k;
}

CameraIntrinsics CameraIntrinsics::centered(int size, double focal) {
  CameraIntrinsics k;
  k.fx = k.fy = focal;
  k.cx = k.cy = 0.5 * (size - 1);
  k.width = k.height = size;
  return k;
}

ContactAnchor deproject(const CameraIntrinsics& k, double u, double v,
                        double depth) {
  if (!(u >= 0.0 && u < k.width && v >= 0.0 && v < k.height)) {
    throw Error(ErrorCode::kOutOfBounds,
                "pixel (" + std::to_string(u) + ", " + std::to_string(v) +
                    ") outside image");
  }
  if (!(depth > 0.0)) {
    throw Error(ErrorCode::kNonPositiveDepth,
                "no depth at pixel (" + std::to_string(u) + ", " +
                    std::to_string(v) + ")");
  }
  ContactAnchor a;
  a.point = Vec3((u - k.cx) * depth / k.fx, (v - k.cy) * depth / k.fy, depth);
  a.frame = AnchorFrame::kCamera;
  return a;
}

Vec2 project(const CameraIntrinsics& k, const Vec3& p) {
  if (!(p.z() > 0.0)) {
    throw Error(ErrorCode::kBehindCamera, "point is not in front of camera");
  }
  return Vec2(k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy);
}

ContactAnchor propagate_anchor(const RigidTransform& camera_pose_now,
                               const RigidTransform& camera_pose_ref,
                               const ContactAnchor& anchor_ref) {
  if (anchor_ref.frame != AnchorFrame::kCamera) {
    throw Error(ErrorCode::kWrongFrame, "propagation needs a camera anchor");
  }
  ContactAnchor out = anchor_ref;
  out.point = transform_point(
      compose(inverse(camera_pose_now), camera_pose_ref), anchor_ref.point);
  return out;
}

RigidTransform mirror_transform(const RigidTransform& t) {
  const Quat& q = t.rotation();
  const Vec3& p = t.translation();
  return RigidTransform::from_unit_quaternion(
      Quat(q.w(), q.x(), -q.y(), -q.z()), Vec3(-p.x(), p.y(), p.z()));
}

Vec3 mirror_point(const Vec3& p) { return Vec3(-p.x(), p.y(), p.z()); }

ContactAnchor mirror_anchor(const ContactAnchor& a) {
  ContactAnchor m = a;
  m.point = mirror_point(a.point);
  return m;
}

}  // namespace cap

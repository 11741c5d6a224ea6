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

#ifndef CAP_GEOMETRY_HPP_
#define CAP_GEOMETRY_HPP_

// SE(3) and pinhole camera math shared by every module.
//
// Conventions: camera frame is x right, y down, z forward. Depth is the
// camera-frame z coordinate, not the ray length. Rotations are unit
// quaternions stored (w, x, y, z); small rotations are exchanged as
// axis-angle 3-vectors.

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace cap {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Quat = Eigen::Quaterniond;

class RigidTransform {
 public:
  RigidTransform();
  // Normalizes the quaternion. Throws kInvalidArgument on a zero-norm or
  // non-finite quaternion or a non-finite translation.
  RigidTransform(const Quat& rotation, const Vec3& translation);

  // Takes an already-unit quaternion verbatim (no renormalization), so that
  // sign-only edits such as mirroring stay bit-exact.
  static RigidTransform from_unit_quaternion(const Quat& rotation,
                                             const Vec3& translation);

  static RigidTransform identity() { return {}; }
  static RigidTransform from_translation(const Vec3& t);
  static RigidTransform from_axis_angle(const Vec3& axis_angle,
                                        const Vec3& t = Vec3::Zero());
  // `r` must be a proper rotation matrix.
  static RigidTransform from_matrix(const Mat3& r, const Vec3& t);

  const Quat& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  Mat3 rotation_matrix() const;
  Mat4 matrix() const;

  bool operator==(const RigidTransform& other) const;

 private:
  Quat rotation_;
  Vec3 translation_;
};

// (a ∘ b)(p) = a(b(p)).
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
RigidTransform inverse(const RigidTransform& t);
Vec3 transform_point(const RigidTransform& t, const Vec3& p);
Vec3 rotate_vector(const RigidTransform& t, const Vec3& v);

// Rotation matrix of a unit quaternion, computed with an explicit formula
// whose sign structure is symmetric under the x-axis mirror.
Mat3 quaternion_to_matrix(const Quat& q);
Quat quaternion_multiply(const Quat& a, const Quat& b);

Vec3 rotation_log(const Quat& q);         // axis-angle
Quat rotation_exp(const Vec3& axis_angle);
// Geodesic angle in [0, pi] of the relative rotation a^-1 b.
double rotation_distance(const Quat& a, const Quat& b);
double translation_distance(const RigidTransform& a, const RigidTransform& b);

// Relative motion expressed in the frame of `from`: from^-1 ∘ to.
RigidTransform relative(const RigidTransform& from, const RigidTransform& to);

struct CameraIntrinsics {
  double fx = 200.0;
  double fy = 200.0;
  double cx = 111.5;
  double cy = 111.5;
  int width = 224;
  int height = 224;

  // Throws kInvalidArgument when the invariants do not hold.
  void validate() const;
  Mat3 matrix() const;

  // Square image whose principal point is the exact image center, so that
  // column u mirrors onto column width-1-u.
  static CameraIntrinsics centered(int size = 224, double focal = 200.0);
};

enum class AnchorFrame { kCamera, kWorld };

struct ContactAnchor {
  Vec3 point = Vec3::Zero();
  AnchorFrame frame = AnchorFrame::kCamera;
  bool frozen = false;

  bool operator==(const ContactAnchor&) const = default;
};

// p = d * K^-1 [u, v, 1]^T. Throws kNonPositiveDepth for d <= 0 and
// kOutOfBounds for a pixel outside the image.
ContactAnchor deproject(const CameraIntrinsics& k, double u, double v,
                        double depth);

// Fractional pixel of a camera-frame point. Throws kBehindCamera for z <= 0.
Vec2 project(const CameraIntrinsics& k, const Vec3& p);

// p_t = A_t^-1 A_ref p_ref, for camera poses in a shared world frame.
ContactAnchor propagate_anchor(const RigidTransform& camera_pose_now,
                               const RigidTransform& camera_pose_ref,
                               const ContactAnchor& anchor_ref);

// Conjugation by the reflection that negates x: M ∘ T ∘ M.
RigidTransform mirror_transform(const RigidTransform& t);
Vec3 mirror_point(const Vec3& p);
ContactAnchor mirror_anchor(const ContactAnchor& a);

}  // namespace cap

#endif  // CAP_GEOMETRY_HPP_

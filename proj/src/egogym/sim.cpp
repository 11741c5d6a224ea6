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
#include <array>
#include <cmath>

#include "cap/egogym.hpp"
#include "cap/error.hpp"
#include "intersect.hpp"

namespace cap::egogym {
namespace {

constexpr double kTouch = 1e-9;

Vec3 clamp_norm(const Vec3& v, double max_norm) {
  const double n = v.norm();
  if (n > max_norm && n > 0.0) return v * (max_norm / n);
  return v;
}

// Solids the finger pads can close on: objects and handles.
std::vector<Solid> graspables(const SceneSpec& scene, const SimState& s) {
  std::vector<Solid> out;
  for (size_t i = 0; i < scene.objects.size(); ++i) {
    const auto& o = scene.objects[i];
    out.push_back(Solid{o.primitive, o.half_extents, s.object_poses[i],
                        o.color, o.id});
  }
  for (size_t i = 0; i < scene.articulations.size(); ++i) {
    const auto& a = scene.articulations[i];
    out.push_back(Solid{Primitive::kBox, a.handle_half,
                        handle_pose(a, s.q[i]), a.handle_color, a.handle_id});
  }
  return out;
}

std::vector<Solid> fixtures(const SceneSpec& scene, const SimState& s) {
  std::vector<Solid> out;
  for (const Solid& solid : scene_solids(scene, s)) {
    if (solid.body_id < kFirstFixtureId) continue;
    if (scene.articulation_of_handle(solid.body_id) >= 0) continue;
    out.push_back(solid);
  }
  return out;
}

// Pad sample offsets (camera y, camera z) around the tip.
std::array<Vec2, 9> pad_samples(const GripperModel& g) {
  std::array<Vec2, 9> out;
  int n = 0;
  for (int i = -1; i <= 1; ++i) {
    for (int j = -1; j <= 1; ++j) {
      out[n++] = Vec2(g.tip_offset.y() + i * g.pad_half_height,
                      g.tip_offset.z() + j * g.pad_half_depth);
    }
  }
  return out;
}

struct Block {
  double position;
  int body;
};

// First obstruction met by a finger moving from `from` to `to` along camera
// x. `right` selects the finger (right moves toward -x when closing).
std::optional<Block> obstruction(const std::vector<Solid>& bodies,
                                 const RigidTransform& ee,
                                 const GripperModel& g, double from,
                                 double to, bool right) {
  const Mat3 r = quaternion_to_matrix(ee.rotation());
  const Vec3 axis = r.col(0);
  std::optional<Block> best;
  for (const Vec2& yz : pad_samples(g)) {
    const Vec3 origin = transform_point(ee, Vec3(0.0, yz.x(), yz.y()));
    for (const Solid& s : bodies) {
      const auto iv = detail::world_interval(s, origin, axis);
      if (!iv || iv->t1 < iv->t0) continue;
      double candidate;
      if (right) {
        if (iv->t0 < from && from < iv->t1) {
          candidate = from;
        } else if (iv->t1 <= from + kTouch && iv->t1 >= to) {
          candidate = std::min(iv->t1, from);
        } else {
          continue;
        }
        if (!best || candidate > best->position) best = Block{candidate, s.body_id};
      } else {
        if (iv->t0 < from && from < iv->t1) {
          candidate = from;
        } else if (iv->t0 >= from - kTouch && iv->t0 <= to) {
          candidate = std::max(iv->t0, from);
        } else {
          continue;
        }
        if (!best || candidate < best->position) best = Block{candidate, s.body_id};
      }
    }
  }
  return best;
}

void update_fingers(const SceneSpec& scene, SimState& s,
                    const GripperModel& g) {
  const std::vector<Solid> bodies = graspables(scene, s);
  const double target = s.aperture_cmd * g.max_gap / 2;
  const double rate = g.max_aperture_rate * g.max_gap / 2;

  if (target >= s.finger_right) {
    s.finger_right = std::min(target, s.finger_right + rate);
    s.right_contact = 0;
  } else {
    const double desired = std::max(target, s.finger_right - rate);
    const auto b = obstruction(bodies, s.ee_pose, g, s.finger_right, desired,
                               true);
    s.finger_right = b ? b->position : desired;
    s.right_contact = b ? b->body : 0;
  }
  if (-target <= s.finger_left) {
    s.finger_left = std::max(-target, s.finger_left - rate);
    s.left_contact = 0;
  } else {
    const double desired = std::min(-target, s.finger_left + rate);
    const auto b = obstruction(bodies, s.ee_pose, g, s.finger_left, desired,
                               false);
    s.finger_left = b ? b->position : desired;
    s.left_contact = b ? b->body : 0;
  }
}

void log_contact(SimState& s, int body) {
  if (body != 0) s.contact_log.emplace(body, s.step_count);
}

void log_contacts(const SceneSpec& scene, SimState& s, const GripperModel& g) {
  log_contact(s, s.left_contact);
  log_contact(s, s.right_contact);
  const std::vector<Solid> bodies = graspables(scene, s);
  for (const Vec2& yz : pad_samples(g)) {
    for (double x : {s.finger_left, s.finger_right}) {
      const Vec3 p = transform_point(s.ee_pose, Vec3(x, yz.x(), yz.y()));
      for (const Solid& b : bodies) {
        if (signed_distance(b, p) <= g.contact_tolerance) log_contact(s, b.body_id);
      }
    }
  }
}

double vertical_extent(Primitive p, const Vec3& h, const Mat3& r) {
  switch (p) {
    case Primitive::kBox:
      return std::abs(r(2, 0)) * h.x() + std::abs(r(2, 1)) * h.y() +
             std::abs(r(2, 2)) * h.z();
    case Primitive::kSphere:
      return h.x();
    case Primitive::kCylinder: {
      const double az = std::min(1.0, std::abs(r(2, 2)));
      return h.x() * std::sqrt(1.0 - az * az) + h.z() * az;
    }
  }
  return 0.0;
}

// Teleports a released object straight down onto the highest support below.
void drop_object(const SceneSpec& scene, SimState& s, int index) {
  const auto& o = scene.objects[index];
  const RigidTransform& pose = s.object_poses[index];
  const Vec3 c = pose.translation();
  const double extent =
      vertical_extent(o.primitive, o.half_extents, pose.rotation_matrix());
  const double bottom = c.z() - extent;
  double support = 0.0;
  auto consider = [&](double top) {
    if (top <= bottom + 1e-6) support = std::max(support, top);
  };
  if (scene.table.present &&
      std::abs(c.x() - scene.table.center.x()) <= scene.table.half_extent.x() &&
      std::abs(c.y() - scene.table.center.y()) <= scene.table.half_extent.y()) {
    consider(scene.table.height);
  }
  for (size_t j = 0; j < scene.objects.size(); ++j) {
    if (static_cast<int>(j) == index) continue;
    const auto& other = scene.objects[j];
    const RigidTransform& op = s.object_poses[j];
    const Vec3 oc = op.translation();
    const double r = other.primitive == Primitive::kBox
                         ? std::hypot(other.half_extents.x(), other.half_extents.y())
                         : other.half_extents.x();
    if (std::hypot(c.x() - oc.x(), c.y() - oc.y()) <= r) {
      consider(oc.z() + vertical_extent(other.primitive, other.half_extents,
                                        op.rotation_matrix()));
    }
  }
  for (const auto& a : scene.articulations) {
    const Vec3 local = transform_point(inverse(a.frame), c);
    const Vec3& h = a.carcass_half;
    if (std::abs(local.x()) <= h.x() && local.y() >= 0.0 &&
        local.y() <= 2 * h.y()) {
      const double floor = a.hollow ? -h.z() + 0.02 : h.z();
      consider(transform_point(a.frame, Vec3(0.0, 0.0, floor)).z());
    }
  }
  s.object_poses[index] = RigidTransform::from_unit_quaternion(
      pose.rotation(), Vec3(c.x(), c.y(), support + extent));
}

double penetration(const std::vector<Solid>& solids, const RigidTransform& ee,
                   const SimState& s, const GripperModel& g) {
  const double t = g.finger_thickness;
  const double y = g.tip_offset.y(), z = g.tip_offset.z();
  const std::array<Vec3, 12> points{{
      Vec3(0.0, 0.0, 0.0),
      Vec3(0.0, y, z),
      Vec3(s.finger_left - t, y, g.finger_back),
      Vec3(s.finger_right + t, y, g.finger_back),
      Vec3(s.finger_left - t, y - g.pad_half_height, z + g.pad_half_depth),
      Vec3(s.finger_left - t, y + g.pad_half_height, z + g.pad_half_depth),
      Vec3(s.finger_left - t, y - g.pad_half_height, z - g.pad_half_depth),
      Vec3(s.finger_left - t, y + g.pad_half_height, z - g.pad_half_depth),
      Vec3(s.finger_right + t, y - g.pad_half_height, z + g.pad_half_depth),
      Vec3(s.finger_right + t, y + g.pad_half_height, z + g.pad_half_depth),
      Vec3(s.finger_right + t, y - g.pad_half_height, z - g.pad_half_depth),
      Vec3(s.finger_right + t, y + g.pad_half_height, z - g.pad_half_depth),
  }};
  double total = 0.0;
  for (const Vec3& p : points) {
    const Vec3 w = transform_point(ee, p);
    for (const Solid& solid : solids) {
      total += std::max(0.0, -signed_distance(solid, w));
    }
  }
  return total;
}

// Door swing sign about the cabinet z axis for increasing q.
double door_sign(const Articulation& a) {
  return a.hinge == HingeSide::kLeft ? -1.0 : 1.0;
}

Vec3 door_hinge_world(const Articulation& a) {
  const double x = a.hinge == HingeSide::kLeft ? -a.carcass_half.x()
                                               : a.carcass_half.x();
  return transform_point(a.frame, Vec3(x, -a.panel_half.y(), 0.0));
}

}  // namespace

Vec3 tip_position(const SimState& s, const GripperModel& g) {
  return transform_point(s.ee_pose, g.tip_offset);
}

// Rate of change of the grasped point per unit q, world frame.
Vec3 joint_tangent(const Articulation& a, const Vec3& point) {
  if (a.kind == ArticulationKind::kPrismaticDrawer) {
    return rotate_vector(a.frame, Vec3(0.0, -a.travel, 0.0));
  }
  const Vec3 axis = rotate_vector(a.frame, Vec3::UnitZ());
  Vec3 r = point - door_hinge_world(a);
  r -= r.dot(axis) * axis;
  return door_sign(a) * a.travel * axis.cross(r);
}

namespace {

void move_joint(const SceneSpec& scene, SimState& s, int index,
                const RigidTransform& proposed, const GripperModel& g) {
  const Articulation& a = scene.articulations[index];
  const Vec3 tip = tip_position(s, g);
  const Vec3 delta = transform_point(proposed, g.tip_offset) - tip;
  const Vec3 tangent = joint_tangent(a, tip);
  const double tn2 = tangent.squaredNorm();
  if (tn2 <= 0.0) return;
  const double q = s.q[index];
  const double q_new = std::clamp(q + delta.dot(tangent) / tn2, 0.0, 1.0);
  const double dq = q_new - q;
  s.q[index] = q_new;
  if (a.kind == ArticulationKind::kPrismaticDrawer) {
    const Vec3 shift = rotate_vector(a.frame, Vec3(0.0, -a.travel * dq, 0.0));
    s.ee_pose = RigidTransform::from_unit_quaternion(
        s.ee_pose.rotation(), s.ee_pose.translation() + shift);
  } else {
    const Vec3 axis = rotate_vector(a.frame, Vec3::UnitZ());
    const Vec3 hinge = door_hinge_world(a);
    const RigidTransform swing = RigidTransform::from_axis_angle(
        axis * (door_sign(a) * a.travel * dq), Vec3::Zero());
    const RigidTransform about = compose(
        RigidTransform::from_translation(hinge),
        compose(swing, RigidTransform::from_translation(-hinge)));
    s.ee_pose = compose(about, s.ee_pose);
  }
}

}  // namespace

bool is_success(const SceneSpec& scene, const SimState& s,
                const SimConfig& cfg) {
  switch (scene.task) {
    case Task::kPick:
      return s.max_lift > cfg.pick_threshold;
    case Task::kOpen:
      return s.max_reward >= cfg.open_threshold;
    case Task::kClose:
      return s.max_reward >= 1.0 - cfg.close_threshold;
  }
  return false;
}

StepOutcome step(const SceneSpec& scene, const SimState& state,
                 const Action& action, const SimConfig& cfg) {
  if (state.done) {
    throw Error(ErrorCode::kEpisodeFinished, "step called after done");
  }
  if (!action.delta_translation.allFinite() ||
      !action.delta_rotation.allFinite() || !std::isfinite(action.aperture_cmd)) {
    throw Error(ErrorCode::kInvalidArgument, "non-finite action");
  }
  const GripperModel& g = cfg.gripper;
  SimState s = state;
  s.aperture_cmd = std::clamp(action.aperture_cmd, 0.0, 1.0);

  const Vec3 dt = clamp_norm(action.delta_translation, cfg.max_translation);
  const Vec3 dr = clamp_norm(action.delta_rotation, cfg.max_rotation);
  const bool still = dt.isZero(0.0) && dr.isZero(0.0);
  const RigidTransform proposed =
      still ? s.ee_pose
            : compose(s.ee_pose, RigidTransform(rotation_exp(dr), dt));

  const int handle_art = scene.articulation_of_handle(s.attached);
  const int held_object = scene.object_index(s.attached);
  if (!still) {
    if (handle_art >= 0) {
      move_joint(scene, s, handle_art, proposed, g);
    } else {
      bool blocked = false;
      if (scene.solid_fixtures) {
        const auto solids = fixtures(scene, s);
        const double after = penetration(solids, proposed, s, g);
        blocked = after > 0.0 &&
                  after > penetration(solids, s.ee_pose, s, g) + 1e-12;
      }
      if (!blocked) s.ee_pose = proposed;
      if (held_object >= 0) {
        s.object_poses[held_object] = compose(s.ee_pose, s.attach_offset);
      }
    }
  }

  s.step_count += 1;

  if (s.attached != 0 &&
      s.aperture_cmd > s.attach_aperture + g.release_margin) {
    if (held_object >= 0) drop_object(scene, s, held_object);
    s.attached = 0;
  }
  if (s.attached == 0) {
    update_fingers(scene, s, g);
    s.aperture_meas =
        std::clamp((s.finger_right - s.finger_left) / g.max_gap, 0.0, 1.0);
    if (s.finger_right - s.finger_left <= kTouch) s.fingers_touched = true;
    if (s.left_contact != 0 && s.left_contact == s.right_contact) {
      s.attached = s.left_contact;
      s.attach_aperture = s.aperture_meas;
      const int obj = scene.object_index(s.attached);
      if (obj >= 0) {
        s.attach_offset = compose(inverse(s.ee_pose), s.object_poses[obj]);
      }
      if (!s.first_attach_step) s.first_attach_step = s.step_count;
    }
  }
  log_contacts(scene, s, g);

  if (scene.task == Task::kPick) {
    if (s.target >= 0) {
      const double lift =
          s.object_poses[s.target].translation().z() - s.initial_target_z;
      s.max_lift = std::max(s.max_lift, lift);
      s.reward = std::max(0.0, lift);
    }
  } else if (!s.q.empty()) {
    const double q = s.q[s.goal];
    s.reward = scene.task == Task::kOpen ? q : 1.0 - q;
  }
  s.max_reward = std::max(s.max_reward, s.reward);
  s.done = (cfg.terminate_on_success && is_success(scene, s, cfg)) ||
           s.step_count >= cfg.horizon;
  StepOutcome out;
  out.reward = s.reward;
  out.done = s.done;
  out.state = std::move(s);
  return out;
}

}  // namespace cap::egogym

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
#include <numbers>

#include "cap/egogym.hpp"
#include "cap/error.hpp"
#include "cap/random.hpp"

namespace cap::egogym {
namespace {

struct NamedColor {
  const char* name;
  Color color;
};

constexpr std::array<NamedColor, 10> kPalette{{
    {"red", {200, 40, 40}},
    {"green", {50, 170, 60}},
    {"blue", {40, 80, 210}},
    {"yellow", {225, 205, 40}},
    {"orange", {235, 130, 30}},
    {"purple", {140, 60, 180}},
    {"cyan", {40, 190, 200}},
    {"pink", {230, 120, 170}},
    {"white", {225, 225, 225}},
    {"brown", {120, 75, 40}},
}};

Color jitter(const Color& c, Rng& rng, int amount) {
  auto j = [&](uint8_t v) {
    const int delta = static_cast<int>(rng.index(2 * amount + 1)) - amount;
    return static_cast<uint8_t>(std::clamp(v + delta, 0, 255));
  };
  return {j(c.r), j(c.g), j(c.b)};
}

Quat yaw(double angle) {
  return Quat(Eigen::AngleAxisd(angle, Vec3::UnitZ()));
}

// Camera rotation looking along `forward` with world z up: x right, y down.
Quat look_rotation(const Vec3& forward) {
  const Vec3 f = forward.normalized();
  const Vec3 x = f.cross(Vec3::UnitZ()).normalized();
  const Vec3 y = f.cross(x);
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = f;
  return RigidTransform::from_matrix(r, Vec3::Zero()).rotation();
}

double footprint_radius(Primitive p, const Vec3& h) {
  switch (p) {
    case Primitive::kBox:
      return std::hypot(h.x(), h.y());
    case Primitive::kSphere:
    case Primitive::kCylinder:
      return h.x();
  }
  return 0.0;
}

double support_half_height(Primitive p, const Vec3& h) {
  switch (p) {
    case Primitive::kBox:
    case Primitive::kCylinder:
      return h.z();
    case Primitive::kSphere:
      return h.x();
  }
  return 0.0;
}

SceneObject sample_object(Rng& rng, Rng& tex, int index) {
  SceneObject o;
  o.id = kFirstObjectId + index;
  o.name = "obj" + std::to_string(index);
  o.primitive = static_cast<Primitive>(rng.index(3));
  switch (o.primitive) {
    case Primitive::kBox:
      o.half_extents = Vec3(rng.uniform(0.01, 0.04), rng.uniform(0.01, 0.04),
                            rng.uniform(0.01, 0.04));
      break;
    case Primitive::kSphere: {
      const double r = rng.uniform(0.01, 0.04);
      o.half_extents = Vec3(r, r, r);
      break;
    }
    case Primitive::kCylinder: {
      const double r = rng.uniform(0.01, 0.04);
      o.half_extents = Vec3(r, r, rng.uniform(0.01, 0.04));
      break;
    }
  }
  const auto& named = kPalette[rng.index(kPalette.size())];
  o.color = jitter(named.color, tex, 12);
  o.description = std::string(named.name) + " " + to_string(o.primitive);
  return o;
}

// Initial EE: nominal look-at pose plus jitter, resampled until `point`
// projects well inside the image.
void sample_initial_ee(SceneSpec& s, Rng& rng, const Vec3& eye,
                       const Vec3& look_at, const Vec3& must_see) {
  const Quat nominal_q = look_rotation(look_at - eye);
  s.nominal_ee = RigidTransform(nominal_q, eye);
  const CameraIntrinsics k = SimConfig{}.intrinsics;
  for (int attempt = 0;; ++attempt) {
    const Vec3 dt(rng.uniform(-0.08, 0.08), rng.uniform(-0.055, 0.055), 0.0);
    const Vec3 dr(rng.uniform(-0.08, 0.08), rng.uniform(-0.08, 0.08),
                  rng.uniform(-0.08, 0.08));
    const RigidTransform candidate(
        quaternion_multiply(nominal_q, rotation_exp(dr)), eye + dt);
    const Vec3 p = transform_point(inverse(candidate), must_see);
    if (p.z() > 0.05) {
      const Vec2 px = project(k, p);
      const double margin = 16.0;
      if (px.x() > margin && px.x() < k.width - 1 - margin &&
          px.y() > margin && px.y() < k.height - 1 - margin) {
        s.initial_ee = candidate;
        return;
      }
    }
    if (attempt > 1000) {
      s.initial_ee = s.nominal_ee;
      return;
    }
  }
}

void make_table(SceneSpec& s, Rng& rng, Rng& tex) {
  s.table.present = true;
  s.table.height = rng.uniform(0.70, 0.80);
  s.table.center = Vec2(0.0, 0.5);
  s.table.half_extent = Vec2(0.45, 0.35);
  s.table.color = jitter(Color{150, 112, 72}, tex, 15);
}

// Places objects on the table top inside the pick region. The target, when
// requested, gets a clear grasp corridor along world x.
bool layout_objects(SceneSpec& s, Rng& rng, Rng& tex, int count,
                    bool with_target, bool all_corridors) {
  const double x0 = -0.2, x1 = 0.2;
  const double y0 = s.table.center.y() - 0.15, y1 = s.table.center.y() + 0.15;
  s.objects.clear();
  std::vector<double> radius;
  for (int i = 0; i < count; ++i) {
    SceneObject o = sample_object(rng, tex, i);
    o.is_target = with_target && i == 0;
    const double r = footprint_radius(o.primitive, o.half_extents);
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      const double x = rng.uniform(x0 + r, x1 - r);
      const double y = rng.uniform(y0 + r, y1 - r);
      bool ok = true;
      for (size_t j = 0; j < s.objects.size() && ok; ++j) {
        const Vec3& c = s.objects[j].pose.translation();
        const double dx = std::abs(x - c.x()), dy = std::abs(y - c.y());
        if (std::hypot(dx, dy) < r + radius[j] + 0.01) ok = false;
        const bool guard = all_corridors || s.objects[j].is_target;
        if (guard && dx < 0.10 + r && dy < 0.035 + r) ok = false;
        if (all_corridors && dx < 0.10 + radius[j] && dy < 0.035 + radius[j])
          ok = false;
      }
      if (!ok) continue;
      const double angle = o.primitive == Primitive::kBox
                               ? rng.uniform(-std::numbers::pi, std::numbers::pi)
                               : 0.0;
      const double z =
          s.table.height + support_half_height(o.primitive, o.half_extents);
      o.pose = RigidTransform(yaw(angle), Vec3(x, y, z));
      placed = true;
    }
    if (!placed) return false;
    radius.push_back(r);
    s.objects.push_back(o);
  }
  return true;
}

void generate_pick(SceneSpec& s, Rng& rng, Rng& tex) {
  make_table(s, rng, tex);
  while (!layout_objects(s, rng, tex, 1 + s.distractor_count, true, false)) {
  }
  const double h = s.table.height;
  const Vec3 eye(0.0, s.table.center.y() - 0.42, h + 0.30);
  const Vec3 look(0.0, s.table.center.y(), h);
  sample_initial_ee(s, rng, eye, look, s.objects[0].pose.translation());
}

void generate_clear_table(SceneSpec& s, Rng& rng, Rng& tex) {
  make_table(s, rng, tex);
  const int count = std::max(1, s.distractor_count);
  while (!layout_objects(s, rng, tex, count, true, true)) {
  }
  s.drop_zone = DropZone{Vec2(0.62, 0.35), Vec2(0.12, 0.12), 0.0};
  const double h = s.table.height;
  const Vec3 eye(0.0, s.table.center.y() - 0.42, h + 0.30);
  const Vec3 look(0.0, s.table.center.y(), h);
  sample_initial_ee(s, rng, eye, look,
                    Vec3(0.0, s.table.center.y(), s.table.height));
}

Articulation base_cabinet(Rng& tex, int index, double w, double d,
                          double h, double zc) {
  Articulation a;
  a.frame = RigidTransform::from_translation(Vec3(0.0, 0.6, zc));
  a.carcass_half = Vec3(w / 2, d / 2, h / 2);
  a.carcass_color = jitter(Color{170, 160, 140}, tex, 15);
  a.panel_color = jitter(Color{110, 130, 160}, tex, 20);
  a.handle_color = jitter(Color{60, 60, 60}, tex, 10);
  a.carcass_id = kFirstFixtureId + 10 * index;
  a.panel_id = a.carcass_id + 1;
  a.handle_id = a.carcass_id + 2;
  a.name = "cabinet" + std::to_string(index);
  return a;
}

Articulation sample_door(Rng& rng, Rng& tex, double w, double d, double h,
                         double zc) {
  Articulation a = base_cabinet(tex, 0, w, d, h, zc);
  a.kind = ArticulationKind::kRevoluteDoor;
  a.hinge = rng.bernoulli(0.5) ? HingeSide::kLeft : HingeSide::kRight;
  a.travel = rng.uniform(1.2, 1.6);
  a.panel_half = Vec3(w / 2 - 0.003, 0.01, h / 2 - 0.003);
  a.handle_half = Vec3(0.01, 0.01, rng.uniform(0.04, 0.07));
  a.handle_z = rng.uniform(-0.3, 0.3) * (h / 2 - a.handle_half.z() - 0.02);
  a.handle_inset = 0.05;
  a.handle_standoff = 0.03;
  a.name = "door";
  return a;
}

Articulation sample_drawer(Rng& rng, Rng& tex, int index, double w, double d,
                           double h, double zc, double drawer_h,
                           double center_z) {
  Articulation a = base_cabinet(tex, index, w, d, h, zc);
  a.kind = ArticulationKind::kPrismaticDrawer;
  a.hinge = HingeSide::kLeft;
  const double depth = d - 0.03;
  a.panel_half = Vec3(w / 2 - 0.01, depth / 2, drawer_h / 2);
  a.panel_center_z = center_z;
  a.travel = std::min(rng.uniform(0.15, 0.30), depth - 0.02);
  a.proud = 0.01;
  a.handle_half = Vec3(0.01, 0.01, 0.03);
  a.handle_z = center_z;
  a.handle_standoff = 0.03;
  a.name = "drawer" + std::to_string(index);
  return a;
}

void front_camera(SceneSpec& s, Rng& rng, const Articulation& a, double back,
                  double up) {
  const Vec3 front = a.frame.translation();
  const Vec3 eye = front + Vec3(0.0, -back, up);
  sample_initial_ee(s, rng, eye, front,
                    transform_point(handle_pose(a, a.q0), Vec3::Zero()));
}

void generate_articulated(SceneSpec& s, Rng& rng, Rng& tex) {
  const double w = rng.uniform(0.35, 0.55);
  const double d = rng.uniform(0.30, 0.45);
  const double h = rng.uniform(0.35, 0.60);
  const double zc = rng.uniform(0.45, 0.65) + h / 2;
  Articulation a;
  if (rng.bernoulli(0.5)) {
    a = sample_door(rng, tex, w, d, h, zc);
    a.q0 = s.task == Task::kClose ? rng.uniform(0.25, 0.5) : 0.0;
  } else {
    const double drawer_h = rng.uniform(0.12, 0.20);
    a = sample_drawer(rng, tex, 0, w, d, h, zc, drawer_h,
                      h / 2 - 0.01 - drawer_h / 2);
    a.q0 = s.task == Task::kClose ? rng.uniform(0.3, 0.9) : 0.0;
  }
  s.articulations.push_back(a);
  s.goal = 0;
  front_camera(s, rng, a, 0.55, 0.12);
}

void generate_two_goal(SceneSpec& s, Rng& rng, Rng& tex) {
  const double w = rng.uniform(0.35, 0.50);
  const double d = rng.uniform(0.30, 0.45);
  const double h = rng.uniform(0.40, 0.55);
  const double zc = rng.uniform(0.45, 0.60) + h / 2;
  const double drawer_h = h / 2 - 0.03;
  for (int i = 0; i < 2; ++i) {
    const double center_z = i == 0 ? h / 4 : -h / 4;
    Articulation a =
        sample_drawer(rng, tex, i, w, d, h, zc, drawer_h, center_z);
    a.travel = rng.uniform(0.15, 0.25);
    a.q0 = rng.uniform(0.4, 0.9);
    a.draw_carcass = i == 0;
    if (i == 1) {
      a.panel_color = s.articulations[0].panel_color;
      a.handle_color = s.articulations[0].handle_color;
    }
    s.articulations.push_back(a);
  }
  s.goal = static_cast<int>(rng.index(2));
  const Vec3 front = s.articulations[0].frame.translation();
  sample_initial_ee(s, rng, front + Vec3(0.0, -0.6, 0.0), front,
                    front + Vec3(0.0, -0.1, 0.0));
}

void generate_compose(SceneSpec& s, Rng& rng, Rng& tex) {
  const double w = 0.45, d = 0.40, h = 0.40;
  const double zc = 0.5 + h / 2;
  Articulation a = sample_door(rng, tex, w, d, h, zc);
  a.hollow = true;
  a.travel = std::numbers::pi / 2;
  a.q0 = 0.0;
  a.handle_z = 0.0;
  s.articulations.push_back(a);
  s.goal = 0;
  s.solid_fixtures = true;

  SceneObject o = sample_object(rng, tex, 0);
  o.primitive = rng.bernoulli(0.5) ? Primitive::kBox : Primitive::kCylinder;
  o.half_extents = Vec3(rng.uniform(0.02, 0.03), rng.uniform(0.02, 0.03),
                        rng.uniform(0.025, 0.04));
  if (o.primitive == Primitive::kCylinder) o.half_extents.y() = o.half_extents.x();
  o.description = std::string("cup ") + to_string(o.primitive);
  o.is_target = true;
  const double floor_top = zc - h / 2 + 0.02;
  o.pose = RigidTransform::from_translation(
      Vec3(0.0, 0.6 + 0.16, floor_top + o.half_extents.z()));
  s.objects.push_back(o);
  s.drop_zone = DropZone{Vec2(0.45, 0.25), Vec2(0.12, 0.12), 0.0};
  const Vec3 front = a.frame.translation();
  sample_initial_ee(s, rng, front + Vec3(0.0, -0.5, 0.08),
                    front + Vec3(0.0, 0.1, -0.06),
                    transform_point(handle_pose(a, 0.0), Vec3::Zero()));
}

RigidTransform door_local_left(const Articulation& a, double q) {
  // Hinge on the left edge of the closed panel's center plane.
  const double phi = -q * a.travel;
  const Quat r = yaw(phi);
  const Vec3 hinge(-a.carcass_half.x(), -a.panel_half.y(), 0.0);
  const Vec3 center = hinge + quaternion_to_matrix(r) *
                                  Vec3(a.panel_half.x(), 0.0, 0.0);
  return RigidTransform::from_unit_quaternion(r, center);
}

RigidTransform handle_local_left(const Articulation& a, double q) {
  const double phi = -q * a.travel;
  const Quat r = yaw(phi);
  const Vec3 hinge(-a.carcass_half.x(), -a.panel_half.y(), 0.0);
  const Vec3 offset(2 * a.panel_half.x() - a.handle_inset,
                    -(a.panel_half.y() + a.handle_standoff), a.handle_z);
  return RigidTransform::from_unit_quaternion(
      r, hinge + quaternion_to_matrix(r) * offset);
}

RigidTransform drawer_local(const Articulation& a, double q) {
  const double y = a.panel_half.y() - a.proud - q * a.travel;
  return RigidTransform::from_translation(Vec3(0.0, y, a.panel_center_z));
}

RigidTransform drawer_handle_local(const Articulation& a, double q) {
  const double y = -a.proud - q * a.travel - a.handle_standoff;
  return RigidTransform::from_translation(Vec3(0.0, y, a.handle_z));
}

Solid make_solid(Primitive p, const Vec3& half, const RigidTransform& pose,
                 const Color& c, int id) {
  return Solid{p, half, pose, c, id};
}

void add_carcass(std::vector<Solid>& out, const Articulation& a) {
  const Vec3& hh = a.carcass_half;
  auto put = [&](const Vec3& center, const Vec3& half) {
    out.push_back(make_solid(
        Primitive::kBox, half,
        compose(a.frame, RigidTransform::from_translation(center)),
        a.carcass_color, a.carcass_id));
  };
  if (!a.hollow) {
    put(Vec3(0.0, hh.y(), 0.0), hh);
    return;
  }
  const double t = 0.01;
  put(Vec3(0.0, 2 * hh.y() - t, 0.0), Vec3(hh.x(), t, hh.z()));        // back
  put(Vec3(-hh.x() + t, hh.y(), 0.0), Vec3(t, hh.y(), hh.z()));        // left
  put(Vec3(hh.x() - t, hh.y(), 0.0), Vec3(t, hh.y(), hh.z()));         // right
  put(Vec3(0.0, hh.y(), hh.z() - t), Vec3(hh.x(), hh.y(), t));         // top
  put(Vec3(0.0, hh.y(), -hh.z() + t), Vec3(hh.x(), hh.y(), t));        // floor
}

}  // namespace

std::string to_string(Primitive p) {
  switch (p) {
    case Primitive::kBox:
      return "box";
    case Primitive::kSphere:
      return "sphere";
    case Primitive::kCylinder:
      return "cylinder";
  }
  return "box";
}

int SceneSpec::target_index() const {
  for (size_t i = 0; i < objects.size(); ++i) {
    if (objects[i].is_target) return static_cast<int>(i);
  }
  return -1;
}

int SceneSpec::object_index(int body_id) const {
  for (size_t i = 0; i < objects.size(); ++i) {
    if (objects[i].id == body_id) return static_cast<int>(i);
  }
  return -1;
}

int SceneSpec::articulation_of_handle(int body_id) const {
  for (size_t i = 0; i < articulations.size(); ++i) {
    if (articulations[i].handle_id == body_id) return static_cast<int>(i);
  }
  return -1;
}

SceneSpec generate_scene(Task task, uint64_t seed, int distractor_count,
                         SceneVariant variant) {
  if (distractor_count < 0 || distractor_count > 5) {
    throw Error(ErrorCode::kInvalidArgument,
                "distractor_count must be in [0, 5]");
  }
  SceneSpec s;
  s.task = task;
  s.seed = seed;
  s.distractor_count = distractor_count;
  // The layout stream depends on the distractor count only through the
  // objects drawn after the target, so the target's geometry is shared
  // across counts when the layout succeeds first time.
  Rng rng(mix_seed(seed, static_cast<uint64_t>(variant) * 16 +
                             static_cast<uint64_t>(task)));
  s.texture_seed = mix_seed(seed, 0x7e47u);
  Rng tex(s.texture_seed);
  switch (variant) {
    case SceneVariant::kStandard:
      if (task == Task::kPick) {
        generate_pick(s, rng, tex);
      } else {
        if (distractor_count != 0) {
          throw Error(ErrorCode::kInvalidArgument,
                      "distractors are only supported for Pick scenes");
        }
        generate_articulated(s, rng, tex);
      }
      break;
    case SceneVariant::kTwoGoal:
      s.task = Task::kClose;
      generate_two_goal(s, rng, tex);
      break;
    case SceneVariant::kComposeCabinet:
      s.task = Task::kPick;
      generate_compose(s, rng, tex);
      break;
    case SceneVariant::kClearTable:
      s.task = Task::kPick;
      generate_clear_table(s, rng, tex);
      break;
  }
  return s;
}

SceneSpec mirror_scene(const SceneSpec& scene) {
  SceneSpec m = scene;
  m.mirrored = !scene.mirrored;
  m.table.center.x() = -scene.table.center.x();
  for (auto& o : m.objects) o.pose = mirror_transform(o.pose);
  for (auto& a : m.articulations) {
    a.frame = mirror_transform(a.frame);
    a.hinge = a.hinge == HingeSide::kLeft ? HingeSide::kRight : HingeSide::kLeft;
  }
  if (m.drop_zone) m.drop_zone->center.x() = -scene.drop_zone->center.x();
  m.initial_ee = mirror_transform(scene.initial_ee);
  m.nominal_ee = mirror_transform(scene.nominal_ee);
  return m;
}

SimState mirror_state(const SimState& s) {
  SimState m = s;
  m.ee_pose = mirror_transform(s.ee_pose);
  m.finger_left = -s.finger_right;
  m.finger_right = -s.finger_left;
  m.left_contact = s.right_contact;
  m.right_contact = s.left_contact;
  m.attach_offset = mirror_transform(s.attach_offset);
  for (auto& p : m.object_poses) p = mirror_transform(p);
  return m;
}

SimState initial_state(const SceneSpec& scene, const SimConfig& cfg) {
  SimState s;
  s.ee_pose = scene.initial_ee;
  s.aperture_cmd = 1.0;
  s.aperture_meas = 1.0;
  s.finger_right = cfg.gripper.max_gap / 2;
  s.finger_left = -s.finger_right;
  for (const auto& o : scene.objects) s.object_poses.push_back(o.pose);
  for (const auto& a : scene.articulations) s.q.push_back(a.q0);
  s.goal = scene.goal;
  set_target(s, scene.target_index());
  if (!scene.articulations.empty() && scene.task != Task::kPick) {
    const double q = s.q[s.goal];
    s.reward = scene.task == Task::kOpen ? q : 1.0 - q;
    s.max_reward = s.reward;
  }
  return s;
}

void set_target(SimState& s, int object_index) {
  s.target = object_index;
  s.max_lift = 0.0;
  if (object_index >= 0 &&
      object_index < static_cast<int>(s.object_poses.size())) {
    s.initial_target_z = s.object_poses[object_index].translation().z();
  } else {
    s.initial_target_z = 0.0;
  }
}

void set_goal(SimState& s, int articulation_index) {
  s.goal = articulation_index;
}

RigidTransform panel_pose(const Articulation& a, double q) {
  RigidTransform local;
  if (a.kind == ArticulationKind::kPrismaticDrawer) {
    local = drawer_local(a, q);
  } else {
    local = door_local_left(a, q);
    if (a.hinge == HingeSide::kRight) local = mirror_transform(local);
  }
  return compose(a.frame, local);
}

RigidTransform handle_pose(const Articulation& a, double q) {
  RigidTransform local;
  if (a.kind == ArticulationKind::kPrismaticDrawer) {
    local = drawer_handle_local(a, q);
  } else {
    local = handle_local_left(a, q);
    if (a.hinge == HingeSide::kRight) local = mirror_transform(local);
  }
  return compose(a.frame, local);
}

std::vector<Solid> scene_solids(const SceneSpec& scene, const SimState& state,
                                const GripperModel& g) {
  std::vector<Solid> out;
  if (scene.table.present) {
    const double h = scene.table.height;
    out.push_back(make_solid(
        Primitive::kBox,
        Vec3(scene.table.half_extent.x(), scene.table.half_extent.y(), h / 2),
        RigidTransform::from_translation(Vec3(
            scene.table.center.x(), scene.table.center.y(), h / 2)),
        scene.table.color, kTableId));
  }
  if (scene.drop_zone) {
    const auto& z = *scene.drop_zone;
    out.push_back(make_solid(
        Primitive::kBox, Vec3(z.half_extent.x(), z.half_extent.y(), 0.005),
        RigidTransform::from_translation(
            Vec3(z.center.x(), z.center.y(), z.z - 0.005)),
        Color{70, 90, 70}, kDropZoneId));
  }
  for (size_t i = 0; i < scene.objects.size(); ++i) {
    const auto& o = scene.objects[i];
    out.push_back(make_solid(o.primitive, o.half_extents, state.object_poses[i],
                             o.color, o.id));
  }
  for (size_t i = 0; i < scene.articulations.size(); ++i) {
    const auto& a = scene.articulations[i];
    const double q = state.q[i];
    if (a.draw_carcass) add_carcass(out, a);
    out.push_back(make_solid(Primitive::kBox, a.panel_half, panel_pose(a, q),
                             a.panel_color, a.panel_id));
    out.push_back(make_solid(Primitive::kBox, a.handle_half, handle_pose(a, q),
                             a.handle_color, a.handle_id));
  }
  // Fingers: boxes outside the inner pad faces, from the root to just past
  // the tip. Both share one body id and color so the pair is mirror
  // symmetric.
  const double t = g.finger_thickness;
  const double z0 = g.finger_back;
  const double z1 = g.tip_offset.z() + g.pad_half_depth;
  const Vec3 half(t / 2, g.pad_half_height, (z1 - z0) / 2);
  const double zc = (z0 + z1) / 2;
  const Color finger_color{90, 92, 98};
  out.push_back(make_solid(
      Primitive::kBox, half,
      compose(state.ee_pose,
              RigidTransform::from_translation(Vec3(
                  state.finger_left - t / 2, g.tip_offset.y(), zc))),
      finger_color, kGripperId));
  out.push_back(make_solid(
      Primitive::kBox, half,
      compose(state.ee_pose,
              RigidTransform::from_translation(Vec3(
                  state.finger_right + t / 2, g.tip_offset.y(), zc))),
      finger_color, kGripperId));
  return out;
}

}  // namespace cap::egogym

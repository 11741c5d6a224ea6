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

namespace cap::egogym {
namespace {

Vec3 clamp_norm(const Vec3& v, double max_norm) {
  const double n = v.norm();
  if (n > max_norm && n > 0.0) return v * (max_norm / n);
  return v;
}

int held_articulation(const SceneSpec& scene, const SimState& s) {
  return scene.articulation_of_handle(s.attached);
}

}  // namespace

GraspGoal grasp_goal(const SceneSpec& scene, const SimState& state) {
  GraspGoal g;
  if (scene.task == Task::kPick) {
    if (state.target >= 0) {
      g.point = state.object_poses[state.target].translation();
    }
    g.orientation = scene.nominal_ee.rotation();
    return g;
  }
  const Articulation& a = scene.articulations[state.goal];
  const RigidTransform h = handle_pose(a, state.q[state.goal]);
  g.point = h.translation();
  // Face the handle the way the nominal camera faces the closed front.
  const Quat front = quaternion_multiply(a.frame.rotation().conjugate(),
                                         scene.nominal_ee.rotation());
  g.orientation = quaternion_multiply(h.rotation(), front).normalized();
  return g;
}

Action oracle_policy(const SceneSpec& scene, const SimState& state,
                     const RigidTransform& privileged,
                     const OracleConfig& cfg, const GripperModel& g) {
  Action a;
  const Mat3 r = quaternion_to_matrix(state.ee_pose.rotation());
  const double closing = std::max(0.0, state.aperture_cmd - cfg.close_rate);

  if (state.attached != 0) {
    a.aperture_cmd = closing;
    const int art = held_articulation(scene, state);
    if (art < 0) {
      const double lift =
          state.target >= 0
              ? state.object_poses[state.target].translation().z() -
                    state.initial_target_z
              : 0.0;
      if (lift < cfg.lift_height) {
        a.delta_translation = r.transpose() * Vec3(0.0, 0.0, cfg.lift_step);
      }
      return a;
    }
    const double q = state.q[art];
    const bool opening = scene.task == Task::kOpen;
    if ((opening && q >= cfg.open_goal) || (!opening && q <= cfg.close_goal)) {
      return a;
    }
    const Vec3 tangent =
        joint_tangent(scene.articulations[art], tip_position(state, g));
    const Vec3 dir = (opening ? 1.0 : -1.0) * tangent.normalized();
    a.delta_translation = r.transpose() * (cfg.pull_step * dir);
    return a;
  }

  const GraspGoal goal = grasp_goal(scene, state);
  const Vec3 target = privileged.translation();
  const Vec3 tip = tip_position(state, g);
  const double dist = (target - tip).norm();
  const double rot_err =
      rotation_distance(state.ee_pose.rotation(), goal.orientation);
  if (dist <= cfg.close_radius && rot_err <= 0.02) {
    a.aperture_cmd = closing;
    return a;
  }
  a.aperture_cmd = 1.0;
  const Quat rel = quaternion_multiply(state.ee_pose.rotation().conjugate(),
                                       goal.orientation);
  a.delta_rotation = clamp_norm(rotation_log(rel), cfg.rotation_step);
  const Vec3 step = clamp_norm(target - tip, cfg.approach_step);
  // Compensate the rotation so the tip moves along the straight line.
  const Mat3 dr = quaternion_to_matrix(rotation_exp(a.delta_rotation));
  a.delta_translation =
      g.tip_offset + r.transpose() * step - dr * g.tip_offset;
  return a;
}

bool oracle_finished(const SceneSpec& scene, const SimState& state,
                     const OracleConfig& cfg) {
  if (scene.task == Task::kPick) {
    if (state.attached == 0 || state.target < 0) return false;
    return state.object_poses[state.target].translation().z() -
               state.initial_target_z >=
           cfg.lift_height - 1e-9;
  }
  const double q = state.q[state.goal];
  return scene.task == Task::kOpen ? q >= cfg.open_goal : q <= cfg.close_goal;
}

}  // namespace cap::egogym

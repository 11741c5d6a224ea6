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

#include <cstdio>

#include "cap/egogym.hpp"
#include "cap/error.hpp"

namespace cap::egogym {

Environment::Environment(SceneSpec scene, EnvOptions options)
    : scene_(std::move(scene)), options_(std::move(options)) {
  state_ = initial_state(scene_, options_.sim);
}

Observation Environment::reset() {
  state_ = initial_state(scene_, options_.sim);
  return observe();
}

StepOutcome Environment::step(const Action& action) {
  Action a = action;
  if (options_.action_mode == ActionMode::kAbsolute) {
    const RigidTransform target(rotation_exp(action.delta_rotation),
                                action.delta_translation);
    const RigidTransform rel = relative(state_.ee_pose, target);
    a.delta_translation = rel.translation();
    a.delta_rotation = rotation_log(rel.rotation());
  }
  StepOutcome out = egogym::step(scene_, state_, a, options_.sim);
  state_ = out.state;
  return out;
}

Observation Environment::observe() const {
  return render(scene_, state_, options_.sim);
}

std::unique_ptr<Environment> make_env(std::string_view name,
                                      const EnvOptions& options) {
  Task task;
  if (name == "EgoGym-Pick-v0") {
    task = Task::kPick;
  } else if (name == "EgoGym-Open-v0") {
    task = Task::kOpen;
  } else if (name == "EgoGym-Close-v0") {
    task = Task::kClose;
  } else {
    throw Error(ErrorCode::kUnknownEnvironment,
                "unknown environment '" + std::string(name) + "'");
  }
  SceneSpec scene = generate_scene(task, options.seed, options.distractor_count,
                                   options.variant);
  return std::make_unique<Environment>(std::move(scene), options);
}

CollectedEpisode collect_oracle_episode(Task task, uint64_t seed,
                                        const CollectOptions& options) {
  CollectedEpisode out;
  out.scene =
      generate_scene(task, seed, options.distractor_count, options.variant);
  SimConfig cfg;
  cfg.horizon = options.horizon;
  cfg.terminate_on_success = options.terminate_on_success;
  SimState s = initial_state(out.scene, cfg);
  out.grasp_point_world = grasp_goal(out.scene, s).point;

  Episode& e = out.episode;
  char id[64];
  std::snprintf(id, sizeof(id), "%s-%016llx", to_string(out.scene.task).c_str(),
                static_cast<unsigned long long>(seed));
  e.id = id;
  e.task = out.scene.task;
  e.seed = seed;
  e.intrinsics = cfg.intrinsics;
  e.metadata["source"] = "oracle";
  e.metadata["distractor_count"] = std::to_string(options.distractor_count);
  e.metadata["variant"] = std::to_string(static_cast<int>(options.variant));
  e.metadata["goal"] = std::to_string(out.scene.goal);
  e.metadata["mirrored"] = "false";

  OracleConfig ocfg;
  for (;;) {
    Frame f;
    f.index = s.step_count;
    f.pose = s.ee_pose;
    f.aperture_cmd = s.aperture_cmd;
    f.aperture_meas = s.aperture_meas;
    f.rgb_ref = frame_rgb_ref(f.index);
    f.depth_ref = frame_depth_ref(f.index);
    if (options.render_images) {
      Observation obs = render(out.scene, s, cfg);
      f.rgb = std::move(obs.rgb);
      f.depth = depth_to_millimeters(obs.depth);
    }
    e.frames.push_back(std::move(f));
    if (s.done || oracle_finished(out.scene, s, ocfg)) break;
    const RigidTransform privileged =
        out.scene.task == Task::kPick
            ? s.object_poses[s.target]
            : handle_pose(out.scene.articulations[s.goal], s.q[s.goal]);
    const Action act =
        oracle_policy(out.scene, s, privileged, ocfg, cfg.gripper);
    s = step(out.scene, s, act, cfg).state;
  }
  out.attach_step = s.first_attach_step;
  if (s.first_attach_step &&
      *s.first_attach_step < static_cast<int>(e.frames.size())) {
    e.contact_frame = *s.first_attach_step;
  }
  out.success = is_success(out.scene, s, cfg);
  e.metadata["success"] = out.success ? "true" : "false";
  out.final_state = std::move(s);
  return out;
}

}  // namespace cap::egogym

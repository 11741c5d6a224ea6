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
#include <cctype>
#include <cmath>

#include "cap/control.hpp"
#include "cap/error.hpp"

namespace cap::control {
namespace {

using egogym::Action;
using egogym::SimState;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

bool matches(const std::string& query, const std::string& name,
             const std::string& description) {
  const std::string q = lower(query);
  return q == lower(name) || q == lower(description) ||
         lower(description).find(q) != std::string::npos;
}

int find_object(const World& w, const std::string& query) {
  if (query.empty()) {
    if (w.state.target < 0) {
      throw Error(ErrorCode::kUnknownTarget, "no default pick target");
    }
    return w.state.target;
  }
  for (size_t i = 0; i < w.scene.objects.size(); ++i) {
    const auto& o = w.scene.objects[i];
    if (matches(query, o.name, o.description)) return static_cast<int>(i);
  }
  throw Error(ErrorCode::kUnknownTarget, "no object matches '" + query + "'");
}

int find_articulation(const World& w, const std::string& query) {
  if (w.scene.articulations.empty()) {
    throw Error(ErrorCode::kUnknownTarget, "scene has no articulations");
  }
  if (query.empty()) return 0;
  for (size_t i = 0; i < w.scene.articulations.size(); ++i) {
    const auto& a = w.scene.articulations[i];
    if (matches(query, a.name, a.name)) return static_cast<int>(i);
  }
  throw Error(ErrorCode::kUnknownTarget,
              "no articulation matches '" + query + "'");
}

// Releases whatever is held, returns the rig to its initial pose with open
// fingers, and clears the per-stage bookkeeping.
void begin_stage(World& w, Task task) {
  if (w.state.attached != 0) {
    w.state.done = false;
    w.state = egogym::step(w.scene, w.state, Action{}, w.sim).state;
  }
  SimState& s = w.state;
  const auto& g = w.sim.gripper;
  w.scene.task = task;
  s.ee_pose = w.scene.initial_ee;
  s.aperture_cmd = 1.0;
  s.aperture_meas = 1.0;
  s.finger_left = -g.max_gap / 2;
  s.finger_right = g.max_gap / 2;
  s.left_contact = s.right_contact = 0;
  s.attached = 0;
  s.first_attach_step.reset();
  s.contact_log.clear();
  s.fingers_touched = false;
  s.step_count = 0;
  s.done = false;
  s.reward = s.max_reward = 0.0;
  s.max_lift = 0.0;
}

AttemptTrace finish(const World& w) {
  AttemptTrace t;
  t.task = w.scene.task;
  t.seed = w.scene.seed;
  t.success = egogym::is_success(w.scene, w.state, w.sim);
  t.max_reward = w.state.max_reward;
  t.steps = w.state.step_count;
  t.trace = egogym::make_trace(w.scene, w.state);
  return t;
}

RigidTransform privileged(const World& w) {
  if (w.scene.task == Task::kPick) return w.state.object_poses[w.state.target];
  return egogym::handle_pose(w.scene.articulations[w.state.goal],
                             w.state.q[w.state.goal]);
}

void run_oracle(World& w, int horizon, const std::function<bool()>& stop) {
  const egogym::OracleConfig ocfg;
  while (!w.state.done && w.state.step_count < horizon &&
         !egogym::oracle_finished(w.scene, w.state, ocfg) && !stop()) {
    const Action a = egogym::oracle_policy(w.scene, w.state, privileged(w),
                                           ocfg, w.sim.gripper);
    w.state = egogym::step(w.scene, w.state, a, w.sim).state;
  }
}

AttemptTrace pick_tool(World& w, const PlanStage& stage, int horizon) {
  const int idx = find_object(w, stage.query);
  begin_stage(w, Task::kPick);
  egogym::set_target(w.state, idx);
  run_oracle(w, horizon, [] { return false; });
  return finish(w);
}

// Steps the oracle's approach toward `point` and stops, without closing,
// once it would start closing there.
bool approach_point(World& w, const Vec3& point, int horizon) {
  const egogym::OracleConfig ocfg;
  const RigidTransform target = RigidTransform::from_translation(point);
  while (!w.state.done && w.state.step_count < horizon) {
    const Action a = egogym::oracle_policy(w.scene, w.state, target, ocfg,
                                           w.sim.gripper);
    if (a.aperture_cmd < w.state.aperture_cmd) return true;
    w.state = egogym::step(w.scene, w.state, a, w.sim).state;
  }
  return false;
}

// The handle of a swung-open door faces away from the rig, behind the
// panel. Go around the free edge: back off, out past the handle, then in
// along its outward normal.
void detour_to_handle(World& w, int idx, int horizon) {
  const auto& a = w.scene.articulations[idx];
  const RigidTransform h = egogym::handle_pose(a, w.state.q[idx]);
  const Vec3 normal = h.rotation_matrix() * Vec3(0.0, -1.0, 0.0);
  const Vec3 pre = h.translation() + 0.15 * normal;
  const Vec3 tip = egogym::tip_position(w.state, w.sim.gripper);
  const double back = std::min(tip.y(), pre.y() - 0.15);
  if (!approach_point(w, Vec3(tip.x(), back, tip.z()), horizon)) return;
  if (!approach_point(w, Vec3(pre.x(), back, pre.z()), horizon)) return;
  approach_point(w, pre, horizon);
}

AttemptTrace articulation_tool(World& w, const PlanStage& stage, Task task,
                               int horizon, double open_limit) {
  const int idx = find_articulation(w, stage.query);
  begin_stage(w, task);
  egogym::set_goal(w.state, idx);
  const auto& art = w.scene.articulations[idx];
  if (task == Task::kClose && w.scene.solid_fixtures &&
      art.kind == egogym::ArticulationKind::kRevoluteDoor &&
      w.state.q[idx] > 0.5) {
    detour_to_handle(w, idx, horizon);
  }
  run_oracle(w, horizon, [&] {
    return task == Task::kOpen && w.state.q[idx] >= open_limit;
  });
  return finish(w);
}

bool in_drop_zone(const World& w, int obj) {
  if (!w.scene.drop_zone) return false;
  const auto& z = *w.scene.drop_zone;
  const Vec3 c = w.state.object_poses[obj].translation();
  return std::abs(c.x() - z.center.x()) <= z.half_extent.x() &&
         std::abs(c.y() - z.center.y()) <= z.half_extent.y();
}

// Carries the held object back in front of the rig's start pose, across to
// the drop zone's x, forward to its y, and releases it there.
AttemptTrace drop_tool(World& w, int horizon) {
  AttemptTrace t;
  t.task = Task::kPick;
  t.seed = w.scene.seed;
  const int obj = w.scene.object_index(w.state.attached);
  if (obj < 0 || !w.scene.drop_zone) return t;
  const Vec2 goal = w.scene.drop_zone->center;
  w.state.done = false;
  w.state.step_count = 0;
  const double cmd = w.state.aperture_cmd;
  auto move_toward = [&](const Vec3& target) {
    while (w.state.step_count < horizon) {
      const Vec3 c = w.state.object_poses[obj].translation();
      Vec3 d = target - c;
      if (d.norm() < 1e-4) return;
      if (d.norm() > w.sim.max_translation) {
        d *= w.sim.max_translation / d.norm();
      }
      Action a;
      a.aperture_cmd = cmd;
      a.delta_translation = w.state.ee_pose.rotation_matrix().transpose() * d;
      const Vec3 before = w.state.ee_pose.translation();
      w.state = egogym::step(w.scene, w.state, a, w.sim).state;
      if ((w.state.ee_pose.translation() - before).norm() < 1e-9) return;
    }
  };
  const Vec3 start = w.state.object_poses[obj].translation();
  const double clear_y =
      std::min(goal.y(), w.scene.initial_ee.translation().y() - 0.1);
  move_toward(Vec3(start.x(), clear_y, start.z()));
  move_toward(Vec3(goal.x(), clear_y, start.z()));
  move_toward(Vec3(goal.x(), goal.y(), start.z()));
  Action release;
  w.state = egogym::step(w.scene, w.state, release, w.sim).state;
  t.steps = w.state.step_count;
  t.success = w.state.attached == 0 && in_drop_zone(w, obj);
  t.max_reward = t.success ? 1.0 : 0.0;
  return t;
}

}  // namespace

std::string to_string(Tool tool) {
  switch (tool) {
    case Tool::kOpen: return "open";
    case Tool::kPick: return "pick";
    case Tool::kDrop: return "drop";
    case Tool::kClose: return "close";
    case Tool::kMoveBase: return "move_base";
  }
  return "pick";
}

Tool tool_from_string(const std::string& name) {
  const std::string n = lower(name);
  if (n == "open") return Tool::kOpen;
  if (n == "pick") return Tool::kPick;
  if (n == "drop") return Tool::kDrop;
  if (n == "close") return Tool::kClose;
  if (n == "move_base" || n == "movebase") return Tool::kMoveBase;
  throw Error(ErrorCode::kUnknownTool, "unknown tool " + name);
}

std::string to_string(StageStatus s) {
  switch (s) {
    case StageStatus::kSuccess: return "success";
    case StageStatus::kAborted: return "aborted";
    case StageStatus::kNotAttempted: return "not_attempted";
  }
  return "not_attempted";
}

void ToolPlan::validate() const {
  if (stages.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "plan has no stages");
  }
  for (const PlanStage& s : stages) {
    if (s.max_retries < 0 || s.max_retries > 10) {
      throw Error(ErrorCode::kInvalidArgument,
                  "stage retries must lie in [0, 10]");
    }
    s.verifier.validate();
  }
}

ToolPlan plan_from_json(const nlohmann::json& j) {
  ToolPlan plan;
  try {
    for (const auto& s : j.at("stages")) {
      PlanStage st;
      st.tool = tool_from_string(s.at("tool").get<std::string>());
      st.query = s.value("query", std::string());
      st.max_retries = s.value("max_retries", 10);
      if (s.contains("verifier")) {
        const auto& v = s.at("verifier");
        const std::string kind = v.value("kind", std::string("ground_truth"));
        if (kind == "noisy") {
          st.verifier.kind = VerifierKind::kNoisy;
        } else if (kind != "ground_truth") {
          throw Error(ErrorCode::kInvalidArgument, "unknown verifier " + kind);
        }
        st.verifier.false_positive = v.value("fp", 0.0);
        st.verifier.false_negative = v.value("fn", 0.0);
      }
      plan.stages.push_back(std::move(st));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("bad plan: ") + e.what());
  }
  plan.validate();
  return plan;
}

World World::from_scene(egogym::SceneSpec scene) {
  World w;
  w.scene = std::move(scene);
  w.sim.terminate_on_success = false;
  w.state = egogym::initial_state(w.scene, w.sim);
  return w;
}

void ToolRegistry::add(Tool tool, ToolFn fn) { tools_[tool] = std::move(fn); }

bool ToolRegistry::has(Tool tool) const { return tools_.count(tool) > 0; }

const ToolFn& ToolRegistry::get(Tool tool) const {
  const auto it = tools_.find(tool);
  if (it == tools_.end()) {
    throw Error(ErrorCode::kUnknownTool, "no tool registered for " + to_string(tool));
  }
  return it->second;
}

ToolRegistry sim_tools(const SimToolOptions& options) {
  ToolRegistry r;
  const int horizon = options.horizon;
  const double limit = options.open_limit;
  r.add(Tool::kPick, [horizon](World& w, const PlanStage& s, int) {
    return pick_tool(w, s, horizon);
  });
  r.add(Tool::kOpen, [horizon, limit](World& w, const PlanStage& s, int) {
    return articulation_tool(w, s, Task::kOpen, horizon, limit);
  });
  r.add(Tool::kClose, [horizon](World& w, const PlanStage& s, int) {
    return articulation_tool(w, s, Task::kClose, horizon, 1.0);
  });
  r.add(Tool::kDrop, [horizon](World& w, const PlanStage&, int) {
    return drop_tool(w, horizon);
  });
  r.add(Tool::kMoveBase, [](World& w, const PlanStage&, int) {
    AttemptTrace t;
    t.seed = w.scene.seed;
    t.success = true;
    t.max_reward = 1.0;
    return t;
  });
  return r;
}

int ComposeReport::verified_stages() const {
  return static_cast<int>(std::count_if(
      stages.begin(), stages.end(),
      [](const StageRecord& s) { return s.status == StageStatus::kSuccess; }));
}

nlohmann::json ComposeReport::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (const StageRecord& s : stages) {
    j.push_back({{"tool", to_string(s.tool)},
                 {"query", s.query},
                 {"status", to_string(s.status)},
                 {"verified", s.verified},
                 {"ground_truth", s.ground_truth},
                 {"attempts", s.attempts}});
  }
  return {{"stages", j}, {"verified_stages", verified_stages()}};
}

ComposeReport compose_tools(const ToolPlan& plan, World& world,
                            const ToolRegistry& tools, uint64_t seed) {
  plan.validate();
  for (const PlanStage& s : plan.stages) tools.get(s.tool);
  ComposeReport report;
  bool aborted = false;
  for (size_t i = 0; i < plan.stages.size(); ++i) {
    const PlanStage& stage = plan.stages[i];
    StageRecord rec;
    rec.tool = stage.tool;
    rec.query = stage.query;
    if (!aborted) {
      const ToolFn& fn = tools.get(stage.tool);
      const RetryResult r = run_with_retries(
          [&](int attempt) { return fn(world, stage, attempt); },
          stage.verifier, stage.max_retries, mix_seed(seed, i));
      rec.verified = r.verified;
      rec.ground_truth = r.ground_truth;
      rec.attempts = r.attempts;
      rec.status = r.verified ? StageStatus::kSuccess : StageStatus::kAborted;
      aborted = !r.verified;
    }
    report.stages.push_back(std::move(rec));
  }
  return report;
}

}  // namespace cap::control

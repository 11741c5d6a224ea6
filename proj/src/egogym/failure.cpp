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


#include "cap/egogym.hpp"
#include "cap/error.hpp"

namespace cap::egogym {

std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::kSuccess:
      return "Success";
    case Outcome::kDidNotLiftEnough:
      return "DidNotLiftEnough";
    case Outcome::kTouchedNotGrasped:
      return "TouchedNotGrasped";
    case Outcome::kPickedWrongObject:
      return "PickedWrongObject";
    case Outcome::kEmptyGrasp:
      return "EmptyGrasp";
    case Outcome::kDidNotGrasp:
      return "DidNotGrasp";
  }
  return "DidNotGrasp";
}

Outcome outcome_from_string(const std::string& name) {
  for (Outcome o : kAllOutcomes) {
    if (to_string(o) == name) return o;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown outcome '" + name + "'");
}

EpisodeTrace make_trace(const SceneSpec& scene, const SimState& state) {
  EpisodeTrace t;
  t.task = scene.task;
  t.max_lift = state.max_lift;
  t.final_aperture = state.aperture_meas;
  t.fingers_touched = state.fingers_touched;
  const int target_id =
      state.target >= 0 ? scene.objects[state.target].id : -1;
  for (const auto& [body, step] : state.contact_log) {
    (void)step;
    if (body == target_id) {
      t.target_contact = true;
    } else if (scene.object_index(body) >= 0) {
      t.distractor_contact = true;
    }
  }
  return t;
}

Outcome classify_failure(const EpisodeTrace& trace,
                         const FailureThresholds& th) {
  if (trace.task != Task::kPick) {
    throw Error(ErrorCode::kWrongTask,
                "failure taxonomy is defined for Pick only");
  }
  if (trace.max_lift > th.success_lift) return Outcome::kSuccess;
  if (trace.target_contact && trace.max_lift >= th.min_lift) {
    return Outcome::kDidNotLiftEnough;
  }
  if (trace.target_contact) return Outcome::kTouchedNotGrasped;
  if (trace.distractor_contact) return Outcome::kPickedWrongObject;
  if (trace.final_aperture <= th.closed_aperture || trace.fingers_touched) {
    return Outcome::kEmptyGrasp;
  }
  return Outcome::kDidNotGrasp;
}

}  // namespace cap::egogym

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


#ifndef CAP_CONTROL_HPP_
#define CAP_CONTROL_HPP_

// Contact prompting, success verification, verifier-guided retries and the
// tool-calling composer for multi-stage scenes.

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cap/egogym.hpp"
#include "cap/geometry.hpp"
#include "cap/policy.hpp"
#include "cap/random.hpp"

namespace cap::control {

// ---- prompting -----------------------------------------------------------

enum class PromptKind { kOracle, kClick, kPointingModel, kMockPointing };

std::string to_string(PromptKind kind);
PromptKind prompt_kind_from_string(const std::string& name);

struct PromptSource {
  PromptKind kind = PromptKind::kOracle;
  // MockPointing
  double sigma_px = 0.0;
  double alpha = 0.0;
  // Click
  Vec2 click = Vec2::Zero();
  // PointingModel, e.g. "http://127.0.0.1:9000/point"
  std::string endpoint;
  double timeout_s = 5.0;

  // Throws kInvalidArgument.
  void validate() const;
};

// Graspable bodies a pointing source may choose between: scene objects for
// Pick, articulation handles otherwise. The first entry is the target.
struct Candidate {
  int body_id = 0;
  Vec3 grasp_point_world = Vec3::Zero();
};
std::vector<Candidate> prompt_candidates(const egogym::SceneSpec& scene,
                                         const egogym::SimState& state);

// Camera-frame contact anchor for the current observation. `rng` drives
// MockPointing and may be null for the other kinds. Throws
// kNonPositiveDepth when the chosen pixel has no depth, kPointingTimeout or
// kInvalidArgument for the remote client.
ContactAnchor make_prompt(const PromptSource& src, const egogym::SceneSpec& scene,
                          const egogym::SimState& state,
                          const egogym::Observation& obs,
                          const CameraIntrinsics& k, std::string_view query,
                          Rng* rng);

// Wire helpers of the pointing-model client.
std::string base64_encode(std::string_view bytes);
// Returns the pixel (u, v) answered by the remote pointing model.
Vec2 query_pointing_model(const std::string& endpoint, double timeout_s,
                          const RgbImage& image, std::string_view query);

// ---- verification --------------------------------------------------------

enum class VerifierKind { kGroundTruth, kNoisy };

struct Verifier {
  VerifierKind kind = VerifierKind::kGroundTruth;
  double false_positive = 0.0;
  double false_negative = 0.0;

  void validate() const;
};

struct AttemptTrace {
  Task task = Task::kPick;
  uint64_t seed = 0;
  bool success = false;  // simulator ground truth
  double max_reward = 0.0;
  int steps = 0;
  egogym::EpisodeTrace trace;
  std::optional<ContactAnchor> anchor;
};

// GroundTruth returns trace.success. Noisy flips it with the configured
// rates, drawing from `seed`.
bool verify(const Verifier& v, const AttemptTrace& trace, uint64_t seed);

// ---- rollout -------------------------------------------------------------

using PolicyFactory =
    std::function<std::unique_ptr<policy::AnchorPolicy>(Task task)>;

struct StepEvent {
  int step = 0;
  egogym::Action action;
  double reward = 0.0;
  ContactAnchor anchor;
  bool done = false;
};

// Prompts once on the first observation, then steps the policy until the
// environment reports done or `max_steps` steps have run.
AttemptTrace rollout(egogym::Environment& env, policy::AnchorPolicy& policy,
                     const ContactAnchor& anchor, int max_steps,
                     const std::function<void(const StepEvent&)>& on_step = {});

// ---- retries -------------------------------------------------------------

struct AttemptRecord {
  AttemptTrace trace;
  bool verdict = false;
  std::string error;  // non-empty when the attempt threw
};

struct RetryResult {
  bool verified = false;      // verifier's final verdict
  bool ground_truth = false;  // simulator truth of the last attempt
  int attempts = 0;
  std::vector<AttemptRecord> records;
};

using AttemptFn = std::function<AttemptTrace(int attempt)>;

// Runs attempt -> verify until the verifier approves or max_retries + 1
// attempts have run. An attempt that throws counts as a failed attempt.
RetryResult run_with_retries(const AttemptFn& attempt, const Verifier& v,
                             int max_retries, uint64_t seed);

struct SimTrialConfig {
  Task task = Task::kPick;
  uint64_t seed = 0;
  int distractor_count = 0;
  egogym::SceneVariant variant = egogym::SceneVariant::kStandard;
  int horizon = 80;
  PromptSource prompt;
  std::string query;
};

// Each attempt resets the same scene and re-prompts on the fresh
// observation; the prompt noise stream continues across attempts.
AttemptFn make_sim_attempt(const SimTrialConfig& cfg, PolicyFactory factory);

// ---- tool composition ----------------------------------------------------

enum class Tool { kOpen, kPick, kDrop, kClose, kMoveBase };

std::string to_string(Tool tool);
// Throws kUnknownTool.
Tool tool_from_string(const std::string& name);

struct PlanStage {
  Tool tool = Tool::kPick;
  std::string query;
  int max_retries = 10;
  Verifier verifier;
};

struct ToolPlan {
  std::vector<PlanStage> stages;

  void validate() const;
};

// Loads {"stages": [{"tool": "open", "query": "...", "max_retries": 3,
// "verifier": {"kind": "noisy", "fp": 1.0, "fn": 0.0}}, ...]}.
ToolPlan plan_from_json(const nlohmann::json& j);

// Shared world the tools act on across stages.
struct World {
  egogym::SceneSpec scene;
  egogym::SimState state;
  egogym::SimConfig sim;

  static World from_scene(egogym::SceneSpec scene);
};

using ToolFn =
    std::function<AttemptTrace(World& world, const PlanStage& stage, int attempt)>;

class ToolRegistry {
 public:
  void add(Tool tool, ToolFn fn);
  bool has(Tool tool) const;
  // Throws kUnknownTool.
  const ToolFn& get(Tool tool) const;

 private:
  std::map<Tool, ToolFn> tools_;
};

struct SimToolOptions {
  int horizon = 80;
  // Open stops once the door reaches this fraction; 1 opens fully.
  double open_limit = 1.0;
};

// Oracle-driven Pick/Open/Close, scripted Drop and a MoveBase stub. Every
// tool starts with the rig back at its initial pose.
ToolRegistry sim_tools(const SimToolOptions& options = {});

enum class StageStatus { kSuccess, kAborted, kNotAttempted };
std::string to_string(StageStatus s);

struct StageRecord {
  Tool tool = Tool::kPick;
  std::string query;
  StageStatus status = StageStatus::kNotAttempted;
  bool verified = false;
  bool ground_truth = false;
  int attempts = 0;
};

struct ComposeReport {
  std::vector<StageRecord> stages;
  int verified_stages() const;
  nlohmann::json to_json() const;
};

// Runs the stages in order. A stage whose retries run out is marked
// kAborted and the rest kNotAttempted. Throws kUnknownTool before running
// anything if a stage has no registered tool.
ComposeReport compose_tools(const ToolPlan& plan, World& world,
                            const ToolRegistry& tools, uint64_t seed);

}  // namespace cap::control

#endif  // CAP_CONTROL_HPP_

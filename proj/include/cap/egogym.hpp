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

#ifndef CAP_EGOGYM_HPP_
#define CAP_EGOGYM_HPP_

// EgoGym-lite: procedural Pick/Open/Close scenes over geometric primitives,
// a free-flying two-finger gripper, a ray-cast RGB-D-segmentation renderer,
// dense rewards and a scripted demonstrator.
//
// World frame is z up. The camera rig and the gripper share one pose (the
// end effector). Fingers close along camera x.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cap/episode.hpp"
#include "cap/geometry.hpp"
#include "cap/image.hpp"

namespace cap::egogym {

enum class Primitive { kBox, kSphere, kCylinder };
enum class ArticulationKind { kRevoluteDoor, kPrismaticDrawer };
enum class HingeSide { kLeft, kRight };

std::string to_string(Primitive p);

struct Color {
  uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Color&) const = default;
};

// Body ids as they appear in segmentation maps and contact logs.
inline constexpr int kBackgroundId = 0;
inline constexpr int kTableId = 1;
inline constexpr int kGripperId = 2;
inline constexpr int kDropZoneId = 3;
inline constexpr int kFirstObjectId = 10;
inline constexpr int kFirstFixtureId = 100;

// A posed primitive. Box: half sizes. Sphere: radius in x. Cylinder: radius
// in x, half height in z, axis along local z.
struct Solid {
  Primitive primitive = Primitive::kBox;
  Vec3 half_extents = Vec3::Zero();
  RigidTransform pose;
  Color color;
  int body_id = 0;
};

struct SceneObject {
  int id = 0;
  std::string name;
  std::string description;
  Primitive primitive = Primitive::kBox;
  Vec3 half_extents = Vec3::Zero();
  RigidTransform pose;
  Color color;
  bool is_target = false;

  bool operator==(const SceneObject&) const = default;
};

struct Table {
  bool present = false;
  double height = 0.75;                      // top surface z
  Vec2 center = Vec2(0.0, 0.5);              // xy of the top center
  Vec2 half_extent = Vec2(0.45, 0.35);
  Color color;

  bool operator==(const Table&) const = default;
};

// A cabinet with one moving part. The cabinet frame has its origin at the
// center of the carcass front face; local +y points into the carcass and
// +z is up. Geometry is stored for a left hinge; right-hinged doors are the
// mirror image in the cabinet frame.
struct Articulation {
  ArticulationKind kind = ArticulationKind::kRevoluteDoor;
  HingeSide hinge = HingeSide::kLeft;
  double travel = 1.4;      // radians (door) or meters (drawer)
  double q0 = 0.0;
  RigidTransform frame;
  Vec3 carcass_half = Vec3(0.2, 0.2, 0.2);
  bool draw_carcass = true;
  bool hollow = false;       // open-fronted shell with an interior
  Vec3 panel_half = Vec3(0.2, 0.01, 0.2);   // door panel or drawer box
  double panel_center_z = 0.0;              // drawer box center height
  double proud = 0.01;                      // drawer front ahead of face
  Vec3 handle_half = Vec3(0.01, 0.01, 0.05);
  double handle_standoff = 0.03;            // handle center ahead of front
  double handle_z = 0.0;                    // handle height in the frame
  double handle_inset = 0.05;               // door: distance from free edge
  Color carcass_color, panel_color, handle_color;
  int carcass_id = 0, panel_id = 0, handle_id = 0;
  std::string name;

  bool operator==(const Articulation&) const = default;
};

struct DropZone {
  Vec2 center = Vec2::Zero();
  Vec2 half_extent = Vec2(0.1, 0.1);
  double z = 0.0;

  bool operator==(const DropZone&) const = default;
};

struct SceneSpec {
  Task task = Task::kPick;
  uint64_t seed = 0;
  int distractor_count = 0;
  uint64_t texture_seed = 0;
  Table table;
  std::vector<SceneObject> objects;
  std::vector<Articulation> articulations;
  int goal = 0;                      // index of the goal articulation
  std::optional<DropZone> drop_zone;
  bool solid_fixtures = false;       // gripper cannot pass through fixtures
  RigidTransform initial_ee;
  RigidTransform nominal_ee;         // initial pose before jitter
  bool mirrored = false;

  // Index of the target object, or -1.
  int target_index() const;
  int object_index(int body_id) const;
  int articulation_of_handle(int body_id) const;

  bool operator==(const SceneSpec&) const = default;
};

struct GripperModel {
  double max_gap = 0.16;                     // finger gap at aperture 1
  Vec3 tip_offset = Vec3(0.0, 0.05, 0.13);   // camera frame
  double max_aperture_rate = 0.15;           // per step
  double pad_half_depth = 0.015;             // along camera z
  double pad_half_height = 0.012;            // along camera y
  double finger_thickness = 0.012;
  double finger_back = 0.03;                 // finger root, camera z
  double contact_tolerance = 0.005;
  double release_margin = 0.05;
};

struct SimConfig {
  int horizon = 80;
  double pick_threshold = 0.03;
  double open_threshold = 0.9;
  double close_threshold = 0.05;
  bool terminate_on_success = true;
  double max_translation = 0.05;
  double max_rotation = 0.2;
  CameraIntrinsics intrinsics = CameraIntrinsics::centered();
  GripperModel gripper;
};

struct SimState {
  RigidTransform ee_pose;
  double aperture_cmd = 1.0;
  double aperture_meas = 1.0;
  double finger_left = -0.08;    // inner pad face, camera x
  double finger_right = 0.08;
  int left_contact = 0;          // body the finger is stopped on
  int right_contact = 0;
  int attached = 0;              // body id or 0
  RigidTransform attach_offset;  // object pose in the EE frame
  double attach_aperture = 0.0;
  std::optional<int> first_attach_step;
  std::vector<RigidTransform> object_poses;
  std::vector<double> q;
  int target = -1;               // object index for Pick rewards
  int goal = 0;                  // articulation index for Open/Close
  int step_count = 0;
  std::map<int, int> contact_log;   // body id -> first contact step
  double initial_target_z = 0.0;
  double max_lift = 0.0;
  double reward = 0.0;
  double max_reward = 0.0;
  bool fingers_touched = false;
  bool done = false;

  bool operator==(const SimState&) const = default;
};

struct Action {
  Vec3 delta_translation = Vec3::Zero();  // meters, camera frame
  Vec3 delta_rotation = Vec3::Zero();     // axis-angle, camera frame
  double aperture_cmd = 1.0;

  bool operator==(const Action&) const = default;
};

struct Observation {
  RgbImage rgb;
  DepthMap depth;
  SegmentationMap segmentation;
  RigidTransform camera_pose;
  double aperture_meas = 1.0;
  RigidTransform privileged;   // target object pose or goal handle pose
  int privileged_body = 0;
};

struct StepOutcome {
  SimState state;
  double reward = 0.0;
  bool done = false;
};

// ---- scene generation ----------------------------------------------------

enum class SceneVariant {
  kStandard,
  kTwoGoal,      // Close-style chest with two open drawers
  kComposeCabinet,  // hollow cabinet with a door, object inside, drop zone
  kClearTable,   // table with graspable objects and a drop zone
};

SceneSpec generate_scene(Task task, uint64_t seed, int distractor_count,
                         SceneVariant variant = SceneVariant::kStandard);

// Mirror image of the scene through the world plane x = 0.
SceneSpec mirror_scene(const SceneSpec& scene);
SimState mirror_state(const SimState& state);

SimState initial_state(const SceneSpec& scene, const SimConfig& cfg = {});

// ---- kinematics ----------------------------------------------------------

StepOutcome step(const SceneSpec& scene, const SimState& state,
                 const Action& action, const SimConfig& cfg = {});

// Pose of each moving articulation part at open fraction q.
RigidTransform panel_pose(const Articulation& a, double q);
RigidTransform handle_pose(const Articulation& a, double q);

// Velocity of a grasped point per unit of open fraction, world frame.
Vec3 joint_tangent(const Articulation& a, const Vec3& point);

// World-frame tip (midpoint between the fingertips).
Vec3 tip_position(const SimState& s, const GripperModel& g);

bool is_success(const SceneSpec& scene, const SimState& s,
                const SimConfig& cfg);

// Re-target a Pick reward at another object, resetting its lift baseline.
void set_target(SimState& s, int object_index);
void set_goal(SimState& s, int articulation_index);

// Solids of the current state; fingers last.
std::vector<Solid> scene_solids(const SceneSpec& scene, const SimState& state,
                                const GripperModel& g = {});

// ---- rendering -----------------------------------------------------------

struct RenderOutput {
  RgbImage rgb;
  DepthMap depth;
  SegmentationMap segmentation;
};

inline constexpr Color kBackgroundColor{38, 42, 52};

// Ray casts every pixel center against the solids. Depth is z-depth; no hit
// leaves depth 0, body id 0 and the background color.
RenderOutput render_solids(const std::vector<Solid>& solids,
                           const RigidTransform& camera_pose,
                           const CameraIntrinsics& k);

Observation render(const SceneSpec& scene, const SimState& state,
                   const SimConfig& cfg = {});

// Nearest ray hit against the solids, world frame.
struct RayHit {
  double t = 0.0;
  int body_id = 0;
  Vec3 point = Vec3::Zero();
};
std::optional<RayHit> ray_cast(const std::vector<Solid>& solids,
                               const Vec3& origin, const Vec3& direction);

// Signed distance from a world point to a solid (negative inside).
double signed_distance(const Solid& s, const Vec3& p);

// ---- failure taxonomy ----------------------------------------------------

enum class Outcome {
  kSuccess,
  kDidNotLiftEnough,
  kTouchedNotGrasped,
  kPickedWrongObject,
  kEmptyGrasp,
  kDidNotGrasp,
};

inline constexpr Outcome kAllOutcomes[] = {
    Outcome::kSuccess,           Outcome::kDidNotLiftEnough,
    Outcome::kTouchedNotGrasped, Outcome::kPickedWrongObject,
    Outcome::kEmptyGrasp,        Outcome::kDidNotGrasp};

std::string to_string(Outcome o);
Outcome outcome_from_string(const std::string& name);

struct EpisodeTrace {
  Task task = Task::kPick;
  double max_lift = 0.0;
  bool target_contact = false;
  bool distractor_contact = false;
  double final_aperture = 1.0;
  bool fingers_touched = false;
};

struct FailureThresholds {
  double success_lift = 0.03;
  double min_lift = 0.005;
  double closed_aperture = 0.1;
};

EpisodeTrace make_trace(const SceneSpec& scene, const SimState& state);

// Ordered decision tree, first match wins. Throws kWrongTask unless Pick.
Outcome classify_failure(const EpisodeTrace& trace,
                         const FailureThresholds& th = {});

// ---- scripted demonstrator -----------------------------------------------

struct OracleConfig {
  double approach_step = 0.035;
  double rotation_step = 0.1;
  double close_radius = 0.01;
  double close_rate = 0.15;
  double lift_step = 0.02;
  double lift_height = 0.1;
  double pull_step = 0.03;
  double open_goal = 0.95;
  double close_goal = 0.02;
};

// World grasp point and approach orientation for the current goal.
struct GraspGoal {
  Vec3 point = Vec3::Zero();
  Quat orientation = Quat::Identity();
};
GraspGoal grasp_goal(const SceneSpec& scene, const SimState& state);

// Stateless phase machine using the privileged target/handle pose.
Action oracle_policy(const SceneSpec& scene, const SimState& state,
                     const RigidTransform& privileged,
                     const OracleConfig& cfg = {}, const GripperModel& g = {});

// True once the oracle has nothing left to do (lifted, opened or closed).
bool oracle_finished(const SceneSpec& scene, const SimState& state,
                     const OracleConfig& cfg = {});

// ---- environment wrapper -------------------------------------------------

enum class Embodiment { kCap };
enum class ActionMode { kRelative, kAbsolute };

struct EnvOptions {
  Embodiment embodiment = Embodiment::kCap;
  ActionMode action_mode = ActionMode::kRelative;
  uint64_t seed = 0;
  int distractor_count = 0;
  SceneVariant variant = SceneVariant::kStandard;
  SimConfig sim;
};

class Environment {
 public:
  Environment(SceneSpec scene, EnvOptions options);

  Observation reset();
  // Relative mode: the action is a camera-frame delta. Absolute mode: the
  // translation and rotation fields are a target world pose, reached under
  // the same per-step clamps.
  StepOutcome step(const Action& action);
  Observation observe() const;

  const SceneSpec& scene() const { return scene_; }
  const SimState& state() const { return state_; }
  SimState& mutable_state() { return state_; }
  const EnvOptions& options() const { return options_; }
  const SimConfig& sim_config() const { return options_.sim; }
  bool done() const { return state_.done; }
  bool success() const { return is_success(scene_, state_, options_.sim); }

 private:
  SceneSpec scene_;
  EnvOptions options_;
  SimState state_;
};

// Names: EgoGym-Pick-v0, EgoGym-Open-v0, EgoGym-Close-v0. Throws
// kUnknownEnvironment.
std::unique_ptr<Environment> make_env(std::string_view name,
                                      const EnvOptions& options);

// ---- data collection -----------------------------------------------------

struct CollectOptions {
  bool render_images = true;
  bool terminate_on_success = false;
  int horizon = 80;
  int distractor_count = 0;
  SceneVariant variant = SceneVariant::kStandard;
};

struct CollectedEpisode {
  Episode episode;            // images loaded when rendered
  SceneSpec scene;
  SimState final_state;
  std::optional<int> attach_step;
  Vec3 grasp_point_world = Vec3::Zero();
  bool success = false;
};

// Rolls out the oracle on one seeded scene and records an episode.
CollectedEpisode collect_oracle_episode(Task task, uint64_t seed,
                                        const CollectOptions& options = {});

}  // namespace cap::egogym

#endif  // CAP_EGOGYM_HPP_

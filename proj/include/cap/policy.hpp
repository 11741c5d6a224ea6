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


#ifndef CAP_POLICY_HPP_
#define CAP_POLICY_HPP_

// Contact-conditioned action-token policy: pooled-pixel features plus the
// camera-frame anchor, a k-token context window, per-stage code logits and
// a continuous offset head.

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cap/codec.hpp"
#include "cap/egogym.hpp"
#include "cap/episode.hpp"
#include "cap/geometry.hpp"
#include "cap/image.hpp"
#include "json.hpp"

namespace cap::policy {

inline constexpr int kPoolGrid = 12;
inline constexpr int kVisualDim = kPoolGrid * kPoolGrid * 3;  // 432
inline constexpr int kAnchorDim = 3;
inline constexpr int kTokenDim = kVisualDim + kAnchorDim;     // 435
inline constexpr int kContext = 3;
inline constexpr double kAnchorScale = 0.5;  // per meter

using Vector = Eigen::VectorXd;

// ---- features ------------------------------------------------------------

// Mean pool onto a 12x12 grid, values in [0, 1], layout (row, col, channel).
// Bin edges are symmetric about the image center so that a horizontal flip
// reverses the columns exactly.
Vector pool_image(const RgbImage& rgb);

// s_t = [z_v, z_c]. Throws kWrongFrame for a world-frame anchor.
Vector featurize(const RgbImage& rgb, const ContactAnchor& anchor);
Vector featurize(const egogym::Observation& obs, const ContactAnchor& anchor);

// Token of the horizontally mirrored observation.
Vector mirror_token(const Vector& token);

// ---- actions -------------------------------------------------------------

codec::Vector action_vector(const egogym::Action& a);
egogym::Action to_action(const codec::Vector& v);
codec::Vector mirror_action(const codec::Vector& v);

// Action t moves frame t to frame t+1: the relative camera motion and the
// aperture command recorded at t+1. Size is frames - 1.
std::vector<codec::Vector> episode_actions(const Episode& e);

// ---- dataset -------------------------------------------------------------

struct Sample {
  std::array<int, kContext> context{};  // token indices, oldest first
  std::vector<int> codes;
  codec::Vector offset;  // normalized-space residual after decoding codes
  codec::Vector action;
};

struct Dataset {
  std::vector<Vector> tokens;
  std::vector<Sample> samples;

  bool empty() const { return samples.empty(); }
};

struct DatasetOptions {
  // Adds the horizontally mirrored copy of every episode.
  bool mirror_augment = false;
};

// Appends one labeled episode. Images are loaded from source_dir when the
// frames carry none. Throws kNoAnchor for an unlabeled frame.
void append_episode(Dataset& d, const Episode& e, const codec::Codebook& cb,
                    const DatasetOptions& options = {});

Dataset build_dataset(std::span<const Episode> episodes,
                      const codec::Codebook& cb,
                      const DatasetOptions& options = {});

// ---- model ---------------------------------------------------------------

struct ModelConfig {
  int hidden = 128;
  bool rgb_only = false;  // anchor channels forced to zero
  uint64_t seed = 0;
  double offset_weight = 1.0;
};

struct Prediction {
  std::vector<int> codes;
  codec::Vector offset;
  codec::Vector action;
};

struct LossStats {
  double cross_entropy = 0.0;
  double offset_l1 = 0.0;
  int correct_codes = 0;
  int total_codes = 0;
};

class PolicyModel {
 public:
  PolicyModel() = default;
  // Random initialization from config.seed. `input_mean` and `input_scale`
  // standardize tokens before the embedding.
  PolicyModel(const ModelConfig& config, codec::Codebook codebook,
              Vector input_mean, Vector input_scale);

  const ModelConfig& config() const { return config_; }
  const codec::Codebook& codebook() const { return codebook_; }
  const Vector& input_mean() const { return input_mean_; }
  const Vector& input_scale() const { return input_scale_; }

  // All weights and biases, flattened in layer order.
  const Vector& parameters() const { return theta_; }
  Vector& parameters() { return theta_; }
  size_t parameter_count() const { return static_cast<size_t>(theta_.size()); }

  // `context` holds kContext raw tokens, oldest first.
  Prediction predict(std::span<const Vector> context) const;

  // Mean over samples of sum-of-stage cross-entropy plus weighted mean L1
  // offset error. Writes d(loss)/d(parameters) when `gradient` is non-null.
  double loss(const Dataset& data, std::span<const int> sample_ids,
              Vector* gradient = nullptr, LossStats* stats = nullptr) const;

  // Raw network outputs for a batch; exposed for the gradient check.
  struct Outputs {
    std::vector<Eigen::MatrixXd> logits;  // per stage, k x batch
    Eigen::MatrixXd offset;               // dim x batch
  };
  Outputs forward(const Dataset& data, std::span<const int> sample_ids) const;

  nlohmann::json to_json() const;
  static PolicyModel from_json(const nlohmann::json& j);

  bool operator==(const PolicyModel& other) const;

 private:
  struct Block {
    std::string name;
    int rows = 0;
    int cols = 0;
    Eigen::Index weight = 0;
    Eigen::Index bias = 0;
  };
  struct Cache;
  void build_layout();
  void gather(const Dataset& data, std::span<const int> sample_ids,
              Cache& c) const;
  void run(Cache& c) const;
  Eigen::Map<const Eigen::MatrixXd> weight(const Block& b) const;
  Eigen::Map<const Eigen::VectorXd> bias(const Block& b) const;
  Eigen::MatrixXd standardize(std::span<const Vector* const> tokens) const;

  ModelConfig config_;
  codec::Codebook codebook_;
  Vector input_mean_;
  Vector input_scale_;
  Vector theta_;
  std::vector<Block> blocks_;  // embed, hidden, logits per stage, offset
};

void save_model(const PolicyModel& m, const std::filesystem::path& path);
// Throws kModelLoadFailure.
PolicyModel load_model(const std::filesystem::path& path);

// Per-dimension mean and standard deviation of the dataset tokens; a zero
// deviation is replaced by 1.
std::pair<Vector, Vector> token_statistics(const Dataset& data);

// ---- training ------------------------------------------------------------

struct GradientCheckReport {
  int coordinates = 0;
  double max_relative_error = 0.0;
  Eigen::Index worst_coordinate = -1;
};

struct LossRecord {
  int step = 0;
  double loss = 0.0;
};

struct HookRecord {
  int step = 0;
  double loss = 0.0;
  double success = 0.0;
};

struct TrainReport {
  size_t parameter_count = 0;
  std::vector<LossRecord> losses;
  double final_loss = 0.0;
  double token_accuracy = 0.0;
  GradientCheckReport gradient_check;
  std::vector<HookRecord> hooks;
  std::vector<std::string> hook_errors;
};

// Returns the success rate of a model snapshot.
using EvalHook = std::function<double(const PolicyModel&, int step)>;

struct TrainConfig {
  ModelConfig model;
  int steps = 3000;
  int batch_size = 64;
  double learning_rate = 0.05;
  double momentum = 0.9;
  bool cosine_decay = true;
  uint64_t seed = 0;  // batch order
  int log_every = 10;

  bool gradient_check = true;
  int gradient_check_coordinates = 100;
  int gradient_check_samples = 16;
  double gradient_check_step = 1e-5;
  double gradient_check_tolerance = 1e-4;

  int hook_every = 0;  // 0 disables the eval hook
  EvalHook eval_hook;
};

// Central-difference check of the analytic gradient on `coordinates`
// distinct random parameters. Check samples are taken where no offset
// residual sits within 1e-3 of the L1 kink.
GradientCheckReport gradient_check(const PolicyModel& m, const Dataset& data,
                                   int coordinates, int samples, double step,
                                   uint64_t seed);

// Throws kEmptyDataset, or kGradientCheckFailed before any update when the
// check exceeds its tolerance.
std::pair<PolicyModel, TrainReport> train(const Dataset& data,
                                          const codec::Codebook& cb,
                                          const TrainConfig& cfg);

// ---- inference -----------------------------------------------------------

struct TrackerConfig {
  double min_close = 0.2;   // aperture drop from the first frame
  double stall_eps = 0.01;  // per-step aperture change that counts as stalled
};

// Holds p_0 and A_0; the anchor at t is propagate_anchor(A_t, A_0, p_0)
// until the measured aperture stalls after closing, then stays frozen.
class AnchorTracker {
 public:
  explicit AnchorTracker(TrackerConfig cfg = {}) : cfg_(cfg) {}

  void reset(const ContactAnchor& p0, const RigidTransform& a0,
             double aperture0);
  bool initialized() const { return initialized_; }
  // Throws kNoAnchor before reset.
  const ContactAnchor& update(const RigidTransform& a_t, double aperture_meas);
  const ContactAnchor& anchor() const { return current_; }
  bool frozen() const { return current_.frozen; }

 private:
  TrackerConfig cfg_;
  bool initialized_ = false;
  ContactAnchor p0_;
  RigidTransform a0_;
  double aperture0_ = 1.0;
  double last_aperture_ = 1.0;
  ContactAnchor current_;
};

// Anchor-driven closed-loop controller.
class AnchorPolicy {
 public:
  virtual ~AnchorPolicy() = default;
  // Throws kWrongFrame for a world-frame anchor.
  virtual void reset(const ContactAnchor& p0, const egogym::Observation& obs);
  // Throws kNoAnchor before reset.
  virtual egogym::Action act(const egogym::Observation& obs) = 0;

  const AnchorTracker& tracker() const { return tracker_; }

 protected:
  explicit AnchorPolicy(TrackerConfig cfg) : tracker_(cfg) {}
  const ContactAnchor& track(const egogym::Observation& obs);

  AnchorTracker tracker_;
};

class PolicyAgent : public AnchorPolicy {
 public:
  explicit PolicyAgent(std::shared_ptr<const PolicyModel> model,
                       TrackerConfig cfg = {});

  void reset(const ContactAnchor& p0, const egogym::Observation& obs) override;
  egogym::Action act(const egogym::Observation& obs) override;

  const Prediction& last_prediction() const { return last_; }

 private:
  std::shared_ptr<const PolicyModel> model_;
  std::deque<Vector> history_;
  Prediction last_;
};

struct ServoConfig {
  double approach_step = 0.035;
  double close_radius = 0.01;
  double close_rate = 0.15;
  double lift_step = 0.02;
  double pull_step = 0.03;
  Vec3 tip_offset = Vec3(0.0, 0.05, 0.13);
};

// Non-learned baseline: drives the fingertip point onto the tracked anchor,
// closes, then after the freeze lifts (Pick, world up), pulls (Open, camera
// -z) or pushes (Close, camera +z).
class ScriptedServo : public AnchorPolicy {
 public:
  explicit ScriptedServo(Task task, ServoConfig cfg = {},
                         TrackerConfig tracker = {});

  void reset(const ContactAnchor& p0, const egogym::Observation& obs) override;
  egogym::Action act(const egogym::Observation& obs) override;

 private:
  Task task_;
  ServoConfig cfg_;
  bool closing_ = false;
  double command_ = 1.0;
};

}  // namespace cap::policy

#endif  // CAP_POLICY_HPP_

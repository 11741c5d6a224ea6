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


#ifndef CAP_EVAL_HPP_
#define CAP_EVAL_HPP_

// Batch evaluation, Wilson intervals, failure histograms and the distractor
// sweep.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cap/control.hpp"
#include "cap/egogym.hpp"
#include "cap/policy.hpp"
#include "json.hpp"

namespace cap::eval {

inline constexpr int kReportSchemaVersion = 1;
inline constexpr double kWilsonZ95 = 1.959963984540054;

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

// Throws kInvalidArgument unless 0 <= successes <= n and n >= 1.
Interval wilson_interval(int successes, int n, double z = kWilsonZ95);

struct EvalConfig {
  Task task = Task::kPick;
  int episodes = 100;  // per distractor count
  uint64_t seed = 0;
  std::vector<int> distractor_counts = {0};
  egogym::SceneVariant variant = egogym::SceneVariant::kStandard;
  control::PromptSource prompt;
  control::Verifier verifier;
  int horizon = 80;
  double success_threshold = 0.03;  // Pick lift, meters
  int workers = 1;
  // "servo" or "model"; the model is read from model_path.
  std::string policy = "servo";
  std::string model_path;

  // Throws kConfigInvalid.
  void validate() const;
};

// standard, two_goal, compose_cabinet, clear_table. Throws kConfigInvalid.
std::string variant_name(egogym::SceneVariant v);
egogym::SceneVariant variant_from_name(const std::string& name);

EvalConfig eval_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EvalConfig& cfg);

// Outcome categories of a task, Success first. Pick uses the six-way
// failure taxonomy; Open and Close use Success, Incomplete, NoHandleGrasp.
std::vector<std::string> outcome_categories(Task task);

// Category of a finished rollout: classify_failure for Pick; Success,
// Incomplete (goal handle touched) or NoHandleGrasp otherwise.
std::string classify_outcome(const egogym::SceneSpec& scene,
                             const egogym::SimState& state,
                             const control::AttemptTrace& trace,
                             double success_threshold = 0.03);

struct EpisodeResult {
  uint64_t seed = 0;
  int distractor_count = 0;
  bool success = false;
  bool verified = false;
  std::string outcome;  // empty on a harness error
  double max_reward = 0.0;
  int steps = 0;
  std::string error;
};

struct CountReport {
  int distractor_count = 0;
  int episodes = 0;
  int successes = 0;
  int harness_errors = 0;
  double rate = 0.0;
  Interval interval;
  std::map<std::string, int> histogram;
};

struct EvalReport {
  Task task = Task::kPick;
  int episodes = 0;
  int successes = 0;
  int verified_successes = 0;
  int harness_errors = 0;
  double rate = 0.0;
  Interval interval;
  std::map<std::string, int> histogram;
  std::vector<CountReport> per_count;
  std::vector<EpisodeResult> results;  // seed order
  double wall_seconds = 0.0;
  long frames = 0;
  double frames_per_second = 0.0;

  // Timing is left out unless asked for, so equal runs give equal bytes.
  nlohmann::json to_json(bool include_timing = false) const;
};

// Episode i at distractor count n uses seed mix_seed(mix_seed(seed, n), i).
uint64_t episode_seed(uint64_t seed, int distractor_count, int index);

// Scripted servo or, for policy == "model", a PolicyAgent over the loaded
// model. Throws kModelLoadFailure.
control::PolicyFactory make_policy_factory(const EvalConfig& cfg);
control::PolicyFactory model_factory(std::shared_ptr<const policy::PolicyModel> m);
control::PolicyFactory servo_factory();

// Episodes that throw are counted as harness errors, not failures.
EvalReport run_eval(const EvalConfig& cfg, const control::PolicyFactory& factory);
EvalReport run_eval(const EvalConfig& cfg);

// ---- distractor sweep ----------------------------------------------------

double spearman(const std::vector<double>& x, const std::vector<double>& y);

struct TrendTest {
  double rho = 0.0;                 // on the observed rates
  double fraction_non_positive = 0.0;
  int replicates = 0;
  bool non_increasing = false;      // fraction >= confidence
};

// Resamples the episodes of every count with replacement and recomputes
// Spearman's rho between count and success rate.
TrendTest bootstrap_trend(const std::vector<int>& counts,
                          const std::vector<std::vector<bool>>& outcomes,
                          int replicates, uint64_t seed,
                          double confidence = 0.95);

struct SweepSource {
  std::string name;
  control::PromptSource prompt;
};

struct SweepCurve {
  std::string name;
  std::vector<int> counts;
  std::vector<EvalReport> reports;
  std::vector<double> rates;
  std::vector<double> normalized;  // rate / rate at the first count
  double spread = 0.0;             // max - min raw rate
  TrendTest trend;
};

struct SweepReport {
  std::vector<SweepCurve> curves;
  nlohmann::json to_json() const;
};

SweepReport distractor_sweep(const EvalConfig& base,
                             const std::vector<SweepSource>& sources,
                             const control::PolicyFactory& factory,
                             int bootstrap_replicates = 1000);

// Static line plot of the normalized curves of a sweep report JSON.
std::string sweep_svg(const nlohmann::json& sweep);

// ---- training hook -------------------------------------------------------

// Fixed-seed eval of each snapshot; the result is its success rate.
policy::EvalHook training_eval_hook(const EvalConfig& cfg);
void write_hook_csv(const policy::TrainReport& report,
                    const std::filesystem::path& path);

}  // namespace cap::eval

#endif  // CAP_EVAL_HPP_

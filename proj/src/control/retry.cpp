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


#include <memory>

#include "cap/control.hpp"
#include "cap/error.hpp"

namespace cap::control {

void Verifier::validate() const {
  if (!(false_positive >= 0.0 && false_positive <= 1.0) ||
      !(false_negative >= 0.0 && false_negative <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "verifier rates must lie in [0, 1]");
  }
}

bool verify(const Verifier& v, const AttemptTrace& trace, uint64_t seed) {
  v.validate();
  if (v.kind == VerifierKind::kGroundTruth) return trace.success;
  Rng rng(seed);
  const double u = rng.uniform();
  return trace.success ? !(u < v.false_negative) : u < v.false_positive;
}

AttemptTrace rollout(egogym::Environment& env, policy::AnchorPolicy& policy,
                     const ContactAnchor& anchor, int max_steps,
                     const std::function<void(const StepEvent&)>& on_step) {
  if (max_steps < 0) {
    throw Error(ErrorCode::kInvalidArgument, "max_steps must be >= 0");
  }
  egogym::Observation obs = env.observe();
  policy.reset(anchor, obs);
  AttemptTrace out;
  out.task = env.scene().task;
  out.seed = env.scene().seed;
  out.anchor = anchor;
  for (int t = 0; t < max_steps && !env.done(); ++t) {
    StepEvent ev;
    ev.step = t;
    ev.action = policy.act(obs);
    ev.anchor = policy.tracker().anchor();
    const egogym::StepOutcome r = env.step(ev.action);
    ev.reward = r.reward;
    ev.done = r.done;
    ++out.steps;
    obs = env.observe();
    if (on_step) on_step(ev);
  }
  out.success = env.success();
  out.max_reward = env.state().max_reward;
  out.trace = egogym::make_trace(env.scene(), env.state());
  return out;
}

RetryResult run_with_retries(const AttemptFn& attempt, const Verifier& v,
                             int max_retries, uint64_t seed) {
  if (max_retries < 0) {
    throw Error(ErrorCode::kInvalidArgument, "max_retries must be >= 0");
  }
  v.validate();
  RetryResult out;
  for (int k = 0; k <= max_retries; ++k) {
    AttemptRecord rec;
    try {
      rec.trace = attempt(k);
      rec.verdict = verify(v, rec.trace, mix_seed(seed, static_cast<uint64_t>(k)));
    } catch (const std::exception& e) {
      rec.error = e.what();
      rec.verdict = false;
      rec.trace.success = false;
    }
    out.attempts = k + 1;
    out.verified = rec.verdict;
    out.ground_truth = rec.trace.success;
    out.records.push_back(std::move(rec));
    if (out.verified) break;
  }
  return out;
}

AttemptFn make_sim_attempt(const SimTrialConfig& cfg, PolicyFactory factory) {
  if (!factory) {
    throw Error(ErrorCode::kInvalidArgument, "attempts need a policy factory");
  }
  cfg.prompt.validate();
  auto prompt_rng = std::make_shared<Rng>(mix_seed(cfg.seed, 0x70726f6d7074ULL));
  return [cfg, factory, prompt_rng](int) {
    egogym::EnvOptions opts;
    opts.seed = cfg.seed;
    opts.distractor_count = cfg.distractor_count;
    opts.variant = cfg.variant;
    opts.sim.horizon = cfg.horizon;
    egogym::Environment env(
        egogym::generate_scene(cfg.task, cfg.seed, cfg.distractor_count,
                               cfg.variant),
        opts);
    const egogym::Observation obs = env.reset();
    const ContactAnchor anchor =
        make_prompt(cfg.prompt, env.scene(), env.state(), obs,
                    env.sim_config().intrinsics, cfg.query, prompt_rng.get());
    std::unique_ptr<policy::AnchorPolicy> p = factory(cfg.task);
    return rollout(env, *p, anchor, cfg.horizon);
  };
}

}  // namespace cap::control

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

#include "cap/error.hpp"
#include "cap/policy.hpp"

namespace cap::policy {

void AnchorTracker::reset(const ContactAnchor& p0, const RigidTransform& a0,
                          double aperture0) {
  if (p0.frame != AnchorFrame::kCamera) {
    throw Error(ErrorCode::kWrongFrame, "initial anchor must be camera-frame");
  }
  p0_ = p0;
  p0_.frozen = false;
  a0_ = a0;
  aperture0_ = aperture0;
  last_aperture_ = aperture0;
  current_ = p0_;
  initialized_ = true;
}

const ContactAnchor& AnchorTracker::update(const RigidTransform& a_t,
                                           double aperture_meas) {
  if (!initialized_) {
    throw Error(ErrorCode::kNoAnchor, "anchor tracker was never reset");
  }
  if (current_.frozen) return current_;
  current_ = a_t == a0_ ? p0_ : propagate_anchor(a_t, a0_, p0_);
  const bool closed = aperture0_ - aperture_meas >= cfg_.min_close;
  const bool stalled = std::abs(aperture_meas - last_aperture_) < cfg_.stall_eps;
  last_aperture_ = aperture_meas;
  if (closed && stalled) current_.frozen = true;
  return current_;
}

void AnchorPolicy::reset(const ContactAnchor& p0,
                         const egogym::Observation& obs) {
  tracker_.reset(p0, obs.camera_pose, obs.aperture_meas);
}

const ContactAnchor& AnchorPolicy::track(const egogym::Observation& obs) {
  return tracker_.update(obs.camera_pose, obs.aperture_meas);
}

PolicyAgent::PolicyAgent(std::shared_ptr<const PolicyModel> model,
                         TrackerConfig cfg)
    : AnchorPolicy(cfg), model_(std::move(model)) {
  if (!model_) {
    throw Error(ErrorCode::kModelLoadFailure, "policy agent needs a model");
  }
}

void PolicyAgent::reset(const ContactAnchor& p0,
                        const egogym::Observation& obs) {
  AnchorPolicy::reset(p0, obs);
  history_.clear();
  last_ = {};
}

egogym::Action PolicyAgent::act(const egogym::Observation& obs) {
  const ContactAnchor& anchor = track(obs);
  history_.push_back(featurize(obs, anchor));
  while (history_.size() > static_cast<size_t>(kContext)) history_.pop_front();
  std::vector<Vector> context;
  // Short histories are padded by repeating the first token.
  for (size_t i = history_.size(); i < static_cast<size_t>(kContext); ++i) {
    context.push_back(history_.front());
  }
  for (const Vector& s : history_) context.push_back(s);
  last_ = model_->predict(context);
  return to_action(last_.action);
}

ScriptedServo::ScriptedServo(Task task, ServoConfig cfg, TrackerConfig tracker)
    : AnchorPolicy(tracker), task_(task), cfg_(std::move(cfg)) {}

void ScriptedServo::reset(const ContactAnchor& p0,
                          const egogym::Observation& obs) {
  AnchorPolicy::reset(p0, obs);
  closing_ = false;
  command_ = 1.0;
}

egogym::Action ScriptedServo::act(const egogym::Observation& obs) {
  const ContactAnchor& anchor = track(obs);
  egogym::Action a;
  if (anchor.frozen) {
    command_ = std::max(0.0, command_ - cfg_.close_rate);
    a.aperture_cmd = command_;
    switch (task_) {
      case Task::kPick:
        a.delta_translation =
            obs.camera_pose.rotation_matrix().transpose() *
            Vec3(0.0, 0.0, cfg_.lift_step);
        break;
      case Task::kOpen:
        a.delta_translation = Vec3(0.0, 0.0, -cfg_.pull_step);
        break;
      case Task::kClose:
        a.delta_translation = Vec3(0.0, 0.0, cfg_.pull_step);
        break;
    }
    return a;
  }
  const Vec3 error = anchor.point - cfg_.tip_offset;
  if (closing_ || error.norm() <= cfg_.close_radius) {
    closing_ = true;
    command_ = std::max(0.0, command_ - cfg_.close_rate);
    a.aperture_cmd = command_;
    return a;
  }
  const double n = error.norm();
  a.delta_translation =
      n > cfg_.approach_step ? Vec3(error * (cfg_.approach_step / n)) : error;
  a.aperture_cmd = 1.0;
  return a;
}

}  // namespace cap::policy

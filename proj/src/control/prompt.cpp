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

#include "cap/control.hpp"
#include "cap/error.hpp"

namespace cap::control {
namespace {

Vec3 to_camera(const egogym::SimState& state, const Vec3& world) {
  return transform_point(inverse(state.ee_pose), world);
}

// Pixel index holding the continuous coordinate (pixel centers are integral).
std::pair<int, int> pixel_index(const CameraIntrinsics& k, const Vec2& px) {
  const int u = std::clamp(static_cast<int>(std::lround(px.x())), 0, k.width - 1);
  const int v = std::clamp(static_cast<int>(std::lround(px.y())), 0, k.height - 1);
  return {u, v};
}

ContactAnchor deproject_with_depth_map(const CameraIntrinsics& k,
                                       const egogym::Observation& obs,
                                       const Vec2& px) {
  if (!(px.x() >= 0.0 && px.x() < k.width && px.y() >= 0.0 &&
        px.y() < k.height)) {
    throw Error(ErrorCode::kOutOfBounds, "prompt pixel outside the image");
  }
  const auto [u, v] = pixel_index(k, px);
  return deproject(k, px.x(), px.y(), obs.depth.at(u, v));
}

}  // namespace

std::string to_string(PromptKind kind) {
  switch (kind) {
    case PromptKind::kOracle: return "oracle";
    case PromptKind::kClick: return "click";
    case PromptKind::kPointingModel: return "pointing";
    case PromptKind::kMockPointing: return "mock";
  }
  return "oracle";
}

PromptKind prompt_kind_from_string(const std::string& name) {
  if (name == "oracle") return PromptKind::kOracle;
  if (name == "click") return PromptKind::kClick;
  if (name == "pointing") return PromptKind::kPointingModel;
  if (name == "mock") return PromptKind::kMockPointing;
  throw Error(ErrorCode::kInvalidArgument, "unknown prompt source " + name);
}

void PromptSource::validate() const {
  if (!(sigma_px >= 0.0) || !std::isfinite(sigma_px)) {
    throw Error(ErrorCode::kInvalidArgument, "sigma must be >= 0");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "alpha must lie in [0, 1]");
  }
  if (kind == PromptKind::kPointingModel) {
    if (endpoint.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "pointing model needs a URL");
    }
    if (!(timeout_s > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "timeout must be positive");
    }
  }
}

std::vector<Candidate> prompt_candidates(const egogym::SceneSpec& scene,
                                         const egogym::SimState& state) {
  std::vector<Candidate> out;
  if (scene.task == Task::kPick) {
    if (state.target < 0) {
      throw Error(ErrorCode::kUnknownTarget, "scene has no target object");
    }
    auto add = [&](int i) {
      out.push_back({scene.objects[i].id, state.object_poses[i].translation()});
    };
    add(state.target);
    for (int i = 0; i < static_cast<int>(scene.objects.size()); ++i) {
      if (i != state.target) add(i);
    }
    return out;
  }
  auto add = [&](int i) {
    const auto& a = scene.articulations[i];
    out.push_back({a.handle_id, egogym::handle_pose(a, state.q[i]).translation()});
  };
  add(state.goal);
  for (int i = 0; i < static_cast<int>(scene.articulations.size()); ++i) {
    if (i != state.goal) add(i);
  }
  return out;
}

ContactAnchor make_prompt(const PromptSource& src,
                          const egogym::SceneSpec& scene,
                          const egogym::SimState& state,
                          const egogym::Observation& obs,
                          const CameraIntrinsics& k, std::string_view query,
                          Rng* rng) {
  src.validate();
  switch (src.kind) {
    case PromptKind::kOracle: {
      const Vec3 p = to_camera(state, prompt_candidates(scene, state)[0]
                                          .grasp_point_world);
      if (!(p.z() > 0.0)) {
        throw Error(ErrorCode::kNonPositiveDepth, "target behind the camera");
      }
      const Vec2 px = project(k, p);
      return deproject(k, px.x(), px.y(), p.z());
    }
    case PromptKind::kClick:
      return deproject_with_depth_map(k, obs, src.click);
    case PromptKind::kPointingModel:
      return deproject_with_depth_map(
          k, obs,
          query_pointing_model(src.endpoint, src.timeout_s, obs.rgb, query));
    case PromptKind::kMockPointing: {
      if (!rng) {
        throw Error(ErrorCode::kInvalidArgument, "mock pointing needs an rng");
      }
      const std::vector<Candidate> cands = prompt_candidates(scene, state);
      size_t pick = 0;
      if (cands.size() > 1 && rng->bernoulli(src.alpha)) {
        pick = 1 + rng->index(cands.size() - 1);
      }
      const Vec3 p = to_camera(state, cands[pick].grasp_point_world);
      if (!(p.z() > 0.0)) {
        throw Error(ErrorCode::kNonPositiveDepth, "candidate behind the camera");
      }
      Vec2 px = project(k, p);
      if (src.sigma_px > 0.0) {
        px += Vec2(rng->normal(0.0, src.sigma_px), rng->normal(0.0, src.sigma_px));
      }
      px.x() = std::clamp(px.x(), 0.0, k.width - 1.0);
      px.y() = std::clamp(px.y(), 0.0, k.height - 1.0);
      // A point landing on a graspable body is snapped to that body's grasp
      // depth, as a pointing model names objects rather than surfaces.
      const auto [u, v] = pixel_index(k, px);
      const int body = obs.segmentation.empty() ? 0 : obs.segmentation.at(u, v);
      for (const Candidate& c : cands) {
        if (c.body_id == body) {
          return deproject(k, px.x(), px.y(),
                           to_camera(state, c.grasp_point_world).z());
        }
      }
      return deproject(k, px.x(), px.y(), obs.depth.at(u, v));
    }
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown prompt source");
}

}  // namespace cap::control

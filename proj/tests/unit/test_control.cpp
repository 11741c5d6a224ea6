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


#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

#include "cap/control.hpp"
#include "cap/error.hpp"
#include "doctest.h"
#include "httplib.h"
#include "json.hpp"

using namespace cap;
using namespace cap::control;
using egogym::SceneSpec;

namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::kInvalidArgument;
}

struct Fixture {
  std::unique_ptr<egogym::Environment> env;
  egogym::Observation obs;

  Fixture(uint64_t seed, int distractors, Task task = Task::kPick,
          egogym::SceneVariant variant = egogym::SceneVariant::kStandard) {
    egogym::EnvOptions eo;
    eo.seed = seed;
    eo.distractor_count = distractors;
    eo.variant = variant;
    env = std::make_unique<egogym::Environment>(
        egogym::generate_scene(task, seed, distractors, variant), eo);
    obs = env->reset();
  }
  ContactAnchor prompt(const PromptSource& src, Rng* rng = nullptr) const {
    return make_prompt(src, env->scene(), env->state(), obs,
                       env->sim_config().intrinsics, "the object", rng);
  }
  int body_at(const ContactAnchor& a) const {
    const Vec2 px = project(env->sim_config().intrinsics, a.point);
    // Pixel (u, v) samples the ray through integer coordinates.
    return obs.segmentation.at(static_cast<int>(std::lround(px.x())),
                               static_cast<int>(std::lround(px.y())));
  }
};

// Signed distance to a primitive in its own frame.
double primitive_distance(const egogym::SceneObject& o, const Vec3& p) {
  const Vec3& h = o.half_extents;
  switch (o.primitive) {
    case egogym::Primitive::kSphere:
      return p.norm() - h.x();
    case egogym::Primitive::kCylinder: {
      const double dr = std::hypot(p.x(), p.y()) - h.x();
      const double dz = std::abs(p.z()) - h.z();
      return std::min(std::max(dr, dz), 0.0) +
             std::hypot(std::max(dr, 0.0), std::max(dz, 0.0));
    }
    case egogym::Primitive::kBox: {
      const Vec3 q = p.cwiseAbs() - h;
      return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
    }
  }
  return 0.0;
}

std::string base64_decode(const std::string& in) {
  const std::string abc =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  uint32_t acc = 0;
  int bits = 0;
  for (char c : in) {
    if (c == '=') break;
    acc = (acc << 6) | static_cast<uint32_t>(abc.find(c));
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<char>((acc >> bits) & 0xff));
    }
  }
  return out;
}

AttemptTrace outcome(bool success) {
  AttemptTrace t;
  t.success = success;
  return t;
}

}  // namespace

TEST_CASE("prompt source validation") {
  PromptSource s;
  s.kind = PromptKind::kMockPointing;
  s.sigma_px = -1;
  CHECK(code_of([&] { s.validate(); }) == ErrorCode::kInvalidArgument);
  s.sigma_px = 0;
  s.alpha = 1.5;
  CHECK(code_of([&] { s.validate(); }) == ErrorCode::kInvalidArgument);
  CHECK(prompt_kind_from_string(to_string(PromptKind::kPointingModel)) ==
        PromptKind::kPointingModel);
  CHECK(code_of([] { prompt_kind_from_string("ouija"); }) == ErrorCode::kInvalidArgument);
  PromptSource pm;
  pm.kind = PromptKind::kPointingModel;
  CHECK(code_of([&] { pm.validate(); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("mock pointing without noise or confusion equals the oracle") {
  PromptSource oracle, mock;
  mock.kind = PromptKind::kMockPointing;
  for (uint64_t seed = 0; seed < 30; ++seed) {
    Fixture f(seed, 0);
    Rng rng(seed);
    const ContactAnchor a = f.prompt(oracle), b = f.prompt(mock, &rng);
    REQUIRE(a == b);
    // The oracle anchor is the target's grasp point.
    const Vec3 world = transform_point(f.obs.camera_pose, a.point);
    REQUIRE((world - f.env->state().object_poses[f.env->state().target].translation())
                .norm() < 1e-9);
  }
  Fixture f(1, 0);
  CHECK(code_of([&] { f.prompt(mock); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("forced confusion never lands on the target") {
  PromptSource mock;
  mock.kind = PromptKind::kMockPointing;
  mock.alpha = 1.0;
  int on_distractor = 0;
  for (uint64_t seed = 0; seed < 60; ++seed) {
    Fixture f(seed, 1 + seed % 5);
    Rng rng(seed);
    const ContactAnchor a = f.prompt(mock, &rng);
    const int target_id = f.env->scene().objects[f.env->state().target].id;
    REQUIRE(f.body_at(a) != target_id);
    on_distractor += f.body_at(a) != target_id && f.body_at(a) >= egogym::kFirstObjectId &&
                     f.body_at(a) < egogym::kFirstFixtureId;
  }
  CHECK(on_distractor >= 50);

  // With alpha = 0 every prompt names the target, unless a distractor hides
  // the target's grasp point.
  mock.alpha = 0.0;
  int visible = 0;
  for (uint64_t seed = 0; seed < 30; ++seed) {
    Fixture f(seed, 4);
    Rng rng(seed);
    const int target_id = f.env->scene().objects[f.env->state().target].id;
    const ContactAnchor a = f.prompt(mock, &rng);
    if (f.body_at(f.prompt(PromptSource{})) != target_id) continue;
    ++visible;
    REQUIRE(f.body_at(a) == target_id);
  }
  CHECK(visible >= 25);
}

TEST_CASE("click deprojects onto the rendered surface") {
  const auto& k = egogym::SimConfig{}.intrinsics;
  int visible = 0;
  for (uint64_t seed = 0; seed < 30; ++seed) {
    Fixture f(seed, 2);
    const auto& s = f.env->state();
    const auto& obj = f.env->scene().objects[s.target];
    const Vec3 c = transform_point(inverse(f.obs.camera_pose), s.object_poses[s.target].translation());
    PromptSource click;
    click.kind = PromptKind::kClick;
    click.click = project(k, c);
    if (f.body_at(deproject(k, click.click.x(), click.click.y(), 1.0)) != obj.id) continue;
    ++visible;
    const ContactAnchor a = f.prompt(click);
    const Vec3 local = transform_point(inverse(s.object_poses[s.target]),
                                       transform_point(f.obs.camera_pose, a.point));
    REQUIRE(std::abs(primitive_distance(obj, local)) < 0.005);
    // The anchor lies on the clicked pixel's ray.
    REQUIRE((project(k, a.point) - click.click).norm() < 1e-6);
  }
  CHECK(visible >= 25);
  Fixture f(3, 0);
  PromptSource out;
  out.kind = PromptKind::kClick;
  out.click = Vec2(-5, 10);
  CHECK(code_of([&] { f.prompt(out); }) == ErrorCode::kOutOfBounds);
  // Background pixels have no depth.
  out.click = Vec2(0, 0);
  if (f.obs.depth.at(0, 0) <= 0.0) {
    CHECK(code_of([&] { f.prompt(out); }) == ErrorCode::kNonPositiveDepth);
  }
}

TEST_CASE("oracle prompt ignores distractors") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Fixture f(seed, 4);
    SceneSpec alone = f.env->scene();
    const int t = f.env->state().target;
    alone.objects = {alone.objects[t]};
    egogym::SimState st = f.env->state();
    st.object_poses = {st.object_poses[t]};
    st.target = 0;
    const PromptSource oracle;
    const auto& k = f.env->sim_config().intrinsics;
    REQUIRE(make_prompt(oracle, alone, st, f.obs, k, "", nullptr) == f.prompt(oracle));
  }
}

TEST_CASE("articulated prompts aim at the goal handle") {
  Fixture f(5, 0, Task::kOpen);
  const ContactAnchor a = f.prompt(PromptSource{});
  const auto& s = f.env->state();
  const auto& art = f.env->scene().articulations[s.goal];
  const Vec3 handle = egogym::handle_pose(art, s.q[s.goal]).translation();
  CHECK((transform_point(f.obs.camera_pose, a.point) - handle).norm() < 1e-9);
}

TEST_CASE("ground-truth and noisy verifiers") {
  Fixture f(2, 0);
  f.env->mutable_state().max_lift = 0.04;
  CHECK(verify(Verifier{}, outcome(f.env->success()), 0));
  f.env->mutable_state().max_lift = 0.02;
  CHECK_FALSE(verify(Verifier{}, outcome(f.env->success()), 0));

  Verifier fp1{VerifierKind::kNoisy, 1.0, 0.0};
  CHECK(verify(fp1, outcome(false), 17));
  CHECK(verify(fp1, outcome(true), 17));

  Verifier exact{VerifierKind::kNoisy, 0.0, 0.0};
  for (uint64_t s = 0; s < 1000; ++s) {
    const AttemptTrace t = outcome(s % 3 == 0);
    REQUIRE(verify(exact, t, s) == verify(Verifier{}, t, s));
  }

  // Empirical rates: binomial, 4 standard deviations at n = 4000.
  Verifier noisy{VerifierKind::kNoisy, 0.2, 0.1};
  int fp = 0, fn = 0;
  const int n = 4000;
  for (int s = 0; s < n; ++s) {
    fp += verify(noisy, outcome(false), s);
    fn += !verify(noisy, outcome(true), s);
  }
  CHECK(std::abs(fp / double(n) - 0.2) < 4 * std::sqrt(0.2 * 0.8 / n));
  CHECK(std::abs(fn / double(n) - 0.1) < 4 * std::sqrt(0.1 * 0.9 / n));
  CHECK(verify(noisy, outcome(false), 99) == verify(noisy, outcome(false), 99));

  Verifier bad{VerifierKind::kNoisy, -0.1, 0.0};
  CHECK(code_of([&] { verify(bad, outcome(true), 0); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("retry loop") {
  const Verifier gt;
  const RetryResult ok = run_with_retries([](int) { return outcome(true); }, gt, 10, 1);
  CHECK(ok.attempts == 1);
  CHECK(ok.verified);
  CHECK(ok.ground_truth);

  const RetryResult bad = run_with_retries([](int) { return outcome(false); }, gt, 10, 1);
  CHECK(bad.attempts == 11);
  CHECK_FALSE(bad.verified);
  CHECK(bad.records.size() == 11);

  int calls = 0;
  const RetryResult thrown = run_with_retries(
      [&](int k) {
        ++calls;
        if (k < 2) throw Error(ErrorCode::kNonPositiveDepth, "behind");
        return outcome(true);
      },
      gt, 10, 1);
  CHECK(thrown.attempts == 3);
  CHECK(thrown.verified);
  CHECK_FALSE(thrown.records[0].error.empty());

  // A noisy verifier can stop the loop on a false positive.
  const RetryResult fooled = run_with_retries(
      [](int) { return outcome(false); }, Verifier{VerifierKind::kNoisy, 1.0, 0.0}, 10, 1);
  CHECK(fooled.attempts == 1);
  CHECK(fooled.verified);
  CHECK_FALSE(fooled.ground_truth);

  CHECK(code_of([&] { run_with_retries([](int) { return outcome(true); }, gt, -1, 0); }) ==
        ErrorCode::kInvalidArgument);
}

TEST_CASE("coin-flip attempts follow the geometric series") {
  const int trials = 2000;
  std::vector<int> first_success(trials, -1);
  int wins = 0;
  for (int i = 0; i < trials; ++i) {
    Rng rng(mix_seed(77, i));
    const RetryResult r = run_with_retries(
        [&](int) { return outcome(rng.bernoulli(0.5)); }, Verifier{}, 10, i);
    wins += r.verified;
    if (r.verified) first_success[i] = r.attempts;
  }
  CHECK(std::abs(wins / double(trials) - (1.0 - std::pow(0.5, 11))) <= 0.03);
  // Success after r attempts is monotone in r.
  int prev = 0;
  for (int r = 1; r <= 11; ++r) {
    const int c = static_cast<int>(std::count_if(first_success.begin(), first_success.end(),
                                                 [&](int a) { return a > 0 && a <= r; }));
    CHECK(c >= prev);
    prev = c;
  }
}

TEST_CASE("sim attempts with the scripted servo") {
  SimTrialConfig cfg;
  cfg.seed = 11;
  const AttemptFn fn = make_sim_attempt(cfg, [](Task t) {
    return std::make_unique<policy::ScriptedServo>(t);
  });
  const RetryResult r = run_with_retries(fn, Verifier{}, 10, 11);
  CHECK(r.verified);
  CHECK(r.ground_truth);
  CHECK(r.records[0].trace.anchor.has_value());
  CHECK(code_of([&] { make_sim_attempt(cfg, nullptr); }) == ErrorCode::kInvalidArgument);

  // max_steps = 0 never moves.
  Fixture f(11, 0);
  policy::ScriptedServo servo(Task::kPick);
  const AttemptTrace t = rollout(*f.env, servo, f.prompt(PromptSource{}), 0);
  CHECK(t.steps == 0);
  CHECK_FALSE(t.success);
  CHECK(code_of([&] { rollout(*f.env, servo, f.prompt(PromptSource{}), -1); }) ==
        ErrorCode::kInvalidArgument);
}

TEST_CASE("plan parsing") {
  const ToolPlan p = plan_from_json(nlohmann::json::parse(R"({"stages":[
      {"tool":"open","query":"door"},
      {"tool":"pick","query":"cup","max_retries":3,"verifier":{"kind":"noisy","fp":0.1,"fn":0.2}},
      {"tool":"drop"},{"tool":"move_base"}]})"));
  REQUIRE(p.stages.size() == 4);
  CHECK(p.stages[0].max_retries == 10);
  CHECK(p.stages[1].verifier.kind == VerifierKind::kNoisy);
  CHECK(p.stages[1].verifier.false_negative == 0.2);
  CHECK(p.stages[3].tool == Tool::kMoveBase);

  auto err = [](const char* text) {
    return code_of([&] { plan_from_json(nlohmann::json::parse(text)); });
  };
  CHECK(err(R"({"stages":[]})") == ErrorCode::kInvalidArgument);
  CHECK(err(R"({})") == ErrorCode::kInvalidArgument);
  CHECK(err(R"({"stages":[{"tool":"pick","max_retries":11}]})") == ErrorCode::kInvalidArgument);
  CHECK(err(R"({"stages":[{"tool":"juggle"}]})") == ErrorCode::kUnknownTool);
  CHECK(err(R"({"stages":[{"tool":"pick","verifier":{"kind":"oracle"}}]})") ==
        ErrorCode::kInvalidArgument);
  CHECK(err(R"({"stages":[{"tool":"pick","verifier":{"kind":"noisy","fp":2}}]})") ==
        ErrorCode::kInvalidArgument);
}

TEST_CASE("composer with stub tools") {
  ToolRegistry stubs;
  int calls = 0;
  for (Tool t : {Tool::kOpen, Tool::kPick, Tool::kDrop, Tool::kClose}) {
    stubs.add(t, [&](World&, const PlanStage&, int) {
      ++calls;
      return outcome(true);
    });
  }
  ToolPlan plan;
  for (Tool t : {Tool::kOpen, Tool::kPick, Tool::kDrop, Tool::kClose}) {
    PlanStage s;
    s.tool = t;
    plan.stages.push_back(s);
  }
  World w = World::from_scene(egogym::generate_scene(Task::kPick, 1, 0));
  const ComposeReport r = compose_tools(plan, w, stubs, 1);
  CHECK(r.verified_stages() == 4);
  CHECK(calls == 4);
  CHECK(r.to_json()["stages"].size() == 4);

  // An exhausted stage aborts the rest.
  stubs.add(Tool::kPick, [](World&, const PlanStage&, int) { return outcome(false); });
  plan.stages[1].max_retries = 2;
  const ComposeReport a = compose_tools(plan, w, stubs, 1);
  CHECK(a.stages[0].status == StageStatus::kSuccess);
  CHECK(a.stages[1].status == StageStatus::kAborted);
  CHECK(a.stages[1].attempts == 3);
  CHECK(a.stages[2].status == StageStatus::kNotAttempted);
  CHECK(a.stages[3].status == StageStatus::kNotAttempted);
  CHECK(a.to_json()["stages"][2]["status"] == "not_attempted");

  // Missing tools fail before anything runs.
  calls = 0;
  plan.stages.push_back(PlanStage{Tool::kMoveBase, "", 10, {}});
  CHECK(code_of([&] { compose_tools(plan, w, stubs, 1); }) == ErrorCode::kUnknownTool);
  CHECK(calls == 0);
}

TEST_CASE("verifier false positive on a partial open blocks the pick") {
  const auto plan = plan_from_json(nlohmann::json::parse(R"({"stages":[
      {"tool":"open","query":"door","max_retries":0,"verifier":{"kind":"noisy","fp":1}},
      {"tool":"pick","query":"cup","max_retries":2},
      {"tool":"drop"}]})"));
  int blocked = 0;
  for (uint64_t seed = 0; seed < 5; ++seed) {
    const SceneSpec scene = egogym::generate_scene(Task::kPick, seed, 0,
                                                   egogym::SceneVariant::kComposeCabinet);
    SimToolOptions partial;
    partial.open_limit = 0.25;
    World w = World::from_scene(scene);
    const ComposeReport r = compose_tools(plan, w, sim_tools(partial), seed);
    REQUIRE(r.stages[0].status == StageStatus::kSuccess);
    CHECK_FALSE(r.stages[0].ground_truth);
    blocked += r.stages[1].status == StageStatus::kAborted;
    CHECK(r.stages[2].status == StageStatus::kNotAttempted);

    World full = World::from_scene(scene);
    const ComposeReport ok = compose_tools(plan, full, sim_tools(), seed);
    CHECK(ok.stages[0].ground_truth);
    CHECK(ok.verified_stages() == 3);
  }
  CHECK(blocked == 5);
}

TEST_CASE("clear-table plan with oracle tools") {
  for (uint64_t seed = 0; seed < 3; ++seed) {
    const SceneSpec scene =
        egogym::generate_scene(Task::kPick, seed, 5, egogym::SceneVariant::kClearTable);
    REQUIRE(scene.objects.size() == 5);
    ToolPlan plan;
    for (const auto& o : scene.objects) {
      plan.stages.push_back(PlanStage{Tool::kPick, o.name, 10, {}});
      plan.stages.push_back(PlanStage{Tool::kDrop, "", 10, {}});
    }
    World w = World::from_scene(scene);
    const ComposeReport r = compose_tools(plan, w, sim_tools(), seed);
    CHECK(r.verified_stages() == 10);
    const auto& zone = *w.scene.drop_zone;
    for (const auto& p : w.state.object_poses) {
      CHECK(std::abs(p.translation().x() - zone.center.x()) <= zone.half_extent.x());
    }
  }
}

TEST_CASE("pointing model client") {
  httplib::Server srv;
  std::atomic<int> hits{0};
  nlohmann::json last;
  srv.Post("/point", [&](const httplib::Request& req, httplib::Response& res) {
    ++hits;
    last = nlohmann::json::parse(req.body);
    res.set_content(R"({"u": 112.0, "v": 120.5})", "application/json");
  });
  srv.Post("/slow", [&](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(800));
    res.set_content(R"({"u": 1, "v": 1})", "application/json");
  });
  srv.Post("/broken", [](const httplib::Request&, httplib::Response& res) {
    res.status = 500;
  });
  srv.Post("/garbage", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"x": 1})", "application/json");
  });
  const int port = srv.bind_to_any_port("127.0.0.1");
  std::thread th([&] { srv.listen_after_bind(); });
  srv.wait_until_ready();
  const std::string base = "http://127.0.0.1:" + std::to_string(port);

  Fixture f(4, 0);
  const Vec2 px = query_pointing_model(base + "/point", 2.0, f.obs.rgb, "red mug");
  CHECK(px == Vec2(112.0, 120.5));
  CHECK(last["query"] == "red mug");
  const std::string png = base64_decode(last["image"].get<std::string>());
  const std::vector<uint8_t> bytes(png.begin(), png.end());
  CHECK(decode_png_rgb(bytes) == f.obs.rgb);
  CHECK(base64_encode("Man") == "TWFu");

  CHECK(code_of([&] { query_pointing_model(base + "/slow", 0.2, f.obs.rgb, "x"); }) ==
        ErrorCode::kPointingTimeout);
  CHECK(code_of([&] { query_pointing_model(base + "/broken", 2.0, f.obs.rgb, "x"); }) ==
        ErrorCode::kInvalidArgument);
  CHECK(code_of([&] { query_pointing_model(base + "/garbage", 2.0, f.obs.rgb, "x"); }) ==
        ErrorCode::kInvalidArgument);

  PromptSource src;
  src.kind = PromptKind::kPointingModel;
  src.endpoint = base + "/point";
  PromptSource click;
  click.kind = PromptKind::kClick;
  click.click = Vec2(112.0, 120.5);
  if (f.obs.depth.at(112, 120) > 0.0) CHECK(f.prompt(src) == f.prompt(click));

  // Concurrent requests each get their own answer.
  hits = 0;
  std::vector<std::thread> clients;
  for (int i = 0; i < 4; ++i) {
    clients.emplace_back([&] { query_pointing_model(base + "/point", 2.0, f.obs.rgb, "q"); });
  }
  for (auto& c : clients) c.join();
  CHECK(hits == 4);

  srv.stop();
  th.join();
  CHECK(code_of([&] { query_pointing_model(base + "/point", 0.5, f.obs.rgb, "x"); }) ==
        ErrorCode::kPointingTimeout);
}

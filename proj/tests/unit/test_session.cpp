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


#include <chrono>
#include <cmath>
#include <random>
#include <sstream>
#include <thread>

#include "cap/control.hpp"
#include "cap/image.hpp"
#include "cap/session.hpp"
#include "doctest.h"
#include "httplib.h"
#include "json.hpp"

using namespace cap;
using nlohmann::json;

namespace {

struct Service {
  session::SessionServer server;
  int port;
  explicit Service(session::ServiceOptions o = {}) : server(std::move(o)), port(server.start()) {}
  ~Service() { server.stop(); }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(30, 0);
    return c;
  }
};

std::vector<json> parse_lines(const std::string& body) {
  std::vector<json> out;
  std::istringstream in(body);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(json::parse(line));
  }
  return out;
}

json post(httplib::Client& c, const std::string& path, const json& body, int expect) {
  const auto r = c.Post(path, body.dump(), "application/json");
  REQUIRE(r);
  CHECK_MESSAGE(r->status == expect, path << " -> " << r->body);
  const json j = json::parse(r->body);
  CHECK(j.at("schema_version") == session::kSessionSchemaVersion);
  return j;
}

std::string create(httplib::Client& c, const std::string& task, uint64_t seed, int n = 0) {
  return post(c, "/sessions", {{"task", task}, {"seed", seed}, {"distractor_count", n}}, 201)
      .at("id");
}

// Collects the rollout stream; stops reading after `keep` lines when keep > 0.
std::vector<json> rollout(httplib::Client& c, const std::string& id, const json& body,
                          int keep = 0, int* status = nullptr) {
  std::string buf;
  int lines = 0;
  httplib::Request req;
  req.method = "POST";
  req.path = "/sessions/" + id + "/rollout";
  req.body = body.dump();
  req.set_header("Content-Type", "application/json");
  req.content_receiver = [&](const char* data, size_t n, uint64_t, uint64_t) {
    buf.append(data, n);
    lines = static_cast<int>(std::count(buf.begin(), buf.end(), '\n'));
    return keep == 0 || lines < keep;
  };
  const auto r = c.send(req);
  if (status) *status = r ? r->status : -1;
  if (keep > 0) buf.resize(buf.rfind('\n') + 1);
  return parse_lines(buf);
}

std::vector<json> events(httplib::Client& c, const std::string& id, int from = 0) {
  const auto r = c.Get("/sessions/" + id + "/events?from=" + std::to_string(from));
  REQUIRE(r);
  REQUIRE(r->status == 200);
  return parse_lines(r->body);
}

json status(httplib::Client& c, const std::string& id) {
  const auto r = c.Get("/sessions/" + id);
  REQUIRE(r);
  return json::parse(r->body);
}

void wait_finished(httplib::Client& c, const std::string& id) {
  for (int i = 0; i < 600; ++i) {
    if (status(c, id)["state"] == "Finished") return;
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  FAIL("session never finished");
}

// The same environment the service builds, for oracle prompts.
std::unique_ptr<egogym::Environment> local_env(uint64_t seed, int n = 0) {
  egogym::EnvOptions eo;
  eo.seed = seed;
  eo.distractor_count = n;
  auto env = egogym::make_env("EgoGym-Pick-v0", eo);
  env->reset();
  return env;
}

ContactAnchor oracle_anchor(const egogym::Environment& env) {
  return control::make_prompt(control::PromptSource{}, env.scene(), env.state(),
                              env.observe(), env.sim_config().intrinsics, "", nullptr);
}

json xyz(const ContactAnchor& a) {
  return {{"x", a.point.x()}, {"y", a.point.y()}, {"z", a.point.z()}};
}

RigidTransform pose_of(const json& sidecar) {
  const auto& r = sidecar.at("pose").at("rotation");
  const auto& t = sidecar.at("pose").at("translation");
  return RigidTransform(Quat(r[0].get<double>(), r[1].get<double>(), r[2].get<double>(),
                             r[3].get<double>()),
                        Vec3(t[0].get<double>(), t[1].get<double>(), t[2].get<double>()));
}

}  // namespace

TEST_CASE("session creation") {
  Service svc;
  auto c = svc.client();
  const json j = post(c, "/sessions", {{"task", "pick"}, {"seed", 7}}, 201);
  CHECK(j["width"] == 224);
  CHECK(j["height"] == 224);
  CHECK(j["state"] == "AwaitingPrompt");
  CHECK(j["policy"] == "servo");
  CHECK(j["intrinsics"]["fx"].get<double>() > 0.0);
  CHECK(post(c, "/sessions", {{"task", "juggle"}}, 400)["error"] == "UnknownTask");
  CHECK(post(c, "/sessions", {{"task", "pick"}, {"distractor_count", 9}}, 400)["error"] ==
        "BadRequest");
  const auto bad = c.Post("/sessions", "{not json", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  CHECK(status(c, j["id"])["task"] == "pick");
  for (const char* task : {"open", "close"}) create(c, task, 1);

  const std::string a = create(c, "pick", 7), b = create(c, "pick", 7);
  CHECK(a != b);
  const auto fa = c.Get("/sessions/" + a + "/frame"), fb = c.Get("/sessions/" + b + "/frame");
  REQUIRE(fa);
  REQUIRE(fb);
  CHECK(fa->body == fb->body);
  CHECK(fa->get_header_value("ETag") == fb->get_header_value("ETag"));
}

TEST_CASE("model unavailable") {
  session::ServiceOptions o;
  o.model_path = "/nonexistent/model.json";
  Service svc(o);
  CHECK_FALSE(svc.server.model_loaded());
  CHECK_FALSE(svc.server.model_error().empty());
  auto c = svc.client();
  CHECK(post(c, "/sessions", {{"task", "pick"}}, 503)["error"] == "ModelUnavailable");
}

TEST_CASE("frames") {
  Service svc;
  auto c = svc.client();
  const std::string id = create(c, "pick", 3);
  const auto r = c.Get("/sessions/" + id + "/frame");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(r->get_header_value("Content-Type") == "image/png");
  const std::vector<uint8_t> bytes(r->body.begin(), r->body.end());
  const RgbImage im = decode_png_rgb(bytes);
  CHECK(im.width == 224);
  CHECK(im.height == 224);
  CHECK(im == local_env(3)->observe().rgb);

  const std::string etag = r->get_header_value("ETag");
  CHECK(c.Get("/sessions/" + id + "/frame")->get_header_value("ETag") == etag);
  const auto cached = c.Get("/sessions/" + id + "/frame", {{"If-None-Match", etag}});
  CHECK(cached->status == 304);
  CHECK(cached->body.empty());

  const auto side = c.Get("/sessions/" + id + "/frame?step=0&format=json");
  REQUIRE(side);
  const json meta = json::parse(side->body);
  CHECK(meta["step"] == 0);
  CHECK(meta["etag"] == etag);
  CHECK(meta["aperture_meas"].get<double>() == doctest::Approx(1.0));
  CHECK(json::parse(r->get_header_value("X-Cap-Frame")) == meta);
  const RigidTransform p = pose_of(meta);
  CHECK((p.translation() - local_env(3)->observe().camera_pose.translation()).norm() < 1e-12);

  CHECK(c.Get("/sessions/nope/frame")->status == 404);
  CHECK(json::parse(c.Get("/sessions/nope/frame")->body)["error"] == "UnknownSession");
  CHECK(c.Get("/sessions/" + id + "/frame?step=5")->status == 404);
  CHECK(c.Get("/sessions/" + id + "/frame?step=x")->status == 400);
}

TEST_CASE("prompts") {
  Service svc;
  auto c = svc.client();
  const auto env = local_env(7);
  const auto& k = env->sim_config().intrinsics;
  const Vec2 px = project(k, oracle_anchor(*env).point);
  const std::string id = create(c, "pick", 7);
  const json echo = post(c, "/sessions/" + id + "/prompt", {{"u", px.x()}, {"v", px.y()}}, 200);
  CHECK(echo["anchor"]["frame"] == "camera");
  CHECK(echo["anchor"]["frozen"] == false);
  CHECK(std::abs(echo["anchor"]["pixel"]["u"].get<double>() - px.x()) <= 0.5);
  CHECK(std::abs(echo["anchor"]["pixel"]["v"].get<double>() - px.y()) <= 0.5);
  // The echo is the deprojection of the clicked pixel with the rendered depth.
  const double d = env->observe().depth.at(static_cast<int>(std::lround(px.x())),
                                             static_cast<int>(std::lround(px.y())));
  CHECK(echo["anchor"]["z"].get<double>() == doctest::Approx(d));

  REQUIRE(env->observe().depth.at(3, 3) == 0.0);
  CHECK(post(c, "/sessions/" + id + "/prompt", {{"u", 3}, {"v", 3}}, 422)["error"] ==
        "NoDepthAtPixel");
  CHECK(post(c, "/sessions/" + id + "/prompt", {{"u", 500}, {"v", 3}}, 422)["error"] ==
        "OutOfBounds");
  CHECK(post(c, "/sessions/" + id + "/prompt", {{"x", 0}, {"y", 0}, {"z", -1}}, 422)["error"] ==
        "NoDepthAtPixel");
  CHECK(post(c, "/sessions/" + id + "/prompt", {{"u", 3}}, 400)["error"] == "BadRequest");
  CHECK(post(c, "/sessions/nope/prompt", {{"u", 3}, {"v", 3}}, 404)["error"] == "UnknownSession");

  // A new prompt replaces the old one until the rollout starts.
  const json moved = post(c, "/sessions/" + id + "/prompt", {{"x", 0.0}, {"y", 0.0}, {"z", 0.5}}, 200);
  CHECK(moved["anchor"]["pixel"]["u"].get<double>() == doctest::Approx(k.cx));
}

TEST_CASE("rollout of the scripted servo") {
  Service svc;
  auto c = svc.client();
  const auto env = local_env(7);
  const std::string id = create(c, "pick", 7);
  int st = 0;
  rollout(c, id, json::object(), 0, &st);
  CHECK(st == 409);  // no prompt yet
  post(c, "/sessions/" + id + "/prompt", xyz(oracle_anchor(*env)), 200);
  CHECK(post(c, "/sessions/" + id + "/rollout", {{"max_steps", -1}}, 400)["error"] == "BadRequest");

  const std::vector<json> ev = rollout(c, id, json::object(), 0, &st);
  CHECK(st == 200);
  REQUIRE(ev.size() >= 2);
  const json& end = ev.back();
  CHECK(end["type"] == "end");
  CHECK(end["failure_class"] == "Success");
  CHECK(end["success"] == true);
  int steps = 0, freezes = 0;
  for (size_t i = 0; i < ev.size(); ++i) {
    CHECK(ev[i]["seq"] == i);
    if (ev[i]["type"] == "step") {
      CHECK(ev[i]["step"] == steps);
      CHECK(ev[i]["frame"] == "frame?step=" + std::to_string(steps + 1));
      CHECK(ev[i]["action"]["delta_translation"].size() == 3);
      ++steps;
    }
    freezes += ev[i]["type"] == "freeze";
  }
  CHECK(freezes == 1);
  CHECK(end["steps"] == steps);
  CHECK(status(c, id)["state"] == "Finished");
  CHECK(status(c, id)["step"] == steps);

  // Every streamed frame can be fetched afterwards.
  const auto last = c.Get("/sessions/" + id + "/frame?step=" + std::to_string(steps));
  CHECK(last->status == 200);
  CHECK(json::parse(last->get_header_value("X-Cap-Frame"))["aperture_cmd"].get<double>() < 1.0);

  CHECK(post(c, "/sessions/" + id + "/prompt", {{"u", 100}, {"v", 100}}, 409)["error"] ==
        "WrongState");
  rollout(c, id, json::object(), 0, &st);
  CHECK(st == 409);
  CHECK(events(c, id) == ev);
}

TEST_CASE("zero-step rollout") {
  Service svc;
  auto c = svc.client();
  const std::string id = create(c, "pick", 2);
  post(c, "/sessions/" + id + "/prompt", xyz(oracle_anchor(*local_env(2))), 200);
  const auto ev = rollout(c, id, {{"max_steps", 0}});
  REQUIRE(ev.size() == 1);
  CHECK(ev[0]["type"] == "end");
  CHECK(ev[0]["steps"] == 0);
  CHECK(ev[0]["frame"] == "frame?step=0");
}

TEST_CASE("disconnect and replay") {
  Service svc;
  auto c = svc.client();
  const std::string id = create(c, "pick", 9);
  post(c, "/sessions/" + id + "/prompt", xyz(oracle_anchor(*local_env(9))), 200);
  const auto head = rollout(c, id, json::object(), 3);
  CHECK(head.size() >= 1);
  wait_finished(c, id);
  const auto all = events(c, id);
  REQUIRE(all.size() > 10);
  CHECK(all.back()["type"] == "end");
  CHECK(all[0] == head[0]);
  const auto tail = events(c, id, 5);
  REQUIRE(tail.size() == all.size() - 5);
  for (size_t i = 0; i < tail.size(); ++i) CHECK(tail[i] == all[i + 5]);
  CHECK(events(c, id, 100000).empty());
  CHECK(c.Get("/sessions/" + id + "/events?from=-1")->status == 400);

  // Following a finished log returns it and closes.
  const auto f = c.Get("/sessions/" + id + "/events?from=2&follow=1");
  REQUIRE(f);
  CHECK(parse_lines(f->body).size() == all.size() - 2);
}

TEST_CASE("event logs are deterministic") {
  auto run = [](uint64_t seed) {
    Service svc;
    auto c = svc.client();
    const std::string id = create(c, "pick", seed, 2);
    post(c, "/sessions/" + id + "/prompt", xyz(oracle_anchor(*local_env(seed, 2))), 200);
    rollout(c, id, json::object());
    return events(c, id);
  };
  const auto a = run(13), b = run(13);
  CHECK(a == b);
  CHECK(a != run(14));
}

TEST_CASE("one command in flight per session") {
  Service svc;
  auto c = svc.client();
  const std::string id = create(c, "pick", 4);
  post(c, "/sessions/" + id + "/prompt", xyz(oracle_anchor(*local_env(4))), 200);
  std::atomic<bool> started{false};
  std::thread first([&] {
    auto c2 = svc.client();
    rollout(c2, id, json::object());
    started = true;
  });
  // Wait for the rollout to own the session.
  for (int i = 0; i < 200 && status(c, id)["state"] == "AwaitingPrompt"; ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  int st = 0;
  rollout(c, id, json::object(), 0, &st);
  CHECK(st == 409);
  CHECK(post(c, "/sessions/" + id + "/prompt", {{"u", 1}, {"v", 1}}, 409)["error"] == "WrongState");
  first.join();
  const auto ev = events(c, id);
  CHECK(std::count_if(ev.begin(), ev.end(), [](const json& e) { return e["type"] == "end"; }) == 1);
}

TEST_CASE("interleaved sessions stay isolated") {
  const std::vector<uint64_t> seeds = {21, 22, 23, 24};
  std::map<uint64_t, std::vector<json>> solo;
  {
    Service svc;
    auto c = svc.client();
    for (uint64_t s : seeds) {
      const std::string id = create(c, "pick", s, 1);
      post(c, "/sessions/" + id + "/prompt", xyz(oracle_anchor(*local_env(s, 1))), 200);
      rollout(c, id, json::object());
      solo[s] = events(c, id);
    }
  }
  Service svc;
  std::map<uint64_t, std::string> ids;
  {
    auto c = svc.client();
    for (uint64_t s : seeds) ids[s] = create(c, "pick", s, 1);
  }
  std::vector<std::thread> threads;
  for (uint64_t s : seeds) {
    threads.emplace_back([&, s] {
      auto c = svc.client();
      std::mt19937 g(static_cast<unsigned>(s));
      const std::string& id = ids[s];
      // Noise from this client: frame reads on every session and bad prompts.
      for (int i = 0; i < 10; ++i) {
        const uint64_t other = seeds[g() % seeds.size()];
        c.Get("/sessions/" + ids[other] + "/frame");
        c.Post("/sessions/" + id + "/prompt", R"({"u": 1, "v": 1})", "application/json");
      }
      c.Post("/sessions/" + id + "/prompt", xyz(oracle_anchor(*local_env(s, 1))).dump(),
             "application/json");
      std::thread reader([&] {
        auto c3 = svc.client();
        for (int i = 0; i < 20; ++i) {
          c3.Get("/sessions/" + ids[seeds[g() % seeds.size()]] + "/frame?format=json");
        }
      });
      rollout(c, id, json::object());
      reader.join();
    });
  }
  for (auto& t : threads) t.join();
  auto c = svc.client();
  for (uint64_t s : seeds) CHECK(events(c, ids[s]) == solo[s]);
}

TEST_CASE("streamed anchors are fixed in the world until the freeze") {
  Service svc;
  auto c = svc.client();
  for (uint64_t seed : {5, 6, 8}) {
    const std::string id = create(c, "pick", seed);
    post(c, "/sessions/" + id + "/prompt", xyz(oracle_anchor(*local_env(seed))), 200);
    const auto ev = rollout(c, id, json::object());
    std::optional<Vec3> world;
    std::optional<json> frozen;
    int checked = 0;
    for (const json& e : ev) {
      if (e["type"] != "step") continue;
      const json& a = e["anchor"];
      if (a["frozen"] == true) {
        if (!frozen) frozen = a;
        REQUIRE(a == *frozen);
        continue;
      }
      const int t = e["step"];
      const auto side = c.Get("/sessions/" + id + "/frame?format=json&step=" + std::to_string(t));
      const Vec3 w = transform_point(pose_of(json::parse(side->body)),
                                     Vec3(a["x"].get<double>(), a["y"].get<double>(),
                                          a["z"].get<double>()));
      if (!world) world = w;
      REQUIRE((w - *world).norm() < 1e-9);
      ++checked;
    }
    CHECK(checked > 5);
    CHECK(frozen.has_value());
  }
}

TEST_CASE("old finished sessions are evicted") {
  session::ServiceOptions o;
  o.max_sessions = 2;
  Service svc(o);
  auto c = svc.client();
  const std::string a = create(c, "pick", 1), b = create(c, "pick", 2);
  CHECK(post(c, "/sessions", {{"task", "pick"}}, 503)["error"] == "TooManySessions");
  post(c, "/sessions/" + a + "/prompt", {{"x", 0.0}, {"y", 0.0}, {"z", 0.4}}, 200);
  rollout(c, a, {{"max_steps", 0}});
  create(c, "pick", 3);
  CHECK(c.Get("/sessions/" + a)->status == 404);
  CHECK(c.Get("/sessions/" + b)->status == 200);
}

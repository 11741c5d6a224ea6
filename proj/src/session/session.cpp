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


#include "cap/session.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "cap/control.hpp"
#include "cap/error.hpp"
#include "cap/eval.hpp"
#include "cap/policy.hpp"
#include "httplib.h"
#include "json.hpp"

namespace cap::session {

using nlohmann::json;

std::string to_string(SessionState s) {
  switch (s) {
    case SessionState::kAwaitingPrompt: return "AwaitingPrompt";
    case SessionState::kRollingOut: return "RollingOut";
    case SessionState::kFinished: return "Finished";
  }
  return "?";
}

namespace {

struct Fnv {
  uint64_t h = 1469598103934665603ull;
  void bytes(const void* p, size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (size_t i = 0; i < n; ++i) {
      h ^= c[i];
      h *= 1099511628211ull;
    }
  }
  template <typename T>
  void pod(const T& v) { bytes(&v, sizeof(v)); }
  void pose(const RigidTransform& t) {
    const Quat& q = t.rotation();
    for (double d : {q.w(), q.x(), q.y(), q.z(), t.translation().x(),
                     t.translation().y(), t.translation().z()}) {
      pod(d);
    }
  }
};

}  // namespace

std::string state_hash(const egogym::SimState& s) {
  Fnv f;
  f.pose(s.ee_pose);
  for (double d : {s.aperture_cmd, s.aperture_meas, s.finger_left,
                   s.finger_right, s.attach_aperture, s.reward, s.max_reward,
                   s.max_lift, s.initial_target_z}) {
    f.pod(d);
  }
  for (int i : {s.left_contact, s.right_contact, s.attached, s.target, s.goal,
                s.step_count, s.first_attach_step.value_or(-1)}) {
    f.pod(i);
  }
  f.pose(s.attach_offset);
  for (const auto& p : s.object_poses) f.pose(p);
  for (double q : s.q) f.pod(q);
  for (const auto& [body, step] : s.contact_log) {
    f.pod(body);
    f.pod(step);
  }
  f.pod(s.fingers_touched);
  f.pod(s.done);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(f.h));
  return buf;
}

namespace {

struct HttpError {
  int status;
  std::string name;
  std::string message;
};

[[noreturn]] void fail(int status, std::string name, std::string message) {
  throw HttpError{status, std::move(name), std::move(message)};
}

struct Session {
  std::string id;
  Task task = Task::kPick;
  uint64_t seed = 0;
  int distractor_count = 0;
  std::unique_ptr<egogym::Environment> env;

  std::mutex mu;
  std::condition_variable cv;
  SessionState state = SessionState::kAwaitingPrompt;
  std::vector<egogym::SimState> history;   // index = step
  std::optional<ContactAnchor> anchor;
  std::vector<std::string> events;         // NDJSON lines
  bool log_closed = false;
  std::thread worker;
};

json vec_json(const Vec3& v) { return json{{"x", v.x()}, {"y", v.y()}, {"z", v.z()}}; }

json anchor_json(const CameraIntrinsics& k, const ContactAnchor& a) {
  json j = vec_json(a.point);
  j["frame"] = "camera";
  j["frozen"] = a.frozen;
  if (a.point.z() > 0.0) {
    const Vec2 px = project(k, a.point);
    j["pixel"] = json{{"u", px.x()}, {"v", px.y()}};
  } else {
    j["pixel"] = nullptr;
  }
  return j;
}

json action_json(const egogym::Action& a) {
  return json{{"delta_translation",
               {a.delta_translation.x(), a.delta_translation.y(),
                a.delta_translation.z()}},
              {"delta_rotation",
               {a.delta_rotation.x(), a.delta_rotation.y(), a.delta_rotation.z()}},
              {"aperture_cmd", a.aperture_cmd}};
}

std::string frame_ref(int step) { return "frame?step=" + std::to_string(step); }

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    json j = json::parse(req.body);
    if (!j.is_object()) fail(400, "BadRequest", "body must be a JSON object");
    return j;
  } catch (const json::exception& e) {
    fail(400, "BadRequest", e.what());
  }
}

}  // namespace

struct SessionServer::Impl {
  ServiceOptions options;
  std::shared_ptr<const policy::PolicyModel> model;
  std::string model_error;

  httplib::Server server;
  std::thread listener;
  std::atomic<bool> stopping{false};

  std::mutex registry_mu;
  std::map<std::string, std::shared_ptr<Session>> sessions;
  std::deque<std::string> order;
  uint64_t next_id = 1;

  explicit Impl(ServiceOptions o) : options(std::move(o)) {
    if (!options.model_path.empty()) {
      try {
        model = std::make_shared<const policy::PolicyModel>(
            policy::load_model(options.model_path));
      } catch (const std::exception& e) {
        model_error = e.what();
      }
    }
    server.new_task_queue = [] { return new httplib::ThreadPool(32); };
    routes();
  }

  std::shared_ptr<Session> find(const std::string& id) {
    std::lock_guard lk(registry_mu);
    const auto it = sessions.find(id);
    if (it == sessions.end()) fail(404, "UnknownSession", "no session '" + id + "'");
    return it->second;
  }

  std::unique_ptr<policy::AnchorPolicy> make_policy(Task task) const {
    if (model) return std::make_unique<policy::PolicyAgent>(model);
    return std::make_unique<policy::ScriptedServo>(task);
  }

  // Drops the oldest finished session once the registry is full.
  void evict_locked() {
    if (static_cast<int>(sessions.size()) < options.max_sessions) return;
    for (auto it = order.begin(); it != order.end(); ++it) {
      auto s = sessions.at(*it);
      std::lock_guard lk(s->mu);
      if (s->state == SessionState::kFinished || s->log_closed) {
        if (s->worker.joinable()) s->worker.detach();
        sessions.erase(*it);
        order.erase(it);
        return;
      }
    }
    fail(503, "TooManySessions", "session limit reached");
  }

  json create(const json& body) {
    Task task;
    try {
      task = task_from_string(body.value("task", std::string("pick")));
    } catch (const Error& e) {
      fail(400, "UnknownTask", e.what());
    }
    if (!options.model_path.empty() && !model) {
      fail(503, "ModelUnavailable", model_error);
    }
    auto s = std::make_shared<Session>();
    s->task = task;
    s->seed = body.value("seed", uint64_t{0});
    s->distractor_count = body.value("distractor_count", 0);
    if (s->distractor_count < 0 || s->distractor_count > 5) {
      fail(400, "BadRequest", "distractor_count must be in 0..5");
    }
    egogym::EnvOptions eo;
    eo.seed = s->seed;
    eo.distractor_count = s->distractor_count;
    eo.sim.horizon = options.default_horizon;
    const char* names[] = {"EgoGym-Pick-v0", "EgoGym-Open-v0", "EgoGym-Close-v0"};
    s->env = egogym::make_env(names[static_cast<int>(task)], eo);
    s->env->reset();
    s->history.push_back(s->env->state());
    {
      std::lock_guard lk(registry_mu);
      evict_locked();
      s->id = "s" + std::to_string(next_id++);
      sessions[s->id] = s;
      order.push_back(s->id);
    }
    const CameraIntrinsics& k = s->env->sim_config().intrinsics;
    return json{{"schema_version", kSessionSchemaVersion},
                {"id", s->id},
                {"task", cap::to_string(task)},
                {"seed", s->seed},
                {"distractor_count", s->distractor_count},
                {"width", k.width},
                {"height", k.height},
                {"intrinsics", {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}}},
                {"state", to_string(SessionState::kAwaitingPrompt)},
                {"policy", model ? "model" : "servo"},
                {"frame", frame_ref(0)}};
  }

  void get_frame(const httplib::Request& req, httplib::Response& res,
                 const std::string& id) {
    auto s = find(id);
    egogym::SimState st;
    int step = 0;
    {
      std::lock_guard lk(s->mu);
      step = static_cast<int>(s->history.size()) - 1;
      if (req.has_param("step")) {
        try {
          step = std::stoi(req.get_param_value("step"));
        } catch (const std::exception&) {
          fail(400, "BadRequest", "step must be an integer");
        }
        if (step < 0 || step >= static_cast<int>(s->history.size())) {
          fail(404, "UnknownFrame", "no frame at step " + std::to_string(step));
        }
      }
      st = s->history[static_cast<size_t>(step)];
    }
    const std::string etag = "\"" + state_hash(st) + "\"";
    const RigidTransform& pose = st.ee_pose;
    const json meta{
        {"schema_version", kSessionSchemaVersion},
        {"step", step},
        {"etag", etag},
        {"pose",
         {{"rotation", {pose.rotation().w(), pose.rotation().x(),
                        pose.rotation().y(), pose.rotation().z()}},
          {"translation", {pose.translation().x(), pose.translation().y(),
                           pose.translation().z()}}}},
        {"aperture_meas", st.aperture_meas},
        {"aperture_cmd", st.aperture_cmd}};
    res.set_header("ETag", etag);
    res.set_header("Cache-Control", "no-cache");
    if (req.get_param_value("format") == "json") {
      send_json(res, 200, meta);
      return;
    }
    res.set_header("X-Cap-Frame", meta.dump());
    if (req.get_header_value("If-None-Match") == etag) {
      res.status = 304;
      return;
    }
    const egogym::Observation obs =
        egogym::render(s->env->scene(), st, s->env->sim_config());
    const std::vector<uint8_t> png = encode_png(obs.rgb);
    res.status = 200;
    res.set_content(std::string(png.begin(), png.end()), "image/png");
  }

  json prompt(const json& body, const std::string& id) {
    auto s = find(id);
    std::lock_guard lk(s->mu);
    if (s->state != SessionState::kAwaitingPrompt) {
      fail(409, "WrongState", "session is " + to_string(s->state));
    }
    const CameraIntrinsics& k = s->env->sim_config().intrinsics;
    ContactAnchor anchor;
    if (body.contains("u") && body.contains("v")) {
      const double u = body.at("u").get<double>();
      const double v = body.at("v").get<double>();
      if (!(u >= 0.0 && u < k.width && v >= 0.0 && v < k.height)) {
        fail(422, "OutOfBounds", "pixel outside the image");
      }
      control::PromptSource src;
      src.kind = control::PromptKind::kClick;
      src.click = Vec2(u, v);
      const egogym::Observation obs = s->env->observe();
      try {
        anchor = control::make_prompt(src, s->env->scene(), s->env->state(), obs,
                                      k, "", nullptr);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kNonPositiveDepth) {
          fail(422, "NoDepthAtPixel", e.what());
        }
        throw;
      }
    } else if (body.contains("x") && body.contains("y") && body.contains("z")) {
      anchor.point = Vec3(body.at("x").get<double>(), body.at("y").get<double>(),
                          body.at("z").get<double>());
      if (!(anchor.point.z() > 0.0)) {
        fail(422, "NoDepthAtPixel", "anchor must lie in front of the camera");
      }
    } else {
      fail(400, "BadRequest", "prompt needs {u, v} or {x, y, z}");
    }
    s->anchor = anchor;
    return json{{"schema_version", kSessionSchemaVersion},
                {"anchor", anchor_json(k, anchor)},
                {"state", to_string(s->state)}};
  }

  static void append(Session& s, const json& event) {
    std::lock_guard lk(s.mu);
    json e = event;
    e["seq"] = s.events.size();
    s.events.push_back(e.dump() + "\n");
    s.cv.notify_all();
  }

  void run_worker(std::shared_ptr<Session> s, int max_steps,
                  std::unique_ptr<policy::AnchorPolicy> pol, ContactAnchor anchor) {
    const CameraIntrinsics& k = s->env->sim_config().intrinsics;
    json terminal;
    try {
      bool frozen = false;
      const control::AttemptTrace trace = control::rollout(
          *s->env, *pol, anchor, max_steps, [&](const control::StepEvent& ev) {
            {
              std::lock_guard lk(s->mu);
              s->history.push_back(s->env->state());
            }
            if (ev.anchor.frozen && !frozen) {
              frozen = true;
              append(*s, json{{"type", "freeze"}, {"step", ev.step},
                              {"anchor", anchor_json(k, ev.anchor)}});
            }
            append(*s, json{{"type", "step"},
                            {"step", ev.step},
                            {"action", action_json(ev.action)},
                            {"reward", ev.reward},
                            {"anchor", anchor_json(k, ev.anchor)},
                            {"frame", frame_ref(ev.step + 1)},
                            {"done", ev.done}});
          });
      terminal = json{{"type", "end"},
                      {"steps", trace.steps},
                      {"success", trace.success},
                      {"max_reward", trace.max_reward},
                      {"failure_class",
                       eval::classify_outcome(s->env->scene(), s->env->state(),
                                              trace)},
                      {"frame", frame_ref(trace.steps)},
                      {"done", true}};
    } catch (const std::exception& e) {
      terminal = json{{"type", "error"}, {"message", e.what()}, {"done", true}};
    }
    std::lock_guard lk(s->mu);
    terminal["seq"] = s->events.size();
    s->events.push_back(terminal.dump() + "\n");
    s->state = SessionState::kFinished;
    s->log_closed = true;
    s->cv.notify_all();
  }

  void start_rollout(const json& body, const std::string& id) {
    auto s = find(id);
    std::lock_guard lk(s->mu);
    if (s->state != SessionState::kAwaitingPrompt) {
      fail(409, "WrongState", "session is " + to_string(s->state));
    }
    if (!s->anchor) fail(409, "WrongState", "no prompt set");
    int max_steps = options.default_horizon;
    if (body.contains("max_steps")) max_steps = body.at("max_steps").get<int>();
    if (max_steps < 0) fail(400, "BadRequest", "max_steps must be >= 0");
    s->state = SessionState::kRollingOut;
    auto pol = make_policy(s->task);
    s->worker = std::thread(&Impl::run_worker, this, s, max_steps,
                            std::move(pol), *s->anchor);
  }

  // Streams events [from, ...) and, when `follow`, keeps the response open
  // until the log closes. A client disconnect only ends this response.
  void stream_events(httplib::Response& res, std::shared_ptr<Session> s,
                     size_t from, bool follow) {
    if (!follow) {
      std::string out;
      std::lock_guard lk(s->mu);
      for (size_t i = from; i < s->events.size(); ++i) out += s->events[i];
      res.set_content(out, "application/x-ndjson");
      return;
    }
    auto cursor = std::make_shared<size_t>(from);
    res.set_chunked_content_provider(
        "application/x-ndjson",
        [this, s, cursor](size_t, httplib::DataSink& sink) {
          std::vector<std::string> batch;
          bool closed = false;
          {
            std::unique_lock lk(s->mu);
            s->cv.wait_for(lk, std::chrono::milliseconds(200), [&] {
              return s->events.size() > *cursor || s->log_closed || stopping;
            });
            for (size_t i = *cursor; i < s->events.size(); ++i) {
              batch.push_back(s->events[i]);
            }
            *cursor = std::max(*cursor, s->events.size());
            closed = s->log_closed || stopping;
          }
          for (const auto& line : batch) {
            if (!sink.write(line.data(), line.size())) return false;
          }
          if (closed) {
            sink.done();
          } else if (!sink.is_writable()) {
            return false;
          }
          return true;
        });
  }

  template <typename F>
  auto guarded(F f) {
    return [this, f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const HttpError& e) {
        send_json(res, e.status,
                  json{{"schema_version", kSessionSchemaVersion},
                       {"error", e.name}, {"message", e.message}});
      } catch (const json::exception& e) {
        send_json(res, 400, json{{"schema_version", kSessionSchemaVersion},
                                 {"error", "BadRequest"}, {"message", e.what()}});
      } catch (const std::exception& e) {
        send_json(res, 500, json{{"schema_version", kSessionSchemaVersion},
                                 {"error", "Internal"}, {"message", e.what()}});
      }
    };
  }

  void routes() {
    server.Post("/sessions", guarded([this](const httplib::Request& req,
                                            httplib::Response& res) {
      send_json(res, 201, create(parse_body(req)));
    }));
    server.Get(R"(/sessions/([^/]+)/frame)",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 get_frame(req, res, req.matches[1]);
               }));
    server.Post(R"(/sessions/([^/]+)/prompt)",
                guarded([this](const httplib::Request& req, httplib::Response& res) {
                  send_json(res, 200, prompt(parse_body(req), req.matches[1]));
                }));
    server.Post(R"(/sessions/([^/]+)/rollout)",
                guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const std::string id = req.matches[1];
                  start_rollout(parse_body(req), id);
                  stream_events(res, find(id), 0, true);
                }));
    server.Get(R"(/sessions/([^/]+)/events)",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 long long from = 0;
                 if (req.has_param("from")) {
                   try {
                     from = std::stoll(req.get_param_value("from"));
                   } catch (const std::exception&) {
                     fail(400, "BadRequest", "from must be an integer");
                   }
                   if (from < 0) fail(400, "BadRequest", "from must be >= 0");
                 }
                 const bool follow = req.get_param_value("follow") == "1";
                 stream_events(res, find(req.matches[1]), static_cast<size_t>(from),
                               follow);
               }));
    server.Get(R"(/sessions/([^/]+))",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 auto s = find(req.matches[1]);
                 std::lock_guard lk(s->mu);
                 send_json(res, 200,
                           json{{"schema_version", kSessionSchemaVersion},
                                {"id", s->id},
                                {"task", cap::to_string(s->task)},
                                {"seed", s->seed},
                                {"state", to_string(s->state)},
                                {"events", s->events.size()},
                                {"step", s->history.size() - 1}});
               }));
  }

  void join_workers() {
    std::vector<std::shared_ptr<Session>> all;
    {
      std::lock_guard lk(registry_mu);
      for (auto& [id, s] : sessions) all.push_back(s);
    }
    for (auto& s : all) {
      {
        std::lock_guard lk(s->mu);
        s->cv.notify_all();
      }
      if (s->worker.joinable()) s->worker.join();
    }
  }
};

SessionServer::SessionServer(ServiceOptions options)
    : impl_(std::make_unique<Impl>(std::move(options))) {}

SessionServer::~SessionServer() { stop(); }

int SessionServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "cannot bind " + host + ":" + std::to_string(port));
  }
  impl_->listener = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void SessionServer::wait() {
  if (impl_->listener.joinable()) impl_->listener.join();
}

void SessionServer::stop() {
  if (!impl_) return;
  impl_->stopping = true;
  impl_->join_workers();
  impl_->server.stop();
  if (impl_->listener.joinable()) impl_->listener.join();
}

bool SessionServer::model_loaded() const { return impl_->model != nullptr; }
const std::string& SessionServer::model_error() const { return impl_->model_error; }

}  // namespace cap::session

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

#ifndef CAP_SESSION_HPP_
#define CAP_SESSION_HPP_

// Interactive EgoGym sessions over HTTP.
//
//   POST /sessions                      {task, seed, distractor_count}
//   GET  /sessions/{id}/frame[?step=N]  PNG; ?format=json for the sidecar
//   POST /sessions/{id}/prompt          {u, v} or {x, y, z} (camera frame)
//   POST /sessions/{id}/rollout         {max_steps}; NDJSON event stream
//   GET  /sessions/{id}/events?from=N[&follow=1]
//
// Errors are JSON bodies {"error": <name>, "message": <text>}. Every JSON
// payload carries "schema_version".

#include <cstdint>
#include <memory>
#include <string>

#include "cap/egogym.hpp"

namespace cap::session {

inline constexpr int kSessionSchemaVersion = 1;

enum class SessionState { kAwaitingPrompt, kRollingOut, kFinished };
std::string to_string(SessionState s);

// FNV-1a over the simulator state; used as the frame ETag.
std::string state_hash(const egogym::SimState& s);

struct ServiceOptions {
  std::string model_path;   // empty: scripted servo
  int default_horizon = 80;
  int max_sessions = 256;   // oldest finished sessions are evicted past this
};

class SessionServer {
 public:
  explicit SessionServer(ServiceOptions options);
  ~SessionServer();
  SessionServer(const SessionServer&) = delete;
  SessionServer& operator=(const SessionServer&) = delete;

  // Binds and serves on a background thread. Port 0 picks a free port.
  // Returns the bound port; throws kInvalidArgument when binding fails.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  // Blocks until stop() is called from another thread or a signal.
  void wait();
  // Stops the listener and joins rollout workers.
  void stop();

  bool model_loaded() const;
  const std::string& model_error() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace cap::session

#endif  // CAP_SESSION_HPP_

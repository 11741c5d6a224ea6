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


#include <cmath>

#include "cap/control.hpp"
#include "cap/error.hpp"
#include "cap/image.hpp"
#include "httplib.h"
#include "json.hpp"

namespace cap::control {

std::string base64_encode(std::string_view bytes) {
  return httplib::detail::base64_encode(std::string(bytes));
}

Vec2 query_pointing_model(const std::string& endpoint, double timeout_s,
                          const RgbImage& image, std::string_view query) {
  const size_t scheme = endpoint.find("://");
  const size_t path_at =
      endpoint.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  const std::string host = endpoint.substr(0, path_at);
  const std::string path =
      path_at == std::string::npos ? "/" : endpoint.substr(path_at);

  httplib::Client client(host);
  if (!client.is_valid()) {
    throw Error(ErrorCode::kInvalidArgument, "bad pointing endpoint " + endpoint);
  }
  const auto sec = static_cast<time_t>(timeout_s);
  const auto usec = static_cast<time_t>((timeout_s - sec) * 1e6);
  client.set_connection_timeout(sec, usec);
  client.set_read_timeout(sec, usec);
  client.set_write_timeout(sec, usec);

  const std::vector<uint8_t> png = encode_png(image);
  const nlohmann::json body = {
      {"image", base64_encode(std::string_view(
                    reinterpret_cast<const char*>(png.data()), png.size()))},
      {"query", std::string(query)}};
  const auto res = client.Post(path, body.dump(), "application/json");
  if (!res) {
    if (res.error() == httplib::Error::Read ||
        res.error() == httplib::Error::Write ||
        res.error() == httplib::Error::Connection ||
        res.error() == httplib::Error::ConnectionTimeout) {
      throw Error(ErrorCode::kPointingTimeout,
                  "pointing model did not answer: " +
                      httplib::to_string(res.error()));
    }
    throw Error(ErrorCode::kInvalidArgument,
                "pointing request failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(ErrorCode::kInvalidArgument,
                "pointing model returned HTTP " + std::to_string(res->status));
  }
  try {
    const auto j = nlohmann::json::parse(res->body);
    const Vec2 px(j.at("u").get<double>(), j.at("v").get<double>());
    if (!px.allFinite()) {
      throw Error(ErrorCode::kInvalidArgument, "non-finite pixel");
    }
    return px;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string("bad pointing response: ") + e.what());
  }
}

}  // namespace cap::control

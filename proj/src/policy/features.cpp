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

#include "cap/error.hpp"
#include "cap/policy.hpp"

namespace cap::policy {
namespace {

// Bin edges for `n` pixels, mirrored around the center.
std::array<int, kPoolGrid + 1> bin_edges(int n) {
  std::array<int, kPoolGrid + 1> e{};
  for (int j = 0; j <= kPoolGrid / 2; ++j) {
    e[j] = static_cast<int>(std::lround(static_cast<double>(j) * n / kPoolGrid));
    e[kPoolGrid - j] = n - e[j];
  }
  return e;
}

}  // namespace

Vector pool_image(const RgbImage& rgb) {
  if (rgb.width < kPoolGrid || rgb.height < kPoolGrid) {
    throw Error(ErrorCode::kInvalidArgument, "image smaller than pool grid");
  }
  const auto xs = bin_edges(rgb.width);
  const auto ys = bin_edges(rgb.height);
  Vector out(kVisualDim);
  for (int r = 0; r < kPoolGrid; ++r) {
    for (int c = 0; c < kPoolGrid; ++c) {
      double sum[3] = {0.0, 0.0, 0.0};
      for (int y = ys[r]; y < ys[r + 1]; ++y) {
        for (int x = xs[c]; x < xs[c + 1]; ++x) {
          for (int ch = 0; ch < 3; ++ch) sum[ch] += rgb.at(x, y, ch);
        }
      }
      const double count =
          static_cast<double>(ys[r + 1] - ys[r]) * (xs[c + 1] - xs[c]) * 255.0;
      for (int ch = 0; ch < 3; ++ch) {
        out[(r * kPoolGrid + c) * 3 + ch] = sum[ch] / count;
      }
    }
  }
  return out;
}

Vector featurize(const RgbImage& rgb, const ContactAnchor& anchor) {
  if (anchor.frame != AnchorFrame::kCamera) {
    throw Error(ErrorCode::kWrongFrame, "features need a camera-frame anchor");
  }
  if (!anchor.point.allFinite()) {
    throw Error(ErrorCode::kInvalidArgument, "non-finite anchor");
  }
  Vector s(kTokenDim);
  s.head(kVisualDim) = pool_image(rgb);
  s.tail(kAnchorDim) = anchor.point * kAnchorScale;
  return s;
}

Vector featurize(const egogym::Observation& obs, const ContactAnchor& anchor) {
  return featurize(obs.rgb, anchor);
}

Vector mirror_token(const Vector& token) {
  if (token.size() != kTokenDim) {
    throw Error(ErrorCode::kInvalidArgument, "token has the wrong size");
  }
  Vector out = token;
  for (int r = 0; r < kPoolGrid; ++r) {
    for (int c = 0; c < kPoolGrid; ++c) {
      const int src = (r * kPoolGrid + c) * 3;
      const int dst = (r * kPoolGrid + (kPoolGrid - 1 - c)) * 3;
      out.segment(dst, 3) = token.segment(src, 3);
    }
  }
  out[kVisualDim] = -token[kVisualDim];
  return out;
}

codec::Vector action_vector(const egogym::Action& a) {
  codec::Vector v(codec::kActionDim);
  v << a.delta_translation, a.delta_rotation, a.aperture_cmd;
  return v;
}

egogym::Action to_action(const codec::Vector& v) {
  if (v.size() != codec::kActionDim) {
    throw Error(ErrorCode::kInvalidArgument, "action vector has the wrong size");
  }
  egogym::Action a;
  a.delta_translation = v.head<3>();
  a.delta_rotation = v.segment<3>(3);
  a.aperture_cmd = v[6];
  return a;
}

codec::Vector mirror_action(const codec::Vector& v) {
  // Reflection x -> -x: translations flip x; axis-angle vectors are
  // pseudo-vectors and flip y and z.
  codec::Vector m = v;
  m[0] = -v[0];
  m[4] = -v[4];
  m[5] = -v[5];
  return m;
}

std::vector<codec::Vector> episode_actions(const Episode& e) {
  std::vector<codec::Vector> out;
  for (size_t t = 0; t + 1 < e.frames.size(); ++t) {
    const RigidTransform rel = relative(e.frames[t].pose, e.frames[t + 1].pose);
    egogym::Action a;
    a.delta_translation = rel.translation();
    a.delta_rotation = rotation_log(rel.rotation());
    a.aperture_cmd = e.frames[t + 1].aperture_cmd;
    out.push_back(action_vector(a));
  }
  return out;
}

void append_episode(Dataset& d, const Episode& e, const codec::Codebook& cb,
                    const DatasetOptions& options) {
  Episode ep = e;
  bool need_images = false;
  for (const Frame& f : ep.frames) {
    if (!f.anchor) {
      throw Error(ErrorCode::kNoAnchor, "episode " + e.id + " frame " +
                                            std::to_string(f.index) +
                                            " is unlabeled");
    }
    need_images = need_images || f.rgb.empty();
  }
  if (need_images) load_images(ep);
  if (ep.frames.size() < 2) return;

  auto append = [&](const Episode& src) {
    const std::vector<codec::Vector> actions = episode_actions(src);
    const int base = static_cast<int>(d.tokens.size());
    for (const Frame& f : src.frames) {
      d.tokens.push_back(featurize(f.rgb, *f.anchor));
    }
    for (size_t t = 0; t < actions.size(); ++t) {
      Sample s;
      for (int i = 0; i < kContext; ++i) {
        const int back = kContext - 1 - i;
        s.context[i] = base + std::max(0, static_cast<int>(t) - back);
      }
      s.action = actions[t];
      s.codes = codec::encode(cb, s.action);
      s.offset = cb.normalize(s.action) - codec::decode_normalized(cb, s.codes);
      d.samples.push_back(std::move(s));
    }
  };
  append(ep);
  if (options.mirror_augment) append(mirror_episode(ep));
}

Dataset build_dataset(std::span<const Episode> episodes,
                      const codec::Codebook& cb,
                      const DatasetOptions& options) {
  Dataset d;
  for (const Episode& e : episodes) append_episode(d, e, cb, options);
  return d;
}

}  // namespace cap::policy

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

#ifndef CAP_CODEC_HPP_
#define CAP_CODEC_HPP_

// Residual k-means action tokenizer. Actions are normalized per dimension,
// then each stage quantizes the residual left by the previous stages.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"

namespace cap::codec {

// (dx, dy, dz, rx, ry, rz, aperture_cmd)
inline constexpr int kActionDim = 7;
using Vector = Eigen::VectorXd;

struct Codebook {
  Vector mean;
  Vector scale;
  std::vector<Eigen::MatrixXd> stages;  // k x dim, one codeword per row
  std::vector<std::string> warnings;

  int dim() const { return static_cast<int>(mean.size()); }
  int stage_count() const { return static_cast<int>(stages.size()); }
  std::vector<int> stage_sizes() const;

  Vector normalize(const Vector& a) const;
  Vector denormalize(const Vector& z) const;

  bool operator==(const Codebook& other) const;
};

struct FitOptions {
  uint64_t seed = 0;
  int max_iterations = 100;
  double tolerance = 1e-8;
  // Later stages are shrunk until every code tuple re-encodes to itself.
  double contraction = 0.9;
};

// Throws kInsufficientData when there are fewer actions than the largest
// stage, or kInvalidArgument for an empty stage list or a stage size < 2.
Codebook fit(std::span<const Vector> actions, const std::vector<int>& stage_sizes,
             const FitOptions& options = {});

// Nearest codeword per stage on successive residuals, lowest index on ties.
std::vector<int> encode(const Codebook& cb, const Vector& a);
// Throws kIndexOutOfRange for an invalid index or wrong tuple length.
Vector decode(const Codebook& cb, std::span<const int> codes);

// Sum of the selected codewords in normalized space.
Vector decode_normalized(const Codebook& cb, std::span<const int> codes);

// Mean squared reconstruction error in normalized space using the first
// `stages` stages.
double reconstruction_mse(const Codebook& cb, std::span<const Vector> actions,
                          int stages);

nlohmann::json to_json(const Codebook& cb);
Codebook codebook_from_json(const nlohmann::json& j);
void save_codebook(const Codebook& cb, const std::filesystem::path& path);
Codebook load_codebook(const std::filesystem::path& path);

// FNV-1a of the serialized codebook.
std::string codebook_hash(const Codebook& cb);

}  // namespace cap::codec

#endif  // CAP_CODEC_HPP_

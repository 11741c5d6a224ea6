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

#include "cap/codec.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "cap/error.hpp"
#include "cap/random.hpp"

namespace cap::codec {
namespace {

using Matrix = Eigen::MatrixXd;

// Index of the nearest row of `c` to `r`, lowest index on ties.
int nearest(const Matrix& c, const Eigen::Ref<const Vector>& r,
            double* best_d2 = nullptr) {
  int best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (int i = 0; i < c.rows(); ++i) {
    const double d = (c.row(i).transpose() - r).squaredNorm();
    if (d < bd) {
      bd = d;
      best = i;
    }
  }
  if (best_d2) *best_d2 = bd;
  return best;
}

void update_means(const Matrix& x, const std::vector<int>& assign, Matrix& c) {
  const int k = static_cast<int>(c.rows());
  Matrix sum = Matrix::Zero(k, x.cols());
  std::vector<int> count(k, 0);
  for (int i = 0; i < x.rows(); ++i) {
    sum.row(assign[i]) += x.row(i);
    ++count[assign[i]];
  }
  std::vector<char> taken(x.rows(), 0);
  for (int j = 0; j < k; ++j) {
    if (count[j] > 0) {
      c.row(j) = sum.row(j) / count[j];
      continue;
    }
    // Empty cluster: reseed at the point farthest from its own centroid.
    int far = -1;
    double fd = -1.0;
    for (int i = 0; i < x.rows(); ++i) {
      if (taken[i]) continue;
      const double d = (x.row(i) - c.row(assign[i])).squaredNorm();
      if (d > fd) {
        fd = d;
        far = i;
      }
    }
    if (far >= 0) {
      c.row(j) = x.row(far);
      taken[far] = 1;
    }
  }
}

Matrix kmeans(const Matrix& x, int k, uint64_t seed, const FitOptions& opt) {
  const int n = static_cast<int>(x.rows());
  Rng rng(seed);
  Matrix c(k, x.cols());
  // k-means++ seeding.
  c.row(0) = x.row(static_cast<int>(rng.index(n)));
  std::vector<double> d2(n);
  for (int i = 0; i < n; ++i) d2[i] = (x.row(i) - c.row(0)).squaredNorm();
  for (int j = 1; j < k; ++j) {
    double total = 0.0;
    for (double d : d2) total += d;
    int pick = 0;
    if (total <= 0.0) {
      pick = static_cast<int>(rng.index(n));
    } else {
      const double u = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (int i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > u) {
          pick = i;
          break;
        }
      }
    }
    c.row(j) = x.row(pick);
    for (int i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (x.row(i) - c.row(j)).squaredNorm());
    }
  }

  std::vector<int> assign(n, 0);
  for (int it = 0; it < opt.max_iterations; ++it) {
    for (int i = 0; i < n; ++i) assign[i] = nearest(c, x.row(i).transpose());
    Matrix next = c;
    update_means(x, assign, next);
    const double shift = (next - c).cwiseAbs().maxCoeff();
    c = next;
    if (shift < opt.tolerance) break;
  }
  for (int i = 0; i < n; ++i) assign[i] = nearest(c, x.row(i).transpose());
  update_means(x, assign, c);
  return c;
}

// Lowest index holding the same codeword as row i.
bool canonical(const Matrix& c, int i) {
  for (int j = 0; j < i; ++j) {
    if (c.row(j) == c.row(i)) return false;
  }
  return true;
}

// True when greedy encoding picks `idx` at this stage with a clear margin.
bool picks_with_margin(const Matrix& c, const Vector& r, int idx) {
  double best_d2;
  const int best = nearest(c, r, &best_d2);
  if (best != idx) return false;
  double second = std::numeric_limits<double>::infinity();
  for (int i = 0; i < c.rows(); ++i) {
    if (c.row(i) == c.row(idx)) continue;
    second = std::min(second, (c.row(i).transpose() - r).squaredNorm());
  }
  return second - best_d2 > 1e-9 * (1.0 + r.squaredNorm());
}

// Every canonical code tuple decodes to a point that re-encodes to itself.
bool tuples_consistent(const std::vector<Matrix>& stages) {
  const int s = static_cast<int>(stages.size());
  std::vector<std::vector<int>> options(s);
  for (int j = 0; j < s; ++j) {
    for (int i = 0; i < stages[j].rows(); ++i) {
      if (canonical(stages[j], i)) options[j].push_back(i);
    }
  }
  std::vector<int> pos(s, 0);
  const int dim = static_cast<int>(stages[0].cols());
  for (;;) {
    Vector y = Vector::Zero(dim);
    for (int j = 0; j < s; ++j) y += stages[j].row(options[j][pos[j]]).transpose();
    Vector r = y;
    for (int j = 0; j < s; ++j) {
      const int idx = options[j][pos[j]];
      if (!picks_with_margin(stages[j], r, idx)) return false;
      r -= stages[j].row(idx).transpose();
    }
    int j = s - 1;
    while (j >= 0 && ++pos[j] == static_cast<int>(options[j].size())) {
      pos[j] = 0;
      --j;
    }
    if (j < 0) return true;
  }
}

}  // namespace

std::vector<int> Codebook::stage_sizes() const {
  std::vector<int> out;
  for (const auto& s : stages) out.push_back(static_cast<int>(s.rows()));
  return out;
}

Vector Codebook::normalize(const Vector& a) const {
  if (a.size() != mean.size()) {
    throw Error(ErrorCode::kInvalidArgument, "action dimension mismatch");
  }
  return (a - mean).cwiseQuotient(scale);
}

Vector Codebook::denormalize(const Vector& z) const {
  return z.cwiseProduct(scale) + mean;
}

bool Codebook::operator==(const Codebook& o) const {
  if (mean != o.mean || scale != o.scale || warnings != o.warnings ||
      stages.size() != o.stages.size()) {
    return false;
  }
  for (size_t i = 0; i < stages.size(); ++i) {
    if (stages[i].rows() != o.stages[i].rows() || stages[i] != o.stages[i]) {
      return false;
    }
  }
  return true;
}

Codebook fit(std::span<const Vector> actions, const std::vector<int>& stage_sizes,
             const FitOptions& options) {
  if (stage_sizes.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "at least one stage is required");
  }
  for (int k : stage_sizes) {
    if (k < 2) throw Error(ErrorCode::kInvalidArgument, "stage size must be >= 2");
  }
  const int kmax = *std::max_element(stage_sizes.begin(), stage_sizes.end());
  if (static_cast<int>(actions.size()) < kmax) {
    throw Error(ErrorCode::kInsufficientData,
                std::to_string(actions.size()) + " actions for a stage of " +
                    std::to_string(kmax));
  }
  const int n = static_cast<int>(actions.size());
  const int dim = static_cast<int>(actions[0].size());
  Matrix x(n, dim);
  for (int i = 0; i < n; ++i) {
    if (actions[i].size() != dim || !actions[i].allFinite()) {
      throw Error(ErrorCode::kInvalidArgument, "bad action at index " +
                                                   std::to_string(i));
    }
    x.row(i) = actions[i].transpose();
  }

  Codebook cb;
  cb.mean = x.colwise().mean().transpose();
  cb.scale = Vector::Ones(dim);
  for (int d = 0; d < dim; ++d) {
    const double var = (x.col(d).array() - cb.mean[d]).square().mean();
    const double sd = std::sqrt(var);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(cb.mean[d])))) {
      cb.warnings.push_back("DegenerateDimension: dimension " +
                            std::to_string(d) +
                            " has zero variance; scale clamped to 1");
    } else {
      cb.scale[d] = sd;
    }
  }

  Matrix r(n, dim);
  for (int i = 0; i < n; ++i) r.row(i) = cb.normalize(actions[i]).transpose();

  for (size_t s = 0; s < stage_sizes.size(); ++s) {
    Matrix c = kmeans(r, stage_sizes[s], mix_seed(options.seed, s), options);
    if (s > 0) {
      cb.stages.push_back(c);
      int shrinks = 0;
      while (!tuples_consistent(cb.stages) && shrinks < 400) {
        cb.stages.back() *= options.contraction;
        ++shrinks;
      }
      if (shrinks == 400) {
        cb.warnings.push_back("InconsistentTuples: stage " + std::to_string(s));
      }
      c = cb.stages.back();
      cb.stages.pop_back();
    }
    cb.stages.push_back(c);
    for (int i = 0; i < n; ++i) {
      const int idx = nearest(c, r.row(i).transpose());
      r.row(i) -= c.row(idx);
    }
  }
  return cb;
}

std::vector<int> encode(const Codebook& cb, const Vector& a) {
  Vector r = cb.normalize(a);
  std::vector<int> codes;
  codes.reserve(cb.stages.size());
  for (const auto& c : cb.stages) {
    const int idx = nearest(c, r);
    codes.push_back(idx);
    r -= c.row(idx).transpose();
  }
  return codes;
}

Vector decode_normalized(const Codebook& cb, std::span<const int> codes) {
  if (codes.size() != cb.stages.size()) {
    throw Error(ErrorCode::kIndexOutOfRange, "expected " +
                                                 std::to_string(cb.stages.size()) +
                                                 " codes");
  }
  Vector y = Vector::Zero(cb.dim());
  for (size_t s = 0; s < codes.size(); ++s) {
    if (codes[s] < 0 || codes[s] >= cb.stages[s].rows()) {
      throw Error(ErrorCode::kIndexOutOfRange,
                  "code " + std::to_string(codes[s]) + " at stage " +
                      std::to_string(s));
    }
    y += cb.stages[s].row(codes[s]).transpose();
  }
  return y;
}

Vector decode(const Codebook& cb, std::span<const int> codes) {
  return cb.denormalize(decode_normalized(cb, codes));
}

double reconstruction_mse(const Codebook& cb, std::span<const Vector> actions,
                          int stages) {
  if (actions.empty()) return 0.0;
  stages = std::clamp(stages, 0, cb.stage_count());
  double total = 0.0;
  for (const Vector& a : actions) {
    Vector r = cb.normalize(a);
    for (int s = 0; s < stages; ++s) {
      r -= cb.stages[s].row(nearest(cb.stages[s], r)).transpose();
    }
    total += r.squaredNorm();
  }
  return total / (static_cast<double>(actions.size()) * cb.dim());
}

nlohmann::json to_json(const Codebook& cb) {
  nlohmann::json j;
  j["format"] = "cap-codebook";
  j["version"] = 1;
  j["dim"] = cb.dim();
  j["stage_sizes"] = cb.stage_sizes();
  j["mean"] = std::vector<double>(cb.mean.data(), cb.mean.data() + cb.dim());
  j["scale"] = std::vector<double>(cb.scale.data(), cb.scale.data() + cb.dim());
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& c : cb.stages) {
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < c.rows(); ++i) {
      std::vector<double> row(c.cols());
      for (int d = 0; d < c.cols(); ++d) row[d] = c(i, d);
      rows.push_back(row);
    }
    stages.push_back(rows);
  }
  j["stages"] = stages;
  j["warnings"] = cb.warnings;
  return j;
}

Codebook codebook_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "cap-codebook" || j.at("version") != 1) {
      throw Error(ErrorCode::kModelLoadFailure, "not a version 1 codebook");
    }
    Codebook cb;
    const auto mean = j.at("mean").get<std::vector<double>>();
    const auto scale = j.at("scale").get<std::vector<double>>();
    cb.mean = Eigen::Map<const Vector>(mean.data(), mean.size());
    cb.scale = Eigen::Map<const Vector>(scale.data(), scale.size());
    for (const auto& rows : j.at("stages")) {
      Matrix c(rows.size(), cb.mean.size());
      for (size_t i = 0; i < rows.size(); ++i) {
        const auto row = rows[i].get<std::vector<double>>();
        if (row.size() != static_cast<size_t>(c.cols())) {
          throw Error(ErrorCode::kModelLoadFailure, "codeword width mismatch");
        }
        for (size_t d = 0; d < row.size(); ++d) c(i, d) = row[d];
      }
      cb.stages.push_back(c);
    }
    cb.warnings = j.value("warnings", std::vector<std::string>{});
    return cb;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kModelLoadFailure, e.what());
  }
}

void save_codebook(const Codebook& cb, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kInvalidArgument, "cannot write " + path.string());
  out << to_json(cb).dump(1) << "\n";
}

Codebook load_codebook(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kModelLoadFailure, "cannot read " + path.string());
  try {
    return codebook_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kModelLoadFailure, e.what());
  }
}

std::string codebook_hash(const Codebook& cb) {
  const std::string text = to_json(cb).dump();
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace cap::codec

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
#include <fstream>
#include <sstream>

#include "cap/error.hpp"
#include "cap/policy.hpp"
#include "cap/random.hpp"

namespace cap::policy {
namespace {

using Eigen::MatrixXd;
using nlohmann::json;

constexpr const char* kFormat = "cap-policy";
constexpr int kVersion = 1;

int argmax(const Eigen::Ref<const Eigen::VectorXd>& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace

struct PolicyModel::Cache {
  std::vector<MatrixXd> x;  // standardized tokens per context slot, D x B
  MatrixXd z;               // concatenated embeddings, kH x B
  MatrixXd h;               // tanh activations, H x B
  std::vector<MatrixXd> logits;
  MatrixXd offset;
};

PolicyModel::PolicyModel(const ModelConfig& config, codec::Codebook codebook,
                         Vector input_mean, Vector input_scale)
    : config_(config),
      codebook_(std::move(codebook)),
      input_mean_(std::move(input_mean)),
      input_scale_(std::move(input_scale)) {
  if (config_.hidden < 1) {
    throw Error(ErrorCode::kInvalidArgument, "hidden width must be positive");
  }
  if (input_mean_.size() != kTokenDim || input_scale_.size() != kTokenDim) {
    throw Error(ErrorCode::kInvalidArgument, "standardization has wrong size");
  }
  if (codebook_.stage_count() == 0 || codebook_.dim() != codec::kActionDim) {
    throw Error(ErrorCode::kInvalidArgument, "codebook does not fit actions");
  }
  build_layout();
  Rng rng(config_.seed);
  for (const Block& b : blocks_) {
    const double sd = 1.0 / std::sqrt(static_cast<double>(b.cols));
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(b.rows) * b.cols;
         ++i) {
      theta_[b.weight + i] = rng.normal(0.0, sd);
    }
  }
}

void PolicyModel::build_layout() {
  const int h = config_.hidden;
  blocks_.clear();
  blocks_.push_back({"embed", h, kTokenDim, 0, 0});
  blocks_.push_back({"hidden", h, kContext * h, 0, 0});
  for (int s = 0; s < codebook_.stage_count(); ++s) {
    blocks_.push_back({"logits" + std::to_string(s),
                       static_cast<int>(codebook_.stages[s].rows()), h, 0, 0});
  }
  blocks_.push_back({"offset", codec::kActionDim, h, 0, 0});
  Eigen::Index at = 0;
  for (Block& b : blocks_) {
    b.weight = at;
    at += static_cast<Eigen::Index>(b.rows) * b.cols;
    b.bias = at;
    at += b.rows;
  }
  theta_ = Vector::Zero(at);
}

Eigen::Map<const Eigen::MatrixXd> PolicyModel::weight(const Block& b) const {
  return {theta_.data() + b.weight, b.rows, b.cols};
}

Eigen::Map<const Eigen::VectorXd> PolicyModel::bias(const Block& b) const {
  return {theta_.data() + b.bias, b.rows};
}

Eigen::MatrixXd PolicyModel::standardize(
    std::span<const Vector* const> tokens) const {
  MatrixXd x(kTokenDim, static_cast<Eigen::Index>(tokens.size()));
  for (size_t j = 0; j < tokens.size(); ++j) {
    x.col(static_cast<Eigen::Index>(j)) =
        (*tokens[j] - input_mean_).cwiseQuotient(input_scale_);
  }
  if (config_.rgb_only) x.bottomRows(kAnchorDim).setZero();
  return x;
}

void PolicyModel::gather(const Dataset& data, std::span<const int> sample_ids,
                         Cache& c) const {
  for (int i = 0; i < kContext; ++i) {
    std::vector<const Vector*> toks;
    for (int id : sample_ids) {
      toks.push_back(&data.tokens[data.samples[id].context[i]]);
    }
    c.x.push_back(standardize(toks));
  }
}

void PolicyModel::run(Cache& c) const {
  const Block& embed = blocks_[0];
  const Block& hidden = blocks_[1];
  const Eigen::Index n = c.x[0].cols();
  const int h = embed.rows;
  c.z.resize(static_cast<Eigen::Index>(kContext) * h, n);
  for (int i = 0; i < kContext; ++i) {
    c.z.middleRows(static_cast<Eigen::Index>(i) * h, h) =
        (weight(embed) * c.x[i]).colwise() + bias(embed);
  }
  c.h = ((weight(hidden) * c.z).colwise() + bias(hidden)).array().tanh();
  c.logits.clear();
  for (size_t s = 2; s + 1 < blocks_.size(); ++s) {
    c.logits.push_back((weight(blocks_[s]) * c.h).colwise() +
                       bias(blocks_[s]));
  }
  const Block& off = blocks_.back();
  c.offset = (weight(off) * c.h).colwise() + bias(off);
}

PolicyModel::Outputs PolicyModel::forward(
    const Dataset& data, std::span<const int> sample_ids) const {
  Cache c;
  gather(data, sample_ids, c);
  run(c);
  return {c.logits, c.offset};
}

Prediction PolicyModel::predict(std::span<const Vector> context) const {
  if (context.size() != static_cast<size_t>(kContext)) {
    throw Error(ErrorCode::kInvalidArgument, "context must hold 3 tokens");
  }
  if (theta_.size() == 0) {
    throw Error(ErrorCode::kModelLoadFailure, "model has no parameters");
  }
  Cache c;
  for (int i = 0; i < kContext; ++i) {
    if (context[i].size() != kTokenDim) {
      throw Error(ErrorCode::kInvalidArgument, "token has the wrong size");
    }
    const Vector* p = &context[i];
    c.x.push_back(standardize(std::span<const Vector* const>(&p, 1)));
  }
  run(c);
  Prediction p;
  for (const MatrixXd& l : c.logits) p.codes.push_back(argmax(l.col(0)));
  p.offset = c.offset.col(0);
  p.action = codebook_.denormalize(
      codec::decode_normalized(codebook_, p.codes) + p.offset);
  return p;
}

double PolicyModel::loss(const Dataset& data, std::span<const int> sample_ids,
                         Vector* gradient, LossStats* stats) const {
  if (sample_ids.empty()) {
    throw Error(ErrorCode::kEmptyDataset, "loss over zero samples");
  }
  Cache c;
  gather(data, sample_ids, c);
  run(c);

  const Eigen::Index n = static_cast<Eigen::Index>(sample_ids.size());
  const double inv_n = 1.0 / static_cast<double>(n);
  const int dim = codec::kActionDim;
  const double w_off = config_.offset_weight;

  double ce = 0.0;
  double l1 = 0.0;
  int correct = 0;
  std::vector<MatrixXd> d_logits(c.logits.size());
  MatrixXd d_offset(dim, n);
  for (size_t s = 0; s < c.logits.size(); ++s) {
    const MatrixXd& l = c.logits[s];
    d_logits[s].resize(l.rows(), n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const int target = data.samples[sample_ids[j]].codes[s];
      const double m = l.col(j).maxCoeff();
      const Eigen::VectorXd e = (l.col(j).array() - m).exp();
      const double z = e.sum();
      ce += std::log(z) + m - l(target, j);
      d_logits[s].col(j) = e / z;
      d_logits[s](target, j) -= 1.0;
      if (argmax(l.col(j)) == target) ++correct;
    }
    d_logits[s] *= inv_n;
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    const codec::Vector& t = data.samples[sample_ids[j]].offset;
    for (int d = 0; d < dim; ++d) {
      const double r = c.offset(d, j) - t[d];
      l1 += std::abs(r);
      d_offset(d, j) = (r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0)) * w_off /
                       (dim * static_cast<double>(n));
    }
  }
  const double total = (ce + w_off * l1 / dim) * inv_n;
  if (stats) {
    stats->cross_entropy = ce * inv_n;
    stats->offset_l1 = l1 * inv_n / dim;
    stats->correct_codes = correct;
    stats->total_codes = static_cast<int>(n * c.logits.size());
  }
  if (!gradient) return total;

  gradient->setZero(theta_.size());
  auto gw = [&](const Block& b) {
    return Eigen::Map<MatrixXd>(gradient->data() + b.weight, b.rows, b.cols);
  };
  auto gb = [&](const Block& b) {
    return Eigen::Map<Eigen::VectorXd>(gradient->data() + b.bias, b.rows);
  };
  MatrixXd d_h = MatrixXd::Zero(c.h.rows(), n);
  for (size_t s = 0; s < c.logits.size(); ++s) {
    const Block& b = blocks_[2 + s];
    gw(b).noalias() = d_logits[s] * c.h.transpose();
    gb(b) = d_logits[s].rowwise().sum();
    d_h.noalias() += weight(b).transpose() * d_logits[s];
  }
  {
    const Block& b = blocks_.back();
    gw(b).noalias() = d_offset * c.h.transpose();
    gb(b) = d_offset.rowwise().sum();
    d_h.noalias() += weight(b).transpose() * d_offset;
  }
  const MatrixXd d_a =
      d_h.array() * (1.0 - c.h.array().square());
  const Block& hidden = blocks_[1];
  gw(hidden).noalias() = d_a * c.z.transpose();
  gb(hidden) = d_a.rowwise().sum();
  const MatrixXd d_z = weight(hidden).transpose() * d_a;
  const Block& embed = blocks_[0];
  const int h = embed.rows;
  auto we = gw(embed);
  auto be = gb(embed);
  for (int i = 0; i < kContext; ++i) {
    const auto d_e = d_z.middleRows(static_cast<Eigen::Index>(i) * h, h);
    we.noalias() += d_e * c.x[i].transpose();
    be += d_e.rowwise().sum();
  }
  return total;
}

json PolicyModel::to_json() const {
  json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["config"] = {{"hidden", config_.hidden},
                 {"rgb_only", config_.rgb_only},
                 {"seed", config_.seed},
                 {"offset_weight", config_.offset_weight},
                 {"context", kContext},
                 {"token_dim", kTokenDim}};
  j["parameter_count"] = parameter_count();
  j["input_mean"] = std::vector<double>(input_mean_.begin(), input_mean_.end());
  j["input_scale"] =
      std::vector<double>(input_scale_.begin(), input_scale_.end());
  json layers = json::array();
  for (const Block& b : blocks_) {
    const auto w = weight(b);
    std::vector<double> rows;
    rows.reserve(static_cast<size_t>(b.rows) * b.cols);
    for (int r = 0; r < b.rows; ++r) {
      for (int col = 0; col < b.cols; ++col) rows.push_back(w(r, col));
    }
    const auto bv = bias(b);
    layers.push_back({{"name", b.name},
                      {"shape", {b.rows, b.cols}},
                      {"weight", rows},
                      {"bias", std::vector<double>(bv.begin(), bv.end())}});
  }
  j["layers"] = std::move(layers);
  j["codebook"] = codec::to_json(codebook_);
  j["codebook_hash"] = codec::codebook_hash(codebook_);
  return j;
}

PolicyModel PolicyModel::from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != kFormat) {
      throw Error(ErrorCode::kModelLoadFailure, "not a cap-policy model");
    }
    if (j.at("version").get<int>() != kVersion) {
      throw Error(ErrorCode::kModelLoadFailure, "unsupported model version");
    }
    const json& cfg = j.at("config");
    if (cfg.at("context").get<int>() != kContext ||
        cfg.at("token_dim").get<int>() != kTokenDim) {
      throw Error(ErrorCode::kModelLoadFailure, "incompatible token layout");
    }
    PolicyModel m;
    m.config_.hidden = cfg.at("hidden").get<int>();
    m.config_.rgb_only = cfg.at("rgb_only").get<bool>();
    m.config_.seed = cfg.at("seed").get<uint64_t>();
    m.config_.offset_weight = cfg.at("offset_weight").get<double>();
    m.codebook_ = codec::codebook_from_json(j.at("codebook"));
    if (j.at("codebook_hash").get<std::string>() !=
        codec::codebook_hash(m.codebook_)) {
      throw Error(ErrorCode::kModelLoadFailure, "codebook hash mismatch");
    }
    const auto mean = j.at("input_mean").get<std::vector<double>>();
    const auto scale = j.at("input_scale").get<std::vector<double>>();
    if (mean.size() != kTokenDim || scale.size() != kTokenDim) {
      throw Error(ErrorCode::kModelLoadFailure, "bad standardization size");
    }
    m.input_mean_ = Eigen::Map<const Vector>(mean.data(), kTokenDim);
    m.input_scale_ = Eigen::Map<const Vector>(scale.data(), kTokenDim);
    if (m.config_.hidden < 1 || m.codebook_.dim() != codec::kActionDim) {
      throw Error(ErrorCode::kModelLoadFailure, "bad model configuration");
    }
    m.build_layout();
    const json& layers = j.at("layers");
    if (layers.size() != m.blocks_.size()) {
      throw Error(ErrorCode::kModelLoadFailure, "layer count mismatch");
    }
    for (size_t i = 0; i < m.blocks_.size(); ++i) {
      const Block& b = m.blocks_[i];
      const json& l = layers[i];
      const auto shape = l.at("shape").get<std::vector<int>>();
      const auto w = l.at("weight").get<std::vector<double>>();
      const auto bv = l.at("bias").get<std::vector<double>>();
      if (l.at("name").get<std::string>() != b.name || shape.size() != 2 ||
          shape[0] != b.rows || shape[1] != b.cols ||
          w.size() != static_cast<size_t>(b.rows) * b.cols ||
          bv.size() != static_cast<size_t>(b.rows)) {
        throw Error(ErrorCode::kModelLoadFailure,
                    "layer " + b.name + " has the wrong shape");
      }
      Eigen::Map<MatrixXd> dst(m.theta_.data() + b.weight, b.rows, b.cols);
      for (int r = 0; r < b.rows; ++r) {
        for (int col = 0; col < b.cols; ++col) {
          dst(r, col) = w[static_cast<size_t>(r) * b.cols + col];
        }
      }
      for (int r = 0; r < b.rows; ++r) m.theta_[b.bias + r] = bv[r];
    }
    if (!m.theta_.allFinite()) {
      throw Error(ErrorCode::kModelLoadFailure, "non-finite parameter");
    }
    return m;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kModelLoadFailure) throw;
    throw Error(ErrorCode::kModelLoadFailure, e.what());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kModelLoadFailure, e.what());
  }
}

bool PolicyModel::operator==(const PolicyModel& o) const {
  return config_.hidden == o.config_.hidden &&
         config_.rgb_only == o.config_.rgb_only &&
         config_.seed == o.config_.seed &&
         config_.offset_weight == o.config_.offset_weight &&
         codebook_ == o.codebook_ && input_mean_ == o.input_mean_ &&
         input_scale_ == o.input_scale_ && theta_ == o.theta_;
}

void save_model(const PolicyModel& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw Error(ErrorCode::kInvalidArgument,
                "cannot write model " + path.string());
  }
  out << m.to_json().dump() << "\n";
}

PolicyModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::kModelLoadFailure,
                "cannot open model " + path.string());
  }
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kModelLoadFailure, e.what());
  }
  return PolicyModel::from_json(j);
}

std::pair<Vector, Vector> token_statistics(const Dataset& data) {
  if (data.tokens.empty()) {
    throw Error(ErrorCode::kEmptyDataset, "no tokens");
  }
  Vector mean = Vector::Zero(kTokenDim);
  for (const Vector& t : data.tokens) mean += t;
  mean /= static_cast<double>(data.tokens.size());
  Vector var = Vector::Zero(kTokenDim);
  for (const Vector& t : data.tokens) var += (t - mean).cwiseAbs2();
  var /= static_cast<double>(data.tokens.size());
  Vector scale(kTokenDim);
  for (int i = 0; i < kTokenDim; ++i) {
    scale[i] = var[i] > 1e-12 ? std::sqrt(var[i]) : 1.0;
  }
  return {mean, scale};
}

}  // namespace cap::policy

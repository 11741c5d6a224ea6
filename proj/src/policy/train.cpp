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
#include <numbers>
#include <numeric>
#include <set>

#include "cap/error.hpp"
#include "cap/policy.hpp"
#include "cap/random.hpp"

namespace cap::policy {
namespace {

constexpr double kKinkMargin = 1e-3;
constexpr int kEvalChunk = 1024;

void shuffle(std::vector<int>& v, Rng& rng) {
  for (size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng.index(i)]);
  }
}

// Loss and code accuracy over the whole dataset, in chunks.
std::pair<double, double> full_loss(const PolicyModel& m, const Dataset& d) {
  double total = 0.0;
  long correct = 0;
  long codes = 0;
  std::vector<int> ids;
  for (size_t start = 0; start < d.samples.size(); start += kEvalChunk) {
    ids.clear();
    const size_t end = std::min(d.samples.size(), start + kEvalChunk);
    for (size_t i = start; i < end; ++i) ids.push_back(static_cast<int>(i));
    LossStats st;
    total += m.loss(d, ids, nullptr, &st) * static_cast<double>(ids.size());
    correct += st.correct_codes;
    codes += st.total_codes;
  }
  return {total / static_cast<double>(d.samples.size()),
          codes ? static_cast<double>(correct) / codes : 0.0};
}

}  // namespace

GradientCheckReport gradient_check(const PolicyModel& m, const Dataset& data,
                                   int coordinates, int samples, double step,
                                   uint64_t seed) {
  if (data.empty()) throw Error(ErrorCode::kEmptyDataset, "no samples");
  if (coordinates < 1 || samples < 1 || !(step > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "bad gradient check settings");
  }
  Rng rng(seed);
  std::vector<int> order(data.samples.size());
  std::iota(order.begin(), order.end(), 0);
  shuffle(order, rng);

  // The L1 term is not differentiable where an offset residual is zero;
  // keep samples whose residuals are far from it at the current weights.
  std::vector<int> ids;
  for (size_t start = 0; start < order.size() && ids.size() < size_t(samples);
       start += kEvalChunk) {
    const size_t end = std::min(order.size(), start + kEvalChunk);
    const std::span<const int> chunk(order.data() + start, end - start);
    const PolicyModel::Outputs out = m.forward(data, chunk);
    for (size_t j = 0; j < chunk.size() && ids.size() < size_t(samples); ++j) {
      const Vector r =
          out.offset.col(static_cast<Eigen::Index>(j)) -
          data.samples[chunk[j]].offset;
      if (r.cwiseAbs().minCoeff() >= kKinkMargin) ids.push_back(chunk[j]);
    }
  }
  if (ids.empty()) ids.push_back(order[0]);

  Vector analytic;
  m.loss(data, ids, &analytic);
  const Eigen::Index p = static_cast<Eigen::Index>(m.parameter_count());
  const int n = static_cast<int>(std::min<Eigen::Index>(coordinates, p));
  std::set<Eigen::Index> chosen;
  while (static_cast<int>(chosen.size()) < n) {
    chosen.insert(static_cast<Eigen::Index>(rng.index(static_cast<uint64_t>(p))));
  }

  PolicyModel probe = m;
  GradientCheckReport report;
  report.coordinates = n;
  for (Eigen::Index i : chosen) {
    const double saved = probe.parameters()[i];
    probe.parameters()[i] = saved + step;
    const double up = probe.loss(data, ids);
    probe.parameters()[i] = saved - step;
    const double down = probe.loss(data, ids);
    probe.parameters()[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    const double rel = std::abs(a - numeric) / denom;
    if (rel > report.max_relative_error || report.worst_coordinate < 0) {
      report.max_relative_error = rel;
      report.worst_coordinate = i;
    }
  }
  return report;
}

std::pair<PolicyModel, TrainReport> train(const Dataset& data,
                                          const codec::Codebook& cb,
                                          const TrainConfig& cfg) {
  if (data.empty()) {
    throw Error(ErrorCode::kEmptyDataset, "training set has no samples");
  }
  if (cfg.steps < 0 || cfg.batch_size < 1 || !(cfg.learning_rate > 0.0) ||
      cfg.momentum < 0.0 || cfg.momentum >= 1.0 || cfg.log_every < 1 ||
      cfg.hook_every < 0) {
    throw Error(ErrorCode::kInvalidArgument, "bad training configuration");
  }
  auto [mean, scale] = token_statistics(data);
  PolicyModel model(cfg.model, cb, mean, scale);
  TrainReport report;
  report.parameter_count = model.parameter_count();

  if (cfg.gradient_check) {
    report.gradient_check = gradient_check(
        model, data, cfg.gradient_check_coordinates,
        cfg.gradient_check_samples, cfg.gradient_check_step,
        mix_seed(cfg.seed, 0x67726164ULL));
    if (!(report.gradient_check.max_relative_error <=
          cfg.gradient_check_tolerance)) {
      throw Error(ErrorCode::kGradientCheckFailed,
                  "max relative error " +
                      std::to_string(report.gradient_check.max_relative_error));
    }
  }

  Rng rng(cfg.seed);
  std::vector<int> order(data.samples.size());
  std::iota(order.begin(), order.end(), 0);
  shuffle(order, rng);
  size_t cursor = 0;
  const size_t batch =
      std::min(static_cast<size_t>(cfg.batch_size), order.size());
  std::vector<int> ids(batch);
  Vector velocity = Vector::Zero(model.parameters().size());
  Vector grad;

  for (int t = 0; t < cfg.steps; ++t) {
    for (size_t j = 0; j < batch; ++j) {
      if (cursor == order.size()) {
        shuffle(order, rng);
        cursor = 0;
      }
      ids[j] = order[cursor++];
    }
    const double loss = model.loss(data, ids, &grad);
    if (!std::isfinite(loss)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "loss diverged at step " + std::to_string(t));
    }
    const double lr =
        cfg.cosine_decay
            ? cfg.learning_rate * 0.5 *
                  (1.0 + std::cos(std::numbers::pi * t / cfg.steps))
            : cfg.learning_rate;
    velocity = cfg.momentum * velocity - lr * grad;
    model.parameters() += velocity;

    const int done = t + 1;
    if (done % cfg.log_every == 0 || done == cfg.steps || t == 0) {
      report.losses.push_back({done, loss});
    }
    if (cfg.hook_every > 0 && cfg.eval_hook && done % cfg.hook_every == 0) {
      try {
        report.hooks.push_back({done, loss, cfg.eval_hook(model, done)});
      } catch (const std::exception& e) {
        report.hook_errors.push_back("step " + std::to_string(done) + ": " +
                                     e.what());
      }
    }
  }
  std::tie(report.final_loss, report.token_accuracy) = full_loss(model, data);
  return {std::move(model), std::move(report)};
}

}  // namespace cap::policy

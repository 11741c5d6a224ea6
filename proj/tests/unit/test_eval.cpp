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
#include <numeric>
#include <set>
#include <sstream>

#include "cap/codec.hpp"
#include "cap/error.hpp"
#include "cap/eval.hpp"
#include "cap/labeler.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace cap;
using namespace cap::eval;

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

// Inverts the score test by bisection: the set of p with
// |k/n - p| <= z sqrt(p (1 - p) / n).
Interval score_interval(int k, int n, double z) {
  const double ph = static_cast<double>(k) / n;
  auto inside = [&](double p) { return std::abs(ph - p) <= z * std::sqrt(p * (1 - p) / n); };
  auto edge = [&](double out, double in) {
    for (int i = 0; i < 200; ++i) {
      const double m = 0.5 * (out + in);
      (inside(m) ? in : out) = m;
    }
    return in;
  };
  return {k == 0 ? 0.0 : edge(0.0, ph), k == n ? 1.0 : edge(1.0, ph)};
}

class Idle : public policy::AnchorPolicy {
 public:
  Idle() : AnchorPolicy(policy::TrackerConfig{}) {}
  egogym::Action act(const egogym::Observation& obs) override {
    track(obs);
    return egogym::Action{};
  }
};

control::PolicyFactory idle_factory() {
  return [](Task) { return std::make_unique<Idle>(); };
}

EvalConfig small_config(int episodes) {
  EvalConfig c;
  c.episodes = episodes;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("wilson interval") {
  const Interval w = wilson_interval(83, 100);
  CHECK(w.lo == doctest::Approx(0.744).epsilon(0.001));
  // The score formula gives 0.891 for the upper end, not the rounder 0.895.
  CHECK(w.hi == doctest::Approx(0.8911).epsilon(0.0005));
  for (int n : {1, 2, 7, 50, 333}) {
    for (int k = 0; k <= n; k += std::max(1, n / 9)) {
      const Interval a = wilson_interval(k, n), b = score_interval(k, n, kWilsonZ95);
      REQUIRE(a.lo == doctest::Approx(b.lo).epsilon(1e-9));
      REQUIRE(a.hi == doctest::Approx(b.hi).epsilon(1e-9));
    }
    for (int k : {0, n}) {
      const Interval e = wilson_interval(k, n);
      CHECK(e.lo >= 0.0);
      CHECK(e.hi <= 1.0);
      CHECK(e.hi - e.lo > 0.0);
    }
  }
  CHECK(code_of([] { wilson_interval(0, 0); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([] { wilson_interval(5, 4); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([] { wilson_interval(-1, 4); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("config validation and json round trip") {
  EvalConfig c;
  c.episodes = 0;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::kConfigInvalid);
  c = EvalConfig{};
  c.distractor_counts = {0, 6};
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::kConfigInvalid);
  c = EvalConfig{};
  c.policy = "model";
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::kConfigInvalid);
  c = EvalConfig{};
  c.prompt.kind = control::PromptKind::kClick;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::kConfigInvalid);
  c = EvalConfig{};
  c.prompt.alpha = 2;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::kConfigInvalid);
  CHECK(code_of([] { variant_from_name("kitchen"); }) == ErrorCode::kConfigInvalid);

  EvalConfig d;
  d.task = Task::kClose;
  d.episodes = 12;
  d.seed = 99;
  d.distractor_counts = {0, 2};
  d.variant = egogym::SceneVariant::kTwoGoal;
  d.prompt.kind = control::PromptKind::kMockPointing;
  d.prompt.alpha = 0.25;
  d.prompt.sigma_px = 2.5;
  d.verifier.kind = control::VerifierKind::kNoisy;
  d.verifier.false_positive = 0.05;
  d.horizon = 60;
  const nlohmann::json j = to_json(d);
  CHECK(to_json(eval_config_from_json(j)) == j);
  CHECK(code_of([] { eval_config_from_json({{"task", "juggle"}}); }) == ErrorCode::kConfigInvalid);
  CHECK(code_of([] { eval_config_from_json({{"episodes", "many"}}); }) ==
        ErrorCode::kConfigInvalid);
}

TEST_CASE("episode seeds") {
  CHECK(episode_seed(1, 0, 0) == mix_seed(mix_seed(1, 0), 0));
  std::set<uint64_t> seen;
  for (int n = 0; n <= 5; ++n) {
    for (int i = 0; i < 100; ++i) seen.insert(episode_seed(3, n, i));
  }
  CHECK(seen.size() == 600);
}

TEST_CASE("servo eval is reproducible") {
  const EvalConfig c = small_config(20);
  const EvalReport a = run_eval(c), b = run_eval(c);
  CHECK(a.to_json().dump() == b.to_json().dump());
  CHECK(a.rate >= 0.9);
  CHECK(a.results.size() == 20);
  CHECK(a.to_json(true).contains("timing"));
  CHECK_FALSE(a.to_json().contains("timing"));

  EvalConfig par = c;
  par.workers = 3;
  const EvalReport p = run_eval(par);
  for (size_t i = 0; i < p.results.size(); ++i) {
    CHECK(p.results[i].seed == a.results[i].seed);
    CHECK(p.results[i].outcome == a.results[i].outcome);
  }
  CHECK(p.successes == a.successes);
}

TEST_CASE("histogram partitions episodes") {
  EvalConfig c = small_config(30);
  c.distractor_counts = {0, 3};
  const EvalReport r = run_eval(c);
  CHECK(r.episodes == 60);
  REQUIRE(r.per_count.size() == 2);
  const auto cats = outcome_categories(Task::kPick);
  CHECK(cats.size() == 6);
  CHECK(cats.front() == "Success");
  int total = 0;
  for (const auto& [k, v] : r.histogram) {
    CHECK(std::find(cats.begin(), cats.end(), k) != cats.end());
    total += v;
  }
  CHECK(total + r.harness_errors == r.episodes);
  const int passing = static_cast<int>(std::count_if(
      r.results.begin(), r.results.end(), [](const EpisodeResult& e) { return e.success; }));
  CHECK(r.histogram.at("Success") == passing);
  CHECK(r.successes == passing);
  const Interval w = wilson_interval(r.successes, r.episodes);
  CHECK(r.interval.lo == w.lo);
  CHECK(r.interval.hi == w.hi);
  CHECK(r.per_count[0].episodes + r.per_count[1].episodes == 60);
}

TEST_CASE("always-failing policy") {
  const EvalReport r = run_eval(small_config(50), idle_factory());
  CHECK(r.rate == 0.0);
  CHECK(r.successes == 0);
  if (r.histogram.count("Success")) CHECK(r.histogram.at("Success") == 0);
  int total = 0;
  for (const auto& [k, v] : r.histogram) total += v;
  CHECK(total == 50);
  CHECK(r.histogram.at("DidNotGrasp") == 50);
}

TEST_CASE("articulated tasks classify by handle contact") {
  EvalConfig c = small_config(10);
  c.task = Task::kOpen;
  const EvalReport ok = run_eval(c);
  CHECK(ok.rate >= 0.9);
  const EvalReport idle = run_eval(c, idle_factory());
  CHECK(idle.histogram.at("NoHandleGrasp") == 10);
  const auto cats = outcome_categories(Task::kClose);
  CHECK(cats == std::vector<std::string>{"Success", "Incomplete", "NoHandleGrasp"});
}

TEST_CASE("harness errors are counted separately") {
  int made = 0;
  control::PolicyFactory flaky = [&](Task t) -> std::unique_ptr<policy::AnchorPolicy> {
    if (made++ % 2 == 0) throw Error(ErrorCode::kNoAnchor, "broken harness");
    return std::make_unique<policy::ScriptedServo>(t);
  };
  const EvalReport r = run_eval(small_config(10), flaky);
  CHECK(r.harness_errors == 5);
  CHECK(r.episodes == 10);
  int errors = 0;
  for (const auto& e : r.results) {
    if (!e.error.empty()) {
      ++errors;
      CHECK(e.outcome.empty());
    }
  }
  CHECK(errors == 5);
  CHECK(r.to_json()["harness_errors"] == 5);

  EvalConfig m = small_config(1);
  m.policy = "model";
  m.model_path = "/nonexistent/model.json";
  CHECK(code_of([&] { run_eval(m); }) == ErrorCode::kModelLoadFailure);
}

TEST_CASE("spearman") {
  CHECK(spearman({0, 1, 2, 3}, {0.9, 0.8, 0.5, 0.1}) == doctest::Approx(-1.0));
  CHECK(spearman({0, 1, 2, 3}, {1, 4, 9, 16}) == doctest::Approx(1.0));
  // Average ranks for ties, then Pearson: y ranks (1.5, 1.5, 3, 4).
  const double rx[] = {1, 2, 3, 4}, ry[] = {1.5, 1.5, 3, 4};
  double mx = 2.5, my = 2.5, sxy = 0, sxx = 0, syy = 0;
  for (int i = 0; i < 4; ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  CHECK(spearman({0, 1, 2, 3}, {5, 5, 6, 7}) == doctest::Approx(sxy / std::sqrt(sxx * syy)));
  CHECK(std::isfinite(spearman({0, 1, 2}, {1, 1, 1})));
}

TEST_CASE("bootstrap trend") {
  const std::vector<int> counts = {0, 1, 2, 3};
  std::vector<std::vector<bool>> falling, rising;
  for (int n = 0; n < 4; ++n) {
    std::vector<bool> f(200), r(200);
    for (int i = 0; i < 200; ++i) {
      f[i] = i < 180 - 40 * n;
      r[i] = i < 40 + 40 * n;
    }
    falling.push_back(f);
    rising.push_back(r);
  }
  const TrendTest a = bootstrap_trend(counts, falling, 500, 1);
  CHECK(a.rho == doctest::Approx(-1.0));
  CHECK(a.fraction_non_positive == 1.0);
  CHECK(a.non_increasing);
  const TrendTest b = bootstrap_trend(counts, rising, 500, 1);
  CHECK(b.fraction_non_positive == 0.0);
  CHECK_FALSE(b.non_increasing);
  CHECK(bootstrap_trend(counts, falling, 200, 7).fraction_non_positive ==
        bootstrap_trend(counts, falling, 200, 7).fraction_non_positive);
}

TEST_CASE("oracle sweep is flat and normalized at zero distractors") {
  EvalConfig c = small_config(40);
  c.distractor_counts = {0, 1, 2, 3, 4, 5};
  control::PromptSource mock;
  mock.kind = control::PromptKind::kMockPointing;
  mock.alpha = 0.15;
  mock.sigma_px = 3.0;
  const SweepReport s =
      distractor_sweep(c, {{"oracle", control::PromptSource{}}, {"mock", mock}}, servo_factory(), 200);
  REQUIRE(s.curves.size() == 2);
  for (const auto& curve : s.curves) {
    CHECK(curve.normalized.front() == 1.0);
    CHECK(curve.counts == c.distractor_counts);
    for (size_t i = 0; i < curve.rates.size(); ++i) {
      CHECK(curve.normalized[i] == doctest::Approx(curve.rates[i] / curve.rates[0]));
    }
  }
  CHECK(s.curves[0].spread <= 0.05);
  const nlohmann::json j = s.to_json();
  const std::string svg = sweep_svg(j);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("oracle") != std::string::npos);
  CHECK(svg.find("mock") != std::string::npos);
  size_t lines = 0;
  for (size_t p = svg.find("<polyline"); p != std::string::npos; p = svg.find("<polyline", p + 1)) {
    ++lines;
  }
  CHECK(lines == 2);
}

TEST_CASE("training hook") {
  const auto c = egogym::collect_oracle_episode(Task::kPick, 1, {});
  const std::vector<Episode> eps = {label_anchors(c.episode)};
  const Episode& e = eps[0];
  const codec::Codebook cb = codec::fit(policy::episode_actions(e), {4, 4});
  const policy::Dataset d = policy::build_dataset(eps, cb);
  const auto [mean, scale] = policy::token_statistics(d);
  policy::ModelConfig mc;
  mc.hidden = 16;
  const policy::PolicyModel untrained(mc, cb, mean, scale);

  EvalConfig hc = small_config(50);
  const policy::EvalHook hook = training_eval_hook(hc);
  const double s1 = hook(untrained, 0);
  CHECK(s1 < 0.05);
  CHECK(hook(untrained, 0) == s1);

  policy::TrainReport rep;
  rep.hooks = {{10, 0.5, 0.25}, {20, 0.125, 0.5}};
  test::TempDir tmp("hook");
  write_hook_csv(rep, tmp.path() / "h.csv");
  std::ifstream in(tmp.path() / "h.csv");
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() == "step,loss,success\n10,0.5,0.25\n20,0.125,0.5\n");

  policy::TrainConfig tc;
  tc.steps = 5;
  tc.model.hidden = 8;
  CHECK(policy::train(d, cb, tc).second.hooks.empty());
}

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
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>

#include "cap/error.hpp"
#include "cap/eval.hpp"
#include "cap/random.hpp"

namespace cap::eval {
namespace {

using nlohmann::json;

EpisodeResult run_episode(const EvalConfig& cfg,
                          const control::PolicyFactory& factory, int count,
                          int index, long& frames) {
  EpisodeResult r;
  r.seed = episode_seed(cfg.seed, count, index);
  r.distractor_count = count;
  try {
    egogym::EnvOptions opts;
    opts.seed = r.seed;
    opts.distractor_count = count;
    opts.variant = cfg.variant;
    opts.sim.horizon = cfg.horizon;
    opts.sim.pick_threshold = cfg.success_threshold;
    egogym::Environment env(
        egogym::generate_scene(cfg.task, r.seed, count, cfg.variant), opts);
    const egogym::Observation obs = env.reset();
    Rng prompt_rng(mix_seed(r.seed, 0x70726f6d7074ULL));
    const ContactAnchor anchor =
        control::make_prompt(cfg.prompt, env.scene(), env.state(), obs,
                             env.sim_config().intrinsics, "", &prompt_rng);
    auto policy = factory(cfg.task);
    const control::AttemptTrace trace =
        control::rollout(env, *policy, anchor, cfg.horizon);
    frames += trace.steps + 1;
    r.success = trace.success;
    r.max_reward = trace.max_reward;
    r.steps = trace.steps;
    r.outcome =
        classify_outcome(env.scene(), env.state(), trace, cfg.success_threshold);
    r.verified = control::verify(cfg.verifier, trace,
                                 mix_seed(r.seed, 0x766572696679ULL));
  } catch (const std::exception& e) {
    r.error = e.what();
    r.success = false;
    r.outcome.clear();
  }
  return r;
}

CountReport summarize(Task task, int count,
                      std::span<const EpisodeResult> results) {
  CountReport c;
  c.distractor_count = count;
  for (const std::string& cat : outcome_categories(task)) c.histogram[cat] = 0;
  for (const EpisodeResult& r : results) {
    ++c.episodes;
    if (!r.error.empty()) {
      ++c.harness_errors;
      continue;
    }
    c.successes += r.success ? 1 : 0;
    ++c.histogram[r.outcome];
  }
  c.rate = c.episodes ? static_cast<double>(c.successes) / c.episodes : 0.0;
  c.interval = wilson_interval(c.successes, c.episodes);
  return c;
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<int> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (size_t i = 0; i < idx.size();) {
    size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

json interval_json(const Interval& i) { return json::array({i.lo, i.hi}); }

}  // namespace

Interval wilson_interval(int successes, int n, double z) {
  if (n < 1 || successes < 0 || successes > n) {
    throw Error(ErrorCode::kInvalidArgument, "need 0 <= successes <= n, n >= 1");
  }
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half =
      z / denom * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

void EvalConfig::validate() const {
  auto fail = [](const std::string& m) {
    throw Error(ErrorCode::kConfigInvalid, m);
  };
  if (episodes < 1) fail("episodes must be >= 1");
  if (horizon < 1) fail("horizon must be > 0");
  if (distractor_counts.empty()) fail("need at least one distractor count");
  for (int n : distractor_counts) {
    if (n < 0 || n > 5) fail("distractor counts must lie in [0, 5]");
  }
  if (workers < 1) fail("workers must be >= 1");
  if (!(success_threshold > 0.0)) fail("success threshold must be positive");
  if (policy != "servo" && policy != "model") fail("unknown policy " + policy);
  if (policy == "model" && model_path.empty()) fail("model policy needs a path");
  try {
    prompt.validate();
    verifier.validate();
  } catch (const Error& e) {
    fail(e.what());
  }
  if (prompt.kind == control::PromptKind::kClick) {
    fail("click prompts need a person; use oracle, mock or pointing");
  }
}

EvalConfig eval_config_from_json(const json& j) {
  EvalConfig c;
  try {
    c.task = task_from_string(j.value("task", std::string("pick")));
    c.episodes = j.value("episodes", c.episodes);
    c.seed = j.value("seed", c.seed);
    c.distractor_counts = j.value("distractor_counts", c.distractor_counts);
    c.variant = variant_from_name(j.value("variant", std::string("standard")));
    c.horizon = j.value("horizon", c.horizon);
    c.success_threshold = j.value("success_threshold", c.success_threshold);
    c.workers = j.value("workers", c.workers);
    c.policy = j.value("policy", c.policy);
    c.model_path = j.value("model", c.model_path);
    if (j.contains("prompt")) {
      const json& p = j.at("prompt");
      c.prompt.kind =
          control::prompt_kind_from_string(p.value("kind", std::string("oracle")));
      c.prompt.sigma_px = p.value("sigma_px", 0.0);
      c.prompt.alpha = p.value("alpha", 0.0);
      c.prompt.endpoint = p.value("endpoint", std::string());
      c.prompt.timeout_s = p.value("timeout_s", 5.0);
    }
    if (j.contains("verifier")) {
      const json& v = j.at("verifier");
      const std::string kind = v.value("kind", std::string("ground_truth"));
      if (kind == "noisy") {
        c.verifier.kind = control::VerifierKind::kNoisy;
      } else if (kind != "ground_truth") {
        throw Error(ErrorCode::kConfigInvalid, "unknown verifier " + kind);
      }
      c.verifier.false_positive = v.value("fp", 0.0);
      c.verifier.false_negative = v.value("fn", 0.0);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfigInvalid, e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfigInvalid) throw;
    throw Error(ErrorCode::kConfigInvalid, e.what());
  }
  c.validate();
  return c;
}

json to_json(const EvalConfig& c) {
  return {{"task", to_string(c.task)},
          {"episodes", c.episodes},
          {"seed", c.seed},
          {"distractor_counts", c.distractor_counts},
          {"variant", variant_name(c.variant)},
          {"horizon", c.horizon},
          {"success_threshold", c.success_threshold},
          {"policy", c.policy},
          {"model", c.model_path},
          {"prompt",
           {{"kind", control::to_string(c.prompt.kind)},
            {"sigma_px", c.prompt.sigma_px},
            {"alpha", c.prompt.alpha}}},
          {"verifier",
           {{"kind", c.verifier.kind == control::VerifierKind::kNoisy
                         ? "noisy"
                         : "ground_truth"},
            {"fp", c.verifier.false_positive},
            {"fn", c.verifier.false_negative}}}};
}

std::vector<std::string> outcome_categories(Task task) {
  if (task == Task::kPick) {
    std::vector<std::string> out;
    for (egogym::Outcome o : egogym::kAllOutcomes) {
      out.push_back(egogym::to_string(o));
    }
    return out;
  }
  return {"Success", "Incomplete", "NoHandleGrasp"};
}

std::string variant_name(egogym::SceneVariant v) {
  switch (v) {
    case egogym::SceneVariant::kStandard: return "standard";
    case egogym::SceneVariant::kTwoGoal: return "two_goal";
    case egogym::SceneVariant::kComposeCabinet: return "compose_cabinet";
    case egogym::SceneVariant::kClearTable: return "clear_table";
  }
  return "standard";
}

egogym::SceneVariant variant_from_name(const std::string& s) {
  if (s == "standard") return egogym::SceneVariant::kStandard;
  if (s == "two_goal") return egogym::SceneVariant::kTwoGoal;
  if (s == "compose_cabinet") return egogym::SceneVariant::kComposeCabinet;
  if (s == "clear_table") return egogym::SceneVariant::kClearTable;
  throw Error(ErrorCode::kConfigInvalid, "unknown scene variant " + s);
}

std::string classify_outcome(const egogym::SceneSpec& scene,
                             const egogym::SimState& state,
                             const control::AttemptTrace& trace,
                             double success_threshold) {
  if (scene.task == Task::kPick) {
    egogym::FailureThresholds th;
    th.success_lift = success_threshold;
    return egogym::to_string(egogym::classify_failure(trace.trace, th));
  }
  if (trace.success) return "Success";
  const int handle = scene.articulations[state.goal].handle_id;
  const auto it = state.contact_log.find(handle);
  return it != state.contact_log.end() && it->second > 0 ? "Incomplete"
                                                         : "NoHandleGrasp";
}

uint64_t episode_seed(uint64_t seed, int distractor_count, int index) {
  return mix_seed(mix_seed(seed, static_cast<uint64_t>(distractor_count)),
                  static_cast<uint64_t>(index));
}

control::PolicyFactory servo_factory() {
  return [](Task task) -> std::unique_ptr<policy::AnchorPolicy> {
    return std::make_unique<policy::ScriptedServo>(task);
  };
}

control::PolicyFactory model_factory(
    std::shared_ptr<const policy::PolicyModel> m) {
  if (!m) throw Error(ErrorCode::kModelLoadFailure, "no model");
  return [m](Task) -> std::unique_ptr<policy::AnchorPolicy> {
    return std::make_unique<policy::PolicyAgent>(m);
  };
}

control::PolicyFactory make_policy_factory(const EvalConfig& cfg) {
  if (cfg.policy == "model") {
    return model_factory(std::make_shared<const policy::PolicyModel>(
        policy::load_model(cfg.model_path)));
  }
  return servo_factory();
}

EvalReport run_eval(const EvalConfig& cfg) {
  cfg.validate();
  return run_eval(cfg, make_policy_factory(cfg));
}

EvalReport run_eval(const EvalConfig& cfg,
                    const control::PolicyFactory& factory) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const int per = cfg.episodes;
  const int total = per * static_cast<int>(cfg.distractor_counts.size());
  std::vector<EpisodeResult> results(total);
  std::vector<long> frames(total, 0);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < total; i = next++) {
      const int count = cfg.distractor_counts[i / per];
      results[i] = run_episode(cfg, factory, count, i % per, frames[i]);
    }
  };
  if (cfg.workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < cfg.workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  EvalReport rep;
  rep.task = cfg.task;
  for (const std::string& cat : outcome_categories(cfg.task)) rep.histogram[cat] = 0;
  for (size_t c = 0; c < cfg.distractor_counts.size(); ++c) {
    const std::span<const EpisodeResult> slice(results.data() + c * per, per);
    CountReport cr = summarize(cfg.task, cfg.distractor_counts[c], slice);
    rep.episodes += cr.episodes;
    rep.successes += cr.successes;
    rep.harness_errors += cr.harness_errors;
    for (const auto& [k, v] : cr.histogram) rep.histogram[k] += v;
    rep.per_count.push_back(std::move(cr));
  }
  for (const EpisodeResult& r : results) rep.verified_successes += r.verified;
  rep.rate = static_cast<double>(rep.successes) / rep.episodes;
  rep.interval = wilson_interval(rep.successes, rep.episodes);
  rep.results = std::move(results);
  rep.frames = std::accumulate(frames.begin(), frames.end(), 0L);
  rep.wall_seconds = std::chrono::duration<double>(
                         std::chrono::steady_clock::now() - start)
                         .count();
  rep.frames_per_second =
      rep.wall_seconds > 0.0 ? static_cast<double>(rep.frames) / rep.wall_seconds : 0.0;
  return rep;
}

json EvalReport::to_json(bool include_timing) const {
  json j;
  j["schema_version"] = kReportSchemaVersion;
  j["task"] = to_string(task);
  j["episodes"] = episodes;
  j["successes"] = successes;
  j["rate"] = rate;
  j["interval"] = interval_json(interval);
  j["verified_successes"] = verified_successes;
  j["harness_errors"] = harness_errors;
  j["histogram"] = histogram;
  json counts = json::array();
  for (const CountReport& c : per_count) {
    counts.push_back({{"distractor_count", c.distractor_count},
                      {"episodes", c.episodes},
                      {"successes", c.successes},
                      {"harness_errors", c.harness_errors},
                      {"rate", c.rate},
                      {"interval", interval_json(c.interval)},
                      {"histogram", c.histogram}});
  }
  j["per_count"] = std::move(counts);
  json eps = json::array();
  for (const EpisodeResult& r : results) {
    json e = {{"seed", r.seed},
              {"distractor_count", r.distractor_count},
              {"success", r.success},
              {"verified", r.verified},
              {"outcome", r.outcome},
              {"max_reward", r.max_reward},
              {"steps", r.steps}};
    if (!r.error.empty()) e["error"] = r.error;
    eps.push_back(std::move(e));
  }
  j["results"] = std::move(eps);
  j["frames"] = frames;
  if (include_timing) {
    j["timing"] = {{"wall_seconds", wall_seconds},
                   {"frames_per_second", frames_per_second}};
  }
  return j;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "spearman needs paired samples");
  }
  const std::vector<double> rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

TrendTest bootstrap_trend(const std::vector<int>& counts,
                          const std::vector<std::vector<bool>>& outcomes,
                          int replicates, uint64_t seed, double confidence) {
  if (counts.size() != outcomes.size() || counts.size() < 2 || replicates < 1) {
    throw Error(ErrorCode::kInvalidArgument, "bad trend test input");
  }
  std::vector<double> x(counts.begin(), counts.end());
  auto rate = [](const std::vector<bool>& v) {
    return v.empty() ? 0.0
                     : static_cast<double>(std::count(v.begin(), v.end(), true)) /
                           static_cast<double>(v.size());
  };
  std::vector<double> observed;
  for (const auto& o : outcomes) observed.push_back(rate(o));
  TrendTest t;
  t.rho = spearman(x, observed);
  t.replicates = replicates;
  Rng rng(seed);
  int non_positive = 0;
  std::vector<double> y(counts.size());
  for (int r = 0; r < replicates; ++r) {
    for (size_t c = 0; c < outcomes.size(); ++c) {
      const auto& o = outcomes[c];
      int s = 0;
      for (size_t i = 0; i < o.size(); ++i) s += o[rng.index(o.size())];
      y[c] = o.empty() ? 0.0 : static_cast<double>(s) / static_cast<double>(o.size());
    }
    if (spearman(x, y) <= 0.0) ++non_positive;
  }
  t.fraction_non_positive = static_cast<double>(non_positive) / replicates;
  t.non_increasing = t.fraction_non_positive >= confidence;
  return t;
}

SweepReport distractor_sweep(const EvalConfig& base,
                             const std::vector<SweepSource>& sources,
                             const control::PolicyFactory& factory,
                             int bootstrap_replicates) {
  if (base.task != Task::kPick) {
    throw Error(ErrorCode::kConfigInvalid, "the distractor sweep is Pick-only");
  }
  base.validate();
  SweepReport out;
  for (size_t s = 0; s < sources.size(); ++s) {
    SweepCurve curve;
    curve.name = sources[s].name;
    curve.counts = base.distractor_counts;
    std::vector<std::vector<bool>> outcomes;
    for (int n : base.distractor_counts) {
      EvalConfig cfg = base;
      cfg.prompt = sources[s].prompt;
      cfg.distractor_counts = {n};
      EvalReport r = run_eval(cfg, factory);
      curve.rates.push_back(r.rate);
      std::vector<bool> o;
      for (const EpisodeResult& e : r.results) o.push_back(e.success);
      outcomes.push_back(std::move(o));
      curve.reports.push_back(std::move(r));
    }
    const double r0 = curve.rates.front();
    for (double r : curve.rates) {
      curve.normalized.push_back(
          r0 > 0.0 ? r / r0 : (r == r0 ? 1.0 : std::numeric_limits<double>::infinity()));
    }
    const auto [lo, hi] = std::minmax_element(curve.rates.begin(), curve.rates.end());
    curve.spread = *hi - *lo;
    if (curve.counts.size() >= 2) {
      curve.trend = bootstrap_trend(curve.counts, outcomes, bootstrap_replicates,
                                    mix_seed(base.seed, s + 0x74726e64ULL));
    }
    out.curves.push_back(std::move(curve));
  }
  return out;
}

json SweepReport::to_json() const {
  json curves_j = json::array();
  for (const SweepCurve& c : curves) {
    json reports = json::array();
    for (const EvalReport& r : c.reports) reports.push_back(r.to_json());
    curves_j.push_back({{"name", c.name},
                        {"counts", c.counts},
                        {"rates", c.rates},
                        {"normalized", c.normalized},
                        {"spread", c.spread},
                        {"trend",
                         {{"rho", c.trend.rho},
                          {"fraction_non_positive", c.trend.fraction_non_positive},
                          {"replicates", c.trend.replicates},
                          {"non_increasing", c.trend.non_increasing}}},
                        {"reports", std::move(reports)}});
  }
  return {{"schema_version", kReportSchemaVersion}, {"curves", curves_j}};
}

std::string sweep_svg(const json& sweep) {
  const double w = 480, h = 320, left = 50, right = 20, top = 20, bottom = 40;
  const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd"};
  std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>> lines;
  double xmax = 1.0, ymax = 1.2;
  try {
    for (const auto& c : sweep.at("curves")) {
      const auto counts = c.at("counts").get<std::vector<int>>();
      const auto& norm = c.at("normalized");
      std::vector<std::pair<double, double>> pts;
      for (size_t i = 0; i < counts.size(); ++i) {
        if (!norm[i].is_number()) continue;
        const double y = norm[i].get<double>();
        pts.emplace_back(counts[i], y);
        xmax = std::max(xmax, static_cast<double>(counts[i]));
        ymax = std::max(ymax, y * 1.1);
      }
      lines.emplace_back(c.at("name").get<std::string>(), std::move(pts));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("bad sweep report: ") + e.what());
  }
  auto sx = [&](double x) { return left + x / xmax * (w - left - right); };
  auto sy = [&](double y) { return h - bottom - y / ymax * (h - top - bottom); };
  std::string svg;
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" "
                "height=\"%.0f\" font-family=\"sans-serif\" font-size=\"12\">\n",
                w, h);
  svg += buf;
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n"
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n",
                left, sy(0), w - right, sy(0), left, sy(0), left, top);
  svg += buf;
  for (int x = 0; x <= static_cast<int>(xmax); ++x) {
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%d</text>\n",
                  sx(x), h - bottom + 16, x);
    svg += buf;
  }
  for (double y = 0.0; y <= ymax + 1e-9; y += 0.2) {
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%.1f</text>\n",
                  left - 6, sy(y) + 4, y);
    svg += buf;
  }
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">distractors</text>\n",
                (left + w - right) / 2, h - 6);
  svg += buf;
  for (size_t i = 0; i < lines.size(); ++i) {
    const char* color = palette[i % 5];
    std::string pts;
    for (const auto& [x, y] : lines[i].second) {
      std::snprintf(buf, sizeof(buf), "%.1f,%.1f ", sx(x), sy(y));
      pts += buf;
    }
    svg += "<polyline fill=\"none\" stroke-width=\"2\" stroke=\"" +
           std::string(color) + "\" points=\"" + pts + "\"/>\n";
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.1f\" y=\"%.1f\" fill=\"%s\">%s</text>\n",
                  w - right - 120, top + 14.0 * (i + 1), color,
                  lines[i].first.c_str());
    svg += buf;
  }
  svg += "</svg>\n";
  return svg;
}

policy::EvalHook training_eval_hook(const EvalConfig& cfg) {
  cfg.validate();
  return [cfg](const policy::PolicyModel& m, int) {
    return run_eval(cfg, model_factory(std::make_shared<const policy::PolicyModel>(m)))
        .rate;
  };
}

void write_hook_csv(const policy::TrainReport& report,
                    const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw Error(ErrorCode::kInvalidArgument, "cannot write " + path.string());
  }
  out << "step,loss,success\n";
  char buf[128];
  for (const policy::HookRecord& r : report.hooks) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", r.step, r.loss, r.success);
    out << buf;
  }
}

}  // namespace cap::eval

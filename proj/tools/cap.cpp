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


// Command-line front end: collect -> label -> filter -> train -> eval, plus
// the control stack and the session server.

#include <algorithm>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cap/codec.hpp"
#include "cap/control.hpp"
#include "cap/egogym.hpp"
#include "cap/episode.hpp"
#include "cap/error.hpp"
#include "cap/eval.hpp"
#include "cap/labeler.hpp"
#include "cap/policy.hpp"
#include "cap/random.hpp"
#include "cap/session.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cap;

namespace {

// A single episode directory, or every episode directory directly below.
std::vector<fs::path> episode_dirs(const fs::path& root) {
  if (fs::exists(root / "manifest.json")) return {root};
  std::vector<fs::path> out;
  if (fs::is_directory(root)) {
    for (const auto& entry : fs::directory_iterator(root)) {
      if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) {
        out.push_back(entry.path());
      }
    }
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) {
    throw Error(ErrorCode::kMissingManifest, "no episodes under " + root.string());
  }
  return out;
}

// Writes next to the original and swaps, so images copied from
// e.source_dir are never read and written at once.
void rewrite(const Episode& e, const fs::path& dir) {
  const fs::path tmp = dir.string() + ".tmp";
  fs::remove_all(tmp);
  write_episode(e, tmp);
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kInvalidArgument, "cannot read " + path.string());
  return json::parse(in);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kInvalidArgument, "cannot write " + path.string());
  out << text;
}

std::vector<Episode> read_all(const fs::path& root, bool images) {
  std::vector<Episode> out;
  for (const auto& dir : episode_dirs(root)) out.push_back(read_episode(dir, images));
  return out;
}

control::PromptSource prompt_source(const std::string& kind, double alpha,
                                    double sigma, const std::string& endpoint) {
  control::PromptSource p;
  p.kind = control::prompt_kind_from_string(kind);
  p.alpha = alpha;
  p.sigma_px = sigma;
  p.endpoint = endpoint;
  p.validate();
  return p;
}

control::Verifier verifier(double fp, double fn) {
  control::Verifier v;
  if (fp > 0.0 || fn > 0.0) v.kind = control::VerifierKind::kNoisy;
  v.false_positive = fp;
  v.false_negative = fn;
  v.validate();
  return v;
}

control::PolicyFactory factory_for(const std::string& model_path) {
  if (model_path.empty()) return eval::servo_factory();
  return eval::model_factory(
      std::make_shared<const policy::PolicyModel>(policy::load_model(model_path)));
}

session::SessionServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contact-anchored manipulation toolkit"};
  app.require_subcommand(1);

  // filter
  auto* filter = app.add_subcommand("filter", "Drop static frames in place");
  std::string filter_dir;
  double trans_cm = 0.3, rot_rad = 0.1, aper = 0.05;
  filter->add_option("dir", filter_dir, "Episode or dataset directory")->required();
  filter->add_option("--trans-cm", trans_cm, "Translation threshold (cm)");
  filter->add_option("--rot-rad", rot_rad, "Rotation threshold (rad)");
  filter->add_option("--aper", aper, "Aperture threshold");
  filter->callback([&] {
    StaticFilterConfig cfg{trans_cm / 100.0, rot_rad, aper};
    for (const auto& dir : episode_dirs(filter_dir)) {
      const Episode e = read_episode(dir, false);
      const Episode f = filter_static(e, cfg);
      rewrite(f, dir);
      std::cout << dir.string() << ": " << e.frames.size() << " -> "
                << f.frames.size() << " frames\n";
    }
  });

  // mirror
  auto* mirror = app.add_subcommand("mirror", "Write left-right mirrored episodes");
  std::string mirror_dir, mirror_out;
  mirror->add_option("dir", mirror_dir, "Episode or dataset directory")->required();
  mirror->add_option("--out", mirror_out, "Output directory")->required();
  mirror->callback([&] {
    const auto dirs = episode_dirs(mirror_dir);
    const bool single = dirs.size() == 1 && dirs[0] == fs::path(mirror_dir);
    for (const auto& dir : dirs) {
      Episode e = read_episode(dir, true);
      const Episode m = mirror_episode(e);
      const fs::path out = single ? fs::path(mirror_out) : fs::path(mirror_out) / dir.filename();
      write_episode(m, out);
      std::cout << out.string() << "\n";
    }
  });

  // label
  auto* label = app.add_subcommand("label", "Write hindsight contact anchors in place");
  std::string label_dir;
  ContactDetectionConfig label_cfg;
  label->add_option("dir", label_dir, "Episode or dataset directory")->required();
  label->add_option("--stall-eps", label_cfg.stall_eps, "Aperture stall tolerance");
  label->add_option("--stall-window", label_cfg.stall_window, "Stall window (frames)");
  label->add_option("--min-close", label_cfg.min_close, "Minimum aperture drop");
  label->callback([&] {
    label_cfg.validate();
    int labeled = 0, skipped = 0;
    for (const auto& dir : episode_dirs(label_dir)) {
      const Episode e = read_episode(dir, false);
      try {
        rewrite(label_anchors(e, label_cfg), dir);
        ++labeled;
      } catch (const Error& err) {
        if (err.code() != ErrorCode::kNoContactFound) throw;
        std::cerr << dir.string() << ": " << err.what() << "\n";
        ++skipped;
      }
    }
    std::cout << "labeled " << labeled << ", no contact " << skipped << "\n";
  });

  // collect
  auto* collect = app.add_subcommand("collect", "Record scripted demonstrations");
  std::string collect_task = "pick", collect_out, collect_variant = "standard";
  int collect_n = 10, collect_distractors = 0, collect_horizon = 80;
  uint64_t collect_seed = 0;
  bool keep_failures = false;
  collect->add_option("--task", collect_task, "pick, open or close");
  collect->add_option("--episodes", collect_n, "Number of episodes");
  collect->add_option("--seed", collect_seed, "Base seed");
  collect->add_option("--out", collect_out, "Dataset directory")->required();
  collect->add_option("--distractors", collect_distractors, "Distractor objects");
  collect->add_option("--variant", collect_variant, "Scene variant");
  collect->add_option("--horizon", collect_horizon, "Steps per episode");
  collect->add_flag("--keep-failures", keep_failures, "Also write failed demos");
  collect->callback([&] {
    egogym::CollectOptions co;
    co.distractor_count = collect_distractors;
    co.variant = eval::variant_from_name(collect_variant);
    co.horizon = collect_horizon;
    const Task task = task_from_string(collect_task);
    int written = 0;
    for (int i = 0; i < collect_n; ++i) {
      const uint64_t seed = mix_seed(collect_seed, static_cast<uint64_t>(i));
      const egogym::CollectedEpisode c = egogym::collect_oracle_episode(task, seed, co);
      if (!c.success && !keep_failures) continue;
      char name[32];
      std::snprintf(name, sizeof(name), "episode_%06d", i);
      write_episode(c.episode, fs::path(collect_out) / name);
      ++written;
    }
    std::cout << "wrote " << written << " of " << collect_n << " episodes\n";
  });

  // train-tokenizer
  auto* tok = app.add_subcommand("train-tokenizer", "Fit the residual action codebook");
  std::string tok_data, tok_out;
  std::vector<int> stages = {16, 16};
  uint64_t tok_seed = 0;
  tok->add_option("--data", tok_data, "Dataset directory")->required();
  tok->add_option("--out", tok_out, "Codebook JSON")->required();
  tok->add_option("--stages", stages, "Codewords per stage")->delimiter(',');
  tok->add_option("--seed", tok_seed, "k-means seed");
  tok->callback([&] {
    std::vector<codec::Vector> actions;
    for (const Episode& e : read_all(tok_data, false)) {
      for (auto& a : policy::episode_actions(e)) actions.push_back(std::move(a));
    }
    codec::FitOptions fo;
    fo.seed = tok_seed;
    const codec::Codebook cb = codec::fit(actions, stages, fo);
    codec::save_codebook(cb, tok_out);
    std::cout << actions.size() << " actions, mse "
              << codec::reconstruction_mse(cb, actions, static_cast<int>(stages.size()))
              << ", hash " << codec::codebook_hash(cb) << "\n";
  });

  // train-policy
  auto* tp = app.add_subcommand("train-policy", "Train the contact-conditioned policy");
  std::string tp_data, tp_out, tp_tokenizer, hook_csv, hook_config;
  policy::TrainConfig tc;
  bool rgb_only = false, tp_mirror = false;
  tp->add_option("--data", tp_data, "Labeled dataset directory")->required();
  tp->add_option("--out", tp_out, "Model JSON")->required();
  tp->add_option("--tokenizer", tp_tokenizer, "Codebook JSON (fit [16,16] if absent)");
  tp->add_flag("--rgb-only", rgb_only, "Zero the anchor input");
  tp->add_flag("--mirror", tp_mirror, "Add mirrored copies of every episode");
  tp->add_option("--steps", tc.steps, "Optimizer steps");
  tp->add_option("--batch", tc.batch_size, "Batch size");
  tp->add_option("--lr", tc.learning_rate, "Learning rate");
  tp->add_option("--hidden", tc.model.hidden, "Hidden width");
  tp->add_option("--seed", tc.seed, "Initialization and batch seed");
  tp->add_option("--hook-every", tc.hook_every, "Run an evaluation every N steps");
  tp->add_option("--hook-config", hook_config, "Eval config JSON for the hook");
  tp->add_option("--hook-csv", hook_csv, "Write step,loss,success rows");
  tp->callback([&] {
    std::vector<Episode> episodes = read_all(tp_data, true);
    codec::Codebook cb;
    if (!tp_tokenizer.empty()) {
      cb = codec::load_codebook(tp_tokenizer);
    } else {
      std::vector<codec::Vector> actions;
      for (const Episode& e : episodes) {
        for (auto& a : policy::episode_actions(e)) actions.push_back(std::move(a));
      }
      cb = codec::fit(actions, {16, 16}, {});
    }
    policy::DatasetOptions dop;
    dop.mirror_augment = tp_mirror;
    const policy::Dataset data = policy::build_dataset(episodes, cb, dop);
    tc.model.rgb_only = rgb_only;
    tc.model.seed = tc.seed;
    if (tc.hook_every > 0) {
      eval::EvalConfig ec;
      if (!hook_config.empty()) ec = eval::eval_config_from_json(read_json(hook_config));
      tc.eval_hook = eval::training_eval_hook(ec);
    }
    auto [model, report] = policy::train(data, cb, tc);
    policy::save_model(model, tp_out);
    if (!hook_csv.empty()) eval::write_hook_csv(report, hook_csv);
    std::cout << data.samples.size() << " samples, " << report.parameter_count
              << " parameters, gradient check "
              << report.gradient_check.max_relative_error << ", final loss "
              << report.final_loss << ", token accuracy " << report.token_accuracy
              << "\n";
    for (const auto& err : report.hook_errors) std::cerr << "hook: " << err << "\n";
  });

  // retry
  auto* retry = app.add_subcommand("retry", "Verifier-guided retries in simulation");
  std::string retry_task = "pick", retry_prompt = "oracle", retry_model, retry_endpoint;
  double fp = 0.0, fn = 0.0, retry_alpha = 0.15, retry_sigma = 3.0;
  int trials = 100, max_retries = 10, retry_distractors = 0;
  uint64_t retry_seed = 0;
  retry->add_option("--task", retry_task, "pick, open or close");
  retry->add_option("--prompt", retry_prompt, "oracle, mock or pointing");
  retry->add_option("--alpha", retry_alpha, "Mock confusion rate");
  retry->add_option("--sigma", retry_sigma, "Mock pixel noise");
  retry->add_option("--endpoint", retry_endpoint, "Pointing model URL");
  retry->add_option("--fp", fp, "Verifier false-positive rate");
  retry->add_option("--fn", fn, "Verifier false-negative rate");
  retry->add_option("--trials", trials, "Number of trials");
  retry->add_option("--max-retries", max_retries, "Retries after the first attempt");
  retry->add_option("--distractors", retry_distractors, "Distractor objects");
  retry->add_option("--seed", retry_seed, "Base seed");
  retry->add_option("--model", retry_model, "Model JSON (scripted servo if absent)");
  retry->callback([&] {
    const control::Verifier v = verifier(fp, fn);
    const control::PolicyFactory factory = factory_for(retry_model);
    int verified = 0, truth = 0, first = 0;
    long attempts = 0;
    for (int i = 0; i < trials; ++i) {
      control::SimTrialConfig sc;
      sc.task = task_from_string(retry_task);
      sc.seed = mix_seed(retry_seed, static_cast<uint64_t>(i));
      sc.distractor_count = retry_distractors;
      sc.prompt = prompt_source(retry_prompt, retry_alpha, retry_sigma, retry_endpoint);
      const control::RetryResult r = control::run_with_retries(
          control::make_sim_attempt(sc, factory), v, max_retries, sc.seed);
      verified += r.verified;
      truth += r.ground_truth;
      first += !r.records.empty() && r.records.front().trace.success;
      attempts += r.attempts;
    }
    json out{{"trials", trials},
             {"first_attempt_success", static_cast<double>(first) / trials},
             {"verified_success", static_cast<double>(verified) / trials},
             {"ground_truth_success", static_cast<double>(truth) / trials},
             {"mean_attempts", static_cast<double>(attempts) / trials}};
    std::cout << out.dump(2) << "\n";
  });

  // compose
  auto* compose = app.add_subcommand("compose", "Run a multi-tool plan");
  std::string plan_path, compose_variant = "compose_cabinet";
  uint64_t compose_seed = 0;
  int compose_distractors = 0;
  compose->add_option("plan", plan_path, "Plan JSON")->required();
  compose->add_option("--seed", compose_seed, "Scene and verifier seed");
  compose->add_option("--variant", compose_variant, "Scene variant");
  compose->add_option("--distractors", compose_distractors, "Distractor objects");
  compose->callback([&] {
    const json j = read_json(plan_path);
    const control::ToolPlan plan = control::plan_from_json(j);
    std::string variant = compose_variant;
    uint64_t seed = compose_seed;
    if (j.contains("scene")) {
      variant = j["scene"].value("variant", variant);
      seed = j["scene"].value("seed", seed);
      compose_distractors = j["scene"].value("distractor_count", compose_distractors);
    }
    control::World world = control::World::from_scene(egogym::generate_scene(
        Task::kPick, seed, compose_distractors, eval::variant_from_name(variant)));
    const control::ComposeReport rep =
        control::compose_tools(plan, world, control::sim_tools(), seed);
    std::cout << rep.to_json().dump(2) << "\n";
  });

  // eval
  auto* ev = app.add_subcommand("eval", "Batch evaluation");
  std::string eval_config, eval_out;
  bool timing = false;
  ev->add_option("--config", eval_config, "Eval config JSON")->required();
  ev->add_option("--out", eval_out, "Report JSON");
  ev->add_flag("--timing", timing, "Include wall-clock fields in the report");
  ev->callback([&] {
    const eval::EvalConfig cfg = eval::eval_config_from_json(read_json(eval_config));
    const eval::EvalReport rep = eval::run_eval(cfg);
    const std::string text = rep.to_json(timing).dump(2);
    if (eval_out.empty()) {
      std::cout << text << "\n";
    } else {
      write_text(eval_out, text);
      std::cout << rep.successes << "/" << rep.episodes << " success, 95% ["
                << rep.interval.lo << ", " << rep.interval.hi << "]\n";
    }
  });

  // sweep-distractors
  auto* sweep = app.add_subcommand("sweep-distractors", "Success versus distractor count");
  std::string sweep_config, sweep_out, sweep_model;
  int sweep_episodes = 500, replicates = 1000;
  uint64_t sweep_seed = 0;
  double sweep_alpha = 0.15, sweep_sigma = 3.0;
  sweep->add_option("--config", sweep_config, "Base eval config JSON");
  sweep->add_option("--episodes", sweep_episodes, "Episodes per count");
  sweep->add_option("--seed", sweep_seed, "Base seed");
  sweep->add_option("--alpha", sweep_alpha, "Mock confusion rate");
  sweep->add_option("--sigma", sweep_sigma, "Mock pixel noise");
  sweep->add_option("--replicates", replicates, "Bootstrap replicates");
  sweep->add_option("--model", sweep_model, "Model JSON (scripted servo if absent)");
  sweep->add_option("--out", sweep_out, "Sweep JSON")->required();
  sweep->callback([&] {
    eval::EvalConfig base;
    if (!sweep_config.empty()) {
      base = eval::eval_config_from_json(read_json(sweep_config));
    } else {
      base.episodes = sweep_episodes;
      base.seed = sweep_seed;
    }
    base.distractor_counts = {0, 1, 2, 3, 4, 5};
    control::PromptSource oracle;
    const std::vector<eval::SweepSource> sources = {
        {"oracle", oracle},
        {"mock", prompt_source("mock", sweep_alpha, sweep_sigma, "")}};
    const eval::SweepReport rep = eval::distractor_sweep(
        base, sources, factory_for(sweep_model), replicates);
    write_text(sweep_out, rep.to_json().dump(2));
    for (const auto& c : rep.curves) {
      std::cout << c.name << ": spread " << c.spread << ", rho " << c.trend.rho
                << ", P(rho<=0) " << c.trend.fraction_non_positive << "\n";
    }
  });

  // report
  auto* report = app.add_subcommand("report", "Summarize a report or sweep JSON");
  std::string report_in, plot;
  report->add_option("input", report_in, "Report or sweep JSON")->required();
  report->add_option("--plot", plot, "Write an SVG plot of a sweep");
  report->callback([&] {
    const json j = read_json(report_in);
    if (j.contains("curves")) {
      for (const auto& c : j["curves"]) {
        std::cout << c.value("name", std::string("?")) << ": "
                  << c["normalized"].dump() << "\n";
      }
      if (!plot.empty()) write_text(plot, eval::sweep_svg(j));
    } else {
      if (!plot.empty()) {
        throw Error(ErrorCode::kInvalidArgument, "--plot needs a sweep JSON");
      }
      std::cout << j.value("successes", 0) << "/" << j.value("episodes", 0)
                << " success\n";
      if (j.contains("histogram")) std::cout << j["histogram"].dump(2) << "\n";
    }
  });

  // serve
  auto* serve = app.add_subcommand("serve", "Interactive session server");
  std::string host = "127.0.0.1", serve_model;
  int port = 8080;
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port (0 picks one)");
  serve->add_option("--model", serve_model, "Model JSON (scripted servo if absent)");
  serve->callback([&] {
    session::ServiceOptions so;
    so.model_path = serve_model;
    session::SessionServer server(so);
    if (!serve_model.empty() && !server.model_loaded()) {
      std::cerr << "model unavailable: " << server.model_error() << "\n";
    }
    const int bound = server.start(host, port);
    std::cout << "listening on http://" << host << ":" << bound << std::endl;
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    server.wait();
    g_server = nullptr;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

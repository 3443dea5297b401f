#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sanet/checks.hpp"
#include "sanet/evaluation.hpp"
#include "sanet/io.hpp"
#include "sanet/pipeline.hpp"
#include "sanet/tracker.hpp"
#include <spdlog/spdlog.h>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sanet;

namespace {

constexpr int kUsage = 1;
constexpr int kRuntime = 2;
constexpr int kCheckFailed = 3;

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  std::string out = "out";
  bool ablate = false;
};

void add_common(CLI::App* cmd, Common& c, bool ablate) {
  cmd->add_option("--config", c.config, "JSON configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "seed for every random stream");
  cmd->add_option("--out", c.out, "output directory");
  if (ablate) cmd->add_flag("--ablate-rnn", c.ablate, "disable the recurrent fusion (CNN-only)");
}

RunConfig load_config(const Common& c) { return c.config.empty() ? RunConfig{} : load_run_config(c.config); }

json common_inputs(const Common& c) {
  json j;
  j["config_file"] = c.config.empty() ? json(nullptr) : json(c.config);
  j["ablate_rnn"] = c.ablate;
  return j;
}

void write_sequence_with_distractors(const SynthResult& r, const fs::path& dir) {
  save_sequence(r.sequence, dir);
  if (!r.distractor_boxes.empty()) write_file(dir / "distractor_rect.txt", format_groundtruth(r.distractor_boxes));
}

TrainingSequence load_training_sequence(const fs::path& dir) {
  TrainingSequence ts{load_sequence(dir), {}};
  if (fs::exists(dir / "distractor_rect.txt")) ts.distractors = parse_groundtruth(read_file(dir / "distractor_rect.txt"));
  return ts;
}

void write_trajectory(const Trajectory& t, std::uint64_t seed, const RunConfig& cfg, const fs::path& out) {
  write_file(out / "trajectory.csv", trajectory_csv(t));
  write_file(out / "trajectory.json", trajectory_json(t, seed, config_hash(cfg)));
}

void write_metrics(const MetricReport& r, const fs::path& out) {
  write_file(out / "metrics.json", metric_report_json(r));
  write_file(out / "precision.csv", curve_csv(r.precision.thresholds, r.precision.curve));
  write_file(out / "success.csv", curve_csv(r.success.thresholds, r.success.curve));
}

int cmd_synth(const Common& c) {
  const RunConfig cfg = load_config(c);
  const SynthResult r = evaluation_scene(c.seed, cfg.synth_length);
  write_sequence_with_distractors(r, c.out);
  write_run_json(c.out, "synth", c.seed, cfg, common_inputs(c),
                 {{"sequence", "img/"}, {"groundtruth", "groundtruth_rect.txt"}, {"distractors", "distractor_rect.txt"}});
  std::printf("wrote %zu frames of %s to %s\n", r.sequence.size(), r.sequence.name.c_str(), c.out.c_str());
  return 0;
}

int cmd_train(const Common& c, const std::vector<std::string>& dirs) {
  const RunConfig cfg = load_config(c);
  std::vector<TrainingSequence> seqs;
  if (dirs.empty()) {
    seqs = synth_training_set(c.seed, cfg.training.domains, cfg.training.sequence_length);
  } else {
    for (const auto& d : dirs) seqs.push_back(load_training_sequence(d));
  }
  const PretrainResult r = pretrain(cfg, seqs, c.seed, c.ablate);
  fs::create_directories(c.out);
  save_checkpoint(fs::path(c.out) / "net.ckpt", r.net,
                  {{"iterations", r.log.rows.size()}, {"converged", r.log.converged}, {"domains", seqs.size()}});
  write_file(fs::path(c.out) / "train_log.csv", training_log_csv(r.log));
  json in = common_inputs(c);
  in["sequences"] = dirs;
  write_run_json(c.out, "train", c.seed, cfg, in, {{"checkpoint", "net.ckpt"}, {"log", "train_log.csv"}});
  const auto& last = r.log.rows.back();
  std::printf("trained %zu iterations on %zu domains: loss %.4f, accuracy %.3f\n", r.log.rows.size(), seqs.size(),
              last.loss, last.accuracy);
  return 0;
}

int cmd_track(const Common& c, const std::string& seq_dir, const std::string& checkpoint) {
  const RunConfig cfg = load_config(c);
  const Checkpoint ck = load_checkpoint(checkpoint);
  const Sequence seq = load_sequence(seq_dir);
  const Trajectory t = track_sequence(ck.net, seq, cfg.tracker, c.seed);
  fs::create_directories(c.out);
  write_trajectory(t, c.seed, cfg, c.out);
  json in = common_inputs(c);
  in["sequence"] = seq_dir;
  in["checkpoint"] = checkpoint;
  write_run_json(c.out, "track", c.seed, cfg, in, {{"trajectory", {"trajectory.csv", "trajectory.json"}}});
  std::printf("tracked %zu frames of %s\n", t.size(), seq.name.c_str());
  return 0;
}

int cmd_eval(const Common& c, const std::string& seq_dir, const std::string& trajectory, const std::string& checkpoint) {
  const RunConfig cfg = load_config(c);
  const Sequence seq = load_sequence(seq_dir);
  if (seq.groundtruth.size() != seq.size()) throw std::runtime_error("evaluation needs ground truth on every frame");
  const Trajectory t = parse_trajectory_csv(read_file(trajectory));
  MetricReport r = evaluate_trajectory(t, trajectory_from_boxes(seq.groundtruth), seq.name);
  if (!checkpoint.empty()) {
    const Checkpoint ck = load_checkpoint(checkpoint);
    const Sanet<float> net = tracking_network(ck.net, c.seed);
    const TrackerConfig tc = seeded_tracker_config(cfg.tracker, c.seed);
    std::unique_ptr<Tracker> tracker;
    TrackerRunner runner{[&](const Image& f, const BBox& b) {
                           tracker = std::make_unique<Tracker>(net, tc);
                           tracker->initialize(f, b);
                         },
                         [&](const Image& f) { return tracker->track(f).box; }};
    r.vot = vot_style_eval(runner, seq);
  }
  fs::create_directories(c.out);
  write_metrics(r, c.out);
  json in = common_inputs(c);
  in["sequence"] = seq_dir;
  in["trajectory"] = trajectory;
  in["checkpoint"] = checkpoint.empty() ? json(nullptr) : json(checkpoint);
  write_run_json(c.out, "eval", c.seed, cfg, in,
                 {{"metrics", "metrics.json"}, {"curves", {"precision.csv", "success.csv"}}});
  std::printf("precision@20 %.4f  success AUC %.4f\n", r.precision.at_20, r.success.auc);
  if (r.vot) std::printf("failures %zu  accuracy %.4f\n", r.vot->failures, r.vot->accuracy);
  return 0;
}

int cmd_gradcheck(const Common& c, bool write) {
  const RunConfig cfg = load_config(c);
  json results = json::array();
  bool ok = true;
  auto report = [&](const char* suite, const std::vector<GradientCheck>& checks) {
    double worst = 0;
    for (const auto& g : checks) {
      worst = std::max(worst, g.max_error);
      if (!g.passed()) std::printf("FAIL %s: %.3e >= %.0e\n", g.name.c_str(), g.max_error, g.tolerance);
      results.push_back({{"suite", suite}, {"name", g.name}, {"max_relative_error", g.max_error},
                         {"tolerance", g.tolerance}, {"passed", g.passed()}});
    }
    const bool pass = all_passed(checks);
    ok = ok && pass;
    std::printf("%s %s: %zu tensors, worst relative error %.3e\n", pass ? "PASS" : "FAIL", suite, checks.size(), worst);
    std::fflush(stdout);
  };
  report("dagrnn", dagrnn_gradient_checks(c.seed + 1));
  report("layers", layer_gradient_checks(c.seed + 2));
  report("network", network_gradient_checks(c.seed + 3));
  if (write) {
    fs::create_directories(c.out);
    write_file(fs::path(c.out) / "gradcheck.json", results.dump(2) + "\n");
    write_run_json(c.out, "gradcheck", c.seed, cfg, common_inputs(c), {{"results", "gradcheck.json"}});
  }
  return ok ? 0 : kCheckFailed;
}

int cmd_demo(const Common& c) {
  const RunConfig cfg = load_config(c);
  const DemoResult d = run_demo(cfg, c.seed, c.ablate);
  const fs::path out = c.out;
  write_sequence_with_distractors(d.scene, out / "sequence");
  save_checkpoint(out / "net.ckpt", d.pretrained.net, {{"iterations", d.pretrained.log.rows.size()}});
  write_file(out / "train_log.csv", training_log_csv(d.pretrained.log));
  write_trajectory(d.trajectory, c.seed, cfg, out);
  write_metrics(d.report, out);
  write_run_json(out, "demo", c.seed, cfg, common_inputs(c),
                 {{"sequence", "sequence/"},
                  {"checkpoint", "net.ckpt"},
                  {"log", "train_log.csv"},
                  {"trajectory", {"trajectory.csv", "trajectory.json"}},
                  {"metrics", "metrics.json"}});
  std::printf("%s: precision@20 %.4f  success AUC %.4f\n", d.scene.sequence.name.c_str(), d.report.precision.at_20,
              d.report.success.auc);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SANet: structure-aware CNN+DAG-RNN tracker", "sanet"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  spdlog::set_level(spdlog::level::warn);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "log progress");

  Common c;
  std::vector<std::string> train_dirs;
  std::string seq_dir, checkpoint, trajectory;
  bool no_write = false;

  auto* synth = app.add_subcommand("synth", "write a synthetic distractor sequence");
  add_common(synth, c, false);

  auto* train = app.add_subcommand("train", "multi-domain training; synthetic scenes when no sequence is given");
  add_common(train, c, true);
  train->add_option("sequences", train_dirs, "sequence directories, one domain each")->check(CLI::ExistingDirectory);

  auto* track = app.add_subcommand("track", "run the tracker on a sequence");
  add_common(track, c, false);
  track->add_option("sequence", seq_dir, "sequence directory")->required()->check(CLI::ExistingDirectory);
  track->add_option("--checkpoint", checkpoint, "trained network")->required()->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "score a trajectory against ground truth");
  add_common(eval, c, false);
  eval->add_option("sequence", seq_dir, "sequence directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--trajectory", trajectory, "trajectory CSV")->required()->check(CLI::ExistingFile);
  eval->add_option("--checkpoint", checkpoint, "also run the reinitialisation protocol with this network")
      ->check(CLI::ExistingFile);

  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  add_common(grad, c, false);
  grad->add_flag("--no-write", no_write, "print only");

  auto* demo = app.add_subcommand("demo", "synth, train, track and evaluate at tiny scale");
  add_common(demo, c, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }
  if (verbose) spdlog::set_level(spdlog::level::info);

  try {
    if (*synth) return cmd_synth(c);
    if (*train) return cmd_train(c, train_dirs);
    if (*track) return cmd_track(c, seq_dir, checkpoint);
    if (*eval) return cmd_eval(c, seq_dir, trajectory, checkpoint);
    if (*grad) return cmd_gradcheck(c, !no_write);
    if (*demo) return cmd_demo(c);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntime;
  }
  return kUsage;
}

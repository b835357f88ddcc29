// toad: command-line front end.
//
// Exit codes: 0 success, 2 configuration or usage error, 3 data error,
// 1 anything else.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>
#include <optional>

#include "toad/commands.hpp"

namespace {

std::string flag_name(std::string key) {
  for (auto& ch : key) {
    if (ch == '_') ch = '-';
  }
  return "--" + key;
}

// Every RunConfig key becomes a flag on `sub`; set values override the config file.
struct ConfigOptions {
  std::string config_path;
  std::map<std::string, std::string> overrides;

  void attach(CLI::App* sub) {
    sub->add_option("--config,-c", config_path, "flat key = value run configuration");
    for (const auto& key : toad::RunConfig::keys()) {
      sub->add_option(flag_name(key), overrides[key], "override config key " + key);
    }
  }

  toad::RunConfig resolve() const {
    toad::RunConfig cfg = config_path.empty() ? toad::RunConfig{} : toad::RunConfig::load(config_path);
    for (const auto& [key, value] : overrides) {
      if (!value.empty()) cfg.set(key, value);
    }
    return cfg;
  }
};

int run(int argc, char** argv) {
  CLI::App app{"Online action detection with frozen text classifiers"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "train a model");
  auto* eval = app.add_subcommand("eval", "stream the test split and report mAP / mcAP");
  auto* stream = app.add_subcommand("stream", "per-frame predictions for one feature stream");
  auto* zeroshot = app.add_subcommand("zeroshot", "evaluate every text classifier without training");
  auto* fewshot = app.add_subcommand("fewshot", "train on k instances per class and evaluate");
  auto* ablate = app.add_subcommand("ablate", "train and evaluate along one ablation axis");
  auto* synth = app.add_subcommand("synth", "write a synthetic dataset");

  std::map<CLI::App*, ConfigOptions> options;
  for (auto* sub : {train, eval, stream, zeroshot, fewshot, ablate}) options[sub].attach(sub);

  std::string features = "-";
  stream->add_option("features", features, "TOADFEAT file, or - for (u32 d, d x f32) frames on stdin");
  std::string axis;
  ablate->add_option("--axis", axis, "frames or classifier")->required();

  toad::SynthConfig sc;
  std::size_t test_videos = 4;
  std::string out_dir = "synth";
  std::string transitions = "alternating";
  synth->add_option("--out,-o", out_dir, "output directory");
  synth->add_option("--classes", sc.classes, "classes including background");
  synth->add_option("--dim", sc.dim, "feature dimension");
  synth->add_option("--videos", sc.videos, "training videos");
  synth->add_option("--test-videos", test_videos, "test videos");
  synth->add_option("--frames", sc.frames, "frames per video");
  synth->add_option("--sep", sc.sep, "anchor scale");
  synth->add_option("--noise", sc.noise, "per-coordinate noise std");
  synth->add_option("--instance-spread", sc.instance_spread, "per-segment mean offset std");
  synth->add_option("--min-segment", sc.min_segment, "shortest segment in frames");
  synth->add_option("--max-segment", sc.max_segment, "longest segment in frames");
  synth->add_option("--transitions", transitions, "alternating or cyclic");
  synth->add_flag("--background-noise-only", sc.background_noise_only, "background frames carry no anchor");
  synth->add_option("--text-jitter", sc.text_jitter, "class-name / future embedding perturbation");
  synth->add_option("--seed", sc.seed, "video seed");
  synth->add_option("--world-seed", sc.world_seed, "anchor and text seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  auto& log = std::cerr;
  if (synth->parsed()) {
    sc.transitions = toad::parse_transition_mode(transitions);
    toad::cmd_synth(sc, test_videos, out_dir);
    std::cout << "wrote " << out_dir << "/run.cfg\n";
    return 0;
  }
  if (train->parsed()) {
    const auto r = toad::cmd_train(options[train].resolve(), log);
    std::cout << "checkpoint " << r.checkpoint_path.string() << '\n';
  } else if (eval->parsed()) {
    const auto r = toad::cmd_eval(options[eval].resolve(), log);
    std::printf("mAP %.6f\nmcAP %.6f\n", r.map.mean, r.mcap.mean);
  } else if (stream->parsed()) {
    toad::cmd_stream(options[stream].resolve(), features, std::cin, std::cout);
  } else if (zeroshot->parsed()) {
    std::cout << toad::cmd_zeroshot(options[zeroshot].resolve(), log).to_text();
  } else if (fewshot->parsed()) {
    std::cout << toad::cmd_fewshot(options[fewshot].resolve(), log).to_text();
  } else if (ablate->parsed()) {
    std::cout << toad::cmd_ablate(options[ablate].resolve(), axis, log).to_text();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const toad::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const toad::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

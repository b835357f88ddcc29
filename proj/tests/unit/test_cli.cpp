#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "toad/checkpoint.hpp"
#include "toad/commands.hpp"
#include "toad/run_config.hpp"

namespace toad {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("toad_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

SynthConfig tiny_synth() {
  SynthConfig sc;
  sc.classes = 3;
  sc.dim = 8;
  sc.videos = 2;
  sc.frames = 360;
  sc.min_segment = 60;
  sc.max_segment = 120;
  return sc;
}

// Synthetic dataset on disk plus a run config trimmed for speed.
RunConfig tiny_run(const fs::path& dir) {
  cmd_synth(tiny_synth(), 1, dir);
  auto cfg = RunConfig::load(dir / "run.cfg");
  cfg.set("layers", "1");
  cfg.set("epochs", "2");
  cfg.set("warmup_epochs", "1");
  cfg.set("batch", "16");
  cfg.set("lr", "1e-3");
  cfg.set("output_dir", (dir / "out").string());
  return cfg;
}

TEST(RunConfig, DefaultsFollowTheReferenceSettings) {
  const RunConfig cfg;
  EXPECT_EQ(cfg.get("batch"), "32");
  EXPECT_EQ(cfg.get("epochs"), "30");
  EXPECT_EQ(cfg.get("warmup_epochs"), "5");
  EXPECT_EQ(cfg.get("lr"), "5e-05");
  EXPECT_EQ(cfg.get("weight_decay"), "0.2");
  EXPECT_EQ(cfg.get("lambda"), "0.5");
  EXPECT_EQ(cfg.get("rate"), "6");
  EXPECT_EQ(cfg.get("layers"), "6");
  EXPECT_EQ(cfg.get("heads"), "12");
  EXPECT_EQ(cfg.get("window"), "64");
  EXPECT_EQ(cfg.train.adamw.total_epochs, 30.0);
}

TEST(RunConfig, ParseCommentsAndRoundTrip) {
  const auto cfg = RunConfig::parse("# test\nwindow = 8\nclassifier = mixed  # inline\nepochs=12\n");
  EXPECT_EQ(cfg.model.window, 8u);
  EXPECT_EQ(cfg.model.classifier_mode, ClassifierMode::kMixed);
  EXPECT_EQ(cfg.train.adamw.total_epochs, 12.0);
  const auto again = RunConfig::parse(cfg.to_text());
  for (const auto& key : RunConfig::keys()) EXPECT_EQ(again.get(key), cfg.get(key)) << key;
}

TEST(RunConfig, UnknownKeyNamesLine) {
  try {
    RunConfig::parse("dim = 8\nwidth = 3\n");
    FAIL();
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("width"), std::string::npos) << what;
    EXPECT_NE(what.find("2"), std::string::npos) << what;
  }
  EXPECT_THROW(RunConfig::parse("dim 8\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("dim = eight\n"), ConfigError);
  EXPECT_THROW(RunConfig::load("/nonexistent/run.cfg"), ConfigError);
}

TEST(RunConfig, OverridesWin) {
  auto cfg = RunConfig::parse("seed = 1\n");
  cfg.set("seed", "9");
  EXPECT_EQ(cfg.train.seed, 9u);
  cfg.set("shots", "1,4");
  EXPECT_EQ(cfg.shots, (std::vector<std::size_t>{1, 4}));
}

TEST(Table, TextAndCsv) {
  Table t{{"config", "mAP"}, {{"T=8", "0.9"}, {"T=16", "0.95"}}};
  EXPECT_EQ(t.to_csv(), "config,mAP\nT=8,0.9\nT=16,0.95\n");
  EXPECT_NE(t.to_text().find("T=16"), std::string::npos);
}

TEST(Commands, SynthWritesLoadableFiles) {
  const auto dir = scratch("synth");
  const auto out = cmd_synth(tiny_synth(), 1, dir);
  const auto train = load_dataset(dir / "train");
  ASSERT_EQ(train.videos.size(), 2u);
  EXPECT_EQ(train.videos[1].features.features, out.train.dataset.videos[1].features.features);
  EXPECT_EQ(load_dataset(dir / "test").videos.size(), 1u);
  EXPECT_EQ(load_text_embeddings(dir / "future.text").mode, TextMode::kFuturePrompt);
  const auto first = read_file(dir / "train" / (train.videos[0].features.video_id + ".feat"));
  cmd_synth(tiny_synth(), 1, dir);
  EXPECT_EQ(read_file(dir / "train" / (train.videos[0].features.video_id + ".feat")), first);
  fs::remove_all(dir);
}

TEST(Commands, TrainTwiceIsByteIdenticalWithConstantChecksum) {
  const auto dir = scratch("train");
  std::ostringstream log;
  auto cfg = tiny_run(dir);
  cfg.set("keep_last", "1");
  cmd_train(cfg, log);
  const auto a = read_file(dir / "out" / "model.ckpt");
  cmd_train(cfg, log);
  EXPECT_EQ(read_file(dir / "out" / "model.ckpt"), a);
  EXPECT_TRUE(fs::exists(dir / "out" / "config.txt"));
  EXPECT_FALSE(fs::exists(epoch_checkpoint_path(dir / "out", "model", 1)));
  EXPECT_TRUE(fs::exists(epoch_checkpoint_path(dir / "out", "model", 2)));

  std::istringstream csv(read_file(dir / "out" / "train_log.csv"));
  std::string line, checksum;
  std::getline(csv, line);
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    ASSERT_EQ(cells.size(), 8u);
    if (checksum.empty()) checksum = cells[5];
    EXPECT_EQ(cells[5], checksum);
    ++rows;
  }
  EXPECT_EQ(rows, 2u);
  fs::remove_all(dir);
}

TEST(Commands, EvalWritesReportsAndRejectsArchitectureMismatch) {
  const auto dir = scratch("eval");
  std::ostringstream log;
  auto cfg = tiny_run(dir);
  cfg.set("epochs", "1");
  cfg.set("warmup_epochs", "0");
  const auto trained = cmd_train(cfg, log);
  cfg.checkpoint = trained.checkpoint_path.string();
  const auto r = cmd_eval(cfg, log);
  EXPECT_GT(r.frames, 0u);
  for (const char* f : {"map.txt", "map.summary", "map.csv", "mcap.txt", "mcap.summary", "mcap.csv"}) {
    EXPECT_TRUE(fs::exists(dir / "out" / f)) << f;
  }
  const auto kv = parse_summary(read_file(dir / "out" / "mcap.summary"));
  EXPECT_EQ(std::stod(kv.at("mean")), r.mcap.mean);
  cfg.set("layers", "2");
  EXPECT_THROW(cmd_eval(cfg, log), ConfigError);
  fs::remove_all(dir);
}

TEST(Commands, ZeroshotWritesOneReportPerMode) {
  const auto dir = scratch("zeroshot");
  std::ostringstream log;
  auto cfg = tiny_run(dir);
  const auto table = cmd_zeroshot(cfg, log);
  EXPECT_EQ(table.rows.size(), 3u);
  std::set<std::string> contents;
  for (const char* mode : {"prompt", "class_name", "mixed"}) {
    const auto p = dir / "out" / ("zeroshot_" + std::string(mode) + ".summary");
    ASSERT_TRUE(fs::exists(p)) << p;
    contents.insert(read_file(p));
  }
  EXPECT_EQ(contents.size(), 3u);
  EXPECT_TRUE(fs::exists(dir / "out" / "zeroshot.csv"));
  fs::remove_all(dir);
}

TEST(Commands, MissingFutureFileIsConfigError) {
  const auto dir = scratch("nofuture");
  std::ostringstream log;
  auto cfg = tiny_run(dir);
  cfg.text_future.clear();
  EXPECT_THROW(cmd_zeroshot(cfg, log), ConfigError);
  cfg.set("future", "false");
  EXPECT_NO_THROW(load_classifier(cfg, ClassifierMode::kPrompt));
  fs::remove_all(dir);
}

TEST(Commands, UnknownAblationAxis) {
  std::ostringstream log;
  EXPECT_THROW(cmd_ablate(RunConfig{}, "depth", log), ConfigError);
}

TEST(Commands, FewshotMatchesFullShotIterations) {
  const auto dir = scratch("fewshot");
  std::ostringstream log;
  auto cfg = tiny_run(dir);
  cfg.set("epochs", "1");
  cfg.set("warmup_epochs", "0");
  cfg.set("shots", "1,2");
  const auto table = cmd_fewshot(cfg, log);
  ASSERT_EQ(table.rows.size(), 2u);
  EXPECT_TRUE(fs::exists(dir / "out" / "fewshot.csv"));
  fs::remove_all(dir);
}

TEST(Commands, StreamFromPipe) {
  const auto dir = scratch("stream");
  std::ostringstream log;
  auto cfg = tiny_run(dir);
  cfg.set("epochs", "1");
  cfg.set("warmup_epochs", "0");
  cfg.checkpoint = cmd_train(cfg, log).checkpoint_path.string();
  std::string bytes;
  auto put_u32 = [&](std::uint32_t v) { bytes.append(reinterpret_cast<const char*>(&v), 4); };
  for (int f = 0; f < 5; ++f) {
    put_u32(8);
    for (int j = 0; j < 8; ++j) {
      const float v = 0.1f * static_cast<float>(f + j);
      bytes.append(reinterpret_cast<const char*>(&v), 4);
    }
  }
  std::istringstream pipe(bytes);
  std::ostringstream out;
  EXPECT_EQ(cmd_stream(cfg, "-", pipe, out), 5u);
  const std::string text = out.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
  std::istringstream lines(text);
  std::size_t frame = 0;
  std::string name;
  double p = 0.0;
  for (std::size_t i = 0; i < 5; ++i) {
    lines >> frame >> name >> p;
    EXPECT_EQ(frame, i);
    EXPECT_TRUE(p > 0.0 && p <= 1.0) << p;
  }
  std::istringstream cut(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(cmd_stream(cfg, "-", cut, out), DataError);
  fs::remove_all(dir);
}

#ifdef TOAD_CLI_PATH
int run_cli(const std::string& args) {
  const std::string cmd = std::string(TOAD_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(CliExitCodes, ContractHolds) {
  const auto dir = scratch("exit");
  EXPECT_EQ(run_cli(""), 2);
  EXPECT_EQ(run_cli("bogus"), 2);
  EXPECT_EQ(run_cli("train --config " + (dir / "missing.cfg").string()), 2);
  write_file(dir / "bad.cfg", "nonsense_key = 1\n");
  EXPECT_EQ(run_cli("eval --config " + (dir / "bad.cfg").string()), 2);
  EXPECT_EQ(run_cli("ablate --axis depth"), 2);
  EXPECT_EQ(run_cli("synth --out " + (dir / "s").string() +
                    " --classes 3 --dim 8 --videos 1 --frames 200 --test-videos 1"),
            0);
  const std::string run_cfg = " --config " + (dir / "s" / "run.cfg").string();
  const std::string ckpt = (dir / "s" / "run" / "model.ckpt").string();
  EXPECT_EQ(run_cli("train" + run_cfg + " --epochs 1 --warmup-epochs 0 --layers 1"), 0);
  fs::create_directories(dir / "corrupt");
  write_file(dir / "corrupt" / "v.feat", "TOADFEAT");
  const std::string eval_args = run_cfg + " --layers 1 --checkpoint " + ckpt;
  EXPECT_EQ(run_cli("eval" + eval_args), 0);
  EXPECT_EQ(run_cli("eval" + eval_args + " --test-data " + (dir / "corrupt").string()), 3);
  EXPECT_EQ(run_cli("stream" + eval_args + " " + (dir / "corrupt" / "v.feat").string()), 3);
  EXPECT_EQ(run_cli("eval" + eval_args + " --window 16"), 2);
  fs::remove_all(dir);
}
#endif

}  // namespace
}  // namespace toad

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <set>

#include "test_util.hpp"
#include "toad/data.hpp"
#include "toad/error.hpp"
#include "toad/synth.hpp"
#include "toad/training.hpp"

namespace toad {
namespace {

namespace fs = std::filesystem;

FeatureSequence random_features(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return {"clip", 29.97f, testing::random_tensor<float>({n, d}, rng)};
}

LabelTrack track_of(std::vector<std::uint16_t> labels, std::size_t classes) {
  return {"clip", classes, std::move(labels)};
}

ParseError::Kind parse_kind(const std::function<void()>& f) {
  try {
    f();
  } catch (const ParseError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no ParseError";
  return ParseError::Kind::kIo;
}

TEST(Formats, FeatureRoundTripIsBitIdentical) {
  const auto seq = random_features(17, 5, 1);
  const auto back = decode_features(encode_features(seq), "clip");
  EXPECT_EQ(back.fps, seq.fps);
  EXPECT_EQ(back.features, seq.features);
  EXPECT_EQ(encode_features(back), encode_features(seq));
}

TEST(Formats, LabelRoundTrip) {
  const auto track = track_of({0, 1, 1, 4, 0, 2}, 5);
  const auto back = decode_labels(encode_labels(track));
  EXPECT_EQ(back.labels, track.labels);
  EXPECT_EQ(back.classes, 5u);
}

TEST(Formats, TextRoundTripKeepsMode) {
  std::mt19937_64 rng(2);
  for (auto mode : {TextMode::kClassName, TextMode::kPrompt, TextMode::kFuturePrompt}) {
    TextEmbeddings text{mode, testing::random_tensor<float>({4, 6}, rng)};
    const auto back = decode_text_embeddings(encode_text_embeddings(text));
    EXPECT_EQ(back.mode, mode);
    EXPECT_EQ(back.embeddings, text.embeddings);
  }
}

TEST(Formats, HeaderLayoutIsLittleEndian) {
  const auto bytes = encode_labels(track_of({3, 0}, 4));
  ASSERT_EQ(bytes.size(), 8u + 4 + 4 + 4 + 2 * 2);
  EXPECT_EQ(bytes.substr(0, 8), "TOADLABL");
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 1);  // version
  EXPECT_EQ(static_cast<unsigned char>(bytes[12]), 2);  // N
  EXPECT_EQ(static_cast<unsigned char>(bytes[16]), 4);  // C
  EXPECT_EQ(static_cast<unsigned char>(bytes[20]), 3);  // first label
}

TEST(Formats, EveryTruncationIsAParseError) {
  const std::string feat = encode_features(random_features(3, 2, 3));
  const std::string lab = encode_labels(track_of({0, 1, 2}, 3));
  TextEmbeddings text{TextMode::kPrompt, Tensor<float>({2, 3}, 0.5f)};
  const std::string txt = encode_text_embeddings(text);
  for (std::size_t n = 0; n < feat.size(); ++n) {
    EXPECT_THROW(decode_features(std::string_view(feat).substr(0, n)), ParseError) << n;
  }
  for (std::size_t n = 0; n < lab.size(); ++n) {
    EXPECT_THROW(decode_labels(std::string_view(lab).substr(0, n)), ParseError) << n;
  }
  for (std::size_t n = 0; n < txt.size(); ++n) {
    EXPECT_THROW(decode_text_embeddings(std::string_view(txt).substr(0, n)), ParseError) << n;
  }
  EXPECT_EQ(parse_kind([&] { decode_features(std::string_view(feat).substr(0, feat.size() - 1)); }),
            ParseError::Kind::kTruncated);
}

TEST(Formats, BadMagicVersionAndTrailingBytes) {
  std::string lab = encode_labels(track_of({0, 1}, 2));
  std::string bad = lab;
  bad[0] = 'X';
  EXPECT_EQ(parse_kind([&] { decode_labels(bad); }), ParseError::Kind::kBadMagic);
  bad = lab;
  bad[8] = 9;
  EXPECT_EQ(parse_kind([&] { decode_labels(bad); }), ParseError::Kind::kBadVersion);
  EXPECT_THROW(decode_labels(lab + "x"), ParseError);
  EXPECT_EQ(parse_kind([&] { decode_features(lab); }), ParseError::Kind::kBadMagic);
}

TEST(Formats, LabelValueEqualToClassCountNamesFrame) {
  std::string lab = encode_labels(track_of({0, 1, 2, 1}, 3));
  lab[20 + 2 * 2] = 3;  // frame 2 -> label 3 with C = 3
  try {
    decode_labels(lab);
    FAIL() << "expected range error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.kind(), ParseError::Kind::kRange);
    EXPECT_NE(std::string(e.what()).find("frame 2"), std::string::npos) << e.what();
  }
}

TEST(Formats, NonFiniteFeatureRejected) {
  auto seq = random_features(2, 2, 4);
  std::string bytes = encode_features(seq);
  const float inf = INFINITY;
  std::memcpy(bytes.data() + bytes.size() - 4, &inf, 4);
  EXPECT_EQ(parse_kind([&] { decode_features(bytes); }), ParseError::Kind::kRange);
}

TEST(Formats, FileErrorsNameThePath) {
  const fs::path dir = fs::temp_directory_path() / "toad_test_data_files";
  fs::create_directories(dir);
  write_file(dir / "short.labels", "TOADLABL");
  try {
    load_labels(dir / "short.labels");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("short.labels"), std::string::npos);
  }
  EXPECT_THROW(load_features(dir / "missing.feat"), DataError);
  fs::remove_all(dir);
}

TEST(Vocabulary, PromptsAndBackground) {
  ClassVocabulary v{{"background", "jumping", "diving"}};
  EXPECT_EQ(v.prompt(1), "a video of a person jumping");
  EXPECT_EQ(v.future_prompt(2), "a video of a person diving in the future");
  EXPECT_EQ(v.prompt(0), "a video of background");
  v.names.push_back("jumping");
  EXPECT_THROW(v.validate(), DataError);
  EXPECT_THROW((ClassVocabulary{{"background", ""}}.validate()), DataError);
}

TEST(Vocabulary, FileRoundTrip) {
  const fs::path p = fs::temp_directory_path() / "toad_test_vocab.txt";
  ClassVocabulary v{{"background", "high jump", "pole vault"}};
  save_vocabulary(p, v);
  EXPECT_EQ(load_vocabulary(p).names, v.names);
  fs::remove(p);
}

TEST(Windows, UnitRate) {
  EXPECT_EQ(window_indices(9, 4, 1), (std::vector<std::size_t>{6, 7, 8, 9}));
}

TEST(Windows, RateSix) {
  EXPECT_EQ(window_indices(30, 4, 6), (std::vector<std::size_t>{12, 18, 24, 30}));
}

TEST(Windows, FirstFrameIsFullyPadded) {
  for (std::size_t len : {1, 8, 64}) {
    EXPECT_EQ(window_indices(0, len, 6), std::vector<std::size_t>(len, 0));
  }
  EXPECT_EQ(window_indices(13, 4, 6), (std::vector<std::size_t>{1, 1, 7, 13}));
}

TEST(Windows, SampleIsCausalAndTakesCurrentLabel) {
  const auto seq = random_features(200, 3, 5);
  LabelTrack labels = track_of(std::vector<std::uint16_t>(200, 0), 3);
  for (std::size_t t = 0; t < 200; ++t) labels.labels[t] = static_cast<std::uint16_t>(t % 3);
  for (std::size_t t = 0; t < 200; t += 7) {
    const auto s = sample_window(seq, labels, t, 8, 6);
    EXPECT_EQ(s.y, static_cast<int>(t % 3));
    ASSERT_EQ(s.frames.size(), 8u);
    EXPECT_EQ(s.frames.back(), t);
    for (std::size_t i = 0; i < 8; ++i) {
      EXPECT_LE(s.frames[i], t);
      for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(s.x.at(i, j), seq.features.at(s.frames[i], j));
    }
  }
  EXPECT_THROW(sample_window(seq, labels, 200, 8, 6), DataError);
}

TEST(FutureLabel, PastTheEndIsUndefined) {
  const auto labels = track_of(std::vector<std::uint16_t>(100, 1), 2);
  EXPECT_EQ(future_label(labels, 39, 60), 1);
  EXPECT_EQ(future_label(labels, 40, 60), kNoLabel);
}

TEST(FutureLabel, ConstantTrackMatchesCurrent) {
  const auto labels = track_of(std::vector<std::uint16_t>(300, 2), 3);
  for (std::size_t t = 0; t + 60 < 300; t += 11) EXPECT_EQ(future_label(labels, t, 60), 2);
}

TEST(FutureLabel, SwitchAtFrameHundred) {
  std::vector<std::uint16_t> l(200, 1);
  std::fill(l.begin() + 100, l.end(), 2);
  const auto labels = track_of(l, 3);
  EXPECT_EQ(future_label(labels, 70, 60), 2);
  EXPECT_EQ(future_label(labels, 39, 60), 1);
  EXPECT_EQ(future_label(labels, 40, 60), 2);
}

// 0,1,2 repeated twice, 12 frames each: two instances per class.
Dataset balanced_dataset() {
  Dataset data;
  data.classes = 3;
  data.dim = 2;
  std::vector<std::uint16_t> l;
  for (int rep = 0; rep < 2; ++rep)
    for (std::uint16_t c = 0; c < 3; ++c) l.insert(l.end(), 12, c);
  data.videos.push_back({random_features(l.size(), 2, 6), track_of(l, 3)});
  return data;
}

TEST(Instances, MaximalRuns) {
  const auto inst = find_instances(balanced_dataset());
  ASSERT_EQ(inst.size(), 6u);
  EXPECT_EQ(inst[1], (Instance{0, 12, 24, 1}));
  EXPECT_EQ(inst[5], (Instance{0, 60, 72, 2}));
}

TEST(FewShot, AllInstancesGiveTheFullSet) {
  const auto data = balanced_dataset();
  const auto sub = fewshot_subset(data, 2, 7, 6);
  const auto full = training_windows(data, 6);
  EXPECT_EQ(std::set<WindowRef>(sub.unique.begin(), sub.unique.end()),
            std::set<WindowRef>(full.begin(), full.end()));
  EXPECT_EQ(sub.windows.size(), full.size());
}

TEST(FewShot, SeededAndNested) {
  SynthConfig sc;
  sc.classes = 4;
  sc.dim = 4;
  sc.videos = 3;
  sc.frames = 4000;
  sc.min_segment = 50;
  sc.max_segment = 150;
  const auto data = synth_dataset(sc).dataset;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    std::set<std::pair<std::uint32_t, std::uint32_t>> prev;
    for (std::size_t k : {1, 2, 4, 8}) {
      const auto a = fewshot_subset(data, k, seed, 6);
      const auto b = fewshot_subset(data, k, seed, 6);
      EXPECT_EQ(a.chosen, b.chosen);
      EXPECT_EQ(a.windows, b.windows);
      EXPECT_EQ(a.chosen.size(), k * sc.classes);
      std::set<std::pair<std::uint32_t, std::uint32_t>> now;
      for (const auto& i : a.chosen) now.insert({i.video, i.begin});
      EXPECT_TRUE(std::includes(now.begin(), now.end(), prev.begin(), prev.end())) << k;
      prev = now;
    }
  }
}

TEST(FewShot, TiledToFullShotIterations) {
  SynthConfig sc;
  sc.classes = 3;
  sc.dim = 4;
  sc.videos = 4;
  sc.frames = 24000;
  const auto data = synth_dataset(sc).dataset;
  const auto full = training_windows(data, 6);
  ASSERT_EQ(full.size(), 16000u);
  EXPECT_EQ(iterations_per_epoch(full.size(), 32), 500u);
  const auto sub = fewshot_subset(data, 1, 0, 6);
  EXPECT_LT(sub.unique.size(), full.size());
  EXPECT_EQ(sub.windows.size(), full.size());
  EXPECT_GE(iterations_per_epoch(sub.windows.size(), 32), 500u);
}

TEST(FewShot, MissingClassIsNamed) {
  auto data = balanced_dataset();
  data.classes = 4;
  try {
    fewshot_subset(data, 1, 0, 6);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("class 3"), std::string::npos);
  }
}

TEST(Batch, MatchesSampleWindow) {
  const auto data = balanced_dataset();
  const std::vector<WindowRef> refs{{0, 0}, {0, 30}, {0, 66}};
  const auto batch = make_batch(data, refs, 4, 6, 10);
  ASSERT_EQ(batch.size(), 3u);
  for (std::size_t b = 0; b < 3; ++b) {
    const auto s = sample_window(data.videos[0].features, data.videos[0].labels, refs[b].frame, 4, 6);
    EXPECT_EQ(batch.window(b), s.x);
    EXPECT_EQ(batch.y[b], s.y);
    EXPECT_EQ(batch.y_future[b], future_label(data.videos[0].labels, refs[b].frame, 10));
  }
  EXPECT_EQ(batch.y_future[2], kNoLabel);
}

TEST(DatasetIo, DirectoryRoundTrip) {
  const fs::path dir = fs::temp_directory_path() / "toad_test_dataset";
  fs::remove_all(dir);
  const auto data = balanced_dataset();
  save_dataset(dir, data);
  const auto back = load_dataset(dir);
  ASSERT_EQ(back.videos.size(), 1u);
  EXPECT_EQ(back.classes, 3u);
  EXPECT_EQ(back.videos[0].features.features, data.videos[0].features.features);
  EXPECT_EQ(back.videos[0].labels.labels, data.videos[0].labels.labels);
  fs::remove_all(dir);
}

TEST(DatasetIo, MisalignedLabelsRejected) {
  auto data = balanced_dataset();
  data.videos[0].labels.labels.pop_back();
  EXPECT_THROW(data.validate(), DataError);
}

}  // namespace
}  // namespace toad

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "toad/data.hpp"
#include "toad/metrics.hpp"
#include "toad/model.hpp"

namespace toad {

// Causal per-frame inference over a feature stream.
//
// Keeps the last (T-1)*rate + 1 frames in a fixed ring buffer. Each pushed
// frame is scored on exactly the window sample_window() would build for its
// index, so streaming and offline scores agree bit for bit.
class StreamState {
 public:
  StreamState(const Model& model, std::size_t rate = 6, std::size_t eval_stride = 1);

  // Per-class log-odds for the frame just pushed. With eval_stride k > 1 only every k-th frame
  // runs the model; the others repeat the last scores.
  const WindowScores<float>& push_frame(std::span<const float> feature);
  void reset();

  std::size_t frames_seen() const { return frames_seen_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t buffer_bytes() const { return ring_.capacity() * sizeof(float); }

 private:
  const Model* model_;
  std::size_t rate_;
  std::size_t stride_;
  std::size_t length_;
  std::size_t dim_;
  std::size_t capacity_;
  std::vector<float> ring_;
  Tensor<float> window_;
  WindowScores<float> last_;
  std::size_t frames_seen_ = 0;
};

struct StreamResult {
  ScoreTable current;             // [F x C] current-action scores with labels
  Tensor<float> future;           // [F x C], empty when the future head is off
  std::vector<int> future_labels; // per frame, kNoLabel past the end
  std::vector<double> latency_us; // per-frame push_frame wall time
};

// Pushes every frame of `video` through a fresh StreamState.
StreamResult run_stream(const Model& model, const Video& video, std::size_t rate = 6,
                        std::size_t horizon = 60, std::size_t eval_stride = 1);

// Same as run_stream but reusing `state` (which is reset first).
StreamResult run_stream(StreamState& state, const Model& model, const Video& video,
                        std::size_t horizon = 60);

// Offline path: sample_window() + score_window() per frame, no ring buffer.
ScoreTable score_video_offline(const Model& model, const Video& video, std::size_t rate = 6);

// Streams every video, fanning out over up to `threads` workers.
std::vector<StreamResult> run_streams(const Model& model, const Dataset& data, std::size_t rate,
                                      std::size_t horizon, std::size_t eval_stride,
                                      std::size_t threads);

// Worker count from TOAD_THREADS (default 1).
std::size_t thread_budget();

}  // namespace toad

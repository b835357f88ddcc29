#include "toad/streaming.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

namespace toad {

StreamState::StreamState(const Model& model, std::size_t rate, std::size_t eval_stride)
    : model_(&model),
      rate_(rate),
      stride_(eval_stride),
      length_(model.config.window),
      dim_(model.config.dim) {
  if (rate_ == 0) throw ConfigError("stream: downsampling rate must be positive");
  if (stride_ == 0) throw ConfigError("stream: eval stride must be positive");
  capacity_ = (length_ - 1) * rate_ + 1;
  ring_.assign(capacity_ * dim_, 0.0f);
  window_ = Tensor<float>({length_, dim_});
}

const WindowScores<float>& StreamState::push_frame(std::span<const float> feature) {
  if (feature.size() != dim_) {
    throw DimensionError("stream: frame has " + std::to_string(feature.size()) +
                         " features, model expects " + std::to_string(dim_));
  }
  if (!all_finite(feature)) {
    throw NumericError("stream: non-finite feature at frame " + std::to_string(frames_seen_));
  }
  const std::size_t t = frames_seen_;
  std::copy(feature.begin(), feature.end(), ring_.begin() + (t % capacity_) * dim_);
  ++frames_seen_;
  if (t % stride_ != 0) return last_;
  // Same indices as window_indices(t, T, rate): the oldest slots fall back to
  // the earliest frame on the t (mod rate) grid.
  const std::size_t earliest = t % rate_;
  for (std::size_t i = 0; i < length_; ++i) {
    const std::size_t back = (length_ - 1 - i) * rate_;
    const std::size_t frame = back <= t ? t - back : earliest;
    const float* src = ring_.data() + (frame % capacity_) * dim_;
    std::copy(src, src + dim_, window_.row(i).begin());
  }
  last_ = score_window(model_->config, model_->params, window_);
  log_odds(last_.current.data(), model_->config.logit_scale());
  if (last_.future.size()) log_odds(last_.future.data(), model_->config.logit_scale());
  return last_;
}

void StreamState::reset() {
  std::fill(ring_.begin(), ring_.end(), 0.0f);
  frames_seen_ = 0;
  last_ = WindowScores<float>{};
}

StreamResult run_stream(StreamState& state, const Model& model, const Video& video,
                        std::size_t horizon) {
  state.reset();
  const auto& seq = video.features;
  const std::size_t n = seq.frames(), c = model.config.classes;
  if (video.labels.frames() != n) throw DataError("stream: labels do not align with features");
  StreamResult out;
  out.current.scores = Tensor<float>({n, c});
  out.current.labels.assign(video.labels.labels.begin(), video.labels.labels.end());
  if (model.config.future_enabled) out.future = Tensor<float>({n, c});
  out.future_labels.resize(n);
  out.latency_us.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    const auto start = std::chrono::steady_clock::now();
    const auto& scores = state.push_frame(seq.features.row(t));
    const auto stop = std::chrono::steady_clock::now();
    out.latency_us[t] = std::chrono::duration<double, std::micro>(stop - start).count();
    std::copy(scores.current.data().begin(), scores.current.data().end(),
              out.current.scores.row(t).begin());
    if (model.config.future_enabled) {
      std::copy(scores.future.data().begin(), scores.future.data().end(),
                out.future.row(t).begin());
    }
    out.future_labels[t] = future_label(video.labels, t, horizon);
  }
  return out;
}

StreamResult run_stream(const Model& model, const Video& video, std::size_t rate,
                        std::size_t horizon, std::size_t eval_stride) {
  StreamState state(model, rate, eval_stride);
  return run_stream(state, model, video, horizon);
}

ScoreTable score_video_offline(const Model& model, const Video& video, std::size_t rate) {
  const std::size_t n = video.features.frames(), c = model.config.classes;
  ScoreTable table;
  table.scores = Tensor<float>({n, c});
  table.labels.assign(video.labels.labels.begin(), video.labels.labels.end());
  for (std::size_t t = 0; t < n; ++t) {
    const auto sample = sample_window(video.features, video.labels, t, model.config.window, rate);
    const auto scores = score_window(model.config, model.params, sample.x);
    std::copy(scores.current.data().begin(), scores.current.data().end(),
              table.scores.row(t).begin());
    log_odds(table.scores.row(t), model.config.logit_scale());
  }
  return table;
}

std::vector<StreamResult> run_streams(const Model& model, const Dataset& data, std::size_t rate,
                                      std::size_t horizon, std::size_t eval_stride,
                                      std::size_t threads) {
  std::vector<StreamResult> results(data.videos.size());
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, data.videos.size()));
  if (workers == 1) {
    StreamState state(model, rate, eval_stride);
    for (std::size_t v = 0; v < data.videos.size(); ++v) {
      results[v] = run_stream(state, model, data.videos[v], horizon);
    }
    return results;
  }
  std::mutex mu;
  std::exception_ptr failure;
  std::size_t next = 0;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      StreamState state(model, rate, eval_stride);
      for (;;) {
        std::size_t v;
        {
          std::lock_guard lock(mu);
          if (failure || next >= data.videos.size()) return;
          v = next++;
        }
        try {
          results[v] = run_stream(state, model, data.videos[v], horizon);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return results;
}

std::size_t thread_budget() {
  if (const char* env = std::getenv("TOAD_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
    throw ConfigError(std::string("TOAD_THREADS must be a positive integer, got '") + env + "'");
  }
  return 1;
}

}  // namespace toad

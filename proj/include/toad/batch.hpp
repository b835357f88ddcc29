#pragma once

#include <cstddef>
#include <vector>

#include "toad/tensor.hpp"

namespace toad {

// Marks a future label that falls past the end of the video.
inline constexpr int kNoLabel = -1;

// B windows of T sampled frame features with their current and future labels.
template <typename T>
struct WindowBatch {
  Tensor<T> x;                           // [B x T x d]
  std::vector<int> y;                    // current labels
  std::vector<int> y_future;             // future labels or kNoLabel
  std::vector<std::size_t> frame_index;  // original index of each current frame

  std::size_t size() const { return y.size(); }
  std::size_t window_length() const { return x.rank() == 3 ? x.dim(1) : 0; }
  std::size_t dim() const { return x.rank() == 3 ? x.dim(2) : 0; }

  // Copy of window `b` as a [T x d] tensor.
  Tensor<T> window(std::size_t b) const {
    const std::size_t len = window_length() * dim();
    std::vector<T> out(x.raw() + b * len, x.raw() + (b + 1) * len);
    return Tensor<T>({window_length(), dim()}, std::move(out));
  }

  template <typename U>
  WindowBatch<U> cast() const {
    return {x.template cast<U>(), y, y_future, frame_index};
  }
};

}  // namespace toad

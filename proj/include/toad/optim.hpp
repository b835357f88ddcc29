#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "toad/batch.hpp"
#include "toad/kernels.hpp"
#include "toad/model.hpp"

namespace toad {

struct LossConfig {
  double lambda = 0.5;
  double tau = std::log(100.0);

  void validate() const;
};

// Mean over the batch of -log softmax(exp(tau) * z)[y].
template <typename T>
double ce_loss(const Tensor<T>& z, std::span<const int> y, double tau);

template <typename T>
CrossEntropyResult<T> ce_loss_with_grad(const Tensor<T>& z, std::span<const int> y, double tau);

// ce(z, y) + lambda * ce(z_future, y_future). Rows whose future label is kNoLabel
// are left out of the future term, which is averaged over the remaining rows.
// z_future and y_future must both be present or both absent.
template <typename T>
double total_loss(const Tensor<T>& z, const Tensor<T>* z_future, std::span<const int> y,
                  const std::vector<int>* y_future, const LossConfig& cfg);

struct AdamWConfig {
  double lr_base = 5e-5;
  double weight_decay = 0.2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double warmup_epochs = 5.0;
  double total_epochs = 30.0;

  void validate() const;
};

// Linear warmup from 0 to lr_base over warmup_epochs, then half-cosine to 0 at
// total_epochs. `epoch` is fractional.
double lr_at(double epoch, const AdamWConfig& cfg);

template <typename T>
struct OptimState {
  AdamWConfig config;
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;
  std::uint64_t step = 0;

  static OptimState init(const ModelParams<T>& params, const AdamWConfig& config);
};

// One AdamW update of a single tensor: decoupled decay p -= lr*wd*p, then the
// bias-corrected Adam step. `step` is the 1-based step index.
template <typename T>
void adamw_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v,
                  std::uint64_t step, double lr, const AdamWConfig& cfg);

// Updates every trainable tensor. Frozen tensors (classifier, tau) are never
// touched. A non-finite gradient raises NumericError naming the step.
template <typename T>
void adamw_step(ModelParams<T>& params, const Gradients<T>& grads, OptimState<T>& state,
                double lr);

template <typename T>
struct LossAndGrad {
  double loss = 0.0;
  double current_loss = 0.0;
  double future_loss = 0.0;
  std::size_t future_terms = 0;
  std::size_t nudges = 0;
  Gradients<T> grads;
};

// Forward + backward over a batch. The batch mean of the current CE plus
// lambda times the mean future CE over windows with a defined future label.
template <typename T>
LossAndGrad<T> loss_and_grad(const ModelConfig& cfg, const ModelParams<T>& params,
                             const WindowBatch<T>& batch, bool with_grad = true);

}  // namespace toad

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "toad/data.hpp"
#include "toad/model.hpp"
#include "toad/optim.hpp"

namespace toad {

struct TrainConfig {
  std::size_t batch = 32;
  std::size_t epochs = 30;
  std::size_t rate = 6;
  std::size_t horizon = 60;
  std::uint64_t seed = 0;
  AdamWConfig adamw;
  // Evaluate the loss over all windows before the first step (epoch 0 entry).
  bool log_initial_loss = false;

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;         // 0 = before training, else epochs completed
  double loss = 0.0;             // mean over the epoch's batches
  double current_loss = 0.0;
  double future_loss = 0.0;
  double lr = 0.0;               // at the last iteration of the epoch
  std::uint64_t frozen_checksum = 0;
  std::size_t nudges = 0;
  std::size_t iterations = 0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t iterations_per_epoch = 0;
};

using EpochCallback =
    std::function<void(const EpochLog&, const Model&, const OptimState<float>&)>;

// Seeded minibatch AdamW over `windows`, resuming after `state.step` steps when
// the state came from a checkpoint. Epoch e shuffles with a generator derived
// from (seed, e) so a resumed run follows the same order.
TrainResult train(Model& model, OptimState<float>& state, const Dataset& data,
                  std::span<const WindowRef> windows, const TrainConfig& cfg,
                  std::size_t start_epoch = 0, const EpochCallback& on_epoch = {});

std::size_t iterations_per_epoch(std::size_t windows, std::size_t batch);

// Loss over every window without updating anything.
double evaluate_loss(const Model& model, const Dataset& data, std::span<const WindowRef> windows,
                     const TrainConfig& cfg);

}  // namespace toad

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "toad/model.hpp"
#include "toad/optim.hpp"

namespace toad {

// TOADCKPT: magic, u32 version, u32 record count, then per record
// u32 name length, name bytes, u32 rank, rank x u32 extents, f32 payload.
struct CheckpointRecord {
  std::string name;
  Tensor<float> value;
};

std::string encode_records(const std::vector<CheckpointRecord>& records);
std::vector<CheckpointRecord> decode_records(std::string_view bytes);

struct Checkpoint {
  Model model;
  std::optional<OptimState<float>> optim;  // present in training checkpoints
  std::uint32_t epoch = 0;                 // epochs completed
};

// Records: meta.* (architecture), pos/block/future tensors, classifier.current,
// classifier.future, tau, and optionally optim.step plus optim.m./optim.v. moments.
std::vector<CheckpointRecord> checkpoint_records(const Checkpoint& ckpt);
Checkpoint checkpoint_from_records(const std::vector<CheckpointRecord>& records);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Deletes epoch checkpoints `<stem>.epochNNN.ckpt` in `dir` beyond the newest `keep`.
// keep == 0 keeps everything.
void prune_checkpoints(const std::filesystem::path& dir, std::string_view stem, std::size_t keep);
std::filesystem::path epoch_checkpoint_path(const std::filesystem::path& dir,
                                            std::string_view stem, std::uint32_t epoch);

}  // namespace toad

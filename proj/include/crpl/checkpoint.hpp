#pragma once

#include <filesystem>

#include "crpl/model.hpp"

namespace crpl {

// Checkpoint file layout (little-endian throughout):
//
//   bytes 0..3   magic "CRPL"
//   u32          format version (currently 1)
//   u32          config length, then that many bytes of canonical config JSON
//   u32          tensor count
//   per tensor:  u32 name length, name bytes (UTF-8),
//                u32 ndim, u32 dims[ndim], f32 data (row-major)
//   u32          CRC32 of everything after the version field and before this
//
// Tensors cover trainable parameters and BN running stats; on load the name
// set and shapes must match the skeleton built from the stored config.
// save followed by load reproduces every value bit for bit.

void save_checkpoint(const Model<float>& model, const std::filesystem::path& path);

Model<float> load_checkpoint(const std::filesystem::path& path);

// Loads a checkpoint but builds the skeleton with new_num_outputs. When that
// differs from the stored head size, the final linear layer keeps its fresh
// initialisation (seeded by head_init_seed); every other tensor is copied
// from the file unchanged.
Model<float> load_for_finetune(const std::filesystem::path& path, int new_num_outputs,
                               std::uint64_t head_init_seed);

}  // namespace crpl

#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "scd/network.hpp"

namespace scd {

// Binary container:
//   "SCDCKPT\0" | u32 format_version | u64 header bytes | header JSON
//   | u64 tensor count | per tensor: u32 name bytes, name, u8 dtype, u32 ndim, i64 dims[ndim], raw little-endian data
// The header holds {format_version, model_config, epoch, metrics}.
inline constexpr uint32_t kCheckpointVersion = 1;

using TensorTable = std::map<std::string, torch::Tensor>;

struct Checkpoint {
  nlohmann::json header;
  TensorTable tensors;
};

void write_checkpoint_file(const std::filesystem::path& path, const nlohmann::json& header, const TensorTable& tensors);
Checkpoint read_checkpoint_file(const std::filesystem::path& path);

// Bare named-tensor container (empty header), e.g. converted pretrained encoder weights.
void write_tensor_table(const std::filesystem::path& path, const TensorTable& tensors);
TensorTable read_tensor_table(const std::filesystem::path& path);

// Every parameter and buffer of the model, by dotted module path.
TensorTable model_state(ScdNet& model);

void save_checkpoint(const std::filesystem::path& path, ScdNet& model, int64_t epoch,
                     const nlohmann::json& metrics = nlohmann::json::object());
// Builds the model described by the header and loads its weights.
ScdNet load_checkpoint(const std::filesystem::path& path);
// Loads into an existing model; throws ConfigMismatch when the stored architecture differs.
void load_checkpoint_into(const std::filesystem::path& path, ScdNet& model);

}  // namespace scd

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "diflow/model.hpp"
#include "diflow/optim.hpp"

namespace diflow {

// Binary container, little-endian:
//   "DFCK" u32 version, u64 config hash, str model-config JSON,
//   str run-config JSON (provenance, may be empty), u64 train step,
//   u32 tensor count, then per tensor: str name, u32 rank, rank x u64 dims,
//   numel x f64 values; u32 CRC-32 of every preceding byte.
// Adam moments are stored as "adam.m:<name>" and "adam.v:<name>".
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointInfo {
  std::uint64_t config_hash = 0;
  ModelConfig model;
  std::string run_config_json;
  std::uint64_t step = 0;
};

std::vector<std::uint8_t> serialize_checkpoint(const DiFlowModel& model,
                                               const nn::Adam* optimizer,
                                               const std::string& run_config_json);

// Reads the header only.
CheckpointInfo inspect_checkpoint(std::span<const std::uint8_t> bytes);

// Loads parameters (and moments, when an optimizer is given) into an existing
// model. Throws FormatError on a hash or shape mismatch.
CheckpointInfo load_checkpoint(std::span<const std::uint8_t> bytes, DiFlowModel& model,
                               nn::Adam* optimizer = nullptr);

void save_checkpoint(const std::filesystem::path& path, const DiFlowModel& model,
                     const nn::Adam* optimizer, const std::string& run_config_json);
CheckpointInfo load_checkpoint(const std::filesystem::path& path, DiFlowModel& model,
                               nn::Adam* optimizer = nullptr);
CheckpointInfo inspect_checkpoint(const std::filesystem::path& path);

}  // namespace diflow

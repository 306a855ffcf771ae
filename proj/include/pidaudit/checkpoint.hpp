#pragma once

#include <filesystem>
#include <optional>

#include "pidaudit/optim.hpp"
#include "pidaudit/transformer.hpp"

namespace pidaudit {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Model model;
  std::optional<AdamState> optimizer;
};

/// Writes the versioned little-endian container described in
/// docs/checkpoint_format.md. Values are stored as float32.
void save_checkpoint(const Model& model, const std::filesystem::path& path, const AdamState* optimizer = nullptr);

/// Throws DataError naming the file on any structural or checksum failure.
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string serialize_model_config(const ModelConfig& cfg);
ModelConfig parse_model_config(std::string_view text);

}  // namespace pidaudit

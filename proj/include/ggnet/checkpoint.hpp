#pragma once

// Checkpoints: a .ggt file holding every parameter tensor back to back in the
// GGT1 container, plus a .manifest text file listing the model configuration
// and each tensor's name, shape and byte offset.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ggnet/model.hpp"

namespace ggnet {

struct Checkpoint {
    ModelConfig model;
    ModelParams<float> params;
};

struct ManifestEntry {
    std::string name;
    Shape shape;
    std::size_t offset = 0;
};

void write_model_config(std::ostream& os, const ModelConfig& cfg, const std::string& prefix = "");
/// Binds ModelConfig fields onto `key = value` pairs.
ModelConfig parse_model_config(const std::vector<std::pair<std::string, std::string>>& kv);

/// Tensor order and offsets in the .ggt file. Biases are stored as (1, out, 1, 1).
std::vector<ManifestEntry> checkpoint_layout(const ModelParams<float>& params);

/// Writes `path` (.ggt) and the sibling manifest (`path` with extension .manifest).
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
/// Accepts the .ggt file or a directory holding checkpoint.ggt.
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::filesystem::path manifest_path(const std::filesystem::path& ggt_path);

} // namespace ggnet

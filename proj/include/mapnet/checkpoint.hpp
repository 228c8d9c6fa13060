#pragma once

#include "mapnet/config.hpp"

namespace mapnet {

// Checkpoint archive: a directory holding manifest.json (model configuration
// plus caller metadata) and params.bin (named parameter arrays).
//
// params.bin layout, little-endian:
//   8 bytes  magic "MAPNETP1"
//   u32      entry count
//   per entry:
//     u32      name length, then name bytes
//     u32      rank, then u32 dims[rank]
//     f64      data[prod(dims)]
void save_checkpoint(const std::string& dir, const Model& model,
                     const nlohmann::json& extra = nlohmann::json::object());

Model load_checkpoint(const std::string& dir);

nlohmann::json load_manifest(const std::string& dir);

// Copies entries whose names start with `prefix` (and whose shapes match)
// from the archive into the model; returns the number imported. This is the
// weight-import hook for externally pretrained backbones.
int import_params(Model& model, const std::string& dir, const std::string& prefix);

}  // namespace mapnet

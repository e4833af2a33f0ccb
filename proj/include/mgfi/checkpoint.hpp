#pragma once

#include <string>

#include "mgfi/network.hpp"

namespace mgfi {

// JSON (de)serialization of the model configuration, lower-snake-case keys.
std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

// Little-endian binary container:
//   magic "MGFI" | version u32 = 1 | json length u32 | config JSON bytes |
//   tensor count u32 | per tensor: name length u32, name bytes, ndim u32,
//   dims u32 x ndim, float32 payload.
// Tensors cover every learnable parameter plus batchnorm running statistics;
// offset channels follow the (dx, dy) per-tap row-major layout. Round-trips
// are bit-exact.
void save_checkpoint(const std::string& path, const ModelConfig& config,
                     NetworkParams& params);
std::pair<ModelConfig, NetworkParams> load_checkpoint(const std::string& path);

}  // namespace mgfi

#pragma once

#include <string>

#include "mgfi/tensor.hpp"

namespace mgfi {

// Binary netpbm readers/writers: P5 (grayscale) and P6 (RGB), 8-bit,
// maxval 255. Pixels map to [0,1] by division by 255; writing rounds back.
// Read errors name the byte offset of the problem.
Tensor read_image(const std::string& path);                 // (1, 1|3, h, w)
void write_image(const std::string& path, const Tensor& img);

}  // namespace mgfi

#pragma once

#include <string>

#include "fslam/core/image.hpp"

namespace fslam {

// 8-bit PNG I/O (1- or 3-channel) and 16-bit grayscale PNG I/O.
// All errors throw std::runtime_error naming the offending file.
void write_png_u8(const std::string& path, const ImageU8& image);
ImageU8 read_png_u8(const std::string& path);

void write_png_u16(const std::string& path, const ImageU16& image);
ImageU16 read_png_u16(const std::string& path);

}  // namespace fslam

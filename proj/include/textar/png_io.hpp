#pragma once

#include <string>

#include "textar/image.hpp"

namespace textar::png {

// 8-bit grayscale PNG. Internally ink is 1.0 on a 0.0 background; on disk the
// page is stored paper-style (255 = white paper, 0 = full ink), so the files
// view as ordinary document images. write/read round-trip to 1/255 accuracy.
void write_gray8(const std::string& path, const Image& im);
Image read_gray8(const std::string& path);

}  // namespace textar::png

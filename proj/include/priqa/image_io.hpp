#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "priqa/image.hpp"

namespace priqa {

// Decode an image file (BMP/PNG/JPEG/...) to 8-bit RGB.
Image load_image(const std::filesystem::path& path);

// Encode to the format implied by the file extension.
void save_image(const Image& img, const std::filesystem::path& path);

// In-memory JPEG round-trip support for synthetic compression distortions.
std::vector<std::uint8_t> encode_jpeg(const Image& img, int quality);
Image decode_image_bytes(const std::vector<std::uint8_t>& bytes);

}  // namespace priqa

#pragma once

#include <cstdint>
#include <filesystem>

#include "priqa/image.hpp"
#include "priqa/rng.hpp"

namespace priqa {

// Deterministic textured test image: smooth gradients, sinusoids, and
// multi-octave value noise, so blur/noise/compression each leave a clearly
// graded footprint.
Image make_procedural_image(Eigen::Index height, Eigen::Index width,
                            std::uint64_t seed);

Image gaussian_blur(const Image& img, double sigma);
Image add_white_noise(const Image& img, double stddev, Rng& rng);
Image jpeg_roundtrip(const Image& img, int quality);

// Miniature database in the kadid10k layout: one 512x384 reference (I01.png),
// 24 distorted variants (blur/noise/JPEG at 8 graded levels each), and a
// dmos.csv whose pseudo scores decrease monotonically with distortion level.
void write_toy_database(const std::filesystem::path& root, std::uint64_t seed = 7);

}  // namespace priqa

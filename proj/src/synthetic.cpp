#include "priqa/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <vector>

#include "priqa/core.hpp"
#include "priqa/image_io.hpp"

namespace priqa {

namespace {

inline std::uint8_t clamp_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

// Bilinear value noise over a coarse random grid.
struct ValueNoise {
  Eigen::Index cell;
  Eigen::Index gw, gh;
  std::vector<double> grid;

  ValueNoise(Eigen::Index h, Eigen::Index w, Eigen::Index cell_size, Rng& rng)
      : cell(cell_size), gw(w / cell_size + 2), gh(h / cell_size + 2),
        grid(static_cast<std::size_t>(gw * gh)) {
    for (auto& v : grid) v = rng.uniform(-1.0, 1.0);
  }

  double at(Eigen::Index y, Eigen::Index x) const {
    const double fy = static_cast<double>(y) / static_cast<double>(cell);
    const double fx = static_cast<double>(x) / static_cast<double>(cell);
    const auto y0 = static_cast<Eigen::Index>(fy), x0 = static_cast<Eigen::Index>(fx);
    const double ty = fy - static_cast<double>(y0), tx = fx - static_cast<double>(x0);
    auto g = [&](Eigen::Index yy, Eigen::Index xx) {
      return grid[static_cast<std::size_t>(yy * gw + xx)];
    };
    const double top = g(y0, x0) * (1 - tx) + g(y0, x0 + 1) * tx;
    const double bot = g(y0 + 1, x0) * (1 - tx) + g(y0 + 1, x0 + 1) * tx;
    return top * (1 - ty) + bot * ty;
  }
};

}  // namespace

Image make_procedural_image(Eigen::Index height, Eigen::Index width,
                            std::uint64_t seed) {
  Image img = Image::create(height, width);
  Rng rng(mix_seed(seed, "procedural"));
  const double phase1 = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double phase2 = rng.uniform(0.0, 2.0 * std::numbers::pi);
  ValueNoise coarse(height, width, 64, rng);
  ValueNoise mid(height, width, 16, rng);
  ValueNoise fine(height, width, 4, rng);
  for (Eigen::Index y = 0; y < height; ++y) {
    for (Eigen::Index x = 0; x < width; ++x) {
      const double u = static_cast<double>(x) / static_cast<double>(width);
      const double v = static_cast<double>(y) / static_cast<double>(height);
      const double waves = 0.18 * std::sin(2.0 * std::numbers::pi * (3.0 * u) + phase1) +
                           0.18 * std::sin(2.0 * std::numbers::pi * (2.0 * v) + phase2);
      const double texture = 0.20 * coarse.at(y, x) + 0.12 * mid.at(y, x) +
                             0.08 * fine.at(y, x);
      const double base = 0.45 + 0.25 * u - 0.15 * v + waves + texture;
      img.at(y, x, 0) = clamp_u8(255.0 * (base + 0.06 * mid.at(y, x)));
      img.at(y, x, 1) = clamp_u8(255.0 * (base + 0.04 * fine.at(y, x)));
      img.at(y, x, 2) = clamp_u8(255.0 * (base - 0.05 * coarse.at(y, x)));
    }
  }
  return img;
}

Image gaussian_blur(const Image& img, double sigma) {
  PRIQA_REQUIRE(sigma > 0.0, ErrorCategory::range, "gaussian_blur: sigma must be > 0");
  const auto radius = static_cast<Eigen::Index>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double norm = 0.0;
  for (Eigen::Index i = -radius; i <= radius; ++i) {
    const double w = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    kernel[static_cast<std::size_t>(i + radius)] = w;
    norm += w;
  }
  for (auto& w : kernel) w /= norm;

  auto reflect = [](Eigen::Index i, Eigen::Index n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
    return i;
  };

  const Eigen::Index h = img.height, w = img.width;
  std::vector<double> tmp(static_cast<std::size_t>(h * w * 3));
  Image out = Image::create(h, w);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x)
      for (Eigen::Index c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (Eigen::Index k = -radius; k <= radius; ++k)
          acc += kernel[static_cast<std::size_t>(k + radius)] *
                 static_cast<double>(img.at(y, reflect(x + k, w), c));
        tmp[static_cast<std::size_t>((y * w + x) * 3 + c)] = acc;
      }
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x)
      for (Eigen::Index c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (Eigen::Index k = -radius; k <= radius; ++k)
          acc += kernel[static_cast<std::size_t>(k + radius)] *
                 tmp[static_cast<std::size_t>((reflect(y + k, h) * w + x) * 3 + c)];
        out.at(y, x, c) = clamp_u8(acc);
      }
  return out;
}

Image add_white_noise(const Image& img, double stddev, Rng& rng) {
  PRIQA_REQUIRE(stddev >= 0.0, ErrorCategory::range, "add_white_noise: negative stddev");
  Image out = img;
  for (auto& byte : out.data)
    byte = clamp_u8(static_cast<double>(byte) + stddev * rng.normal());
  return out;
}

Image jpeg_roundtrip(const Image& img, int quality) {
  return decode_image_bytes(encode_jpeg(img, quality));
}

void write_toy_database(const std::filesystem::path& root, std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(root / "images");
  const Image ref = make_procedural_image(384, 512, seed);
  save_image(ref, root / "images" / "I01.png");

  std::ofstream csv(root / "dmos.csv");
  PRIQA_REQUIRE(csv.good(), ErrorCategory::io,
                "cannot write " + (root / "dmos.csv").string());
  csv << "dist_img,ref_img,dmos,var\n";

  const std::array<std::string, 3> types = {"01", "10", "11"};  // blur, jpeg, noise
  for (std::size_t t = 0; t < types.size(); ++t) {
    for (int level = 1; level <= 8; ++level) {
      Image dist;
      if (types[t] == "01") {
        dist = gaussian_blur(ref, 0.5 * level);
      } else if (types[t] == "10") {
        dist = jpeg_roundtrip(ref, std::max(2, 88 - 11 * level));
      } else {
        Rng rng(mix_seed(seed, "toy-noise", t, static_cast<std::uint64_t>(level)));
        dist = add_white_noise(ref, 3.5 * level, rng);
      }
      char name[32];
      std::snprintf(name, sizeof(name), "I01_%s_%02d.png", types[t].c_str(), level);
      save_image(dist, root / "images" / name);
      const double mos = 5.0 - 0.45 * level - 0.03 * static_cast<double>(t);
      csv << name << ",I01.png," << mos << ",0.1\n";
    }
  }
  PRIQA_REQUIRE(csv.good(), ErrorCategory::io, "write failed for dmos.csv");
}

}  // namespace priqa

#pragma once

#include <cstdint>
#include <vector>

#include "priqa/core.hpp"
#include "priqa/layers.hpp"

namespace priqa {

// 8-bit RGB image, row-major, interleaved channels.
struct Image {
  Eigen::Index height = 0;
  Eigen::Index width = 0;
  std::vector<std::uint8_t> data;

  bool empty() const { return data.empty(); }

  std::uint8_t at(Eigen::Index y, Eigen::Index x, Eigen::Index c) const {
    return data[static_cast<std::size_t>((y * width + x) * 3 + c)];
  }
  std::uint8_t& at(Eigen::Index y, Eigen::Index x, Eigen::Index c) {
    return data[static_cast<std::size_t>((y * width + x) * 3 + c)];
  }

  static Image create(Eigen::Index h, Eigen::Index w) {
    PRIQA_REQUIRE(h > 0 && w > 0, ErrorCategory::size, "image: non-positive dimensions");
    Image img;
    img.height = h;
    img.width = w;
    img.data.assign(static_cast<std::size_t>(h * w * 3), 0);
    return img;
  }
};

struct PatchCoord {
  Eigen::Index row = 0;  // grid indices, not pixels
  Eigen::Index col = 0;
};

using PatchBytes = std::vector<std::uint8_t>;  // 64*64*3, HWC interleaved

struct PatchGrid {
  std::vector<PatchBytes> patches;
  std::vector<PatchCoord> coords;
  Eigen::Index grid_rows = 0;
  Eigen::Index grid_cols = 0;

  Eigen::Index size() const { return static_cast<Eigen::Index>(patches.size()); }
};

// Cut one 64x64 patch at pixel offset (y0, x0).
inline PatchBytes crop_patch_at(const Image& img, Eigen::Index y0, Eigen::Index x0) {
  PRIQA_REQUIRE(y0 >= 0 && x0 >= 0 && y0 + kPatchSize <= img.height &&
                    x0 + kPatchSize <= img.width,
                ErrorCategory::size, "crop_patch_at: window outside image");
  PatchBytes p(static_cast<std::size_t>(kPatchSize * kPatchSize * 3));
  for (Eigen::Index y = 0; y < kPatchSize; ++y) {
    const std::uint8_t* src = img.data.data() + ((y0 + y) * img.width + x0) * 3;
    std::uint8_t* dst = p.data() + y * kPatchSize * 3;
    std::copy(src, src + kPatchSize * 3, dst);
  }
  return p;
}

// Non-overlapping raster-scan 64x64 grid; trailing border pixels beyond the
// last full tile are discarded.
inline PatchGrid crop_patches(const Image& img) {
  PRIQA_REQUIRE(img.height >= kPatchSize && img.width >= kPatchSize,
                ErrorCategory::size, "crop_patches: image smaller than a 64x64 patch");
  PatchGrid grid;
  grid.grid_rows = img.height / kPatchSize;
  grid.grid_cols = img.width / kPatchSize;
  grid.patches.reserve(static_cast<std::size_t>(grid.grid_rows * grid.grid_cols));
  for (Eigen::Index r = 0; r < grid.grid_rows; ++r) {
    for (Eigen::Index c = 0; c < grid.grid_cols; ++c) {
      grid.patches.push_back(crop_patch_at(img, r * kPatchSize, c * kPatchSize));
      grid.coords.push_back({r, c});
    }
  }
  return grid;
}

// Pack patches into the extractor input layout [3, n*4096]: column
// i*4096 + y*64 + x holds pixel (y, x) of patch i, scaled to [0,1].
template <class S>
MatrixX<S> patches_to_input(const std::vector<const PatchBytes*>& patches) {
  const Eigen::Index n = static_cast<Eigen::Index>(patches.size());
  MatrixX<S> x(3, n * kPatchPixels);
  for (Eigen::Index i = 0; i < n; ++i) {
    const PatchBytes& p = *patches[static_cast<std::size_t>(i)];
    PRIQA_REQUIRE(static_cast<Eigen::Index>(p.size()) == kPatchPixels * 3,
                  ErrorCategory::shape, "patches_to_input: patch byte size mismatch");
    S* dst = x.data() + i * kPatchPixels * 3;
    const std::uint8_t* src = p.data();
    for (Eigen::Index px = 0; px < kPatchPixels; ++px)
      for (Eigen::Index c = 0; c < 3; ++c)
        dst[px * 3 + c] = static_cast<S>(src[px * 3 + c]) / S(255);
  }
  return x;
}

template <class S>
MatrixX<S> patches_to_input(const PatchGrid& grid) {
  std::vector<const PatchBytes*> ptrs;
  ptrs.reserve(grid.patches.size());
  for (const auto& p : grid.patches) ptrs.push_back(&p);
  return patches_to_input<S>(ptrs);
}

}  // namespace priqa

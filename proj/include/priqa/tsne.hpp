#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "priqa/core.hpp"
#include "priqa/dataset.hpp"
#include "priqa/model.hpp"

namespace priqa {

struct TsneParams {
  int dims = 3;
  double perplexity = 30.0;
  int iterations = 1000;
  double learning_rate = 200.0;
  double early_exaggeration = 12.0;
  int exaggeration_iters = 250;
  std::uint64_t seed = 0;
};

// Exact (dense) embedding of points (rows) into `dims` dimensions.
MatrixX<double> tsne(const MatrixX<double>& points, const TsneParams& params);

struct TsneExportResult {
  std::filesystem::path csv_path;
  std::filesystem::path svg_path;
  int n_pairs = 0;  // pairs actually embedded (after availability warning)
};

// Samples up to n_pairs reference/distorted pairs, takes one random aligned
// patch from each, extracts the four feature sets (reference, distorted,
// pseudo-reference, pseudo-distortion), and embeds their union so distances
// across sets are comparable. Emits (role, x, y, z) rows plus a scatter SVG.
TsneExportResult tsne_export(PrfModel<float>& model, const DatabaseManifest& manifest,
                             ImageStore& store, int n_pairs, std::uint64_t seed,
                             const std::filesystem::path& out_dir,
                             const TsneParams& params = {});

}  // namespace priqa

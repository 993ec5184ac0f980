#pragma once

#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "priqa/dataset.hpp"
#include "priqa/metrics.hpp"
#include "priqa/model.hpp"

namespace priqa {

// Q^NR for one image: raster patch grid through the NR branch and its
// aggregation head. The reference is never touched.
double predict_image(PrfModel<float>& model, const Image& image);
double predict_image(const std::filesystem::path& checkpoint,
                     const std::filesystem::path& image_path);

// Q^FR for an aligned pair through the shared aggregation head.
double predict_image_fr(PrfModel<float>& model, const Image& image,
                        const Image& reference);
double predict_image_fr(const std::filesystem::path& checkpoint,
                        const std::filesystem::path& image_path,
                        const std::filesystem::path& reference_path);

struct DistortionStat {
  double srcc = std::numeric_limits<double>::quiet_NaN();
  double plcc = std::numeric_limits<double>::quiet_NaN();
  int n = 0;
};

struct EvalReport {
  DatabaseKind database = DatabaseKind::tid2013;
  std::string split_label;  // decimal seed, "full", or "median"
  double srcc = std::numeric_limits<double>::quiet_NaN();
  double plcc = std::numeric_limits<double>::quiet_NaN();
  int n_images = 0;
  std::map<std::string, DistortionStat> per_distortion;
};

// Optional hook for overriding where reference pixels are found (full-
// reference evaluation with references stored elsewhere).
struct EvalOptions {
  bool fr_path = false;                    // score with Q^FR instead of Q^NR
  std::filesystem::path reference_dir;     // override directory, may be empty
};

// Predict every listed record and correlate against DMOS, overall and per
// distortion type (types with undefined correlations keep NaN entries).
EvalReport evaluate_records(PrfModel<float>& model, const DatabaseManifest& manifest,
                            const std::vector<int>& record_indices,
                            const std::string& split_label, ImageStore& store,
                            const EvalOptions& options = {});

// One row per (split, database, distortion-or-ALL).
void write_reports_csv(const std::vector<EvalReport>& reports,
                       const std::filesystem::path& path);

}  // namespace priqa

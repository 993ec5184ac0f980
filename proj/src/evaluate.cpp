#include "priqa/evaluate.hpp"

#include <fstream>

#include "priqa/checkpoint.hpp"
#include "priqa/image_io.hpp"

namespace priqa {

namespace fs = std::filesystem;

double predict_image(PrfModel<float>& model, const Image& image) {
  PatchGrid grid = crop_patches(image);
  return static_cast<double>(model.predict_nr(patches_to_input<float>(grid)));
}

double predict_image(const fs::path& checkpoint, const fs::path& image_path) {
  PrfModel<float> model;
  load_checkpoint(checkpoint, model);
  return predict_image(model, load_image(image_path));
}

double predict_image_fr(PrfModel<float>& model, const Image& image,
                        const Image& reference) {
  PRIQA_REQUIRE(image.height == reference.height && image.width == reference.width,
                ErrorCategory::alignment,
                "image and reference dimensions differ");
  PatchGrid dist_grid = crop_patches(image);
  PatchGrid ref_grid = crop_patches(reference);
  return static_cast<double>(model.predict_fr(patches_to_input<float>(ref_grid),
                                              patches_to_input<float>(dist_grid)));
}

double predict_image_fr(const fs::path& checkpoint, const fs::path& image_path,
                        const fs::path& reference_path) {
  PrfModel<float> model;
  load_checkpoint(checkpoint, model);
  return predict_image_fr(model, load_image(image_path), load_image(reference_path));
}

namespace {

fs::path resolve_reference(const DatabaseManifest& manifest, const ImageRecord& rec,
                           const EvalOptions& options) {
  fs::path from_manifest = manifest.reference_path(rec);
  if (options.reference_dir.empty()) return from_manifest;
  return options.reference_dir / from_manifest.filename();
}

void correlate(const std::vector<double>& pred, const std::vector<double>& label,
               double& out_srcc, double& out_plcc) {
  // Leaves NaN when the correlation is undefined (tiny or constant slices).
  try {
    out_srcc = srcc(pred, label);
    out_plcc = plcc(pred, label);
  } catch (const Error&) {
  }
}

}  // namespace

EvalReport evaluate_records(PrfModel<float>& model, const DatabaseManifest& manifest,
                            const std::vector<int>& record_indices,
                            const std::string& split_label, ImageStore& store,
                            const EvalOptions& options) {
  PRIQA_REQUIRE(!record_indices.empty(), ErrorCategory::size,
                "evaluate_records: empty record list");
  EvalReport report;
  report.database = manifest.kind;
  report.split_label = split_label;
  report.n_images = static_cast<int>(record_indices.size());

  std::vector<double> pred, label;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_type;
  for (int idx : record_indices) {
    const ImageRecord& rec = manifest.records[static_cast<std::size_t>(idx)];
    const Image& img = store.get(manifest.distorted_path(rec));
    double q = 0.0;
    if (options.fr_path) {
      const Image& ref = store.get(resolve_reference(manifest, rec, options));
      q = predict_image_fr(model, img, ref);
    } else {
      q = predict_image(model, img);
    }
    pred.push_back(q);
    label.push_back(rec.dmos);
    auto& slot = by_type[rec.distortion_type];
    slot.first.push_back(q);
    slot.second.push_back(rec.dmos);
  }

  correlate(pred, label, report.srcc, report.plcc);
  for (const auto& [type, slot] : by_type) {
    DistortionStat stat;
    stat.n = static_cast<int>(slot.first.size());
    correlate(slot.first, slot.second, stat.srcc, stat.plcc);
    report.per_distortion[type] = stat;
  }
  return report;
}

void write_reports_csv(const std::vector<EvalReport>& reports, const fs::path& path) {
  std::ofstream out(path);
  PRIQA_REQUIRE(out.good(), ErrorCategory::io, "cannot write " + path.string());
  out << "split,database,distortion_type,srcc,plcc,n\n";
  out.precision(10);
  for (const auto& r : reports) {
    out << r.split_label << ',' << to_string(r.database) << ",ALL," << r.srcc << ','
        << r.plcc << ',' << r.n_images << '\n';
    for (const auto& [type, stat] : r.per_distortion) {
      out << r.split_label << ',' << to_string(r.database) << ',' << type << ','
          << stat.srcc << ',' << stat.plcc << ',' << stat.n << '\n';
    }
  }
  PRIQA_REQUIRE(out.good(), ErrorCategory::io, "write failed for " + path.string());
}

}  // namespace priqa

#include "priqa/protocol.hpp"

#include <cmath>
#include <fstream>

namespace priqa {

namespace fs = std::filesystem;

namespace {

// Train on the given split and evaluate its test records with the best
// retained checkpoint.
EvalReport train_and_test(const RunConfig& config, const DatabaseManifest& manifest,
                          const SplitSpec& split, const fs::path& run_dir) {
  FitResult fitres = fit(config, manifest, split, run_dir);
  PrfModel<float> model;
  load_checkpoint(fitres.best_checkpoint, model);
  ImageStore store;
  const std::vector<int> test_records = records_with_refs(manifest, split.test_refs);
  return evaluate_records(model, manifest, test_records,
                          std::to_string(split.seed), store);
}

}  // namespace

EvalReport median_of_reports(const std::vector<EvalReport>& reports) {
  PRIQA_REQUIRE(!reports.empty(), ErrorCategory::size, "median_of_reports: no reports");
  EvalReport out;
  out.database = reports.front().database;
  out.split_label = "median";
  std::vector<double> srccs, plccs;
  int n_total = 0;
  for (const auto& r : reports) {
    if (std::isfinite(r.srcc)) srccs.push_back(r.srcc);
    if (std::isfinite(r.plcc)) plccs.push_back(r.plcc);
    n_total += r.n_images;
  }
  if (!srccs.empty()) out.srcc = median(srccs);
  if (!plccs.empty()) out.plcc = median(plccs);
  out.n_images = n_total;

  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> per_type;
  std::map<std::string, int> per_type_n;
  for (const auto& r : reports) {
    for (const auto& [type, stat] : r.per_distortion) {
      if (std::isfinite(stat.srcc)) per_type[type].first.push_back(stat.srcc);
      if (std::isfinite(stat.plcc)) per_type[type].second.push_back(stat.plcc);
      per_type_n[type] += stat.n;
    }
  }
  for (auto& [type, vals] : per_type) {
    DistortionStat stat;
    if (!vals.first.empty()) stat.srcc = median(vals.first);
    if (!vals.second.empty()) stat.plcc = median(vals.second);
    stat.n = per_type_n[type];
    out.per_distortion[type] = stat;
  }
  return out;
}

IntraResult intra_eval(const RunConfig& config, const fs::path& out_dir, int n_splits) {
  PRIQA_REQUIRE(n_splits >= 1, ErrorCategory::config, "intra_eval: n_splits must be >= 1");
  config.validate_for_training();
  DatabaseManifest manifest = load_manifest(config.data_root, config.database_kind());
  fs::create_directories(out_dir);

  IntraResult result;
  for (int s = 0; s < n_splits; ++s) {
    SplitSpec split = split_by_reference(manifest, {0.6, 0.2, 0.2},
                                         static_cast<std::uint64_t>(s));
    const fs::path run_dir = out_dir / ("split_" + std::to_string(s));
    fs::create_directories(run_dir);
    save_split(split, run_dir / "split.txt");
    result.per_split.push_back(train_and_test(config, manifest, split, run_dir));
  }
  result.median_report = median_of_reports(result.per_split);

  std::vector<EvalReport> rows = result.per_split;
  rows.push_back(result.median_report);
  write_reports_csv(rows, out_dir / "intra_eval.csv");
  return result;
}

std::vector<EvalReport> cross_eval(
    const RunConfig& config,
    const std::vector<std::pair<DatabaseKind, fs::path>>& test_dbs,
    const fs::path& out_dir) {
  PRIQA_REQUIRE(!test_dbs.empty(), ErrorCategory::usage,
                "cross_eval: no test databases given");
  config.validate_for_training();
  DatabaseManifest source = load_manifest(config.data_root, config.database_kind());
  fs::create_directories(out_dir);

  SplitSpec split = split_by_reference(source, {0.6, 0.2, 0.2}, config.seed);
  save_split(split, out_dir / "split.txt");
  FitResult fitres = fit(config, source, split, out_dir);

  PrfModel<float> model;
  load_checkpoint(fitres.best_checkpoint, model);

  std::vector<EvalReport> reports;
  for (const auto& [kind, root] : test_dbs) {
    DatabaseManifest target = load_manifest(root, kind);
    std::vector<int> all(target.records.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    ImageStore store;
    reports.push_back(evaluate_records(model, target, all, "full", store));
  }
  write_reports_csv(reports, out_dir / "cross_eval.csv");
  return reports;
}

std::vector<Variant> ablation_variants() {
  std::vector<Variant> rows(6);
  rows[0] = {false, false, false, AggKind::gru};       // no PR hallucination at all
  rows[1] = {true, false, true, AggKind::gru};         // direct concatenation, no INN
  rows[2] = {true, true, false, AggKind::gru};         // no triplet constraint
  rows[3] = {true, true, true, AggKind::mean};         // plain averaging
  rows[4] = {true, true, true, AggKind::per_patch};    // per-patch learned weights
  rows[5] = {true, true, true, AggKind::gru};          // full model
  return rows;
}

std::vector<AblationRow> run_ablation(const RunConfig& config, const fs::path& out_dir) {
  config.validate_for_training();
  DatabaseManifest manifest = load_manifest(config.data_root, config.database_kind());
  fs::create_directories(out_dir);

  // one fixed split shared by every row
  SplitSpec split = split_by_reference(manifest, {0.6, 0.2, 0.2}, config.seed);
  save_split(split, out_dir / "split.txt");

  std::vector<AblationRow> rows;
  const std::vector<Variant> variants = ablation_variants();
  for (std::size_t i = 0; i < variants.size(); ++i) {
    RunConfig row_cfg = config;
    row_cfg.use_pr = variants[i].use_pr;
    row_cfg.use_inn = variants[i].use_inn;
    row_cfg.use_triplet = variants[i].use_triplet;
    row_cfg.aggregation = to_string(variants[i].agg);
    const fs::path run_dir = out_dir / ("row" + std::to_string(i + 1));
    fs::create_directories(run_dir);

    FitResult fitres = fit(row_cfg, manifest, split, run_dir);
    PrfModel<float> model;
    load_checkpoint(fitres.best_checkpoint, model);
    ImageStore store;
    const std::vector<int> test_records = records_with_refs(manifest, split.test_refs);
    EvalReport report = evaluate_records(model, manifest, test_records,
                                         std::to_string(split.seed), store);
    AblationRow row;
    row.row = static_cast<int>(i + 1);
    row.variant = variants[i];
    row.srcc = report.srcc;
    row.plcc = report.plcc;
    rows.push_back(row);
  }
  write_ablation_csv(rows, out_dir / "ablation.csv");
  return rows;
}

void write_ablation_csv(const std::vector<AblationRow>& rows, const fs::path& path) {
  std::ofstream out(path);
  PRIQA_REQUIRE(out.good(), ErrorCategory::io, "cannot write " + path.string());
  out << "row,use_pr,use_inn,use_triplet,aggregation,srcc,plcc\n";
  out.precision(10);
  for (const auto& r : rows) {
    out << r.row << ',' << (r.variant.use_pr ? "true" : "false") << ','
        << (r.variant.use_inn ? "true" : "false") << ','
        << (r.variant.use_triplet ? "true" : "false") << ','
        << to_string(r.variant.agg) << ',' << r.srcc << ',' << r.plcc << '\n';
  }
  PRIQA_REQUIRE(out.good(), ErrorCategory::io, "write failed for " + path.string());
}

}  // namespace priqa

#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include "priqa/config.hpp"
#include "priqa/evaluate.hpp"
#include "priqa/trainer.hpp"

namespace priqa {

struct IntraResult {
  std::vector<EvalReport> per_split;  // one test-set report per split seed
  EvalReport median_report;           // medians across splits
};

// Train/evaluate once per split seed 0..n_splits-1 and report the median
// SRCC/PLCC; each split run writes its artifacts under out_dir/split_<seed>.
IntraResult intra_eval(const RunConfig& config, const std::filesystem::path& out_dir,
                       int n_splits = 10);

// Median-assembly helper, separated so the reduction is testable without
// running ten trainings.
EvalReport median_of_reports(const std::vector<EvalReport>& reports);

// Train once on the source database (train/val portions of its split; the
// test portion stays unused) and score every record of each target database.
std::vector<EvalReport> cross_eval(
    const RunConfig& config,
    const std::vector<std::pair<DatabaseKind, std::filesystem::path>>& test_dbs,
    const std::filesystem::path& out_dir);

struct AblationRow {
  int row = 0;  // 1-based, table order
  Variant variant;
  double srcc = std::numeric_limits<double>::quiet_NaN();
  double plcc = std::numeric_limits<double>::quiet_NaN();
};

// The six structural configurations, in table order: baseline without the
// pseudo-reference branch, direct concatenation instead of the invertible
// split, no triplet term, mean aggregation, per-patch weights, full model.
std::vector<Variant> ablation_variants();

// Runs all six on one shared split and seed.
std::vector<AblationRow> run_ablation(const RunConfig& config,
                                      const std::filesystem::path& out_dir);

void write_ablation_csv(const std::vector<AblationRow>& rows,
                        const std::filesystem::path& path);

}  // namespace priqa

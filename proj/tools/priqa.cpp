// priqa: reproducible training / evaluation commands for the patch-based
// no-reference quality model. Every command writes all artifacts under the
// directory given with --out and exits nonzero with a categorized error line
// on failure.

#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "priqa/checkpoint.hpp"
#include "priqa/config.hpp"
#include "priqa/dataset.hpp"
#include "priqa/evaluate.hpp"
#include "priqa/protocol.hpp"
#include "priqa/trainer.hpp"
#include "priqa/tsne.hpp"

namespace fs = std::filesystem;

namespace {

struct ConfigArgs {
  std::string config_file;
  std::vector<std::string> sets;  // repeatable key=value overrides
  std::string database;
  std::string data_root;
  std::int64_t seed = -1;
  int max_epochs = -1;
  std::string aggregation;
};

void add_config_options(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("--config", args.config_file, "key = value configuration file")
      ->check(CLI::ExistingFile);
  cmd->add_option("--set", args.sets,
                  "override any config key, as key=value (repeatable)");
  cmd->add_option("--database", args.database,
                  "database kind: tid2013 | live | csiq | kadid10k");
  cmd->add_option("--data-root", args.data_root, "database root directory");
  cmd->add_option("--seed", args.seed, "root random seed override");
  cmd->add_option("--max-epochs", args.max_epochs, "epoch budget override");
  cmd->add_option("--aggregation", args.aggregation,
                  "patch aggregation: mean | per_patch | gru");
}

priqa::RunConfig build_config(const ConfigArgs& args) {
  priqa::RunConfig cfg;
  if (!args.config_file.empty()) cfg.load_file(args.config_file);
  for (const std::string& kv : args.sets) {
    const auto pos = kv.find('=');
    PRIQA_REQUIRE(pos != std::string::npos && pos > 0, priqa::ErrorCategory::usage,
                  "--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, pos), kv.substr(pos + 1));
  }
  if (!args.database.empty()) cfg.set("database", args.database);
  if (!args.data_root.empty()) cfg.set("data_root", args.data_root);
  if (args.seed >= 0) cfg.set("seed", std::to_string(args.seed));
  if (args.max_epochs >= 0) cfg.set("max_epochs", std::to_string(args.max_epochs));
  if (!args.aggregation.empty()) cfg.set("aggregation", args.aggregation);
  return cfg;
}

priqa::SplitSpec make_or_load_split(const priqa::RunConfig& cfg,
                                    const priqa::DatabaseManifest& manifest,
                                    const std::string& split_file, double val_ratio,
                                    double test_ratio) {
  if (!split_file.empty()) return priqa::load_split(split_file);
  return priqa::split_by_reference(
      manifest, {1.0 - val_ratio - test_ratio, val_ratio, test_ratio}, cfg.seed);
}

priqa::PrfModel<float> model_from_checkpoint(const fs::path& path) {
  priqa::PrfModel<float> model;
  priqa::load_checkpoint(path, model);
  return model;
}

int run(int argc, char** argv) {
  CLI::App app{"patch-based no-reference image quality toolkit"};
  app.require_subcommand(1);

  // ---- prepare ----
  std::string prep_database, prep_root, prep_out;
  CLI::App* prepare = app.add_subcommand(
      "prepare", "ingest a database, write manifest.csv, print an integrity summary");
  prepare->add_option("--database", prep_database, "database kind")->required();
  prepare->add_option("--data-root", prep_root, "database root directory")->required();
  prepare->add_option("--out", prep_out, "output directory")->required();
  prepare->callback([&]() {
    const priqa::DatabaseKind kind = priqa::database_from_string(prep_database);
    const priqa::DatabaseManifest manifest = priqa::load_manifest(prep_root, kind);
    fs::create_directories(prep_out);
    priqa::write_manifest_csv(manifest, fs::path(prep_out) / "manifest.csv");

    std::set<std::string> refs;
    std::set<std::string> types;
    double lo = 1e300, hi = -1e300;
    for (const auto& r : manifest.records) {
      refs.insert(r.reference_id);
      types.insert(r.distortion_type);
      lo = std::min(lo, r.dmos);
      hi = std::max(hi, r.dmos);
    }
    std::cout << priqa::to_string(kind) << ": " << manifest.records.size()
              << " distorted / " << refs.size() << " refs";
    if (kind == priqa::DatabaseKind::tid2013) std::cout << " (image 25 excluded)";
    std::cout << "\n";
    std::cout << "full database ships " << priqa::expected_record_count(kind)
              << " distorted / " << priqa::expected_reference_count(kind)
              << " references\n";
    std::cout << "distortion types: " << types.size() << ", dmos range [" << lo
              << ", " << hi << "]\n";
    std::cout << "wrote " << (fs::path(prep_out) / "manifest.csv").string() << "\n";
  });

  // ---- train ----
  ConfigArgs train_cfg_args;
  std::string train_out, train_split, train_resume;
  double train_val_ratio = 0.2, train_test_ratio = 0.2;
  CLI::App* train = app.add_subcommand("train", "train a model on one database");
  add_config_options(train, train_cfg_args);
  train->add_option("--out", train_out, "output directory")->required();
  train->add_option("--split", train_split, "reuse a saved reference split file")
      ->check(CLI::ExistingFile);
  train->add_option("--resume", train_resume, "checkpoint to resume from")
      ->check(CLI::ExistingFile);
  train->add_option("--val-ratio", train_val_ratio, "validation reference share");
  train->add_option("--test-ratio", train_test_ratio, "test reference share");
  train->callback([&]() {
    priqa::RunConfig cfg = build_config(train_cfg_args);
    cfg.validate_for_training();
    fs::create_directories(train_out);
    cfg.save_file(fs::path(train_out) / "config.txt");
    const priqa::DatabaseManifest manifest =
        priqa::load_manifest(cfg.data_root, cfg.database_kind());
    const priqa::SplitSpec split = make_or_load_split(
        cfg, manifest, train_split, train_val_ratio, train_test_ratio);
    priqa::save_split(split, fs::path(train_out) / "split.txt");
    std::optional<fs::path> resume;
    if (!train_resume.empty()) resume = train_resume;
    const priqa::FitResult result = priqa::fit(cfg, manifest, split, train_out, resume);
    std::cout << "trained " << result.final_epoch << " epochs; best epoch "
              << result.best_epoch << " (val srcc " << result.best_val_srcc << ")\n";
    std::cout << "best checkpoint: " << result.best_checkpoint.string() << "\n";
    std::cout << "log: " << result.log_path.string() << "\n";
  });

  // ---- eval ----
  std::string eval_ckpt, eval_database, eval_root, eval_out, eval_split;
  std::string eval_section = "test", eval_refdir;
  bool eval_fr = false;
  CLI::App* eval = app.add_subcommand("eval", "score a checkpoint on a database");
  eval->add_option("--checkpoint", eval_ckpt, "trained checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--database", eval_database, "database kind")->required();
  eval->add_option("--data-root", eval_root, "database root directory")->required();
  eval->add_option("--out", eval_out, "output directory")->required();
  eval->add_option("--split", eval_split, "saved split file; omit to use every record")
      ->check(CLI::ExistingFile);
  eval->add_option("--section", eval_section, "split section: train | val | test");
  eval->add_flag("--fr", eval_fr, "score with the full-reference path");
  eval->add_option("--reference-dir", eval_refdir,
                   "directory holding reference images (full-reference mode only)");
  eval->callback([&]() {
    if (!eval_fr && !eval_refdir.empty())
      priqa::fail(priqa::ErrorCategory::usage,
                  "no-reference evaluation never reads references; "
                  "--reference-dir is only valid with --fr");
    if (eval_fr && eval_refdir.empty())
      priqa::fail(priqa::ErrorCategory::usage,
                  "full-reference evaluation requires --reference-dir");
    if (!eval_split.empty() && eval_section != "train" && eval_section != "val" &&
        eval_section != "test")
      priqa::fail(priqa::ErrorCategory::usage,
                  "unknown --section '" + eval_section +
                      "' (expected train, val, or test)");

    const priqa::DatabaseKind kind = priqa::database_from_string(eval_database);
    priqa::PrfModel<float> model = model_from_checkpoint(eval_ckpt);
    const priqa::DatabaseManifest manifest = priqa::load_manifest(eval_root, kind);

    std::vector<int> indices;
    std::string label = "full";
    if (!eval_split.empty()) {
      const priqa::SplitSpec split = priqa::load_split(eval_split);
      const std::set<std::string>* refs = nullptr;
      if (eval_section == "train") refs = &split.train_refs;
      else if (eval_section == "val") refs = &split.val_refs;
      else if (eval_section == "test") refs = &split.test_refs;
      else
        priqa::fail(priqa::ErrorCategory::usage,
                    "unknown --section '" + eval_section +
                        "' (expected train, val, or test)");
      indices = priqa::records_with_refs(manifest, *refs);
      label = eval_section;
    } else {
      indices.resize(manifest.records.size());
      for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = static_cast<int>(i);
    }

    priqa::EvalOptions options;
    options.fr_path = eval_fr;
    options.reference_dir = eval_refdir;
    priqa::ImageStore store;
    const priqa::EvalReport report =
        priqa::evaluate_records(model, manifest, indices, label, store, options);

    fs::create_directories(eval_out);
    priqa::write_reports_csv({report}, fs::path(eval_out) / "eval.csv");
    std::cout << (eval_fr ? "fr" : "nr") << " " << priqa::to_string(kind) << " "
              << label << ": srcc=" << report.srcc << " plcc=" << report.plcc
              << " n=" << report.n_images << "\n";
    std::cout << "wrote " << (fs::path(eval_out) / "eval.csv").string() << "\n";
  });

  // ---- cross-eval ----
  ConfigArgs cross_cfg_args;
  std::string cross_out;
  std::vector<std::string> cross_targets;
  CLI::App* cross = app.add_subcommand(
      "cross-eval", "train on one database, test on full other databases");
  add_config_options(cross, cross_cfg_args);
  cross->add_option("--out", cross_out, "output directory")->required();
  cross->add_option("--test-db", cross_targets, "target database as kind:root (repeatable)")
      ->required();
  cross->callback([&]() {
    priqa::RunConfig cfg = build_config(cross_cfg_args);
    cfg.validate_for_training();
    std::vector<std::pair<priqa::DatabaseKind, fs::path>> targets;
    for (const std::string& spec : cross_targets) {
      const auto pos = spec.find(':');
      PRIQA_REQUIRE(pos != std::string::npos && pos > 0,
                    priqa::ErrorCategory::usage,
                    "--test-db expects kind:root, got '" + spec + "'");
      targets.emplace_back(priqa::database_from_string(spec.substr(0, pos)),
                           fs::path(spec.substr(pos + 1)));
    }
    fs::create_directories(cross_out);
    cfg.save_file(fs::path(cross_out) / "config.txt");
    const std::vector<priqa::EvalReport> reports =
        priqa::cross_eval(cfg, targets, cross_out);
    for (const auto& r : reports)
      std::cout << priqa::to_string(r.database) << ": srcc=" << r.srcc
                << " plcc=" << r.plcc << " n=" << r.n_images << "\n";
    std::cout << "wrote " << (fs::path(cross_out) / "cross_eval.csv").string() << "\n";
  });

  // ---- ablate ----
  ConfigArgs ablate_cfg_args;
  std::string ablate_out;
  CLI::App* ablate = app.add_subcommand(
      "ablate", "run the six structural configurations on one shared split");
  add_config_options(ablate, ablate_cfg_args);
  ablate->add_option("--out", ablate_out, "output directory")->required();
  ablate->callback([&]() {
    priqa::RunConfig cfg = build_config(ablate_cfg_args);
    cfg.validate_for_training();
    fs::create_directories(ablate_out);
    cfg.save_file(fs::path(ablate_out) / "config.txt");
    const std::vector<priqa::AblationRow> rows = priqa::run_ablation(cfg, ablate_out);
    for (const auto& row : rows)
      std::cout << "row " << row.row << " [pr=" << row.variant.use_pr
                << " inn=" << row.variant.use_inn
                << " triplet=" << row.variant.use_triplet << " agg="
                << priqa::to_string(row.variant.agg) << "]: srcc=" << row.srcc
                << " plcc=" << row.plcc << "\n";
    std::cout << "wrote " << (fs::path(ablate_out) / "ablation.csv").string() << "\n";
  });

  // ---- tsne ----
  std::string tsne_ckpt, tsne_database, tsne_root, tsne_out;
  int tsne_pairs = 900;
  std::int64_t tsne_seed = 0;
  priqa::TsneParams tsne_params;
  CLI::App* tsne = app.add_subcommand(
      "tsne", "embed the four feature roles of sampled pairs into 3-D");
  tsne->add_option("--checkpoint", tsne_ckpt, "trained checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  tsne->add_option("--database", tsne_database, "database kind")->required();
  tsne->add_option("--data-root", tsne_root, "database root directory")->required();
  tsne->add_option("--out", tsne_out, "output directory")->required();
  tsne->add_option("--pairs", tsne_pairs, "image pairs to sample (default 900)");
  tsne->add_option("--seed", tsne_seed, "sampling/embedding seed");
  tsne->add_option("--perplexity", tsne_params.perplexity, "t-SNE perplexity");
  tsne->add_option("--iterations", tsne_params.iterations, "t-SNE iterations");
  tsne->callback([&]() {
    const priqa::DatabaseKind kind = priqa::database_from_string(tsne_database);
    priqa::PrfModel<float> model = model_from_checkpoint(tsne_ckpt);
    const priqa::DatabaseManifest manifest = priqa::load_manifest(tsne_root, kind);
    priqa::ImageStore store;
    const priqa::TsneExportResult result =
        priqa::tsne_export(model, manifest, store, tsne_pairs,
                           static_cast<std::uint64_t>(tsne_seed), tsne_out, tsne_params);
    std::cout << "embedded " << result.n_pairs << " pairs x 4 roles\n";
    std::cout << "wrote " << result.csv_path.string() << " and "
              << result.svg_path.string() << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error[usage]: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const priqa::Error& e) {
    std::cerr << "error[" << priqa::to_string(e.category()) << "]: " << e.what()
              << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << "\n";
    return 1;
  }
}

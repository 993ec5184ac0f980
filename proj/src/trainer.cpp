#include "priqa/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "priqa/evaluate.hpp"

namespace priqa {

namespace fs = std::filesystem;
using nlohmann::json;

Trainer::Trainer(PrfModel<float>& model, const TrainConfig& cfg)
    : model_(model), cfg_(cfg), params_(model.params()) {
  adam_.reset(params_);
}

LossBreakdown Trainer::train_step(const TrainingBatch& batch) {
  PRIQA_REQUIRE(batch.pairs >= 1 && batch.duplication >= 1, ErrorCategory::size,
                "train_step: empty batch");
  for (auto* p : params_) p->zero_grad();

  LossConfig loss_cfg;
  loss_cfg.lambda = cfg_.lambda;
  loss_cfg.margin_alpha = cfg_.margin_alpha;

  const int groups = batch.pairs;
  const Eigen::Index len = batch.duplication;
  const int chunk = std::min(cfg_.chunk_groups, groups);

  LossBreakdown breakdown;
  for (int g0 = 0; g0 < groups; g0 += chunk) {
    const int g1 = std::min(groups, g0 + chunk);
    const Eigen::Index cg = g1 - g0;
    std::vector<const PatchBytes*> refs, dists;
    for (Eigen::Index i = g0 * len; i < g1 * len; ++i) {
      refs.push_back(&batch.ref_patches[static_cast<std::size_t>(i)]);
      dists.push_back(&batch.dist_patches[static_cast<std::size_t>(i)]);
    }
    MatrixX<float> xd = patches_to_input<float>(dists);
    MatrixX<float> xr;
    if (model_.has_fr()) xr = patches_to_input<float>(refs);
    VectorX<float> labels = batch.labels.segment(g0, cg).cast<float>();

    ad::Tape<float> tape;
    ForwardResult<float> fwd =
        model_.training_loss(tape, xr, xd, cg, len, labels, loss_cfg);
    const double chunk_total = static_cast<double>(fwd.loss_total.value()(0, 0));
    if (!std::isfinite(chunk_total)) {
      std::string ids;
      for (int g = g0; g < g1; ++g)
        ids += (g > g0 ? ", " : "") + batch.image_ids[static_cast<std::size_t>(g)];
      fail(ErrorCategory::numeric, "non-finite loss on batch images: " + ids);
    }
    breakdown.total += chunk_total;
    breakdown.reg_fr += fwd.reg_fr;
    breakdown.reg_pr += fwd.reg_pr;
    breakdown.reg_nr += fwd.reg_nr;
    breakdown.triplet += fwd.trip;
    tape.backward(fwd.loss_total);
  }

  apply_update();
  return breakdown;
}

void Trainer::apply_update() {
  const float wd = static_cast<float>(cfg_.weight_decay);
  for (auto* p : params_) p->grad += wd * p->value;

  double sq_norm = 0.0;
  for (const auto* p : params_) sq_norm += static_cast<double>(p->grad.squaredNorm());
  const double norm = std::sqrt(sq_norm);
  constexpr double kClipNorm = 10.0;
  if (norm > kClipNorm) {
    const float scale = static_cast<float>(kClipNorm / norm);
    for (auto* p : params_) p->grad *= scale;
  }

  constexpr float kBeta1 = 0.9f, kBeta2 = 0.999f, kEps = 1e-8f;
  adam_.t += 1;
  const float corr1 = 1.0f - std::pow(kBeta1, static_cast<float>(adam_.t));
  const float corr2 = 1.0f - std::pow(kBeta2, static_cast<float>(adam_.t));
  const float lr = static_cast<float>(cfg_.learning_rate);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter<float>& p = *params_[i];
    MatrixX<float>& m = adam_.m[i];
    MatrixX<float>& v = adam_.v[i];
    m = kBeta1 * m + (1.0f - kBeta1) * p.grad;
    v = kBeta2 * v + (1.0f - kBeta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -=
        lr * (m.array() / corr1) / ((v.array() / corr2).sqrt() + kEps);
  }
}

namespace {

std::string checkpoint_name(const std::string& database, std::uint64_t seed, int epoch) {
  return database + "_" + std::to_string(seed) + "_" + std::to_string(epoch) + ".ckpt";
}

// Validation SRCC/PLCC of Q^NR over the given records; NaN when undefined.
void validate_split(PrfModel<float>& model, const DatabaseManifest& manifest,
                    const std::vector<int>& records, ImageStore& store,
                    double& out_srcc, double& out_plcc) {
  out_srcc = std::numeric_limits<double>::quiet_NaN();
  out_plcc = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> pred, label;
  for (int idx : records) {
    const ImageRecord& rec = manifest.records[static_cast<std::size_t>(idx)];
    pred.push_back(predict_image(model, store.get(manifest.distorted_path(rec))));
    label.push_back(rec.dmos);
  }
  try {
    out_srcc = srcc(pred, label);
    out_plcc = plcc(pred, label);
  } catch (const Error&) {
  }
}

}  // namespace

FitResult fit(const RunConfig& config, const DatabaseManifest& manifest,
              const SplitSpec& split, const fs::path& out_dir,
              const std::optional<fs::path>& resume) {
  config.validate_for_training();
  const TrainConfig tcfg = config.train();
  const std::string db_name = to_string(manifest.kind);
  fs::create_directories(out_dir);

  const std::vector<int> train_records = records_with_refs(manifest, split.train_refs);
  const std::vector<int> val_records = records_with_refs(manifest, split.val_refs);
  PRIQA_REQUIRE(!train_records.empty(), ErrorCategory::size,
                "training split contains no records");

  PrfModel<float> model;
  AdamState* adam = nullptr;
  int start_epoch = 1;
  FitResult result;

  std::optional<Trainer> trainer;
  if (resume) {
    AdamState resumed;
    CheckpointMeta meta = load_checkpoint(*resume, model, &resumed);
    PRIQA_REQUIRE(meta.net == config.net() && meta.variant == config.variant(),
                  ErrorCategory::config,
                  "resume checkpoint was trained with a different configuration");
    trainer.emplace(model, tcfg);
    trainer->adam() = std::move(resumed);
    start_epoch = meta.epoch + 1;
    result.best_epoch = meta.best_epoch;
    result.best_val_srcc = meta.best_val_srcc;
    if (meta.best_epoch >= 0)
      result.best_checkpoint = out_dir / checkpoint_name(db_name, tcfg.seed, meta.best_epoch);
  } else {
    model.init(config.net(), config.variant(), tcfg.seed);
    trainer.emplace(model, tcfg);
  }
  adam = &trainer->adam();

  result.log_path = out_dir / "training_log.jsonl";
  std::ofstream log(result.log_path, std::ios::app);
  PRIQA_REQUIRE(log.good(), ErrorCategory::io,
                "cannot open training log " + result.log_path.string());
  {
    json start;
    start["event"] = "start";
    start["database"] = db_name;
    start["seed"] = tcfg.seed;
    start["split_seed"] = split.seed;
    start["start_epoch"] = start_epoch;
    start["n_train_images"] = train_records.size();
    start["n_val_images"] = val_records.size();
    json jcfg;
    jcfg["learning_rate"] = tcfg.learning_rate;
    jcfg["weight_decay"] = tcfg.weight_decay;
    jcfg["batch_pairs"] = tcfg.batch_pairs;
    jcfg["duplication"] = tcfg.duplication;
    jcfg["max_epochs"] = tcfg.max_epochs;
    jcfg["eval_every"] = tcfg.eval_every;
    jcfg["lambda"] = tcfg.lambda;
    jcfg["margin_alpha"] = tcfg.margin_alpha;
    jcfg["aggregation"] = config.aggregation;
    jcfg["use_pr"] = config.use_pr;
    jcfg["use_inn"] = config.use_inn;
    jcfg["use_triplet"] = config.use_triplet;
    start["config"] = jcfg;
    log << start.dump() << "\n" << std::flush;
  }

  ImageStore store;
  const int steps_per_epoch =
      std::max<int>(1, static_cast<int>(train_records.size()) / tcfg.batch_pairs);

  CheckpointMeta meta;
  meta.seed = tcfg.seed;
  meta.database = db_name;
  meta.best_epoch = result.best_epoch;
  meta.best_val_srcc = result.best_val_srcc;

  for (int epoch = start_epoch; epoch <= tcfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    LossBreakdown sums;
    for (int step = 0; step < steps_per_epoch; ++step) {
      Rng rng(mix_seed(tcfg.seed, "batch", static_cast<std::uint64_t>(epoch),
                       static_cast<std::uint64_t>(step)));
      TrainingBatch batch = make_training_batch(manifest, split, store,
                                                tcfg.batch_pairs, tcfg.duplication, rng);
      LossBreakdown b = trainer->train_step(batch);
      sums.total += b.total;
      sums.reg_fr += b.reg_fr;
      sums.reg_pr += b.reg_pr;
      sums.reg_nr += b.reg_nr;
      sums.triplet += b.triplet;
    }
    const double inv_steps = 1.0 / steps_per_epoch;

    json line;
    line["epoch"] = epoch;
    line["total"] = sums.total * inv_steps;
    line["reg_fr"] = sums.reg_fr * inv_steps;
    line["reg_pr"] = sums.reg_pr * inv_steps;
    line["reg_nr"] = sums.reg_nr * inv_steps;
    line["triplet"] = sums.triplet * inv_steps;

    const bool do_eval = !val_records.empty() && epoch % tcfg.eval_every == 0;
    if (do_eval) {
      double vs = 0.0, vp = 0.0;
      validate_split(model, manifest, val_records, store, vs, vp);
      line["val_srcc"] = vs;
      line["val_plcc"] = vp;
      if (std::isfinite(vs) && vs > meta.best_val_srcc) {
        meta.best_val_srcc = vs;
        meta.best_epoch = epoch;
        meta.epoch = epoch;
        const std::string name = checkpoint_name(db_name, tcfg.seed, epoch);
        save_checkpoint(out_dir / name, model, meta, adam);
        write_best_marker(out_dir, name);
        if (!result.best_checkpoint.empty() && result.best_checkpoint != out_dir / name)
          fs::remove(result.best_checkpoint);
        result.best_checkpoint = out_dir / name;
        result.best_epoch = epoch;
        result.best_val_srcc = vs;
      }
    }

    const auto t1 = std::chrono::steady_clock::now();
    line["wall_s"] = std::chrono::duration<double>(t1 - t0).count();
    log << line.dump() << "\n" << std::flush;
    result.final_epoch = epoch;
  }

  meta.epoch = std::max(result.final_epoch, start_epoch - 1);
  const std::string final_name = checkpoint_name(db_name, tcfg.seed, meta.epoch);
  save_checkpoint(out_dir / final_name, model, meta, adam);
  result.final_checkpoint = out_dir / final_name;
  if (result.best_checkpoint.empty()) {
    // no validation pass ever ran: the final model is the retained one
    write_best_marker(out_dir, final_name);
    result.best_checkpoint = result.final_checkpoint;
    result.best_epoch = meta.epoch;
  }

  json done;
  done["event"] = "done";
  done["final_epoch"] = result.final_epoch;
  done["best_epoch"] = result.best_epoch;
  done["best_val_srcc"] = meta.best_val_srcc;
  done["final_checkpoint"] = result.final_checkpoint.filename().string();
  done["best_checkpoint"] = result.best_checkpoint.filename().string();
  log << done.dump() << "\n" << std::flush;
  return result;
}

}  // namespace priqa

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "helpers.hpp"
#include "priqa/trainer.hpp"

using namespace priqa;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

NetConfig tiny_net() {
  NetConfig net;
  net.feature_dim = 8;
  net.conv_channels = {4, 8};
  net.inn_blocks = 2;
  net.inn_subnet_width = 8;
  net.gru_hidden = 4;
  return net;
}

TrainConfig tiny_cfg(double lr, double wd) {
  TrainConfig cfg;
  cfg.learning_rate = lr;
  cfg.weight_decay = wd;
  cfg.batch_pairs = 2;
  cfg.duplication = 2;
  cfg.chunk_groups = 2;
  cfg.seed = 5;
  return cfg;
}

RunConfig tiny_run(const fs::path& root) {
  RunConfig cfg;
  cfg.database = "kadid10k";
  cfg.data_root = root.string();
  cfg.feature_dim = 8;
  cfg.conv_channels = {4, 8};
  cfg.inn_blocks = 2;
  cfg.inn_subnet_width = 8;
  cfg.gru_hidden = 4;
  cfg.learning_rate = 1e-4;
  cfg.weight_decay = 1e-4;
  cfg.batch_pairs = 2;
  cfg.duplication = 2;
  cfg.max_epochs = 3;
  cfg.eval_every = 1;
  cfg.seed = 5;
  cfg.chunk_groups = 2;
  return cfg;
}

// Small on-disk database plus an everything-in-train split for batch making.
struct TrainFixture {
  fs::path root;
  DatabaseManifest manifest;
  SplitSpec split;
  ImageStore store;

  explicit TrainFixture(const std::string& tag, int refs = 5, int levels = 3) {
    root = testutil::scratch_dir(tag);
    testutil::write_mini_database(root, refs, levels);
    manifest = load_manifest(root, DatabaseKind::kadid10k);
    split.database = DatabaseKind::kadid10k;
    split.seed = 0;
    for (const auto& [id, path] : manifest.references) split.train_refs.insert(id);
  }

  TrainingBatch batch(int pairs, int dup, std::uint64_t seed) {
    return make_training_batch(manifest, split, store, pairs, dup, seed);
  }
};

std::vector<MatrixX<float>> snapshot(const PrfModel<float>& model) {
  std::vector<MatrixX<float>> out;
  for (const auto* p : const_cast<PrfModel<float>&>(model).params())
    out.push_back(p->value);
  return out;
}

std::vector<MatrixX<float>> grads_of(PrfModel<float>& model) {
  std::vector<MatrixX<float>> out;
  for (const auto* p : model.params()) out.push_back(p->grad);
  return out;
}

double global_grad_norm(PrfModel<float>& model) {
  double sq = 0.0;
  for (const auto* p : model.params()) sq += static_cast<double>(p->grad.squaredNorm());
  return std::sqrt(sq);
}

// Parses every epoch record (lines carrying "epoch" but no "event") of a
// JSONL training log, keyed by epoch number.
std::map<int, json> epoch_lines(const fs::path& log) {
  std::map<int, json> out;
  std::ifstream in(log);
  REQUIRE(in.good());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    if (!j.contains("event") && j.contains("epoch")) out[j["epoch"].get<int>()] = j;
  }
  return out;
}

std::vector<json> all_lines(const fs::path& log) {
  std::vector<json> out;
  std::ifstream in(log);
  REQUIRE(in.good());
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(json::parse(line));
  return out;
}

bool same_loss_fields(const json& a, const json& b) {
  for (const char* key : {"total", "reg_fr", "reg_pr", "reg_nr", "triplet"})
    if (a.at(key).get<double>() != b.at(key).get<double>()) return false;
  return true;
}

}  // namespace

TEST_CASE("repeated steps on one batch drive the loss down") {
  TrainFixture fx("trainer_descent");
  TrainingBatch batch = fx.batch(3, 2, 17);

  PrfModel<float> model;
  model.init(tiny_net(), Variant{}, 3);
  TrainConfig cfg = tiny_cfg(1e-3, 0.0);
  Trainer trainer(model, cfg);

  LossBreakdown first = trainer.train_step(batch);
  CHECK(std::isfinite(first.total));
  CHECK(first.total ==
        doctest::Approx(first.reg_fr + first.reg_pr + first.reg_nr +
                        cfg.lambda * first.triplet)
            .epsilon(1e-6));

  LossBreakdown last = first;
  for (int step = 1; step < 50; ++step) last = trainer.train_step(batch);
  CHECK(std::isfinite(last.total));
  CHECK(last.total < first.total);
  CHECK(trainer.adam().t == 50);
}

TEST_CASE("a zero learning rate leaves every parameter bitwise unchanged") {
  TrainFixture fx("trainer_zero_lr");
  TrainingBatch batch = fx.batch(2, 2, 9);

  PrfModel<float> model;
  model.init(tiny_net(), Variant{}, 7);
  const auto before = snapshot(model);

  Trainer trainer(model, tiny_cfg(0.0, 0.5));
  trainer.train_step(batch);
  CHECK(trainer.adam().t == 1);

  const auto params = model.params();
  REQUIRE(params.size() == before.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    CAPTURE(params[i]->name);
    CHECK((params[i]->value.array() == before[i].array()).all());
  }
}

TEST_CASE("one step sends gradient into all five submodules") {
  TrainFixture fx("trainer_submodules");
  TrainingBatch batch = fx.batch(2, 2, 13);

  PrfModel<float> model;
  model.init(tiny_net(), Variant{}, 11);
  Trainer trainer(model, tiny_cfg(0.0, 0.0));
  trainer.train_step(batch);

  for (const std::string prefix :
       {"fr.", "nr.", "inn.", "agg_shared.", "agg_nr."}) {
    bool touched = false;
    for (const auto* p : model.params()) {
      if (p->name.rfind(prefix, 0) != 0) continue;
      if (p->grad.cwiseAbs().maxCoeff() > 0.0f) {
        touched = true;
        break;
      }
    }
    CAPTURE(prefix);
    CHECK(touched);
  }
}

TEST_CASE("the update is adam with weight decay folded into the gradient") {
  TrainFixture fx("trainer_adam");
  TrainingBatch batch = fx.batch(1, 2, 23);

  constexpr std::uint64_t kInit = 7;
  const double wd = 0.3;

  PrfModel<float> plain;
  plain.init(tiny_net(), Variant{}, kInit);
  Trainer plain_tr(plain, tiny_cfg(0.0, 0.0));
  plain_tr.train_step(batch);
  const auto g_plain = grads_of(plain);
  REQUIRE(global_grad_norm(plain) < 10.0);

  PrfModel<float> decayed;
  decayed.init(tiny_net(), Variant{}, kInit);
  const auto theta0 = snapshot(decayed);
  Trainer decayed_tr(decayed, tiny_cfg(0.0, wd));
  decayed_tr.train_step(batch);
  const auto g_decayed = grads_of(decayed);
  REQUIRE(global_grad_norm(decayed) < 10.0);

  // decay contributes wd * theta on top of the data gradient
  double worst = 0.0;
  for (std::size_t i = 0; i < g_plain.size(); ++i) {
    const MatrixX<float> expected =
        g_plain[i] + static_cast<float>(wd) * theta0[i];
    worst = std::max(
        worst,
        static_cast<double>((g_decayed[i] - expected).cwiseAbs().maxCoeff()));
  }
  CHECK(worst <= 1e-5);

  PrfModel<float> stepped;
  stepped.init(tiny_net(), Variant{}, kInit);
  const auto start = snapshot(stepped);
  const float lr = 1e-3f;
  Trainer stepped_tr(stepped, tiny_cfg(static_cast<double>(lr), wd));
  stepped_tr.train_step(batch);
  REQUIRE(stepped_tr.adam().t == 1);

  const float c1 = 1.0f - 0.9f;
  const float c2 = 1.0f - 0.999f;
  const float corr1 = 1.0f - std::pow(0.9f, 1.0f);
  const float corr2 = 1.0f - std::pow(0.999f, 1.0f);
  const float eps = 1e-8f;

  const auto params = stepped.params();
  const AdamState& adam = stepped_tr.adam();
  double worst_m = 0.0, worst_v = 0.0, worst_theta = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const MatrixX<float>& g = params[i]->grad;
    const MatrixX<float> m_exp = c1 * g;
    const MatrixX<float> v_exp = c2 * g.cwiseProduct(g);
    worst_m = std::max(worst_m, static_cast<double>(
                                    (adam.m[i] - m_exp).cwiseAbs().maxCoeff()));
    worst_v = std::max(worst_v, static_cast<double>(
                                    (adam.v[i] - v_exp).cwiseAbs().maxCoeff()));
    MatrixX<float> theta_exp = start[i];
    theta_exp.array() -= lr * (adam.m[i].array() / corr1) /
                         ((adam.v[i].array() / corr2).sqrt() + eps);
    worst_theta =
        std::max(worst_theta, static_cast<double>((params[i]->value - theta_exp)
                                                      .cwiseAbs()
                                                      .maxCoeff()));
  }
  CHECK(worst_m <= 1e-9);
  CHECK(worst_v <= 1e-9);
  CHECK(worst_theta <= 5e-8);
}

TEST_CASE("oversized gradients are clipped to a global norm of ten") {
  TrainFixture fx("trainer_clip");
  TrainingBatch batch = fx.batch(1, 2, 29);

  PrfModel<float> model;
  model.init(tiny_net(), Variant{}, 7);
  Trainer trainer(model, tiny_cfg(0.0, 50.0));
  trainer.train_step(batch);
  CHECK(global_grad_norm(model) == doctest::Approx(10.0).epsilon(1e-4));
}

TEST_CASE("identical seeds and batches give bitwise identical trainers") {
  TrainFixture fx("trainer_determinism");
  TrainingBatch batch = fx.batch(2, 2, 31);

  PrfModel<float> a, b;
  a.init(tiny_net(), Variant{}, 21);
  b.init(tiny_net(), Variant{}, 21);
  Trainer ta(a, tiny_cfg(1e-3, 1e-4));
  Trainer tb(b, tiny_cfg(1e-3, 1e-4));
  for (int step = 0; step < 3; ++step) {
    ta.train_step(batch);
    tb.train_step(batch);
  }
  CHECK(ta.adam().t == 3);

  const auto pa = a.params();
  const auto pb = b.params();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CAPTURE(pa[i]->name);
    CHECK((pa[i]->value.array() == pb[i]->value.array()).all());
  }
}

TEST_CASE("a non-finite loss is reported with the offending image ids") {
  TrainFixture fx("trainer_nonfinite");
  TrainingBatch batch = fx.batch(2, 2, 37);

  PrfModel<float> model;
  model.init(tiny_net(), Variant{}, 7);
  for (auto* p : model.params())
    if (p->name == "agg_nr.fc_q.b")
      p->value.setConstant(std::numeric_limits<float>::quiet_NaN());

  Trainer trainer(model, tiny_cfg(1e-4, 0.0));
  CHECK(testutil::category_of([&] { trainer.train_step(batch); }) ==
        ErrorCategory::numeric);
  CHECK(testutil::error_message_of([&] { trainer.train_step(batch); }) ==
        "non-finite loss on batch images: " + batch.image_ids[0] + ", " +
            batch.image_ids[1]);
}

TEST_CASE("an empty batch is rejected") {
  PrfModel<float> model;
  model.init(tiny_net(), Variant{}, 7);
  Trainer trainer(model, tiny_cfg(1e-4, 0.0));
  TrainingBatch empty;
  CHECK(testutil::category_of([&] { trainer.train_step(empty); }) ==
        ErrorCategory::size);
  CHECK(testutil::error_message_of([&] { trainer.train_step(empty); }) ==
        "train_step: empty batch");
}

TEST_CASE("fit writes a log, checkpoints, and a best marker") {
  TrainFixture fx("trainer_fit");
  const RunConfig cfg = tiny_run(fx.root);
  const SplitSpec split = split_by_reference(fx.manifest, {0.6, 0.2, 0.2}, 2);
  const fs::path out = fx.root / "run";

  FitResult result = fit(cfg, fx.manifest, split, out);
  CHECK(result.final_epoch == 3);
  CHECK(result.log_path == out / "training_log.jsonl");
  CHECK(fs::exists(result.final_checkpoint));
  CHECK(result.final_checkpoint.filename().string() == "kadid10k_5_3.ckpt");
  CHECK(fs::exists(result.best_checkpoint));
  CHECK(read_best_marker(out) == result.best_checkpoint);

  const std::vector<json> lines = all_lines(result.log_path);
  REQUIRE(lines.size() == 5);  // start + 3 epochs + done

  const json& start = lines.front();
  CHECK(start.at("event") == "start");
  CHECK(start.at("database") == "kadid10k");
  CHECK(start.at("seed").get<std::uint64_t>() == 5);
  CHECK(start.at("split_seed").get<std::uint64_t>() == 2);
  CHECK(start.at("start_epoch") == 1);
  CHECK(start.at("n_train_images") == 9);
  CHECK(start.at("n_val_images") == 3);
  CHECK(start.at("config").at("learning_rate").get<double>() ==
        doctest::Approx(1e-4));
  CHECK(start.at("config").at("aggregation") == "gru");
  CHECK(start.at("config").at("use_pr") == true);
  CHECK(start.at("config").at("max_epochs") == 3);

  for (int epoch = 1; epoch <= 3; ++epoch) {
    const json& line = lines[static_cast<std::size_t>(epoch)];
    CHECK(line.at("epoch") == epoch);
    for (const char* key : {"total", "reg_fr", "reg_pr", "reg_nr", "triplet"}) {
      REQUIRE(line.contains(key));
      CHECK(std::isfinite(line.at(key).get<double>()));
    }
    CHECK(line.contains("val_srcc"));
    CHECK(line.contains("val_plcc"));
    CHECK(line.contains("wall_s"));
  }

  const json& done = lines.back();
  CHECK(done.at("event") == "done");
  CHECK(done.at("final_epoch") == 3);
  CHECK(done.at("final_checkpoint") == "kadid10k_5_3.ckpt");
  CHECK(done.at("best_checkpoint") ==
        result.best_checkpoint.filename().string());
  CHECK(result.best_epoch >= 1);

  PrfModel<float> restored;
  CheckpointMeta meta = load_checkpoint(result.final_checkpoint, restored);
  CHECK(meta.database == "kadid10k");
  CHECK(meta.seed == 5);
  CHECK(meta.epoch == 3);
}

TEST_CASE("resuming replays the exact loss stream of an unbroken run") {
  TrainFixture fx("trainer_resume");
  const SplitSpec split = split_by_reference(fx.manifest, {0.6, 0.2, 0.2}, 2);

  RunConfig long_cfg = tiny_run(fx.root);
  long_cfg.max_epochs = 4;
  const fs::path out_a = fx.root / "run_a";
  fit(long_cfg, fx.manifest, split, out_a);

  RunConfig short_cfg = long_cfg;
  short_cfg.max_epochs = 2;
  const fs::path out_b = fx.root / "run_b";
  fit(short_cfg, fx.manifest, split, out_b);
  FitResult resumed = fit(long_cfg, fx.manifest, split, out_b,
                          out_b / "kadid10k_5_2.ckpt");
  CHECK(resumed.final_epoch == 4);

  const auto full = epoch_lines(out_a / "training_log.jsonl");
  const auto pieced = epoch_lines(out_b / "training_log.jsonl");
  REQUIRE(full.size() == 4);
  REQUIRE(pieced.size() == 4);
  for (int epoch = 1; epoch <= 4; ++epoch) {
    CAPTURE(epoch);
    CHECK(same_loss_fields(full.at(epoch), pieced.at(epoch)));
  }

  PrfModel<float> straight, stitched;
  load_checkpoint(out_a / "kadid10k_5_4.ckpt", straight);
  load_checkpoint(out_b / "kadid10k_5_4.ckpt", stitched);
  const auto ps = straight.params();
  const auto pp = stitched.params();
  REQUIRE(ps.size() == pp.size());
  for (std::size_t i = 0; i < ps.size(); ++i) {
    CAPTURE(ps[i]->name);
    CHECK((ps[i]->value.array() == pp[i]->value.array()).all());
  }
}

TEST_CASE("resume refuses a checkpoint from another configuration") {
  TrainFixture fx("trainer_resume_mismatch");
  const SplitSpec split = split_by_reference(fx.manifest, {0.6, 0.2, 0.2}, 2);

  RunConfig cfg = tiny_run(fx.root);
  cfg.max_epochs = 1;
  const fs::path out = fx.root / "run";
  FitResult first = fit(cfg, fx.manifest, split, out);

  RunConfig other = cfg;
  other.gru_hidden = 6;
  CHECK(testutil::category_of([&] {
          fit(other, fx.manifest, split, out, first.final_checkpoint);
        }) == ErrorCategory::config);
  CHECK(testutil::error_message_of([&] {
          fit(other, fx.manifest, split, out, first.final_checkpoint);
        }) == "resume checkpoint was trained with a different configuration");
}

TEST_CASE("fit refuses an empty training split") {
  TrainFixture fx("trainer_empty_split");
  RunConfig cfg = tiny_run(fx.root);
  SplitSpec split;
  split.database = DatabaseKind::kadid10k;
  split.train_refs = {"ZZZ"};
  CHECK(testutil::category_of(
            [&] { fit(cfg, fx.manifest, split, fx.root / "run"); }) ==
        ErrorCategory::size);
  CHECK(testutil::error_message_of(
            [&] { fit(cfg, fx.manifest, split, fx.root / "run"); }) ==
        "training split contains no records");
}

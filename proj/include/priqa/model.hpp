#pragma once

#include <string>
#include <vector>

#include "priqa/ad.hpp"
#include "priqa/aggregate.hpp"
#include "priqa/core.hpp"
#include "priqa/inn.hpp"
#include "priqa/layers.hpp"
#include "priqa/losses.hpp"
#include "priqa/rng.hpp"

namespace priqa {

struct NetConfig {
  int feature_dim = 128;
  std::vector<int> conv_channels = {32, 64, 64, 128, 128};
  int inn_blocks = 3;
  int inn_subnet_width = 128;
  int gru_hidden = 64;

  bool operator==(const NetConfig&) const = default;

  void validate() const {
    PRIQA_REQUIRE(feature_dim >= 2 && feature_dim % 2 == 0, ErrorCategory::config,
                  "feature_dim must be even and >= 2");
    PRIQA_REQUIRE(!conv_channels.empty(), ErrorCategory::config,
                  "conv_channels must be non-empty");
    for (int c : conv_channels)
      PRIQA_REQUIRE(c >= 1, ErrorCategory::config, "conv channel counts must be >= 1");
    PRIQA_REQUIRE(inn_blocks >= 1, ErrorCategory::config, "inn_blocks must be >= 1");
    PRIQA_REQUIRE(inn_subnet_width >= 1, ErrorCategory::config,
                  "inn_subnet_width must be >= 1");
    PRIQA_REQUIRE(gru_hidden >= 1, ErrorCategory::config, "gru_hidden must be >= 1");
  }
};

// Structural switches for the ablation grid. use_inn=false splits the fused
// feature by plain halves (the two pseudo features are then direct
// concatenation partners of independent head rows); use_pr=false drops the
// full-reference branch, the pseudo split, and both auxiliary quality heads.
struct Variant {
  bool use_pr = true;
  bool use_inn = true;
  bool use_triplet = true;
  AggKind agg = AggKind::gru;

  bool operator==(const Variant&) const = default;
};

// Training-batch forward outputs: per-group qualities, feature batches, and
// the loss breakdown. Vars with id -1 are absent for the active variant.
template <class S>
struct ForwardResult {
  ad::Var<S> q_fr{nullptr, -1}, q_pr{nullptr, -1}, q_nr{nullptr, -1};
  ad::Var<S> f_r{nullptr, -1}, f_d{nullptr, -1};
  ad::Var<S> f_pr{nullptr, -1}, f_pd{nullptr, -1}, f_nr{nullptr, -1};
  ad::Var<S> loss_total{nullptr, -1};
  double reg_fr = 0.0, reg_pr = 0.0, reg_nr = 0.0, trip = 0.0;
};

// Per-image feature bundle on the plain (no-tape) path.
template <class S>
struct FeatureBundle {
  MatrixX<S> f_r, f_d;    // [feature_dim/2, n_patches]
  MatrixX<S> f_nr;        // [feature_dim,   n_patches]
  MatrixX<S> f_pr, f_pd;  // [feature_dim/2, n_patches]
};

template <class S>
struct PrfModel {
  NetConfig cfg;
  Variant variant;
  FeatureExtractor<S> fr_net;      // present iff variant.use_pr
  FeatureExtractor<S> nr_net;
  InnStack<S> inn;                 // present iff use_pr && use_inn
  AggregationHead<S> agg_shared;   // concat(F_R,F_D) and concat(F_PR,F_PD)
  AggregationHead<S> agg_nr;       // F_NR

  Eigen::Index half_dim() const { return cfg.feature_dim / 2; }
  bool has_fr() const { return variant.use_pr; }
  bool has_inn() const { return variant.use_pr && variant.use_inn; }

  void init(const NetConfig& net_cfg, const Variant& v, std::uint64_t seed) {
    net_cfg.validate();
    cfg = net_cfg;
    variant = v;
    Rng rng(mix_seed(seed, "init"));
    if (has_fr())
      fr_net.init("fr", cfg.conv_channels, half_dim(), rng);
    nr_net.init("nr", cfg.conv_channels, cfg.feature_dim, rng);
    if (has_inn())
      inn.init("inn", cfg.feature_dim, cfg.inn_blocks, cfg.inn_subnet_width, rng);
    if (has_fr())
      agg_shared.init("agg_shared", cfg.feature_dim, cfg.gru_hidden, variant.agg, rng);
    agg_nr.init("agg_nr", cfg.feature_dim, cfg.gru_hidden, variant.agg, rng);
  }

  std::vector<Parameter<S>*> params() {
    std::vector<Parameter<S>*> out;
    if (has_fr()) fr_net.collect(out);
    nr_net.collect(out);
    if (has_inn()) inn.collect(out);
    if (has_fr()) agg_shared.collect(out);
    agg_nr.collect(out);
    return out;
  }

  // xr, xd: [3, n*4096] pixel columns for n = groups*len patches; labels one
  // per group. Builds the combined objective on the given tape.
  ForwardResult<S> training_loss(ad::Tape<S>& t, const MatrixX<S>& xr,
                                 const MatrixX<S>& xd, Eigen::Index groups,
                                 Eigen::Index len, const VectorX<S>& labels,
                                 const LossConfig& loss_cfg) {
    const Eigen::Index n = groups * len;
    PRIQA_REQUIRE(xd.cols() == n * kPatchPixels, ErrorCategory::shape,
                  "training_loss: patch count mismatch");
    PRIQA_REQUIRE(labels.size() == groups, ErrorCategory::shape,
                  "training_loss: label count mismatch");
    ForwardResult<S> r;

    ad::Var<S> vxd = t.constant(xd);
    r.f_nr = nr_net.forward(t, vxd, n);
    r.q_nr = agg_nr.forward(t, r.f_nr, groups, len);
    ad::Var<S> reg_nr = mae_sum_t(t, r.q_nr, labels);
    r.reg_nr = static_cast<double>(reg_nr.value()(0, 0));
    r.loss_total = reg_nr;

    if (has_fr()) {
      PRIQA_REQUIRE(xr.cols() == n * kPatchPixels, ErrorCategory::shape,
                    "training_loss: reference patch count mismatch");
      // one siamese pass over [ref | dist] columns
      MatrixX<S> both(3, 2 * n * kPatchPixels);
      both.leftCols(n * kPatchPixels) = xr;
      both.rightCols(n * kPatchPixels) = xd;
      ad::Var<S> frd = fr_net.forward(t, t.constant(std::move(both)), 2 * n);
      r.f_r = ad::slice_cols(frd, 0, n);
      r.f_d = ad::slice_cols(frd, n, n);

      ad::Var<S> fused = has_inn() ? inn.forward_t(t, r.f_nr) : r.f_nr;
      r.f_pr = ad::slice_rows(fused, 0, half_dim());
      r.f_pd = ad::slice_rows(fused, half_dim(), half_dim());

      r.q_fr = agg_shared.forward(t, ad::concat_rows(r.f_r, r.f_d), groups, len);
      r.q_pr = agg_shared.forward(t, ad::concat_rows(r.f_pr, r.f_pd), groups, len);
      ad::Var<S> reg_fr = mae_sum_t(t, r.q_fr, labels);
      ad::Var<S> reg_pr = mae_sum_t(t, r.q_pr, labels);
      r.reg_fr = static_cast<double>(reg_fr.value()(0, 0));
      r.reg_pr = static_cast<double>(reg_pr.value()(0, 0));
      r.loss_total = ad::add(r.loss_total, ad::add(reg_fr, reg_pr));

      if (variant.use_triplet) {
        ad::Var<S> trip = triplet_loss_t(t, r.f_r, r.f_pr, r.f_d, r.f_pd,
                                         static_cast<S>(loss_cfg.margin_alpha));
        r.trip = static_cast<double>(trip.value()(0, 0));
        r.loss_total = ad::add(
            r.loss_total, ad::affine(trip, static_cast<S>(loss_cfg.lambda), S(0)));
      }
    }
    return r;
  }

  // ---- plain inference paths (no reference required) ----

  // x: [3, n*4096] -> fused NR features [feature_dim, n]
  MatrixX<S> nr_features(const MatrixX<S>& x) {
    ad::Tape<S> t(false);
    const Eigen::Index n = x.cols() / kPatchPixels;
    return nr_net.forward(t, t.constant(x), n).value();
  }

  // Pseudo split of fused features into (F_PR, F_PD).
  void pseudo_split(const MatrixX<S>& f_nr, MatrixX<S>& f_pr, MatrixX<S>& f_pd) const {
    MatrixX<S> fused = has_inn() ? inn.forward(f_nr) : f_nr;
    f_pr = fused.topRows(half_dim());
    f_pd = fused.bottomRows(half_dim());
  }

  // FR features for aligned reference/distorted patch batches.
  void fr_features(const MatrixX<S>& xr, const MatrixX<S>& xd, MatrixX<S>& f_r,
                   MatrixX<S>& f_d) {
    PRIQA_REQUIRE(has_fr(), ErrorCategory::domain,
                  "fr_features: model variant has no full-reference branch");
    ad::Tape<S> t(false);
    const Eigen::Index n = xd.cols() / kPatchPixels;
    MatrixX<S> both(3, xr.cols() + xd.cols());
    both.leftCols(xr.cols()) = xr;
    both.rightCols(xd.cols()) = xd;
    MatrixX<S> f = fr_net.forward(t, t.constant(std::move(both)), 2 * n).value();
    f_r = f.leftCols(n);
    f_d = f.rightCols(n);
  }

  FeatureBundle<S> extract_bundle(const MatrixX<S>& xr, const MatrixX<S>& xd) {
    FeatureBundle<S> b;
    b.f_nr = nr_features(xd);
    pseudo_split(b.f_nr, b.f_pr, b.f_pd);
    fr_features(xr, xd, b.f_r, b.f_d);
    return b;
  }

  // Q^NR of one image given its distorted patches only.
  S predict_nr(const MatrixX<S>& xd) {
    return agg_nr.predict(nr_features(xd));
  }

  // Q^FR of one aligned pair through the shared head.
  S predict_fr(const MatrixX<S>& xr, const MatrixX<S>& xd) {
    MatrixX<S> f_r, f_d;
    fr_features(xr, xd, f_r, f_d);
    MatrixX<S> cat(cfg.feature_dim, f_r.cols());
    cat.topRows(half_dim()) = f_r;
    cat.bottomRows(half_dim()) = f_d;
    return agg_shared.predict(cat);
  }
};

}  // namespace priqa

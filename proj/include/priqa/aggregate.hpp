#pragma once

#include <string>
#include <vector>

#include "priqa/ad.hpp"
#include "priqa/core.hpp"
#include "priqa/layers.hpp"
#include "priqa/rng.hpp"

namespace priqa {

// Additive floor applied to attention logits so weight normalization stays
// well-defined and differentiable.
inline constexpr double kLogitEps = 1e-6;

enum class AggKind { mean, per_patch, gru };

inline std::string to_string(AggKind k) {
  switch (k) {
    case AggKind::mean: return "mean";
    case AggKind::per_patch: return "per_patch";
    case AggKind::gru: return "gru";
  }
  return "?";
}

inline AggKind agg_kind_from_string(const std::string& s) {
  if (s == "mean") return AggKind::mean;
  if (s == "per_patch") return AggKind::per_patch;
  if (s == "gru") return AggKind::gru;
  fail(ErrorCategory::config, "unknown aggregation kind '" + s + "'");
}

// w_i = a_i / sum_j a_j over strictly positive logits.
template <class Derived>
VectorX<typename Derived::Scalar> normalize_weights(const Eigen::MatrixBase<Derived>& a) {
  using S = typename Derived::Scalar;
  PRIQA_REQUIRE(a.size() > 0, ErrorCategory::domain, "normalize_weights: empty logits");
  PRIQA_REQUIRE((a.array() > S(0)).all(), ErrorCategory::domain,
                "normalize_weights: logits must be positive");
  const S total = a.sum();
  PRIQA_REQUIRE(total > S(0), ErrorCategory::domain, "normalize_weights: zero sum");
  return (a.derived().template cast<S>() / total).eval();
}

// Q = sum_i w_i q_i with w already normalized.
template <class D1, class D2>
typename D1::Scalar aggregate_quality(const Eigen::MatrixBase<D1>& q,
                                      const Eigen::MatrixBase<D2>& w) {
  PRIQA_REQUIRE(q.size() == w.size(), ErrorCategory::shape,
                "aggregate_quality: length mismatch");
  return (q.derived().array() * w.derived().array()).sum();
}

// Routed through aggregate_quality with an explicit uniform-weight vector so
// that aggregating with normalized all-equal weights reproduces this value bit
// for bit (same expression, same reduction order).
template <class Derived>
typename Derived::Scalar mean_aggregate(const Eigen::MatrixBase<Derived>& q) {
  using S = typename Derived::Scalar;
  PRIQA_REQUIRE(q.size() > 0, ErrorCategory::size, "mean_aggregate: empty input");
  using Plain = typename Derived::PlainObject;
  const Plain w =
      Plain::Constant(q.rows(), q.cols(), S(1) / static_cast<S>(q.size()));
  return aggregate_quality(q.derived(), w);
}

// Patch-score head. Per-patch qualities always come from a linear map of the
// patch feature; the attention weights come from one of three strategies:
//   mean       — equal weights (plain average),
//   per_patch  — each patch's logit from its own feature, no cross-patch state,
//   gru        — logits from a GRU run across the patch sequence.
template <class S>
struct AggregationHead {
  AggKind kind = AggKind::gru;
  Eigen::Index in_dim = 0;
  Linear<S> fc_q;   // [1, in_dim]
  Linear<S> fc_w;   // per_patch logits
  Gru<S> gru;       // gru recurrence
  Linear<S> fc_a;   // [1, hidden] logits on GRU states

  void init(const std::string& name, Eigen::Index dim, Eigen::Index gru_hidden,
            AggKind k, Rng& rng) {
    kind = k;
    in_dim = dim;
    fc_q.init(name + ".fc_q", dim, 1, rng);
    if (kind == AggKind::per_patch) fc_w.init(name + ".fc_w", dim, 1, rng);
    if (kind == AggKind::gru) {
      gru.init(name + ".gru", dim, gru_hidden, rng);
      fc_a.init(name + ".fc_a", gru_hidden, 1, rng);
    }
  }

  // Positive per-patch logits for the weighting kinds; [1, groups*len].
  ad::Var<S> logits_t(ad::Tape<S>& t, ad::Var<S> feats, Eigen::Index groups,
                      Eigen::Index len) {
    ad::Var<S> raw{nullptr, -1};
    if (kind == AggKind::per_patch) {
      raw = fc_w(t, feats);
    } else if (kind == AggKind::gru) {
      raw = fc_a(t, gru.forward(t, feats, groups, len));
    } else {
      fail(ErrorCategory::domain, "logits undefined for mean aggregation");
    }
    return ad::affine(ad::softplus(raw), S(1), static_cast<S>(kLogitEps));
  }

  // feats: [in_dim, groups*len] -> per-group quality [1, groups]
  ad::Var<S> forward(ad::Tape<S>& t, ad::Var<S> feats, Eigen::Index groups,
                     Eigen::Index len) {
    PRIQA_REQUIRE(feats.rows() == in_dim, ErrorCategory::shape,
                  "aggregation head: feature width mismatch");
    PRIQA_REQUIRE(feats.cols() == groups * len && len >= 1, ErrorCategory::size,
                  "aggregation head: empty or misaligned patch sequence");
    ad::Var<S> q = fc_q(t, feats);
    if (kind == AggKind::mean)
      return ad::affine(ad::segment_sum(q, groups, len), S(1) / static_cast<S>(len), S(0));
    ad::Var<S> a = logits_t(t, feats, groups, len);
    ad::Var<S> wsum = ad::segment_sum(a, groups, len);
    ad::Var<S> w = ad::cdiv(a, ad::segment_repeat(wsum, len));
    return ad::segment_sum(ad::cmul(w, q), groups, len);
  }

  // feats: [in_dim, n_patches] -> per-patch scalar qualities
  VectorX<S> patch_quality(const MatrixX<S>& feats) const {
    PRIQA_REQUIRE(feats.rows() == in_dim, ErrorCategory::shape,
                  "patch_quality: feature width mismatch");
    return fc_q(feats).row(0).transpose();
  }

  // feats in raster order -> positive attention logits
  VectorX<S> attention_logits(const MatrixX<S>& feats) {
    PRIQA_REQUIRE(feats.cols() > 0, ErrorCategory::size,
                  "attention_logits: empty patch sequence");
    PRIQA_REQUIRE(feats.rows() == in_dim, ErrorCategory::shape,
                  "attention_logits: feature width mismatch");
    PRIQA_REQUIRE(kind != AggKind::mean, ErrorCategory::domain,
                  "attention_logits: mean aggregation has no logits");
    ad::Tape<S> t(false);
    ad::Var<S> f = t.constant(feats);
    return logits_t(t, f, 1, feats.cols()).value().row(0).transpose();
  }

  // Complete aggregation of one image's patch features into a single score.
  S predict(const MatrixX<S>& feats) {
    ad::Tape<S> t(false);
    ad::Var<S> f = t.constant(feats);
    return forward(t, f, 1, feats.cols()).value()(0, 0);
  }

  // Per-patch-weight aggregation of a feature matrix (no recurrence).
  S perpatch_weight_aggregate(const MatrixX<S>& feats) {
    PRIQA_REQUIRE(feats.cols() > 0, ErrorCategory::size,
                  "perpatch_weight_aggregate: empty input");
    PRIQA_REQUIRE(kind == AggKind::per_patch, ErrorCategory::domain,
                  "perpatch_weight_aggregate: head built for a different strategy");
    return predict(feats);
  }

  void collect(std::vector<Parameter<S>*>& out) {
    fc_q.collect(out);
    if (kind == AggKind::per_patch) fc_w.collect(out);
    if (kind == AggKind::gru) {
      gru.collect(out);
      fc_a.collect(out);
    }
  }
};

}  // namespace priqa

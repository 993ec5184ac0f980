#pragma once

#include <string>
#include <vector>

#include "priqa/ad.hpp"
#include "priqa/core.hpp"
#include "priqa/layers.hpp"
#include "priqa/rng.hpp"

namespace priqa {

// One affine coupling block over a feature split [top; bottom] of equal halves.
// Even-indexed blocks rewrite the bottom half conditioned on the top half,
// odd-indexed blocks the reverse, so every lane is transformed across a stack.
// The conditioner is a two-layer MLP whose final layer starts at zero, making
// the whole block the identity at initialization. The log-scale is soft-limited
// to (-2, 2) via 2*tanh(s/2) to keep exp(s) well conditioned.
template <class S>
struct CouplingBlock {
  Linear<S> l1;  // [width, half]
  Linear<S> l2;  // [2*half, width]
  Eigen::Index half = 0;
  bool swap = false;  // false: transform bottom; true: transform top

  void init(const std::string& name, Eigen::Index half_dim, Eigen::Index width,
            bool swap_halves, Rng& rng) {
    half = half_dim;
    swap = swap_halves;
    l1.init(name + ".l1", half_dim, width, rng);
    l2.init(name + ".l2", width, 2 * half_dim, rng);
    l2.W.value.setZero();
    l2.b.value.setZero();
  }

  void subnet_eval(const MatrixX<S>& cond, MatrixX<S>& s, MatrixX<S>& tvec) const {
    MatrixX<S> hidden = l1(cond).cwiseMax(S(0));
    MatrixX<S> st = l2(hidden);
    s = (S(2) * (st.topRows(half) / S(2)).array().tanh()).matrix();
    tvec = st.bottomRows(half);
  }

  MatrixX<S> forward(const MatrixX<S>& x) const {
    MatrixX<S> cond = swap ? x.bottomRows(half) : x.topRows(half);
    MatrixX<S> target = swap ? x.topRows(half) : x.bottomRows(half);
    MatrixX<S> s, tvec;
    subnet_eval(cond, s, tvec);
    MatrixX<S> moved = target.cwiseProduct(s.array().exp().matrix()) + tvec;
    MatrixX<S> y(x.rows(), x.cols());
    if (swap) {
      y.topRows(half) = moved;
      y.bottomRows(half) = cond;
    } else {
      y.topRows(half) = cond;
      y.bottomRows(half) = moved;
    }
    return y;
  }

  MatrixX<S> inverse(const MatrixX<S>& y) const {
    MatrixX<S> cond = swap ? y.bottomRows(half) : y.topRows(half);
    MatrixX<S> moved = swap ? y.topRows(half) : y.bottomRows(half);
    MatrixX<S> s, tvec;
    subnet_eval(cond, s, tvec);
    MatrixX<S> target = (moved - tvec).cwiseProduct((-s.array()).exp().matrix());
    MatrixX<S> x(y.rows(), y.cols());
    if (swap) {
      x.topRows(half) = target;
      x.bottomRows(half) = cond;
    } else {
      x.topRows(half) = cond;
      x.bottomRows(half) = target;
    }
    return x;
  }

  // Per-column log|det J| of the forward map (sum of the active log-scales).
  VectorX<S> logdet(const MatrixX<S>& x) const {
    MatrixX<S> cond = swap ? x.bottomRows(half) : x.topRows(half);
    MatrixX<S> s, tvec;
    subnet_eval(cond, s, tvec);
    return s.colwise().sum().transpose();
  }

  ad::Var<S> forward_t(ad::Tape<S>& t, ad::Var<S> x) {
    ad::Var<S> cond = swap ? ad::slice_rows(x, half, half) : ad::slice_rows(x, 0, half);
    ad::Var<S> target = swap ? ad::slice_rows(x, 0, half) : ad::slice_rows(x, half, half);
    ad::Var<S> st = l2(t, ad::relu(l1(t, cond)));
    ad::Var<S> s = ad::affine(ad::tanh_(ad::affine(ad::slice_rows(st, 0, half),
                                                   S(0.5), S(0))),
                              S(2), S(0));
    ad::Var<S> tvec = ad::slice_rows(st, half, half);
    ad::Var<S> moved = ad::add(ad::cmul(target, ad::exp_(s)), tvec);
    return swap ? ad::concat_rows(moved, cond) : ad::concat_rows(cond, moved);
  }

  void collect(std::vector<Parameter<S>*>& out) {
    l1.collect(out);
    l2.collect(out);
  }
};

// Stack of coupling blocks splitting a fused feature into a pseudo-reference
// half (top rows) and a pseudo-distortion half (bottom rows).
template <class S>
struct InnStack {
  std::vector<CouplingBlock<S>> blocks;
  Eigen::Index dim = 0;

  void init(const std::string& name, Eigen::Index feature_dim, Eigen::Index n_blocks,
            Eigen::Index subnet_width, Rng& rng) {
    PRIQA_REQUIRE(feature_dim >= 2 && feature_dim % 2 == 0, ErrorCategory::config,
                  "inn: feature_dim must be even and >= 2");
    dim = feature_dim;
    blocks.clear();
    for (Eigen::Index k = 0; k < n_blocks; ++k) {
      CouplingBlock<S> blk;
      blk.init(name + ".block" + std::to_string(k), feature_dim / 2, subnet_width,
               /*swap_halves=*/k % 2 == 1, rng);
      blocks.push_back(std::move(blk));
    }
  }

  MatrixX<S> forward(const MatrixX<S>& x) const {
    PRIQA_REQUIRE(x.rows() == dim, ErrorCategory::shape, "inn: input dim mismatch");
    MatrixX<S> y = x;
    for (const auto& b : blocks) y = b.forward(y);
    return y;
  }

  MatrixX<S> inverse(const MatrixX<S>& y) const {
    PRIQA_REQUIRE(y.rows() == dim, ErrorCategory::shape, "inn: input dim mismatch");
    MatrixX<S> x = y;
    for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) x = it->inverse(x);
    return x;
  }

  VectorX<S> logdet(const MatrixX<S>& x) const {
    VectorX<S> total = VectorX<S>::Zero(x.cols());
    MatrixX<S> y = x;
    for (const auto& b : blocks) {
      total += b.logdet(y);
      y = b.forward(y);
    }
    return total;
  }

  ad::Var<S> forward_t(ad::Tape<S>& t, ad::Var<S> x) {
    ad::Var<S> y = x;
    for (auto& b : blocks) y = b.forward_t(t, y);
    return y;
  }

  void collect(std::vector<Parameter<S>*>& out) {
    for (auto& b : blocks) b.collect(out);
  }
};

}  // namespace priqa

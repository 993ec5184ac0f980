#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "priqa/ad.hpp"
#include "priqa/core.hpp"
#include "priqa/rng.hpp"

namespace priqa {

inline constexpr Eigen::Index kPatchSize = 64;
inline constexpr Eigen::Index kPatchPixels = kPatchSize * kPatchSize;

// U(-1/sqrt(fan_in), +1/sqrt(fan_in)) — the usual fan-in uniform scheme.
template <class S>
void fill_fan_in_uniform(Parameter<S>& p, Eigen::Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (Eigen::Index c = 0; c < p.value.cols(); ++c)
    for (Eigen::Index r = 0; r < p.value.rows(); ++r)
      p.value(r, c) = static_cast<S>(rng.uniform(-bound, bound));
}

template <class S>
struct Linear {
  Parameter<S> W;  // [out, in]
  Parameter<S> b;  // [out, 1]
  Eigen::Index in_dim = 0, out_dim = 0;

  void init(const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng) {
    in_dim = in;
    out_dim = out;
    W.setup(name + ".W", out, in);
    b.setup(name + ".b", out, 1);
    fill_fan_in_uniform(W, in, rng);
    fill_fan_in_uniform(b, in, rng);
  }

  ad::Var<S> operator()(ad::Tape<S>& t, ad::Var<S> x) {
    return ad::add_colvec(ad::matmul(t.param(W), x), t.param(b));
  }

  MatrixX<S> operator()(const MatrixX<S>& x) const {
    MatrixX<S> y = W.value * x;
    y.colwise() += b.value.col(0);
    return y;
  }

  void collect(std::vector<Parameter<S>*>& out) {
    out.push_back(&W);
    out.push_back(&b);
  }
};

// 3x3 convolution, stride 2, zero padding 1, on activations stored as
// [C, batch*H*W] (column b*H*W + y*W + x holds the channel column of pixel
// (y, x) of sample b). Output spatial size is ceil(H/2) x ceil(W/2).
inline Eigen::Index conv_out_extent(Eigen::Index n) { return (n + 2 - 3) / 2 + 1; }

// Row band c + C*(ky*3+kx) of the output holds channel c at kernel offset
// (ky, kx), so each kernel offset occupies C contiguous rows and a whole run
// of output pixels can be moved with one strided block copy.
template <class S>
MatrixX<S> im2col_3x3s2(const MatrixX<S>& x, Eigen::Index C, Eigen::Index H,
                        Eigen::Index W, Eigen::Index batch) {
  PRIQA_REQUIRE(x.rows() == C && x.cols() == batch * H * W, ErrorCategory::shape,
                "im2col: activation shape mismatch");
  const Eigen::Index oH = conv_out_extent(H), oW = conv_out_extent(W);
  using Stride = Eigen::OuterStride<>;
  using ConstMap = Eigen::Map<const MatrixX<S>, Eigen::Unaligned, Stride>;
  MatrixX<S> cols(C * 9, batch * oH * oW);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const Eigen::Index xoff = b * H * W, coff = b * oH * oW;
    for (Eigen::Index ky = 0; ky < 3; ++ky) {
      for (Eigen::Index kx = 0; kx < 3; ++kx) {
        const Eigen::Index row0 = C * (ky * 3 + kx);
        // valid output range given the padding of one pixel on each side
        const Eigen::Index ox_lo = kx == 0 ? 1 : 0;
        const Eigen::Index ox_hi = std::min(oW, (W - kx) / 2 + 1);
        for (Eigen::Index oy = 0; oy < oH; ++oy) {
          const Eigen::Index iy = 2 * oy - 1 + ky;
          auto band = cols.block(row0, coff + oy * oW, C, oW);
          if (iy < 0 || iy >= H) {
            band.setZero();
            continue;
          }
          if (ox_lo > 0) band.leftCols(ox_lo).setZero();
          if (ox_hi < oW) band.rightCols(oW - ox_hi).setZero();
          const Eigen::Index n = ox_hi - ox_lo;
          if (n <= 0) continue;
          const Eigen::Index src = xoff + iy * W + 2 * ox_lo - 1 + kx;
          band.middleCols(ox_lo, n) =
              ConstMap(x.data() + src * C, C, n, Stride(2 * C));
        }
      }
    }
  }
  return cols;
}

template <class S>
void col2im_3x3s2_add(const MatrixX<S>& g, Eigen::Index C, Eigen::Index H,
                      Eigen::Index W, Eigen::Index batch, MatrixX<S>& dx) {
  const Eigen::Index oH = conv_out_extent(H), oW = conv_out_extent(W);
  using Stride = Eigen::OuterStride<>;
  using Map = Eigen::Map<MatrixX<S>, Eigen::Unaligned, Stride>;
  for (Eigen::Index b = 0; b < batch; ++b) {
    const Eigen::Index xoff = b * H * W, coff = b * oH * oW;
    for (Eigen::Index ky = 0; ky < 3; ++ky) {
      for (Eigen::Index kx = 0; kx < 3; ++kx) {
        const Eigen::Index row0 = C * (ky * 3 + kx);
        const Eigen::Index ox_lo = kx == 0 ? 1 : 0;
        const Eigen::Index ox_hi = std::min(oW, (W - kx) / 2 + 1);
        const Eigen::Index n = ox_hi - ox_lo;
        if (n <= 0) continue;
        for (Eigen::Index oy = 0; oy < oH; ++oy) {
          const Eigen::Index iy = 2 * oy - 1 + ky;
          if (iy < 0 || iy >= H) continue;
          const Eigen::Index dst = xoff + iy * W + 2 * ox_lo - 1 + kx;
          Map(dx.data() + dst * C, C, n, Stride(2 * C)) +=
              g.block(row0, coff + oy * oW + ox_lo, C, n);
        }
      }
    }
  }
}

namespace ad_ops {

template <class S>
ad::Var<S> im2col(ad::Tape<S>& t, ad::Var<S> x, Eigen::Index C, Eigen::Index H,
                  Eigen::Index W, Eigen::Index batch) {
  MatrixX<S> cols = im2col_3x3s2(t.val(x.id), C, H, W, batch);
  const int xi = x.id;
  return t.emit(std::move(cols), {xi}, [xi, C, H, W, batch](ad::Tape<S>& tp, int self) {
    MatrixX<S> dx = MatrixX<S>::Zero(C, batch * H * W);
    col2im_3x3s2_add(tp.node_grad(self), C, H, W, batch, dx);
    tp.accum(xi, dx);
  });
}

}  // namespace ad_ops

template <class S>
struct Conv2d {
  Parameter<S> W;  // [out_c, in_c*9], column layout c + in_c*(ky*3+kx)
  Parameter<S> b;  // [out_c, 1]
  Eigen::Index in_c = 0, out_c = 0;

  void init(const std::string& name, Eigen::Index in_channels,
            Eigen::Index out_channels, Rng& rng) {
    in_c = in_channels;
    out_c = out_channels;
    W.setup(name + ".W", out_c, in_c * 9);
    b.setup(name + ".b", out_c, 1);
    fill_fan_in_uniform(W, in_c * 9, rng);
    fill_fan_in_uniform(b, in_c * 9, rng);
  }

  // x: [in_c, batch*H*W] -> [out_c, batch*oH*oW]
  ad::Var<S> operator()(ad::Tape<S>& t, ad::Var<S> x, Eigen::Index H,
                        Eigen::Index W_, Eigen::Index batch) {
    ad::Var<S> cols = ad_ops::im2col(t, x, in_c, H, W_, batch);
    return ad::add_colvec(ad::matmul(t.param(W), cols), t.param(b));
  }

  void collect(std::vector<Parameter<S>*>& out) {
    out.push_back(&W);
    out.push_back(&b);
  }
};

// Strided 3x3 conv body over 64x64 RGB patches, global average pooling, and a
// linear projection to the requested feature width. Each patch's feature
// vector is scaled to unit RMS so downstream distances and regression heads
// see a stable activation scale regardless of depth or input statistics.
template <class S>
struct FeatureExtractor {
  static constexpr S kNormEps = S(1e-5);
  std::vector<Conv2d<S>> stages;
  Linear<S> head;
  Eigen::Index out_dim = 0;

  void init(const std::string& name, const std::vector<int>& channels,
            Eigen::Index feature_dim, Rng& rng) {
    PRIQA_REQUIRE(!channels.empty(), ErrorCategory::config, "extractor: empty channel list");
    out_dim = feature_dim;
    stages.clear();
    Eigen::Index in_c = 3, extent = kPatchSize;
    for (std::size_t i = 0; i < channels.size(); ++i) {
      PRIQA_REQUIRE(extent >= 2, ErrorCategory::config,
                    "extractor: too many stages for a 64x64 patch");
      Conv2d<S> stage;
      stage.init(name + ".stage" + std::to_string(i), in_c, channels[i], rng);
      stages.push_back(std::move(stage));
      in_c = channels[i];
      extent = conv_out_extent(extent);
    }
    head.init(name + ".head", in_c, feature_dim, rng);
  }

  // x: [3, batch*4096] -> features [out_dim, batch]
  ad::Var<S> forward(ad::Tape<S>& t, ad::Var<S> x, Eigen::Index batch) {
    Eigen::Index extent = kPatchSize;
    ad::Var<S> h = x;
    for (auto& stage : stages) {
      h = ad::relu(stage(t, h, extent, extent, batch));
      extent = conv_out_extent(extent);
    }
    ad::Var<S> pooled = ad::spatial_mean(h, batch, extent * extent);
    return ad::rms_norm_cols(head(t, pooled), kNormEps);
  }

  void collect(std::vector<Parameter<S>*>& out) {
    for (auto& s : stages) s.collect(out);
    head.collect(out);
  }
};

// Single-layer GRU over a sequence packed as [in_dim, groups*len], group-major
// columns. Gate conventions follow the common z/r/n formulation with a
// separate hidden-side candidate bias.
template <class S>
struct Gru {
  Parameter<S> Wz, Wr, Wn;      // [hidden, in_dim]
  Parameter<S> Uz, Ur, Un;      // [hidden, hidden]
  Parameter<S> bz, br, bn, bhn; // [hidden, 1]
  Eigen::Index in_dim = 0, hidden = 0;

  void init(const std::string& name, Eigen::Index in, Eigen::Index h, Rng& rng) {
    in_dim = in;
    hidden = h;
    auto mk = [&](Parameter<S>& p, const char* suffix, Eigen::Index r, Eigen::Index c) {
      p.setup(name + "." + suffix, r, c);
      fill_fan_in_uniform(p, h, rng);
    };
    mk(Wz, "Wz", h, in); mk(Wr, "Wr", h, in); mk(Wn, "Wn", h, in);
    mk(Uz, "Uz", h, h);  mk(Ur, "Ur", h, h);  mk(Un, "Un", h, h);
    mk(bz, "bz", h, 1);  mk(br, "br", h, 1);  mk(bn, "bn", h, 1);
    mk(bhn, "bhn", h, 1);
  }

  // Returns the hidden state at every step, columns matching the input order.
  ad::Var<S> forward(ad::Tape<S>& t, ad::Var<S> x, Eigen::Index groups, Eigen::Index len) {
    PRIQA_REQUIRE(x.cols() == groups * len, ErrorCategory::shape, "gru: size mismatch");
    ad::Var<S> vWz = t.param(Wz), vWr = t.param(Wr), vWn = t.param(Wn);
    ad::Var<S> vUz = t.param(Uz), vUr = t.param(Ur), vUn = t.param(Un);
    ad::Var<S> vbz = t.param(bz), vbr = t.param(br), vbn = t.param(bn);
    ad::Var<S> vbhn = t.param(bhn);
    ad::Var<S> h = t.constant(MatrixX<S>::Zero(hidden, groups));
    std::vector<ad::Var<S>> states;
    states.reserve(static_cast<std::size_t>(len));
    for (Eigen::Index step = 0; step < len; ++step) {
      std::vector<Eigen::Index> idx(static_cast<std::size_t>(groups));
      for (Eigen::Index g = 0; g < groups; ++g) idx[static_cast<std::size_t>(g)] = g * len + step;
      ad::Var<S> xt = ad::gather_cols(x, std::move(idx));
      ad::Var<S> z = ad::sigmoid(ad::add_colvec(
          ad::add(ad::matmul(vWz, xt), ad::matmul(vUz, h)), vbz));
      ad::Var<S> r = ad::sigmoid(ad::add_colvec(
          ad::add(ad::matmul(vWr, xt), ad::matmul(vUr, h)), vbr));
      ad::Var<S> n = ad::tanh_(ad::add(
          ad::add_colvec(ad::matmul(vWn, xt), vbn),
          ad::cmul(r, ad::add_colvec(ad::matmul(vUn, h), vbhn))));
      // h' = (1 - z) .* n + z .* h
      h = ad::add(ad::cmul(ad::affine(z, S(-1), S(1)), n), ad::cmul(z, h));
      states.push_back(h);
    }
    ad::Var<S> stacked = ad::concat_cols(states);  // column step*groups + g
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(groups * len));
    for (Eigen::Index g = 0; g < groups; ++g)
      for (Eigen::Index step = 0; step < len; ++step)
        perm[static_cast<std::size_t>(g * len + step)] = step * groups + g;
    return ad::gather_cols(stacked, std::move(perm));
  }

  void collect(std::vector<Parameter<S>*>& out) {
    for (Parameter<S>* p : {&Wz, &Wr, &Wn, &Uz, &Ur, &Un, &bz, &br, &bn, &bhn})
      out.push_back(p);
  }
};

}  // namespace priqa

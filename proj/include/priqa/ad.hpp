#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "priqa/core.hpp"

namespace priqa {

template <class S>
struct Parameter {
  std::string name;
  MatrixX<S> value;
  MatrixX<S> grad;

  void setup(const std::string& n, Eigen::Index rows, Eigen::Index cols) {
    name = n;
    value.setZero(rows, cols);
    grad.setZero(rows, cols);
  }
  void zero_grad() { grad.setZero(); }
};

// Reverse-mode tape over dense Eigen matrices. Values are computed eagerly;
// backward closures read sibling nodes through the tape, so nothing is copied
// into the closures beyond node ids and small metadata.
namespace ad {

template <class S>
class Tape;

template <class S>
struct Var {
  Tape<S>* tape = nullptr;
  int id = -1;

  const MatrixX<S>& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

template <class S>
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }

  Var<S> constant(MatrixX<S> v) { return emit(std::move(v), {}, nullptr); }

  Var<S> input(MatrixX<S> v, bool needs_grad = false) {
    Var<S> out = emit(std::move(v), {}, nullptr);
    nodes_[out.id].needs_grad = needs_grad && grad_enabled_;
    return out;
  }

  Var<S> param(Parameter<S>& p) {
    Var<S> out = emit(p.value, {}, nullptr);
    nodes_[out.id].needs_grad = grad_enabled_;
    if (grad_enabled_) bindings_.emplace_back(out.id, &p);
    return out;
  }

  using BackwardFn = std::function<void(Tape<S>&, int self)>;

  Var<S> emit(MatrixX<S> value, const std::vector<int>& deps, BackwardFn bk) {
    bool ng = false;
    if (grad_enabled_) {
      for (int d : deps) ng = ng || nodes_[d].needs_grad;
    }
    Node n;
    n.value = std::move(value);
    n.needs_grad = ng;
    if (ng) n.backward = std::move(bk);
    nodes_.push_back(std::move(n));
    return Var<S>{this, static_cast<int>(nodes_.size()) - 1};
  }

  const MatrixX<S>& val(int id) const { return nodes_[id].value; }
  const MatrixX<S>& node_grad(int id) const { return nodes_[id].grad; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }

  template <class Expr>
  void accum(int id, const Expr& e) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) n.grad = MatrixX<S>::Zero(n.value.rows(), n.value.cols());
    n.grad += e;
  }

  // Propagates d(root)/d(node) into every reachable node and accumulates into
  // bound Parameter::grad. root must be 1x1.
  void backward(Var<S> root) {
    PRIQA_REQUIRE(grad_enabled_, ErrorCategory::domain, "backward: tape built without gradients");
    Node& r = nodes_[root.id];
    PRIQA_REQUIRE(r.value.size() == 1, ErrorCategory::shape, "backward: root must be a scalar");
    r.grad = MatrixX<S>::Ones(1, 1);
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.needs_grad && n.grad.size() != 0 && n.backward) n.backward(*this, i);
    }
    for (auto& [id, p] : bindings_) {
      if (nodes_[id].grad.size() != 0) p->grad += nodes_[id].grad;
    }
  }

  // Gradient of the last backward() pass w.r.t. an input node.
  MatrixX<S> grad(Var<S> v) const {
    const Node& n = nodes_[v.id];
    if (n.grad.size() == 0) return MatrixX<S>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

 private:
  struct Node {
    MatrixX<S> value;
    MatrixX<S> grad;  // empty until first accumulation
    BackwardFn backward;
    bool needs_grad = false;
  };

  std::vector<Node> nodes_;
  std::vector<std::pair<int, Parameter<S>*>> bindings_;
  bool grad_enabled_ = true;
};

template <class S>
const MatrixX<S>& Var<S>::value() const {
  return tape->val(id);
}

// ---- primitive ops ----

template <class S>
Var<S> matmul(Var<S> a, Var<S> b) {
  Tape<S>& t = *a.tape;
  PRIQA_REQUIRE(a.cols() == b.rows(), ErrorCategory::shape, "matmul: inner dims differ");
  MatrixX<S> y = t.val(a.id) * t.val(b.id);
  const int ai = a.id, bi = b.id;
  return t.emit(std::move(y), {ai, bi}, [ai, bi](Tape<S>& tp, int self) {
    const MatrixX<S>& g = tp.node_grad(self);
    tp.accum(ai, g * tp.val(bi).transpose());
    tp.accum(bi, tp.val(ai).transpose() * g);
  });
}

template <class S>
Var<S> add(Var<S> a, Var<S> b) {
  Tape<S>& t = *a.tape;
  PRIQA_REQUIRE(a.rows() == b.rows() && a.cols() == b.cols(), ErrorCategory::shape,
                "add: shape mismatch");
  MatrixX<S> y = t.val(a.id) + t.val(b.id);
  const int ai = a.id, bi = b.id;
  return t.emit(std::move(y), {ai, bi}, [ai, bi](Tape<S>& tp, int self) {
    tp.accum(ai, tp.node_grad(self));
    tp.accum(bi, tp.node_grad(self));
  });
}

template <class S>
Var<S> sub(Var<S> a, Var<S> b) {
  Tape<S>& t = *a.tape;
  PRIQA_REQUIRE(a.rows() == b.rows() && a.cols() == b.cols(), ErrorCategory::shape,
                "sub: shape mismatch");
  MatrixX<S> y = t.val(a.id) - t.val(b.id);
  const int ai = a.id, bi = b.id;
  return t.emit(std::move(y), {ai, bi}, [ai, bi](Tape<S>& tp, int self) {
    tp.accum(ai, tp.node_grad(self));
    tp.accum(bi, -tp.node_grad(self));
  });
}

template <class S>
Var<S> cmul(Var<S> a, Var<S> b) {
  Tape<S>& t = *a.tape;
  PRIQA_REQUIRE(a.rows() == b.rows() && a.cols() == b.cols(), ErrorCategory::shape,
                "cmul: shape mismatch");
  MatrixX<S> y = t.val(a.id).cwiseProduct(t.val(b.id));
  const int ai = a.id, bi = b.id;
  return t.emit(std::move(y), {ai, bi}, [ai, bi](Tape<S>& tp, int self) {
    tp.accum(ai, tp.node_grad(self).cwiseProduct(tp.val(bi)));
    tp.accum(bi, tp.node_grad(self).cwiseProduct(tp.val(ai)));
  });
}

template <class S>
Var<S> cdiv(Var<S> a, Var<S> b) {
  Tape<S>& t = *a.tape;
  PRIQA_REQUIRE(a.rows() == b.rows() && a.cols() == b.cols(), ErrorCategory::shape,
                "cdiv: shape mismatch");
  MatrixX<S> y = t.val(a.id).cwiseQuotient(t.val(b.id));
  const int ai = a.id, bi = b.id;
  return t.emit(std::move(y), {ai, bi}, [ai, bi](Tape<S>& tp, int self) {
    tp.accum(ai, tp.node_grad(self).cwiseQuotient(tp.val(bi)));
    tp.accum(bi, -tp.node_grad(self).cwiseProduct(tp.val(self)).cwiseQuotient(tp.val(bi)));
  });
}

// alpha * a + beta (elementwise)
template <class S>
Var<S> affine(Var<S> a, S alpha, S beta) {
  Tape<S>& t = *a.tape;
  MatrixX<S> y = (t.val(a.id).array() * alpha + beta).matrix();
  const int ai = a.id;
  return t.emit(std::move(y), {ai}, [ai, alpha](Tape<S>& tp, int self) {
    tp.accum(ai, alpha * tp.node_grad(self));
  });
}

// Broadcast a column vector across all columns.
template <class S>
Var<S> add_colvec(Var<S> a, Var<S> v) {
  Tape<S>& t = *a.tape;
  PRIQA_REQUIRE(v.cols() == 1 && v.rows() == a.rows(), ErrorCategory::shape,
                "add_colvec: vector shape mismatch");
  MatrixX<S> y = t.val(a.id);
  y.colwise() += t.val(v.id).col(0);
  const int ai = a.id, vi = v.id;
  return t.emit(std::move(y), {ai, vi}, [ai, vi](Tape<S>& tp, int self) {
    tp.accum(ai, tp.node_grad(self));
    tp.accum(vi, tp.node_grad(self).rowwise().sum());
  });
}

template <class S>
Var<S> relu(Var<S> a) {
  Tape<S>& t = *a.tape;
  MatrixX<S> y = t.val(a.id).cwiseMax(S(0));
  const int ai = a.id;
  return t.emit(std::move(y), {ai}, [ai](Tape<S>& tp, int self) {
    tp.accum(ai, tp.node_grad(self).cwiseProduct(
                     (tp.val(ai).array() > S(0)).template cast<S>().matrix()));
  });
}

template <class S>
Var<S> tanh_(Var<S> a) {
  Tape<S>& t = *a.tape;
  MatrixX<S> y = t.val(a.id).array().tanh().matrix();
  const int ai = a.id;
  return t.emit(std::move(y), {ai}, [ai](Tape<S>& tp, int self) {
    tp.accum(ai, tp.node_grad(self).cwiseProduct(
                     (S(1) - tp.val(self).array().square()).matrix()));
  });
}

template <class S>
Var<S> sigmoid(Var<S> a) {
  Tape<S>& t = *a.tape;
  MatrixX<S> y = (S(1) / (S(1) + (-t.val(a.id).array()).exp())).matrix();
  const int ai = a.id;
  return t.emit(std::move(y), {ai}, [ai](Tape<S>& tp, int self) {
    const auto& s = tp.val(self).array();
    tp.accum(ai, tp.node_grad(self).cwiseProduct((s * (S(1) - s)).matrix()));
  });
}

template <class S>
Var<S> softplus(Var<S> a) {
  Tape<S>& t = *a.tape;
  // log(1 + exp(x)), computed without overflow
  MatrixX<S> y = (t.val(a.id).array().max(S(0)) +
                  (-t.val(a.id).array().abs()).exp().log1p())
                     .matrix();
  const int ai = a.id;
  return t.emit(std::move(y), {ai}, [ai](Tape<S>& tp, int self) {
    const auto sig = (S(1) / (S(1) + (-tp.val(ai).array()).exp()));
    tp.accum(ai, tp.node_grad(self).cwiseProduct(sig.matrix()));
  });
}

template <class S>
Var<S> exp_(Var<S> a) {
  Tape<S>& t = *a.tape;
  MatrixX<S> y = t.val(a.id).array().exp().matrix();
  const int ai = a.id;
  return t.emit(std::move(y), {ai}, [ai](Tape<S>& tp, int self) {
    tp.accum(ai, tp.node_grad(self).cwiseProduct(tp.val(self)));
  });
}

// Subgradient at 0 is 0.
template <class S>
Var<S> abs_(Var<S> a) {
  Tape<S>& t = *a.tape;
  MatrixX<S> y = t.val(a.id).cwiseAbs();
  const int ai = a.id;
  return t.emit(std::move(y), {ai}, [ai](Tape<S>& tp, int self) {
    tp.accum(ai, tp.node_grad(self).cwiseProduct(tp.val(ai).array().sign().matrix()));
  });
}

template <class S>
Var<S> sum(Var<S> a) {
  Tape<S>& t = *a.tape;
  MatrixX<S> y(1, 1);
  y(0, 0) = t.val(a.id).sum();
  const int ai = a.id;
  return t.emit(std::move(y), {ai}, [ai](Tape<S>& tp, int self) {
    tp.accum(ai, MatrixX<S>::Constant(tp.val(ai).rows(), tp.val(ai).cols(),
                                      tp.node_grad(self)(0, 0)));
  });
}

// Per-column squared Euclidean norm: [d, n] -> [1, n]
template <class S>
Var<S> colwise_sqnorm(Var<S> a) {
  Tape<S>& t = *a.tape;
  MatrixX<S> y = t.val(a.id).colwise().squaredNorm();
  const int ai = a.id;
  return t.emit(std::move(y), {ai}, [ai](Tape<S>& tp, int self) {
    const MatrixX<S>& g = tp.node_grad(self);
    tp.accum(ai, S(2) * tp.val(ai) * g.row(0).asDiagonal());
  });
}

template <class S>
Var<S> slice_rows(Var<S> a, Eigen::Index r0, Eigen::Index n) {
  Tape<S>& t = *a.tape;
  PRIQA_REQUIRE(r0 >= 0 && r0 + n <= a.rows(), ErrorCategory::shape,
                "slice_rows: out of range");
  MatrixX<S> y = t.val(a.id).middleRows(r0, n);
  const int ai = a.id;
  return t.emit(std::move(y), {ai}, [ai, r0, n](Tape<S>& tp, int self) {
    MatrixX<S> g = MatrixX<S>::Zero(tp.val(ai).rows(), tp.val(ai).cols());
    g.middleRows(r0, n) = tp.node_grad(self);
    tp.accum(ai, g);
  });
}

template <class S>
Var<S> slice_cols(Var<S> a, Eigen::Index c0, Eigen::Index n) {
  Tape<S>& t = *a.tape;
  PRIQA_REQUIRE(c0 >= 0 && c0 + n <= a.cols(), ErrorCategory::shape,
                "slice_cols: out of range");
  MatrixX<S> y = t.val(a.id).middleCols(c0, n);
  const int ai = a.id;
  return t.emit(std::move(y), {ai}, [ai, c0, n](Tape<S>& tp, int self) {
    MatrixX<S> g = MatrixX<S>::Zero(tp.val(ai).rows(), tp.val(ai).cols());
    g.middleCols(c0, n) = tp.node_grad(self);
    tp.accum(ai, g);
  });
}

template <class S>
Var<S> concat_rows(Var<S> a, Var<S> b) {
  Tape<S>& t = *a.tape;
  PRIQA_REQUIRE(a.cols() == b.cols(), ErrorCategory::shape, "concat_rows: column mismatch");
  MatrixX<S> y(a.rows() + b.rows(), a.cols());
  y.topRows(a.rows()) = t.val(a.id);
  y.bottomRows(b.rows()) = t.val(b.id);
  const int ai = a.id, bi = b.id;
  const Eigen::Index ra = a.rows(), rb = b.rows();
  return t.emit(std::move(y), {ai, bi}, [ai, bi, ra, rb](Tape<S>& tp, int self) {
    tp.accum(ai, tp.node_grad(self).topRows(ra));
    tp.accum(bi, tp.node_grad(self).bottomRows(rb));
  });
}

template <class S>
Var<S> concat_cols(const std::vector<Var<S>>& parts) {
  PRIQA_REQUIRE(!parts.empty(), ErrorCategory::size, "concat_cols: empty list");
  Tape<S>& t = *parts.front().tape;
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    PRIQA_REQUIRE(p.rows() == parts.front().rows(), ErrorCategory::shape,
                  "concat_cols: row mismatch");
    cols += p.cols();
  }
  MatrixX<S> y(parts.front().rows(), cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> offs, widths;
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    y.middleCols(c, p.cols()) = t.val(p.id);
    ids.push_back(p.id);
    offs.push_back(c);
    widths.push_back(p.cols());
    c += p.cols();
  }
  return t.emit(std::move(y), ids,
                [ids, offs = std::move(offs),
                 widths = std::move(widths)](Tape<S>& tp, int self) {
                  const MatrixX<S>& g = tp.node_grad(self);
                  for (std::size_t k = 0; k < ids.size(); ++k)
                    tp.accum(ids[k], g.middleCols(offs[k], widths[k]));
                });
}

// Column gather; indices may repeat (backward scatter-adds).
template <class S>
Var<S> gather_cols(Var<S> a, std::vector<Eigen::Index> idx) {
  Tape<S>& t = *a.tape;
  MatrixX<S> y(a.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) y.col(static_cast<Eigen::Index>(k)) = t.val(a.id).col(idx[k]);
  const int ai = a.id;
  return t.emit(std::move(y), {ai}, [ai, idx = std::move(idx)](Tape<S>& tp, int self) {
    MatrixX<S> g = MatrixX<S>::Zero(tp.val(ai).rows(), tp.val(ai).cols());
    const MatrixX<S>& up = tp.node_grad(self);
    for (std::size_t k = 0; k < idx.size(); ++k) g.col(idx[k]) += up.col(static_cast<Eigen::Index>(k));
    tp.accum(ai, g);
  });
}

// Sum over contiguous equal-length segments along columns: [r, G*L] -> [r, G]
template <class S>
Var<S> segment_sum(Var<S> a, Eigen::Index groups, Eigen::Index len) {
  Tape<S>& t = *a.tape;
  PRIQA_REQUIRE(a.cols() == groups * len, ErrorCategory::shape,
                "segment_sum: size mismatch");
  MatrixX<S> y(a.rows(), groups);
  for (Eigen::Index g = 0; g < groups; ++g)
    y.col(g) = t.val(a.id).middleCols(g * len, len).rowwise().sum();
  const int ai = a.id;
  return t.emit(std::move(y), {ai}, [ai, groups, len](Tape<S>& tp, int self) {
    MatrixX<S> g = MatrixX<S>::Zero(tp.val(ai).rows(), tp.val(ai).cols());
    for (Eigen::Index k = 0; k < groups; ++k)
      g.middleCols(k * len, len).colwise() += tp.node_grad(self).col(k);
    tp.accum(ai, g);
  });
}

// Repeat each column L times: [r, G] -> [r, G*L]
template <class S>
Var<S> segment_repeat(Var<S> a, Eigen::Index len) {
  Tape<S>& t = *a.tape;
  const Eigen::Index groups = a.cols();
  MatrixX<S> y(a.rows(), groups * len);
  for (Eigen::Index g = 0; g < groups; ++g)
    y.middleCols(g * len, len).colwise() = t.val(a.id).col(g);
  const int ai = a.id;
  return t.emit(std::move(y), {ai}, [ai, groups, len](Tape<S>& tp, int self) {
    MatrixX<S> g(tp.val(ai).rows(), groups);
    for (Eigen::Index k = 0; k < groups; ++k)
      g.col(k) = tp.node_grad(self).middleCols(k * len, len).rowwise().sum();
    tp.accum(ai, g);
  });
}

// Scales each column to unit root mean square (no centering): a stateless,
// parameter-free normalization that pins activation scale per column.
template <class S>
Var<S> rms_norm_cols(Var<S> a, S eps) {
  Tape<S>& t = *a.tape;
  const MatrixX<S>& x = t.val(a.id);
  const Eigen::Array<S, 1, Eigen::Dynamic> r =
      (x.array().square().colwise().mean() + eps).rsqrt();
  MatrixX<S> y = (x.array().rowwise() * r).matrix();
  const int ai = a.id;
  return t.emit(std::move(y), {ai}, [ai, eps](Tape<S>& tp, int self) {
    const MatrixX<S>& x = tp.val(ai);
    const MatrixX<S>& xh = tp.val(self);
    const MatrixX<S>& g = tp.node_grad(self);
    const Eigen::Array<S, 1, Eigen::Dynamic> r =
        (x.array().square().colwise().mean() + eps).rsqrt();
    const Eigen::Array<S, 1, Eigen::Dynamic> dot =
        (g.array() * xh.array()).colwise().mean();
    tp.accum(ai, ((g.array() - xh.array().rowwise() * dot).rowwise() * r).matrix());
  });
}

// Mean over the trailing spatial positions of a [C, B*HW] activation: -> [C, B]
template <class S>
Var<S> spatial_mean(Var<S> a, Eigen::Index batch, Eigen::Index hw) {
  Tape<S>& t = *a.tape;
  PRIQA_REQUIRE(a.cols() == batch * hw, ErrorCategory::shape, "spatial_mean: size mismatch");
  MatrixX<S> y(a.rows(), batch);
  for (Eigen::Index b = 0; b < batch; ++b)
    y.col(b) = t.val(a.id).middleCols(b * hw, hw).rowwise().sum() / static_cast<S>(hw);
  const int ai = a.id;
  return t.emit(std::move(y), {ai}, [ai, batch, hw](Tape<S>& tp, int self) {
    MatrixX<S> g = MatrixX<S>::Zero(tp.val(ai).rows(), tp.val(ai).cols());
    const S inv = S(1) / static_cast<S>(hw);
    for (Eigen::Index b = 0; b < batch; ++b)
      g.middleCols(b * hw, hw).colwise() += (tp.node_grad(self).col(b) * inv).eval();
    tp.accum(ai, g);
  });
}

}  // namespace ad
}  // namespace priqa

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "priqa/ad.hpp"
#include "priqa/rng.hpp"

#include "helpers.hpp"

namespace pa = priqa::ad;
using priqa::MatrixX;
using priqa::Parameter;
using priqa::Rng;

namespace {

MatrixX<double> randm(Rng& rng, Eigen::Index r, Eigen::Index c, double lo = -1.0,
                      double hi = 1.0) {
  MatrixX<double> m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = rng.uniform(lo, hi);
  return m;
}

// Keep every entry at least `margin` away from zero (kinks of relu/abs).
MatrixX<double> rand_away_from_zero(Rng& rng, Eigen::Index r, Eigen::Index c,
                                    double margin = 0.2) {
  MatrixX<double> m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) {
      const double mag = margin + rng.uniform(0.0, 1.0);
      m(i, j) = rng.uniform() < 0.5 ? -mag : mag;
    }
  return m;
}

// build: (tape, x) -> scalar Var. Returns d(build)/dx at x0 from the tape.
template <class F>
MatrixX<double> analytic_grad(const MatrixX<double>& x0, F&& build) {
  pa::Tape<double> t;
  pa::Var<double> x = t.input(x0, true);
  pa::Var<double> y = build(t, x);
  t.backward(y);
  return t.grad(x);
}

template <class F>
MatrixX<double> numeric_grad(const MatrixX<double>& x0, F&& build, double h = 1e-6) {
  MatrixX<double> g(x0.rows(), x0.cols());
  for (Eigen::Index j = 0; j < x0.cols(); ++j) {
    for (Eigen::Index i = 0; i < x0.rows(); ++i) {
      MatrixX<double> xp = x0, xm = x0;
      xp(i, j) += h;
      xm(i, j) -= h;
      pa::Tape<double> tp(false), tm(false);
      const double fp = build(tp, tp.input(xp)).value()(0, 0);
      const double fm = build(tm, tm.input(xm)).value()(0, 0);
      g(i, j) = (fp - fm) / (2.0 * h);
    }
  }
  return g;
}

template <class F>
void check_grad(const MatrixX<double>& x0, F&& build, double tol = 5e-7) {
  const MatrixX<double> a = analytic_grad(x0, build);
  const MatrixX<double> n = numeric_grad(x0, build);
  REQUIRE(a.rows() == n.rows());
  REQUIRE(a.cols() == n.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const double err = std::abs(a(i, j) - n(i, j)) / (1.0 + std::abs(n(i, j)));
      CHECK(err <= tol);
    }
}

// Weighted sum turns any matrix output into a scalar with non-uniform cograds.
pa::Var<double> wsum(pa::Tape<double>& t, pa::Var<double> m, const MatrixX<double>& w) {
  return pa::sum(pa::cmul(m, t.constant(w)));
}

}  // namespace

TEST_CASE("matmul gradients for both operands") {
  Rng rng(1);
  const MatrixX<double> a0 = randm(rng, 3, 4), b0 = randm(rng, 4, 5);
  const MatrixX<double> w = randm(rng, 3, 5);
  check_grad(a0, [&](pa::Tape<double>& t, pa::Var<double> x) {
    return wsum(t, pa::matmul(x, t.constant(b0)), w);
  });
  check_grad(b0, [&](pa::Tape<double>& t, pa::Var<double> x) {
    return wsum(t, pa::matmul(t.constant(a0), x), w);
  });
}

TEST_CASE("elementwise binary op gradients") {
  Rng rng(2);
  const MatrixX<double> a0 = randm(rng, 3, 3), b0 = rand_away_from_zero(rng, 3, 3, 0.5);
  const MatrixX<double> w = randm(rng, 3, 3);
  check_grad(a0, [&](pa::Tape<double>& t, pa::Var<double> x) {
    return wsum(t, pa::add(x, t.constant(b0)), w);
  });
  check_grad(a0, [&](pa::Tape<double>& t, pa::Var<double> x) {
    return wsum(t, pa::sub(t.constant(b0), x), w);
  });
  check_grad(a0, [&](pa::Tape<double>& t, pa::Var<double> x) {
    return wsum(t, pa::cmul(x, t.constant(b0)), w);
  });
  check_grad(a0, [&](pa::Tape<double>& t, pa::Var<double> x) {
    return wsum(t, pa::cdiv(x, t.constant(b0)), w);
  });
  check_grad(b0, [&](pa::Tape<double>& t, pa::Var<double> x) {
    return wsum(t, pa::cdiv(t.constant(a0), x), w);
  });
}

TEST_CASE("affine and column-broadcast gradients") {
  Rng rng(3);
  const MatrixX<double> a0 = randm(rng, 4, 3);
  const MatrixX<double> v0 = randm(rng, 4, 1);
  const MatrixX<double> w = randm(rng, 4, 3);
  check_grad(a0, [&](pa::Tape<double>& t, pa::Var<double> x) {
    return wsum(t, pa::affine(x, 2.5, -0.75), w);
  });
  check_grad(a0, [&](pa::Tape<double>& t, pa::Var<double> x) {
    return wsum(t, pa::add_colvec(x, t.constant(v0)), w);
  });
  check_grad(v0, [&](pa::Tape<double>& t, pa::Var<double> x) {
    return wsum(t, pa::add_colvec(t.constant(a0), x), w);
  });
}

TEST_CASE("unary nonlinearity gradients") {
  Rng rng(4);
  const MatrixX<double> w = randm(rng, 3, 4);
  const MatrixX<double> smooth = randm(rng, 3, 4, -2.0, 2.0);
  const MatrixX<double> kinky = rand_away_from_zero(rng, 3, 4);
  check_grad(kinky,
             [&](pa::Tape<double>& t, pa::Var<double> x) { return wsum(t, pa::relu(x), w); });
  check_grad(kinky,
             [&](pa::Tape<double>& t, pa::Var<double> x) { return wsum(t, pa::abs_(x), w); });
  check_grad(smooth,
             [&](pa::Tape<double>& t, pa::Var<double> x) { return wsum(t, pa::tanh_(x), w); });
  check_grad(smooth, [&](pa::Tape<double>& t, pa::Var<double> x) {
    return wsum(t, pa::sigmoid(x), w);
  });
  check_grad(smooth, [&](pa::Tape<double>& t, pa::Var<double> x) {
    return wsum(t, pa::softplus(x), w);
  });
  check_grad(smooth,
             [&](pa::Tape<double>& t, pa::Var<double> x) { return wsum(t, pa::exp_(x), w); });
}

TEST_CASE("reduction gradients") {
  Rng rng(5);
  const MatrixX<double> a0 = randm(rng, 4, 6);
  check_grad(a0, [&](pa::Tape<double>& t, pa::Var<double> x) {
    (void)t;
    return pa::sum(x);
  });
  const MatrixX<double> w1 = randm(rng, 1, 6);
  check_grad(a0, [&](pa::Tape<double>& t, pa::Var<double> x) {
    return wsum(t, pa::colwise_sqnorm(x), w1);
  });
}

TEST_CASE("slice and concat gradients") {
  Rng rng(6);
  const MatrixX<double> a0 = randm(rng, 5, 4);
  const MatrixX<double> b0 = randm(rng, 2, 4);
  const MatrixX<double> wr = randm(rng, 2, 4);
  const MatrixX<double> wc = randm(rng, 5, 2);
  check_grad(a0, [&](pa::Tape<double>& t, pa::Var<double> x) {
    return wsum(t, pa::slice_rows(x, 1, 2), wr);
  });
  check_grad(a0, [&](pa::Tape<double>& t, pa::Var<double> x) {
    return wsum(t, pa::slice_cols(x, 2, 2), wc);
  });
  const MatrixX<double> w7 = randm(rng, 7, 4);
  check_grad(a0, [&](pa::Tape<double>& t, pa::Var<double> x) {
    return wsum(t, pa::concat_rows(x, t.constant(b0)), w7);
  });
  check_grad(b0, [&](pa::Tape<double>& t, pa::Var<double> x) {
    return wsum(t, pa::concat_rows(t.constant(a0), x), w7);
  });
  const MatrixX<double> c0 = randm(rng, 5, 3);
  const MatrixX<double> w9 = randm(rng, 5, 4 + 3 + 4);
  check_grad(a0, [&](pa::Tape<double>& t, pa::Var<double> x) {
    std::vector<pa::Var<double>> parts = {x, t.constant(c0), x};
    return wsum(t, pa::concat_cols(parts), w9);
  });
}

TEST_CASE("gather with repeated indices scatter-adds") {
  Rng rng(7);
  const MatrixX<double> a0 = randm(rng, 3, 3);
  const MatrixX<double> w = randm(rng, 3, 4);
  const std::vector<Eigen::Index> idx = {2, 0, 2, 1};
  check_grad(a0, [&](pa::Tape<double>& t, pa::Var<double> x) {
    return wsum(t, pa::gather_cols(x, idx), w);
  });
}

TEST_CASE("segment and spatial reductions") {
  Rng rng(8);
  const MatrixX<double> a0 = randm(rng, 2, 6);
  const MatrixX<double> w3 = randm(rng, 2, 3);
  check_grad(a0, [&](pa::Tape<double>& t, pa::Var<double> x) {
    return wsum(t, pa::segment_sum(x, 3, 2), w3);
  });
  const MatrixX<double> b0 = randm(rng, 2, 3);
  const MatrixX<double> w6 = randm(rng, 2, 6);
  check_grad(b0, [&](pa::Tape<double>& t, pa::Var<double> x) {
    return wsum(t, pa::segment_repeat(x, 2), w6);
  });
  const MatrixX<double> c0 = randm(rng, 3, 8);
  const MatrixX<double> w2 = randm(rng, 3, 2);
  check_grad(c0, [&](pa::Tape<double>& t, pa::Var<double> x) {
    return wsum(t, pa::spatial_mean(x, 2, 4), w2);
  });
}

TEST_CASE("rms column normalization value and gradient") {
  Rng rng(18);
  const MatrixX<double> a0 = randm(rng, 5, 4, -2.0, 2.0);
  const double eps = 1e-5;

  pa::Tape<double> t(false);
  const MatrixX<double> y = pa::rms_norm_cols(t.input(a0), eps).value();
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    const double rms = std::sqrt(y.col(j).squaredNorm() / double(y.rows()));
    CHECK(std::abs(rms - 1.0) <= 1e-6);  // eps is negligible at this scale
    // scaling only: direction is preserved
    const double r0 = a0(0, j) / y(0, j);
    for (Eigen::Index i = 1; i < y.rows(); ++i)
      CHECK(std::abs(a0(i, j) / y(i, j) - r0) <= 1e-9 * std::abs(r0));
  }

  // a zero column stays zero instead of dividing by zero
  MatrixX<double> with_zero = a0;
  with_zero.col(1).setZero();
  pa::Tape<double> tz(false);
  const MatrixX<double> yz = pa::rms_norm_cols(tz.input(with_zero), eps).value();
  CHECK(yz.col(1).isZero());
  CHECK(yz.allFinite());

  const MatrixX<double> w = randm(rng, 5, 4);
  check_grad(a0, [&](pa::Tape<double>& t2, pa::Var<double> x) {
    return wsum(t2, pa::rms_norm_cols(x, eps), w);
  });
}

TEST_CASE("composite network-style chain") {
  Rng rng(9);
  const MatrixX<double> w1 = randm(rng, 4, 3), b1 = randm(rng, 4, 1);
  const MatrixX<double> w2 = randm(rng, 2, 4);
  const MatrixX<double> x0 = randm(rng, 3, 5);
  check_grad(x0, [&](pa::Tape<double>& t, pa::Var<double> x) {
    pa::Var<double> h =
        pa::tanh_(pa::add_colvec(pa::matmul(t.constant(w1), x), t.constant(b1)));
    pa::Var<double> y = pa::matmul(t.constant(w2), h);
    return pa::sum(pa::colwise_sqnorm(y));
  });
}

TEST_CASE("a value reused twice accumulates both paths") {
  Rng rng(10);
  const MatrixX<double> x0 = randm(rng, 3, 2);
  pa::Tape<double> t;
  pa::Var<double> x = t.input(x0, true);
  pa::Var<double> y = pa::sum(pa::cmul(x, x));
  t.backward(y);
  const MatrixX<double> g = t.grad(x);
  for (Eigen::Index j = 0; j < x0.cols(); ++j)
    for (Eigen::Index i = 0; i < x0.rows(); ++i)
      CHECK(g(i, j) == doctest::Approx(2.0 * x0(i, j)).epsilon(1e-14));
}

TEST_CASE("parameter bound at two tape sites receives both contributions") {
  Rng rng(11);
  Parameter<double> p;
  p.setup("p", 3, 2);
  p.value = randm(rng, 3, 2);
  pa::Tape<double> t;
  pa::Var<double> a = t.param(p);
  pa::Var<double> b = t.param(p);
  t.backward(pa::sum(pa::cmul(a, b)));
  for (Eigen::Index j = 0; j < 2; ++j)
    for (Eigen::Index i = 0; i < 3; ++i)
      CHECK(p.grad(i, j) == doctest::Approx(2.0 * p.value(i, j)).epsilon(1e-14));
  p.zero_grad();
  CHECK(p.grad.isZero(0.0));
}

TEST_CASE("gradient queries and failure modes") {
  using priqa::ErrorCategory;
  pa::Tape<double> t;
  pa::Var<double> x = t.input(MatrixX<double>::Ones(2, 2), true);
  pa::Var<double> untouched = t.input(MatrixX<double>::Ones(3, 1), true);
  pa::Var<double> y = pa::sum(x);
  t.backward(y);
  CHECK(t.grad(untouched).isZero(0.0));  // never reached: zero gradient
  CHECK(t.grad(x).isApprox(MatrixX<double>::Ones(2, 2)));

  CHECK(testutil::category_of([&] {
          pa::Tape<double> t2;
          pa::Var<double> m = t2.input(MatrixX<double>::Ones(2, 2), true);
          t2.backward(m);  // non-scalar root
        }) == ErrorCategory::shape);
  CHECK(testutil::category_of([&] {
          pa::Tape<double> t3(false);
          pa::Var<double> m = t3.input(MatrixX<double>::Ones(1, 1), true);
          t3.backward(m);  // gradients disabled
        }) == ErrorCategory::domain);
  CHECK(testutil::category_of([&] {
          pa::Tape<double> t4;
          pa::Var<double> a = t4.input(MatrixX<double>::Ones(2, 3), true);
          pa::Var<double> b = t4.input(MatrixX<double>::Ones(2, 2), true);
          (void)pa::matmul(a, b);
        }) == ErrorCategory::shape);
}

TEST_CASE("inference tape skips gradient bookkeeping") {
  Parameter<double> p;
  p.setup("p", 2, 2);
  p.value.setConstant(0.5);
  pa::Tape<double> t(false);
  pa::Var<double> a = t.param(p);
  pa::Var<double> y = pa::sum(pa::tanh_(a));
  CHECK(!t.needs_grad(y.id));
  CHECK(y.value()(0, 0) == doctest::Approx(4.0 * std::tanh(0.5)).epsilon(1e-14));
}

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "priqa/core.hpp"

namespace priqa {

// Average ranks (1-based); ties share the mean of the positions they occupy.
inline std::vector<double> average_ranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;  // mean of positions i..j, 1-based
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double plcc(const std::vector<double>& x, const std::vector<double>& y) {
  PRIQA_REQUIRE(x.size() == y.size(), ErrorCategory::shape,
                "plcc: length mismatch");
  const std::size_t n = x.size();
  PRIQA_REQUIRE(n >= 2, ErrorCategory::correlation, "plcc: need at least 2 samples");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  PRIQA_REQUIRE(sxx > 0.0 && syy > 0.0, ErrorCategory::correlation,
                "plcc: zero variance input");
  return sxy / std::sqrt(sxx * syy);
}

inline double srcc(const std::vector<double>& x, const std::vector<double>& y) {
  PRIQA_REQUIRE(x.size() == y.size(), ErrorCategory::shape,
                "srcc: length mismatch");
  PRIQA_REQUIRE(x.size() >= 2, ErrorCategory::correlation, "srcc: need at least 2 samples");
  return plcc(average_ranks(x), average_ranks(y));
}

template <class DX, class DY>
double plcc(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DY>& y) {
  std::vector<double> vx(x.size()), vy(y.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) vx[static_cast<std::size_t>(i)] = static_cast<double>(x(i));
  for (Eigen::Index i = 0; i < y.size(); ++i) vy[static_cast<std::size_t>(i)] = static_cast<double>(y(i));
  return plcc(vx, vy);
}

template <class DX, class DY>
double srcc(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DY>& y) {
  std::vector<double> vx(x.size()), vy(y.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) vx[static_cast<std::size_t>(i)] = static_cast<double>(x(i));
  for (Eigen::Index i = 0; i < y.size(); ++i) vy[static_cast<std::size_t>(i)] = static_cast<double>(y(i));
  return srcc(vx, vy);
}

// Median with the even-count convention: mean of the two middle order statistics.
inline double median(std::vector<double> v) {
  PRIQA_REQUIRE(!v.empty(), ErrorCategory::size, "median: empty input");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace priqa

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "priqa/ad.hpp"
#include "priqa/core.hpp"

namespace priqa {

struct LossConfig {
  double lambda = 20.0;
  double margin_alpha = 2.0;
};

// Per-image predictions of the three quality heads plus the subjective label.
struct QualityTriple {
  double q_fr = 0.0;
  double q_pr = 0.0;
  double q_nr = 0.0;
  double label = 0.0;
};

// Two-sided hinge over squared distances, summed across batch columns:
//   sum_i [d(FR,FPR) - d(FR,FPD) + m]_+ + sum_i [d(FD,FPD) - d(FD,FPR) + m]_+
template <class S>
S triplet_loss(const MatrixX<S>& fr, const MatrixX<S>& fpr, const MatrixX<S>& fd,
               const MatrixX<S>& fpd, S margin) {
  PRIQA_REQUIRE(fr.rows() == fpr.rows() && fr.rows() == fd.rows() &&
                    fr.rows() == fpd.rows() && fr.cols() == fpr.cols() &&
                    fr.cols() == fd.cols() && fr.cols() == fpd.cols(),
                ErrorCategory::shape, "triplet_loss: batch shape mismatch");
  S total = S(0);
  for (Eigen::Index i = 0; i < fr.cols(); ++i) {
    const S d_r_pr = (fr.col(i) - fpr.col(i)).squaredNorm();
    const S d_r_pd = (fr.col(i) - fpd.col(i)).squaredNorm();
    const S d_d_pd = (fd.col(i) - fpd.col(i)).squaredNorm();
    const S d_d_pr = (fd.col(i) - fpr.col(i)).squaredNorm();
    total += std::max(S(0), d_r_pr - d_r_pd + margin);
    total += std::max(S(0), d_d_pd - d_d_pr + margin);
  }
  return total;
}

// Sum over images of |label - q| for each of the three heads.
inline double regression_loss(const std::vector<QualityTriple>& triples,
                              const std::vector<std::string>* image_ids = nullptr) {
  PRIQA_REQUIRE(!triples.empty(), ErrorCategory::size, "regression_loss: empty batch");
  double total = 0.0;
  for (std::size_t j = 0; j < triples.size(); ++j) {
    const QualityTriple& t = triples[j];
    if (!(std::isfinite(t.q_fr) && std::isfinite(t.q_pr) && std::isfinite(t.q_nr))) {
      std::string id = image_ids && j < image_ids->size() ? (*image_ids)[j]
                                                          : "#" + std::to_string(j);
      fail(ErrorCategory::numeric, "non-finite quality prediction for image " + id);
    }
    total += std::abs(t.label - t.q_fr) + std::abs(t.label - t.q_pr) +
             std::abs(t.label - t.q_nr);
  }
  return total;
}

template <class S>
double total_loss(const std::vector<QualityTriple>& triples, const MatrixX<S>& fr,
                  const MatrixX<S>& fpr, const MatrixX<S>& fd, const MatrixX<S>& fpd,
                  const LossConfig& cfg,
                  const std::vector<std::string>* image_ids = nullptr) {
  return regression_loss(triples, image_ids) +
         cfg.lambda * static_cast<double>(triplet_loss<S>(
                          fr, fpr, fd, fpd, static_cast<S>(cfg.margin_alpha)));
}

// ---- tape versions (training path) ----

template <class S>
ad::Var<S> triplet_loss_t(ad::Tape<S>& /*tape*/, ad::Var<S> fr, ad::Var<S> fpr,
                          ad::Var<S> fd, ad::Var<S> fpd, S margin) {
  ad::Var<S> d_r_pr = ad::colwise_sqnorm(ad::sub(fr, fpr));
  ad::Var<S> d_r_pd = ad::colwise_sqnorm(ad::sub(fr, fpd));
  ad::Var<S> d_d_pd = ad::colwise_sqnorm(ad::sub(fd, fpd));
  ad::Var<S> d_d_pr = ad::colwise_sqnorm(ad::sub(fd, fpr));
  ad::Var<S> term1 = ad::relu(ad::affine(ad::sub(d_r_pr, d_r_pd), S(1), margin));
  ad::Var<S> term2 = ad::relu(ad::affine(ad::sub(d_d_pd, d_d_pr), S(1), margin));
  return ad::add(ad::sum(term1), ad::sum(term2));
}

// Sum of |q - label| over a [1, n] prediction row.
template <class S>
ad::Var<S> mae_sum_t(ad::Tape<S>& t, ad::Var<S> q, const VectorX<S>& labels) {
  PRIQA_REQUIRE(q.rows() == 1 && q.cols() == labels.size(), ErrorCategory::shape,
                "mae_sum: label count mismatch");
  ad::Var<S> lab = t.constant(labels.transpose());
  return ad::sum(ad::abs_(ad::sub(q, lab)));
}

}  // namespace priqa

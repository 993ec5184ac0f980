#include "priqa/tsne.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>

#include "priqa/image.hpp"
#include "priqa/rng.hpp"

namespace priqa {

namespace fs = std::filesystem;

namespace {

// Row-wise squared Euclidean distance matrix.
MatrixX<double> pairwise_sq_dist(const MatrixX<double>& x) {
  VectorX<double> sq = x.rowwise().squaredNorm();
  MatrixX<double> d = -2.0 * x * x.transpose();
  d.colwise() += sq;
  d.rowwise() += sq.transpose();
  return d.cwiseMax(0.0);
}

// Gaussian affinities with per-point bandwidth tuned to the target perplexity.
MatrixX<double> conditional_affinities(const MatrixX<double>& dist, double perplexity) {
  const Eigen::Index n = dist.rows();
  const double log_perp = std::log(perplexity);
  MatrixX<double> p = MatrixX<double>::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double beta = 1.0, beta_lo = 0.0, beta_hi = std::numeric_limits<double>::infinity();
    VectorX<double> row;
    for (int it = 0; it < 64; ++it) {
      row = (-beta * dist.row(i).transpose().array()).exp();
      row(i) = 0.0;
      const double sum = row.sum();
      if (sum <= 0.0) {
        beta_hi = beta;
        beta = (beta_lo + beta_hi) / 2.0;
        continue;
      }
      // Shannon entropy of the conditional distribution
      const double h = std::log(sum) + beta * (dist.row(i).transpose().array() *
                                               row.array())
                                               .sum() /
                                           sum;
      const double diff = h - log_perp;
      if (std::abs(diff) < 1e-5) break;
      if (diff > 0) {
        beta_lo = beta;
        beta = std::isinf(beta_hi) ? beta * 2.0 : (beta_lo + beta_hi) / 2.0;
      } else {
        beta_hi = beta;
        beta = (beta_lo + beta_hi) / 2.0;
      }
    }
    const double sum = row.sum();
    if (sum > 0.0) p.row(i) = (row / sum).transpose();
  }
  return p;
}

}  // namespace

MatrixX<double> tsne(const MatrixX<double>& points, const TsneParams& params) {
  const Eigen::Index n = points.rows();
  PRIQA_REQUIRE(n >= 4, ErrorCategory::size, "tsne: need at least 4 points");
  PRIQA_REQUIRE(params.dims >= 1 && params.iterations >= 1, ErrorCategory::config,
                "tsne: invalid parameters");
  const double perplexity =
      std::min(params.perplexity, static_cast<double>(n - 1) / 3.0);

  MatrixX<double> p = conditional_affinities(pairwise_sq_dist(points), perplexity);
  p = ((p + p.transpose()) / (2.0 * static_cast<double>(n))).cwiseMax(1e-12);

  Rng rng(mix_seed(params.seed, "tsne-init"));
  MatrixX<double> y(n, params.dims);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index d = 0; d < params.dims; ++d) y(i, d) = 1e-2 * rng.normal();

  MatrixX<double> velocity = MatrixX<double>::Zero(n, params.dims);
  MatrixX<double> gains = MatrixX<double>::Ones(n, params.dims);

  for (int iter = 0; iter < params.iterations; ++iter) {
    const double exaggeration =
        iter < params.exaggeration_iters ? params.early_exaggeration : 1.0;
    const double momentum = iter < params.exaggeration_iters ? 0.5 : 0.8;

    MatrixX<double> num =
        (1.0 + pairwise_sq_dist(y).array()).inverse().matrix();
    num.diagonal().setZero();
    const double z = num.sum();
    MatrixX<double> pq = (exaggeration * p - (num / z).cwiseMax(1e-12)).cwiseProduct(num);
    MatrixX<double> grad =
        4.0 * (pq.rowwise().sum().asDiagonal() * y - pq * y);

    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index d = 0; d < params.dims; ++d) {
        const bool same_sign = (grad(i, d) > 0.0) == (velocity(i, d) > 0.0);
        gains(i, d) = std::max(0.01, same_sign ? gains(i, d) * 0.8 : gains(i, d) + 0.2);
      }
    }
    velocity = momentum * velocity -
               params.learning_rate * gains.cwiseProduct(grad);
    y += velocity;
    y.rowwise() -= y.colwise().mean();
  }
  return y;
}

namespace {

constexpr std::array<const char*, 4> kRoles = {"reference", "distorted",
                                               "pseudo_reference",
                                               "pseudo_distortion"};
constexpr std::array<const char*, 4> kRoleColors = {"#1f77b4", "#d62728", "#2ca02c",
                                                    "#ff7f0e"};

void write_scatter_svg(const MatrixX<double>& y, Eigen::Index per_role,
                       const fs::path& path) {
  const double margin = 40.0, size = 640.0;
  const double x_min = y.col(0).minCoeff(), x_max = y.col(0).maxCoeff();
  const double y_min = y.col(1).minCoeff(), y_max = y.col(1).maxCoeff();
  const double x_span = std::max(1e-12, x_max - x_min);
  const double y_span = std::max(1e-12, y_max - y_min);

  std::ofstream out(path);
  PRIQA_REQUIRE(out.good(), ErrorCategory::io, "cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size + 2 * margin
      << "\" height=\"" << size + 2 * margin << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    const auto role = static_cast<std::size_t>(i / per_role);
    const double px = margin + (y(i, 0) - x_min) / x_span * size;
    const double py = margin + (y(i, 1) - y_min) / y_span * size;
    out << "<circle cx=\"" << px << "\" cy=\"" << py << "\" r=\"2.5\" fill=\""
        << kRoleColors[role] << "\" fill-opacity=\"0.6\"/>\n";
  }
  for (std::size_t r = 0; r < kRoles.size(); ++r) {
    const double ly = margin / 2.0 + 0.0;
    const double lx = margin + static_cast<double>(r) * 160.0;
    out << "<circle cx=\"" << lx << "\" cy=\"" << ly << "\" r=\"4\" fill=\""
        << kRoleColors[r] << "\"/>\n";
    out << "<text x=\"" << lx + 8 << "\" y=\"" << ly + 4
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << kRoles[r]
        << "</text>\n";
  }
  out << "</svg>\n";
  PRIQA_REQUIRE(out.good(), ErrorCategory::io, "write failed for " + path.string());
}

}  // namespace

TsneExportResult tsne_export(PrfModel<float>& model, const DatabaseManifest& manifest,
                             ImageStore& store, int n_pairs, std::uint64_t seed,
                             const fs::path& out_dir, const TsneParams& params) {
  PRIQA_REQUIRE(n_pairs >= 1, ErrorCategory::config, "tsne_export: n_pairs must be >= 1");
  fs::create_directories(out_dir);

  std::vector<int> indices(manifest.records.size());
  for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = static_cast<int>(i);
  Rng rng(mix_seed(seed, "tsne-sample"));
  rng.shuffle(indices);
  if (static_cast<int>(indices.size()) < n_pairs) {
    std::cerr << "warning: requested " << n_pairs << " pairs but only "
              << indices.size() << " are available; using all\n";
    n_pairs = static_cast<int>(indices.size());
  }
  indices.resize(static_cast<std::size_t>(n_pairs));

  const Eigen::Index half = model.half_dim();
  MatrixX<float> f_r(half, n_pairs), f_d(half, n_pairs), f_pr(half, n_pairs),
      f_pd(half, n_pairs);

  const int chunk = 64;
  std::vector<PatchBytes> ref_patches, dist_patches;
  std::vector<int> slot;
  auto flush = [&]() {
    if (ref_patches.empty()) return;
    std::vector<const PatchBytes*> rp, dp;
    for (const auto& p : ref_patches) rp.push_back(&p);
    for (const auto& p : dist_patches) dp.push_back(&p);
    FeatureBundle<float> bundle =
        model.extract_bundle(patches_to_input<float>(rp), patches_to_input<float>(dp));
    for (std::size_t k = 0; k < slot.size(); ++k) {
      f_r.col(slot[k]) = bundle.f_r.col(static_cast<Eigen::Index>(k));
      f_d.col(slot[k]) = bundle.f_d.col(static_cast<Eigen::Index>(k));
      f_pr.col(slot[k]) = bundle.f_pr.col(static_cast<Eigen::Index>(k));
      f_pd.col(slot[k]) = bundle.f_pd.col(static_cast<Eigen::Index>(k));
    }
    ref_patches.clear();
    dist_patches.clear();
    slot.clear();
  };

  for (int k = 0; k < n_pairs; ++k) {
    const ImageRecord& rec =
        manifest.records[static_cast<std::size_t>(indices[static_cast<std::size_t>(k)])];
    const Image& dist = store.get(manifest.distorted_path(rec));
    const Image& ref = store.get(manifest.reference_path(rec));
    PRIQA_REQUIRE(ref.height == dist.height && ref.width == dist.width,
                  ErrorCategory::alignment,
                  "reference/distorted size mismatch for " + rec.image_id);
    const auto y0 = static_cast<Eigen::Index>(
        rng.uniform_int(static_cast<int>(dist.height - kPatchSize + 1)));
    const auto x0 = static_cast<Eigen::Index>(
        rng.uniform_int(static_cast<int>(dist.width - kPatchSize + 1)));
    ref_patches.push_back(crop_patch_at(ref, y0, x0));
    dist_patches.push_back(crop_patch_at(dist, y0, x0));
    slot.push_back(k);
    if (static_cast<int>(slot.size()) == chunk) flush();
  }
  flush();

  // union embedding: all reference rows, then distorted, then the two pseudo sets
  MatrixX<double> points(4 * static_cast<Eigen::Index>(n_pairs), half);
  points.topRows(n_pairs) = f_r.transpose().cast<double>();
  points.middleRows(n_pairs, n_pairs) = f_d.transpose().cast<double>();
  points.middleRows(2 * n_pairs, n_pairs) = f_pr.transpose().cast<double>();
  points.bottomRows(n_pairs) = f_pd.transpose().cast<double>();

  TsneParams run_params = params;
  run_params.seed = seed;
  MatrixX<double> y = tsne(points, run_params);

  TsneExportResult result;
  result.n_pairs = n_pairs;
  result.csv_path = out_dir / "tsne_points.csv";
  result.svg_path = out_dir / "tsne_scatter.svg";

  std::ofstream csv(result.csv_path);
  PRIQA_REQUIRE(csv.good(), ErrorCategory::io, "cannot write " + result.csv_path.string());
  csv << "# perplexity=" << run_params.perplexity
      << " iterations=" << run_params.iterations << " seed=" << seed
      << " n_pairs=" << n_pairs << " dims=" << run_params.dims << "\n";
  csv << "role,x,y,z\n";
  csv.precision(10);
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    csv << kRoles[static_cast<std::size_t>(i / n_pairs)] << ',' << y(i, 0) << ','
        << y(i, 1) << ',' << (run_params.dims >= 3 ? y(i, 2) : 0.0) << '\n';
  }
  PRIQA_REQUIRE(csv.good(), ErrorCategory::io,
                "write failed for " + result.csv_path.string());

  write_scatter_svg(y, n_pairs, result.svg_path);
  return result;
}

}  // namespace priqa

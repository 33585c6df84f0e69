#pragma once

#include <doctest.h>

#include "gaplab/embedding.hpp"
#include "gaplab/losses.hpp"
#include "gaplab/rng.hpp"

namespace gaplab::test {

inline PairedEmbeddings random_pairs(int n, int d, std::uint64_t seed) {
  PairedEmbeddings pairs;
  pairs.images = random_sphere_init(n, d, mix64(seed), Modality::image);
  pairs.texts = random_sphere_init(n, d, mix64(seed + 101), Modality::text);
  return pairs;
}

inline EmbeddingSet set_from(std::initializer_list<std::initializer_list<double>> rows,
                             Modality modality = Modality::generic) {
  const auto r = static_cast<Eigen::Index>(rows.size());
  const auto c = static_cast<Eigen::Index>(rows.begin()->size());
  Matrix m(r, c);
  Eigen::Index i = 0;
  for (const auto& row : rows) {
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return EmbeddingSet{m, modality};
}

inline PairedEmbeddings pairs_from(std::initializer_list<std::initializer_list<double>> images,
                                   std::initializer_list<std::initializer_list<double>> texts) {
  return PairedEmbeddings{set_from(images, Modality::image), set_from(texts, Modality::text)};
}

// Independent oracle: central finite differences of the composite loss, entry
// by entry, kept free of the analytic-gradient code path.
inline LossGradient finite_difference_gradient(const PairedEmbeddings& pairs, const LossConfig& cfg,
                                               double h = 1e-5) {
  LossGradient grad;
  grad.d_images = Matrix::Zero(pairs.count(), pairs.dim());
  grad.d_texts = Matrix::Zero(pairs.count(), pairs.dim());
  for (int side = 0; side < 2; ++side) {
    Matrix& target = side == 0 ? grad.d_images : grad.d_texts;
    for (Eigen::Index i = 0; i < pairs.count(); ++i) {
      for (Eigen::Index j = 0; j < pairs.dim(); ++j) {
        PairedEmbeddings probe = pairs;
        Matrix& rows = side == 0 ? probe.images.rows : probe.texts.rows;
        const double saved = rows(i, j);
        rows(i, j) = saved + h;
        const double up = composite_loss(probe, cfg).total;
        rows(i, j) = saved - h;
        const double down = composite_loss(probe, cfg).total;
        target(i, j) = (up - down) / (2.0 * h);
      }
    }
  }
  return grad;
}

// Relative error with a unit floor so near-zero entries compare absolutely.
inline double max_relative_error(const Matrix& a, const Matrix& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      const double denom = std::max({1.0, std::abs(a(i, j)), std::abs(b(i, j))});
      worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / denom);
    }
  }
  return worst;
}

// Random rotation via QR of a Gaussian matrix.
inline Matrix random_orthogonal(int d, std::uint64_t seed) {
  Rng rng(seed);
  Matrix g(d, d);
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    for (Eigen::Index j = 0; j < g.cols(); ++j) g(i, j) = rng.gaussian();
  }
  const Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  return q;
}

}  // namespace gaplab::test

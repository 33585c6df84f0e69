#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "gaplab/metrics.hpp"
#include "gaplab/rng.hpp"
#include "test_util.hpp"

using namespace gaplab;
using gaplab::test::pairs_from;
using gaplab::test::random_pairs;
using gaplab::test::set_from;

namespace {

PairedEmbeddings clustered_pairs(int n, int d) {
  // Images hug +e1, texts hug -e1.
  PairedEmbeddings pairs;
  Matrix img(n, d), txt(n, d);
  Rng rng(5);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      img(i, j) = (j == 0 ? 10.0 : 0.0) + 0.1 * rng.gaussian();
      txt(i, j) = (j == 0 ? -10.0 : 0.0) + 0.1 * rng.gaussian();
    }
  }
  pairs.images = normalize_rows(img, Modality::image);
  pairs.texts = normalize_rows(txt, Modality::text);
  return pairs;
}

}  // namespace

TEST_CASE("centroid distance closed forms") {
  PairedEmbeddings same = random_pairs(20, 4, 1);
  same.texts.rows = same.images.rows;
  CHECK(centroid_distance(same) == 0.0);

  const PairedEmbeddings opposite =
      pairs_from({{1, 0}, {1, 0}}, {{-1, 0}, {-1, 0}});
  CHECK(centroid_distance(opposite) == 2.0);
}

TEST_CASE("centroid distance stays in range on random instances") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const PairedEmbeddings pairs = random_pairs(30, 6, seed);
    const double v = centroid_distance(pairs);
    CHECK(v >= 0.0);
    CHECK(v <= 2.0);
  }
}

TEST_CASE("linear separability of clustered modalities is perfect") {
  CHECK(linear_separability(clustered_pairs(100, 8), 3) == 1.0);
}

TEST_CASE("linear separability of duplicated distributions hovers at chance") {
  PairedEmbeddings pairs = random_pairs(200, 6, 77);
  pairs.texts.rows = pairs.images.rows;
  double mean = 0.0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) mean += linear_separability(pairs, static_cast<std::uint64_t>(s));
  mean /= seeds;
  CHECK(mean > 0.4);
  CHECK(mean < 0.6);
}

TEST_CASE("linear separability needs ten pairs") {
  CHECK_THROWS_AS(linear_separability(random_pairs(9, 4, 0), 1), TooFewSamplesError);
}

TEST_CASE("retrieval is perfect when texts copy images") {
  PairedEmbeddings pairs = random_pairs(50, 8, 12);
  pairs.texts.rows = pairs.images.rows;
  CHECK(retrieval_accuracy(pairs, 1, RetrievalDirection::i2t) == 1.0);
  CHECK(retrieval_accuracy(pairs, 1, RetrievalDirection::t2i) == 1.0);
}

TEST_CASE("retrieval tie-break picks the lowest index") {
  // All embeddings identical: every query scores every target equally, the
  // tie-break elects index 0, so only query 0 is a hit.
  Matrix rows = Matrix::Zero(10, 4);
  rows.col(0).setOnes();
  PairedEmbeddings pairs{{rows, Modality::image}, {rows, Modality::text}};
  CHECK(retrieval_accuracy(pairs, 1, RetrievalDirection::i2t) == doctest::Approx(0.1));
}

TEST_CASE("retrieval accuracy is monotone in k") {
  const PairedEmbeddings pairs = random_pairs(40, 5, 8);
  double previous = 0.0;
  for (int k = 1; k <= 40; ++k) {
    const double v = retrieval_accuracy(pairs, k, RetrievalDirection::i2t);
    CHECK(v >= previous);
    previous = v;
  }
  CHECK(previous == 1.0);  // k = N retrieves everything
}

TEST_CASE("pca explained variance on rank-1 data") {
  // Points spread along one axis through the mean.
  Matrix img(3, 3), txt(3, 3);
  img << 1, 0, 0, 1, 0, 0, -1, 0, 0;
  txt << -1, 0, 0, 1, 0, 0, 1, 0, 0;
  PairedEmbeddings pairs{{img, Modality::image}, {txt, Modality::text}};
  const Vector ratios = pca_explained_variance(pairs);
  CHECK(ratios(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ratios.tail(ratios.size() - 1).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("pca ratios are isotropic for uniform sphere samples") {
  const PairedEmbeddings pairs = random_pairs(2000, 3, 55);
  const Vector ratios = pca_explained_variance(pairs);
  for (Eigen::Index i = 0; i < ratios.size(); ++i) {
    CHECK(ratios(i) == doctest::Approx(1.0 / 3.0).epsilon(0.15));
  }
}

TEST_CASE("pca ratios are sorted and sum to one") {
  for (std::uint64_t seed : {3, 4, 5}) {
    const Vector ratios = pca_explained_variance(random_pairs(25, 7, seed));
    CHECK(std::abs(ratios.sum() - 1.0) < 1e-9);
    for (Eigen::Index i = 1; i < ratios.size(); ++i) CHECK(ratios(i) <= ratios(i - 1) + 1e-15);
  }
}

TEST_CASE("pca rejects identical rows") {
  Matrix rows = Matrix::Zero(4, 3);
  rows.col(0).setOnes();
  PairedEmbeddings pairs{{rows, Modality::image}, {rows, Modality::text}};
  CHECK_THROWS_AS(pca_explained_variance(pairs), DegenerateDataError);
}

TEST_CASE("pca is invariant under row permutation") {
  const PairedEmbeddings pairs = random_pairs(30, 5, 60);
  PairedEmbeddings permuted = pairs;
  permuted.images.rows = pairs.images.rows.colwise().reverse();
  permuted.texts.rows = pairs.texts.rows.colwise().reverse();
  const Vector a = pca_explained_variance(pairs);
  const Vector b = pca_explained_variance(permuted);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("metrics are invariant under a common rotation") {
  const PairedEmbeddings pairs = random_pairs(30, 6, 71);
  const Matrix q = gaplab::test::random_orthogonal(6, 2);
  PairedEmbeddings rotated = pairs;
  rotated.images.rows = pairs.images.rows * q;
  rotated.texts.rows = pairs.texts.rows * q;

  CHECK(centroid_distance(rotated) == doctest::Approx(centroid_distance(pairs)).epsilon(1e-12));
  for (int k : {1, 5, 10}) {
    CHECK(retrieval_accuracy(rotated, k, RetrievalDirection::i2t) ==
          retrieval_accuracy(pairs, k, RetrievalDirection::i2t));
  }
}

TEST_CASE("gap report fields match the standalone operations") {
  const PairedEmbeddings pairs = random_pairs(24, 6, 90);
  const LossConfig cfg = LossConfig::cuaxu(0.07);
  const std::uint64_t seed = 17;
  const GapReport report = gap_report(pairs, cfg, seed);

  CHECK(report.centroid_distance == centroid_distance(pairs));
  CHECK(report.linear_separability == linear_separability(pairs, seed));
  CHECK(report.uniform == uniform_total(pairs));
  CHECK(report.xuniform == xuniform_loss(pairs));
  CHECK(report.align == align_loss(pairs));
  CHECK(report.retrieval_i2t.at(5) == retrieval_accuracy(pairs, 5, RetrievalDirection::i2t));
  CHECK(report.retrieval_t2i.at(10) == retrieval_accuracy(pairs, 10, RetrievalDirection::t2i));
  CHECK(report.pca_explained == pca_explained_variance(pairs));
}

TEST_CASE("gap report for identical modalities composes trivially") {
  PairedEmbeddings pairs = random_pairs(16, 5, 33);
  pairs.texts.rows = pairs.images.rows;
  const GapReport report = gap_report(pairs, LossConfig::clip_only(), 1);
  CHECK(report.centroid_distance == 0.0);
  CHECK(report.retrieval_i2t.at(1) == 1.0);
  CHECK(report.align == 0.0);
}

TEST_CASE("gap report json round-trips exactly") {
  const GapReport report = gap_report(random_pairs(20, 5, 44), LossConfig::cua(0.05), 9);
  const GapReport back = gap_report_from_json(to_json(report));
  CHECK(back.centroid_distance == report.centroid_distance);
  CHECK(back.linear_separability == report.linear_separability);
  CHECK(back.uniform == report.uniform);
  CHECK(back.xuniform == report.xuniform);
  CHECK(back.align == report.align);
  CHECK(back.retrieval_i2t == report.retrieval_i2t);
  CHECK(back.retrieval_t2i == report.retrieval_t2i);
  CHECK(back.pca_explained == report.pca_explained);
}

TEST_CASE("report and pca csv files have the documented shape") {
  const GapReport report = gap_report(random_pairs(15, 4, 2), LossConfig::clip_only(), 3);
  const auto dir = std::filesystem::temp_directory_path();
  const auto report_path = dir / "gaplab_test_report.csv";
  const auto pca_path = dir / "gaplab_test_pca.csv";
  write_report_csv(report, 42, report_path);
  write_pca_csv(report.pca_explained, pca_path);

  std::ifstream in(report_path);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == report_csv_header());
  CHECK(row.substr(0, 3) == "42,");

  std::ifstream pca(pca_path);
  std::getline(pca, header);
  CHECK(header == "component_index,ratio,cumulative");

  std::filesystem::remove(report_path);
  std::filesystem::remove(pca_path);
}

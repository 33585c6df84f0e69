#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "gaplab/embedding.hpp"
#include "gaplab/rng.hpp"
#include "test_util.hpp"

using namespace gaplab;
using gaplab::test::set_from;

TEST_CASE("normalize_rows scales a 3-4-5 vector") {
  Matrix m(1, 2);
  m << 3.0, 4.0;
  const EmbeddingSet set = normalize_rows(m);
  CHECK(set.rows(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(set.rows(0, 1) == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("normalize_rows keeps axis vectors and normalizes scaled ones") {
  Matrix m(2, 2);
  m << 1.0, 0.0, 0.0, 2.0;
  const EmbeddingSet set = normalize_rows(m);
  CHECK(set.rows(0, 0) == 1.0);
  CHECK(set.rows(0, 1) == 0.0);
  CHECK(set.rows(1, 0) == 0.0);
  CHECK(set.rows(1, 1) == 1.0);
}

TEST_CASE("normalize_rows rejects the zero vector") {
  Matrix m = Matrix::Zero(1, 2);
  CHECK_THROWS_AS(normalize_rows(m), ZeroVectorError);
}

TEST_CASE("centroid basics") {
  CHECK(centroid(set_from({{1.0, 0.0}, {-1.0, 0.0}})).norm() == 0.0);
  const Vector single = centroid(set_from({{1.0, 0.0}}));
  CHECK(single(0) == 1.0);
  CHECK(single(1) == 0.0);
  const Vector mean = centroid(set_from({{1.0, 0.0}, {0.0, 1.0}}));
  CHECK(mean(0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(mean(1) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("centroid is permutation invariant") {
  const EmbeddingSet set = random_sphere_init(50, 8, 99);
  Matrix reversed = set.rows.colwise().reverse();
  const EmbeddingSet permuted{reversed, set.modality};
  CHECK((centroid(set) - centroid(permuted)).norm() < 1e-12);
}

TEST_CASE("translate_overlap with identical sets is the identity") {
  const EmbeddingSet set = random_sphere_init(32, 6, 7);
  const EmbeddingSet moved = translate_overlap(set, set);
  CHECK((moved.rows - set.rows).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("translate_overlap moves a point mass onto the target") {
  const EmbeddingSet source = set_from({{0.0, 1.0}, {0.0, 1.0}});
  const EmbeddingSet target = set_from({{1.0, 0.0}, {1.0, 0.0}});
  const EmbeddingSet moved = translate_overlap(source, target);
  for (Eigen::Index i = 0; i < moved.count(); ++i) {
    CHECK(moved.rows(i, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(moved.rows(i, 1) == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("translate_overlap closes the centroid gap between narrow cones") {
  const EmbeddingSet source = random_cone_init(400, 64, 0.1, 11, Modality::text);
  const EmbeddingSet target = random_cone_init(400, 64, 0.1, 22, Modality::image);
  const EmbeddingSet moved = translate_overlap(source, target);
  CHECK((centroid(moved) - centroid(target)).norm() <= 0.05);
}

TEST_CASE("random_sphere_init is uniform and reproducible") {
  const EmbeddingSet a = random_sphere_init(1000, 3, 7);
  const EmbeddingSet b = random_sphere_init(1000, 3, 7);
  CHECK(a.rows == b.rows);  // bit-identical

  double mean_cos = 0.0;
  long count = 0;
  for (Eigen::Index i = 0; i < a.count(); ++i) {
    for (Eigen::Index j = i + 1; j < a.count(); ++j) {
      mean_cos += a.rows.row(i).dot(a.rows.row(j));
      ++count;
    }
  }
  mean_cos /= static_cast<double>(count);
  CHECK(std::abs(mean_cos) < 0.05);
}

TEST_CASE("row norms stay within 1e-9 across operations") {
  const EmbeddingSet a = random_sphere_init(2, 2, 0);
  for (Eigen::Index i = 0; i < a.count(); ++i) {
    CHECK(std::abs(a.rows.row(i).norm() - 1.0) < 1e-9);
  }
  const EmbeddingSet cone = random_cone_init(20, 5, 0.3, 3);
  const EmbeddingSet moved = translate_overlap(cone, random_sphere_init(20, 5, 4));
  for (Eigen::Index i = 0; i < moved.count(); ++i) {
    CHECK(std::abs(moved.rows.row(i).norm() - 1.0) < 1e-9);
  }
}

TEST_CASE("embedding set json and csv round-trip exactly") {
  const EmbeddingSet set = random_sphere_init(17, 5, 42, Modality::image);

  const EmbeddingSet from_json = embedding_set_from_json(to_json(set));
  CHECK(from_json.rows == set.rows);
  CHECK(from_json.modality == Modality::image);

  const auto path = std::filesystem::temp_directory_path() / "gaplab_test_embedding.csv";
  write_embedding_csv(set, path);
  const EmbeddingSet from_csv = read_embedding_csv(path, Modality::image);
  CHECK(from_csv.rows == set.rows);
  std::filesystem::remove(path);
}

TEST_CASE("paired embeddings json round-trips") {
  const PairedEmbeddings pairs = gaplab::test::random_pairs(8, 4, 5);
  const PairedEmbeddings back = paired_embeddings_from_json(to_json(pairs));
  CHECK(back.images.rows == pairs.images.rows);
  CHECK(back.texts.rows == pairs.texts.rows);
}

TEST_CASE("seed splitting gives distinct streams") {
  CHECK(split_seed(7, "a") != split_seed(7, "b"));
  CHECK(split_seed(7, "a") != split_seed(8, "a"));
  CHECK(split_seed(7, "a", 0) != split_seed(7, "a", 1));
}

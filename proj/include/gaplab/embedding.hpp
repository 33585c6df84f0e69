#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "gaplab/errors.hpp"

namespace gaplab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Modality { image, text, generic };

std::string to_string(Modality m);
Modality modality_from_string(const std::string& s);

/// N x d matrix of unit-norm rows plus a modality tag. Rows live on S^{d-1};
/// the invariant (norm 1 within 1e-9, N >= 1, d >= 2) holds for anything the
/// module operations produce, and validate() re-checks it after IO.
struct EmbeddingSet {
  Matrix rows;
  Modality modality = Modality::generic;

  Eigen::Index count() const { return rows.rows(); }
  Eigen::Index dim() const { return rows.cols(); }
  void validate() const;
};

/// Matched image/text rows: row j of images pairs with row j of texts.
struct PairedEmbeddings {
  EmbeddingSet images;
  EmbeddingSet texts;

  Eigen::Index count() const { return images.count(); }
  Eigen::Index dim() const { return images.dim(); }
  void validate() const;
};

// Norms below this are treated as zero vectors.
inline constexpr double kZeroNormFloor = 1e-12;
inline constexpr double kUnitNormTol = 1e-9;

/// Projects every row to the unit sphere, preserving direction.
/// Throws ZeroVectorError when a row norm is below 1e-12.
EmbeddingSet normalize_rows(const Matrix& m, Modality modality = Modality::generic);

/// Arithmetic mean of the rows. Not renormalized; the result lives inside the
/// unit ball (norm <= 1 for unit-norm rows).
Vector centroid(const EmbeddingSet& set);

/// Shifts every source row by centroid(target) - centroid(source), then
/// re-projects to the sphere. The shift is computed once from the inputs;
/// callers that want it fixed across training must hold on to it themselves.
EmbeddingSet translate_overlap(const EmbeddingSet& source, const EmbeddingSet& target);

/// The shift vector translate_overlap applies.
Vector overlap_shift(const EmbeddingSet& source, const EmbeddingSet& target);

/// Applies a precomputed shift followed by row renormalization.
EmbeddingSet apply_shift(const EmbeddingSet& set, const Vector& shift);

/// I.i.d. uniform samples on S^{d-1}: standard-normal draw, then normalize.
/// Deterministic per seed.
EmbeddingSet random_sphere_init(int n, int d, std::uint64_t seed,
                                Modality modality = Modality::generic);

/// Points concentrated around a random axis: normalize(center + spread * g).
/// Used to mimic the narrow cones randomly initialized encoders emit.
EmbeddingSet random_cone_init(int n, int d, double spread, std::uint64_t seed,
                              Modality modality = Modality::generic);

/// Pulls a gradient back through row normalization y = z / ||z||:
/// dz = (dy - (dy . y) y) / ||z||, applied row by row.
Matrix backprop_row_normalization(const Matrix& prenorm, const Matrix& normalized,
                                  const Matrix& d_normalized);

// ---- serialization ----------------------------------------------------------

// Doubles print with 17 significant digits so text round-trips bit-exactly.
std::string format_double(double v);

nlohmann::json to_json(const EmbeddingSet& set);
EmbeddingSet embedding_set_from_json(const nlohmann::json& j);

nlohmann::json to_json(const PairedEmbeddings& pairs);
PairedEmbeddings paired_embeddings_from_json(const nlohmann::json& j);

void write_embedding_csv(const EmbeddingSet& set, const std::filesystem::path& path);
EmbeddingSet read_embedding_csv(const std::filesystem::path& path,
                                Modality modality = Modality::generic);

void write_json_file(const nlohmann::json& j, const std::filesystem::path& path);
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace gaplab

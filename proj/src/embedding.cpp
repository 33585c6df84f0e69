#include "gaplab/embedding.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gaplab/rng.hpp"

namespace gaplab {

std::string to_string(Modality m) {
  switch (m) {
    case Modality::image: return "image";
    case Modality::text: return "text";
    case Modality::generic: return "generic";
  }
  return "generic";
}

Modality modality_from_string(const std::string& s) {
  if (s == "image") return Modality::image;
  if (s == "text") return Modality::text;
  if (s == "generic") return Modality::generic;
  throw ConfigError("unknown modality tag: " + s);
}

void EmbeddingSet::validate() const {
  if (rows.rows() < 1) throw Error("EmbeddingSet: need at least one row");
  if (rows.cols() < 2) throw Error("EmbeddingSet: dimension must be >= 2");
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    const double norm = rows.row(i).norm();
    if (std::abs(norm - 1.0) > kUnitNormTol) {
      throw Error("EmbeddingSet: row " + std::to_string(i) + " has norm " + std::to_string(norm));
    }
  }
}

void PairedEmbeddings::validate() const {
  images.validate();
  texts.validate();
  if (images.count() != texts.count()) throw Error("PairedEmbeddings: row count mismatch");
  if (images.dim() != texts.dim()) throw Error("PairedEmbeddings: dimension mismatch");
}

EmbeddingSet normalize_rows(const Matrix& m, Modality modality) {
  EmbeddingSet out;
  out.modality = modality;
  out.rows = m;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double norm = m.row(i).norm();
    if (norm < kZeroNormFloor) {
      throw ZeroVectorError("normalize_rows: row " + std::to_string(i) + " has norm below 1e-12");
    }
    out.rows.row(i) /= norm;
  }
  return out;
}

Vector centroid(const EmbeddingSet& set) {
  return set.rows.colwise().mean().transpose();
}

Vector overlap_shift(const EmbeddingSet& source, const EmbeddingSet& target) {
  return centroid(target) - centroid(source);
}

EmbeddingSet apply_shift(const EmbeddingSet& set, const Vector& shift) {
  Matrix shifted = set.rows;
  shifted.rowwise() += shift.transpose();
  return normalize_rows(shifted, set.modality);
}

EmbeddingSet translate_overlap(const EmbeddingSet& source, const EmbeddingSet& target) {
  if (source.dim() != target.dim()) {
    throw Error("translate_overlap: dimension mismatch");
  }
  return apply_shift(source, overlap_shift(source, target));
}

EmbeddingSet random_sphere_init(int n, int d, std::uint64_t seed, Modality modality) {
  Rng rng(seed);
  Matrix m(n, d);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      m(i, j) = rng.gaussian();
    }
  }
  return normalize_rows(m, modality);
}

EmbeddingSet random_cone_init(int n, int d, double spread, std::uint64_t seed, Modality modality) {
  Rng rng(seed);
  Vector center(d);
  for (Eigen::Index j = 0; j < d; ++j) center(j) = rng.gaussian();
  center.normalize();
  Matrix m(n, d);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      m(i, j) = center(j) + spread * rng.gaussian();
    }
  }
  return normalize_rows(m, modality);
}

Matrix backprop_row_normalization(const Matrix& prenorm, const Matrix& normalized,
                                  const Matrix& d_normalized) {
  const Vector dots = (d_normalized.array() * normalized.array()).rowwise().sum();
  Matrix d_prenorm = d_normalized - dots.asDiagonal() * normalized;
  const Vector norms = prenorm.rowwise().norm();
  d_prenorm.array().colwise() /= norms.array();
  return d_prenorm;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  if (ec != std::errc()) throw Error("format_double: conversion failed");
  return std::string(buf, ptr);
}

nlohmann::json to_json(const EmbeddingSet& set) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < set.count(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < set.dim(); ++j) row.push_back(set.rows(i, j));
    rows.push_back(std::move(row));
  }
  return nlohmann::json{
      {"modality", to_string(set.modality)},
      {"dim", set.dim()},
      {"rows", std::move(rows)},
  };
}

EmbeddingSet embedding_set_from_json(const nlohmann::json& j) {
  EmbeddingSet set;
  set.modality = modality_from_string(j.at("modality").get<std::string>());
  const auto dim = j.at("dim").get<Eigen::Index>();
  const auto& rows = j.at("rows");
  if (!rows.is_array() || rows.empty()) throw IoError("embedding set: empty rows array");
  set.rows.resize(static_cast<Eigen::Index>(rows.size()), dim);
  for (Eigen::Index i = 0; i < set.rows.rows(); ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(row.size()) != dim) {
      throw IoError("embedding set: row " + std::to_string(i) + " length mismatch");
    }
    for (Eigen::Index k = 0; k < dim; ++k) set.rows(i, k) = row[static_cast<std::size_t>(k)].get<double>();
  }
  set.validate();
  return set;
}

nlohmann::json to_json(const PairedEmbeddings& pairs) {
  return nlohmann::json{{"images", to_json(pairs.images)}, {"texts", to_json(pairs.texts)}};
}

PairedEmbeddings paired_embeddings_from_json(const nlohmann::json& j) {
  PairedEmbeddings pairs;
  pairs.images = embedding_set_from_json(j.at("images"));
  pairs.texts = embedding_set_from_json(j.at("texts"));
  pairs.validate();
  return pairs;
}

void write_embedding_csv(const EmbeddingSet& set, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  for (Eigen::Index i = 0; i < set.count(); ++i) {
    for (Eigen::Index j = 0; j < set.dim(); ++j) {
      if (j) out << ',';
      out << format_double(set.rows(i, j));
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

EmbeddingSet read_embedding_csv(const std::filesystem::path& path, Modality modality) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc()) throw IoError("bad number in " + path.string() + ": " + cell);
      (void)ptr;
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw IoError("ragged CSV in " + path.string());
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("empty CSV: " + path.string());
  EmbeddingSet set;
  set.modality = modality;
  set.rows.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index i = 0; i < set.rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < set.rows.cols(); ++j) {
      set.rows(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  set.validate();
  return set;
}

void write_json_file(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad JSON in " + path.string() + ": " + e.what());
  }
  return j;
}

}  // namespace gaplab

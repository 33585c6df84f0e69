#include "gaplab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <Eigen/SVD>
#include <nlohmann/json.hpp>

#include "gaplab/rng.hpp"

namespace gaplab {

double centroid_distance(const PairedEmbeddings& pairs) {
  return (centroid(pairs.images) - centroid(pairs.texts)).norm();
}

double linear_separability(const PairedEmbeddings& pairs, std::uint64_t seed) {
  const auto n = pairs.count();
  if (n < 10) throw TooFewSamplesError("linear_separability needs N >= 10");
  const auto d = pairs.dim();
  const auto total = 2 * n;

  Matrix x(total, d);
  x.topRows(n) = pairs.images.rows;
  x.bottomRows(n) = pairs.texts.rows;
  Vector y(total);
  y.head(n).setZero();
  y.tail(n).setOnes();

  Rng rng(seed);
  const std::vector<int> perm = rng.permutation(static_cast<int>(total));
  const auto train_count = static_cast<Eigen::Index>(0.8 * static_cast<double>(total));

  Matrix xtr(train_count, d);
  Vector ytr(train_count);
  for (Eigen::Index i = 0; i < train_count; ++i) {
    xtr.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
    ytr(i) = y(perm[static_cast<std::size_t>(i)]);
  }

  Vector w = Vector::Zero(d);
  double b = 0.0;
  const double lr = 0.1;
  const double inv_m = 1.0 / static_cast<double>(train_count);
  for (int iter = 0; iter < 500; ++iter) {
    const Vector z = xtr * w + Vector::Constant(train_count, b);
    const Vector p = (1.0 / (1.0 + (-z.array()).exp())).matrix();
    const Vector err = p - ytr;
    w -= lr * inv_m * (xtr.transpose() * err);
    b -= lr * inv_m * err.sum();
  }

  Eigen::Index hits = 0;
  const auto test_count = total - train_count;
  for (Eigen::Index i = train_count; i < total; ++i) {
    const auto idx = perm[static_cast<std::size_t>(i)];
    const double z = x.row(idx).dot(w) + b;
    const double predicted = z >= 0.0 ? 1.0 : 0.0;
    if (predicted == y(idx)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(test_count);
}

double retrieval_accuracy(const PairedEmbeddings& pairs, int k, RetrievalDirection direction) {
  const auto n = pairs.count();
  if (k < 1 || k > n) throw Error("retrieval_accuracy: k must be in [1, N]");
  const Matrix& queries = direction == RetrievalDirection::i2t ? pairs.images.rows : pairs.texts.rows;
  const Matrix& targets = direction == RetrievalDirection::i2t ? pairs.texts.rows : pairs.images.rows;
  const Matrix scores = queries * targets.transpose();

  Eigen::Index hits = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double own = scores(j, j);
    // Rank of the matched row under descending score, lower index first on ties.
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (scores(j, i) > own || (scores(j, i) == own && i < j)) ++rank;
    }
    if (rank < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

Vector pca_explained_variance(const PairedEmbeddings& pairs) {
  const auto n = pairs.count();
  Matrix stacked(2 * n, pairs.dim());
  stacked.topRows(n) = pairs.images.rows;
  stacked.bottomRows(n) = pairs.texts.rows;
  stacked.rowwise() -= stacked.colwise().mean();

  Eigen::BDCSVD<Matrix> svd(stacked);
  Vector sv = svd.singularValues();
  const double total = sv.array().square().sum();
  if (total <= 0.0) throw DegenerateDataError("pca: zero total variance (all rows identical)");
  return (sv.array().square() / total).matrix();
}

GapReport gap_report(const PairedEmbeddings& pairs, const LossConfig& cfg, std::uint64_t seed) {
  GapReport report;
  report.centroid_distance = centroid_distance(pairs);
  report.linear_separability = linear_separability(pairs, seed);
  report.uniform = uniform_total(pairs, cfg.uniform_include_self);
  report.xuniform = xuniform_loss(pairs);
  report.align = align_loss(pairs);
  for (int k : {1, 5, 10}) {
    report.retrieval_i2t[k] = retrieval_accuracy(pairs, k, RetrievalDirection::i2t);
    report.retrieval_t2i[k] = retrieval_accuracy(pairs, k, RetrievalDirection::t2i);
  }
  report.pca_explained = pca_explained_variance(pairs);
  return report;
}

nlohmann::json to_json(const GapReport& report) {
  nlohmann::json i2t = nlohmann::json::object();
  nlohmann::json t2i = nlohmann::json::object();
  for (const auto& [k, v] : report.retrieval_i2t) i2t[std::to_string(k)] = v;
  for (const auto& [k, v] : report.retrieval_t2i) t2i[std::to_string(k)] = v;
  nlohmann::json pca = nlohmann::json::array();
  for (Eigen::Index i = 0; i < report.pca_explained.size(); ++i) pca.push_back(report.pca_explained(i));
  return nlohmann::json{
      {"centroid_distance", report.centroid_distance},
      {"linear_separability", report.linear_separability},
      {"uniform", report.uniform},
      {"xuniform", report.xuniform},
      {"align", report.align},
      {"retrieval_i2t", std::move(i2t)},
      {"retrieval_t2i", std::move(t2i)},
      {"pca_explained", std::move(pca)},
  };
}

GapReport gap_report_from_json(const nlohmann::json& j) {
  GapReport report;
  report.centroid_distance = j.at("centroid_distance").get<double>();
  report.linear_separability = j.at("linear_separability").get<double>();
  report.uniform = j.at("uniform").get<double>();
  report.xuniform = j.at("xuniform").get<double>();
  report.align = j.at("align").get<double>();
  for (const auto& [key, v] : j.at("retrieval_i2t").items()) {
    report.retrieval_i2t[std::stoi(key)] = v.get<double>();
  }
  for (const auto& [key, v] : j.at("retrieval_t2i").items()) {
    report.retrieval_t2i[std::stoi(key)] = v.get<double>();
  }
  const auto& pca = j.at("pca_explained");
  report.pca_explained.resize(static_cast<Eigen::Index>(pca.size()));
  for (Eigen::Index i = 0; i < report.pca_explained.size(); ++i) {
    report.pca_explained(i) = pca[static_cast<std::size_t>(i)].get<double>();
  }
  return report;
}

std::string report_csv_header() {
  return "step,centroid_distance,linear_sep,uniform,xuniform,align,"
         "i2t@1,i2t@5,i2t@10,t2i@1,t2i@5,t2i@10";
}

std::string report_csv_row(const GapReport& report, long step) {
  std::ostringstream out;
  out << step << ',' << format_double(report.centroid_distance) << ','
      << format_double(report.linear_separability) << ',' << format_double(report.uniform) << ','
      << format_double(report.xuniform) << ',' << format_double(report.align);
  for (const auto* table : {&report.retrieval_i2t, &report.retrieval_t2i}) {
    for (int k : {1, 5, 10}) {
      out << ',' << format_double(table->at(k));
    }
  }
  return out.str();
}

void write_report_csv(const GapReport& report, long step, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << report_csv_header() << '\n' << report_csv_row(report, step) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

void write_pca_csv(const Vector& ratios, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "component_index,ratio,cumulative\n";
  double cumulative = 0.0;
  for (Eigen::Index i = 0; i < ratios.size(); ++i) {
    cumulative += ratios(i);
    out << i << ',' << format_double(ratios(i)) << ',' << format_double(cumulative) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace gaplab

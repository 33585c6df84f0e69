#pragma once

#include <cstdint>
#include <filesystem>
#include <map>

#include <nlohmann/json_fwd.hpp>

#include "gaplab/embedding.hpp"
#include "gaplab/losses.hpp"

namespace gaplab {

enum class RetrievalDirection { i2t, t2i };

/// One snapshot's worth of gap diagnostics.
struct GapReport {
  double centroid_distance = 0.0;      // in [0, 2]
  double linear_separability = 0.0;    // held-out probe accuracy in [0, 1]
  double uniform = 0.0;                // in-modal uniformity (mean of both sides)
  double xuniform = 0.0;
  double align = 0.0;
  std::map<int, double> retrieval_i2t; // k -> accuracy, k in {1, 5, 10}
  std::map<int, double> retrieval_t2i;
  Vector pca_explained;                // non-increasing ratios summing to 1
};

/// Euclidean distance between the two modality centroids (unsquared norm,
/// which is what keeps the range [0, 2]).
double centroid_distance(const PairedEmbeddings& pairs);

/// Held-out accuracy of a logistic-regression probe telling the modalities
/// apart: labels image=0 / text=1, deterministic 80/20 shuffle by seed,
/// full-batch gradient descent, 500 iterations, learning rate 0.1, bias term,
/// no regularization. Throws TooFewSamplesError when N < 10.
double linear_separability(const PairedEmbeddings& pairs, std::uint64_t seed);

/// Top-k retrieval by inner product (cosine on unit rows): query j hits when
/// its own pair ranks in the top k. Ties break toward the lower index.
double retrieval_accuracy(const PairedEmbeddings& pairs, int k, RetrievalDirection direction);

/// Explained-variance ratios of the stacked (2N) x d matrix after column
/// centering, sorted descending. Throws DegenerateDataError when the stacked
/// rows carry zero variance.
Vector pca_explained_variance(const PairedEmbeddings& pairs);

/// Bundles every metric plus the loss-term values into one record.
GapReport gap_report(const PairedEmbeddings& pairs, const LossConfig& cfg, std::uint64_t seed);

nlohmann::json to_json(const GapReport& report);
GapReport gap_report_from_json(const nlohmann::json& j);

/// One header row plus one data row: step, centroid_distance, linear_sep,
/// uniform, xuniform, align, i2t@1, i2t@5, i2t@10, t2i@1, t2i@5, t2i@10.
void write_report_csv(const GapReport& report, long step, const std::filesystem::path& path);

/// component_index, ratio, cumulative.
void write_pca_csv(const Vector& ratios, const std::filesystem::path& path);

std::string report_csv_header();
std::string report_csv_row(const GapReport& report, long step);

}  // namespace gaplab

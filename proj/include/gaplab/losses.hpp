#pragma once

#include <map>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "gaplab/embedding.hpp"

namespace gaplab {

/// Temperature and per-term weights. A term is enabled iff its weight is
/// positive; the stock composites enable each extra term with unit weight.
struct LossConfig {
  double temperature = 0.01;
  double w_clip = 1.0;
  double w_uniform = 0.0;
  double w_xuniform = 0.0;
  double w_align = 0.0;
  // The in-modal uniformity sum keeps the j == k self terms as written; this
  // switch drops them for sensitivity runs.
  bool uniform_include_self = true;

  static LossConfig clip_only(double tau = 0.01);
  static LossConfig cua(double tau = 0.01);     // clip + uniform + align
  static LossConfig cuaxu(double tau = 0.01);   // cua + cross-modal uniform

  void validate() const;
};

/// Weighted total plus the unweighted value of every enabled term
/// (keys: "clip", "uniform", "xuniform", "align").
struct LossValue {
  double total = 0.0;
  std::map<std::string, double> per_term;

  double term(const std::string& name) const;
  bool has_term(const std::string& name) const;
};

/// Ambient (Euclidean) gradients with respect to every embedding row.
/// Tangent projection onto the sphere is the optimizer's job.
struct LossGradient {
  Matrix d_images;
  Matrix d_texts;
};

/// Symmetric two-direction contrastive cross-entropy: the left term contrasts
/// each image against all texts, the right term each text against all images.
/// Log-sum-exp runs with max subtraction; throws NumericalOverflowError if the
/// stabilized value still comes out non-finite.
LossValue clip_loss(const PairedEmbeddings& pairs, const LossConfig& cfg);

/// log((1/N) sum_j sum_k exp(-2 ||E_j - E_k||^2)); both indices cover 1..N,
/// including j == k unless include_self is false.
double uniform_loss(const EmbeddingSet& set, bool include_self = true);

/// Mean of the two in-modal uniformity values.
double uniform_total(const PairedEmbeddings& pairs, bool include_self = true);

/// Cross-modal uniformity over the N(N-1) mismatched image/text pairs.
/// Throws DegenerateBatchError when N < 2 (the sum would be empty).
double xuniform_loss(const PairedEmbeddings& pairs);

/// Mean squared distance between positive pairs; range [0, 4] on the sphere.
double align_loss(const PairedEmbeddings& pairs);

/// Weighted sum of the enabled terms; per_term holds unweighted values.
/// Terms with weight 0 are skipped entirely (their preconditions included).
LossValue composite_loss(const PairedEmbeddings& pairs, const LossConfig& cfg);

/// Analytic gradient of composite_loss for every image and text row.
LossGradient composite_gradient(const PairedEmbeddings& pairs, const LossConfig& cfg);

nlohmann::json to_json(const LossValue& value);

}  // namespace gaplab

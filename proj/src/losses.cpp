#include "gaplab/losses.hpp"

#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

namespace gaplab {

LossConfig LossConfig::clip_only(double tau) {
  LossConfig cfg;
  cfg.temperature = tau;
  return cfg;
}

LossConfig LossConfig::cua(double tau) {
  LossConfig cfg;
  cfg.temperature = tau;
  cfg.w_uniform = 1.0;
  cfg.w_align = 1.0;
  return cfg;
}

LossConfig LossConfig::cuaxu(double tau) {
  LossConfig cfg = cua(tau);
  cfg.w_xuniform = 1.0;
  return cfg;
}

void LossConfig::validate() const {
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (w_clip < 0.0 || w_uniform < 0.0 || w_xuniform < 0.0 || w_align < 0.0) {
    throw ConfigError("loss weights must be nonnegative");
  }
  if (w_clip + w_uniform + w_xuniform + w_align <= 0.0) {
    throw ConfigError("at least one loss weight must be positive");
  }
}

double LossValue::term(const std::string& name) const {
  const auto it = per_term.find(name);
  if (it == per_term.end()) throw Error("LossValue: no term named " + name);
  return it->second;
}

bool LossValue::has_term(const std::string& name) const {
  return per_term.count(name) > 0;
}

namespace {

// Row-wise log-sum-exp with max subtraction. Returns lse(i) for each row.
Vector row_logsumexp(const Matrix& a) {
  Vector lse(a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double m = a.row(i).maxCoeff();
    lse(i) = m + std::log((a.row(i).array() - m).exp().sum());
  }
  return lse;
}

struct ClipParts {
  double value = 0.0;
  Matrix sims_over_tau;  // N x N, entry (j,k) = <I_j, T_k> / tau
  Vector row_lse;        // over k for each image j
  Vector col_lse;        // over j for each text k
};

ClipParts clip_parts(const PairedEmbeddings& pairs, double tau) {
  const auto n = pairs.count();
  ClipParts parts;
  parts.sims_over_tau = (pairs.images.rows * pairs.texts.rows.transpose()) / tau;
  parts.row_lse = row_logsumexp(parts.sims_over_tau);
  parts.col_lse = row_logsumexp(parts.sims_over_tau.transpose());
  const double diag_sum = parts.sims_over_tau.diagonal().sum();
  parts.value = (parts.row_lse.sum() - diag_sum + parts.col_lse.sum() - diag_sum) /
                (2.0 * static_cast<double>(n));
  if (!std::isfinite(parts.value)) {
    throw NumericalOverflowError("clip loss is non-finite; temperature too small for input spread");
  }
  return parts;
}

double clip_value(const PairedEmbeddings& pairs, double tau) {
  return clip_parts(pairs, tau).value;
}

// Squared pairwise distances between rows of a and rows of b, with no
// unit-norm assumption so finite-difference probes stay exact.
Matrix squared_distances(const Matrix& a, const Matrix& b) {
  const Vector an = a.rowwise().squaredNorm();
  const Vector bn = b.rowwise().squaredNorm();
  Matrix d2 = -2.0 * (a * b.transpose());
  d2.colwise() += an;
  d2.rowwise() += bn.transpose();
  return d2.cwiseMax(0.0);
}

struct UniformParts {
  double value = 0.0;
  Matrix kernel;       // exp(-2 d^2), diagonal zeroed
  double kernel_sum = 0.0;  // includes self terms when requested
};

UniformParts uniform_parts(const Matrix& rows, bool include_self) {
  const auto n = rows.rows();
  UniformParts parts;
  parts.kernel = (-2.0 * squared_distances(rows, rows)).array().exp().matrix();
  parts.kernel.diagonal().setZero();
  parts.kernel_sum = parts.kernel.sum() + (include_self ? static_cast<double>(n) : 0.0);
  parts.value = std::log(parts.kernel_sum / static_cast<double>(n));
  return parts;
}

struct XUniformParts {
  double value = 0.0;
  Matrix kernel;       // exp(-2 ||I_j - T_k||^2), diagonal zeroed
  double kernel_sum = 0.0;
};

XUniformParts xuniform_parts(const PairedEmbeddings& pairs) {
  if (pairs.count() < 2) {
    throw DegenerateBatchError("cross-modal uniformity needs at least 2 pairs");
  }
  XUniformParts parts;
  parts.kernel = (-2.0 * squared_distances(pairs.images.rows, pairs.texts.rows)).array().exp().matrix();
  parts.kernel.diagonal().setZero();
  parts.kernel_sum = parts.kernel.sum();
  parts.value = std::log(parts.kernel_sum / static_cast<double>(pairs.count()));
  return parts;
}

}  // namespace

LossValue clip_loss(const PairedEmbeddings& pairs, const LossConfig& cfg) {
  const double value = clip_value(pairs, cfg.temperature);
  return LossValue{value, {{"clip", value}}};
}

double uniform_loss(const EmbeddingSet& set, bool include_self) {
  return uniform_parts(set.rows, include_self).value;
}

double uniform_total(const PairedEmbeddings& pairs, bool include_self) {
  return 0.5 * (uniform_loss(pairs.images, include_self) + uniform_loss(pairs.texts, include_self));
}

double xuniform_loss(const PairedEmbeddings& pairs) {
  return xuniform_parts(pairs).value;
}

double align_loss(const PairedEmbeddings& pairs) {
  return (pairs.images.rows - pairs.texts.rows).rowwise().squaredNorm().mean();
}

LossValue composite_loss(const PairedEmbeddings& pairs, const LossConfig& cfg) {
  cfg.validate();
  LossValue out;
  if (cfg.w_clip > 0.0) {
    const double v = clip_value(pairs, cfg.temperature);
    out.per_term["clip"] = v;
    out.total += cfg.w_clip * v;
  }
  if (cfg.w_uniform > 0.0) {
    const double v = uniform_total(pairs, cfg.uniform_include_self);
    out.per_term["uniform"] = v;
    out.total += cfg.w_uniform * v;
  }
  if (cfg.w_xuniform > 0.0) {
    const double v = xuniform_loss(pairs);
    out.per_term["xuniform"] = v;
    out.total += cfg.w_xuniform * v;
  }
  if (cfg.w_align > 0.0) {
    const double v = align_loss(pairs);
    out.per_term["align"] = v;
    out.total += cfg.w_align * v;
  }
  return out;
}

LossGradient composite_gradient(const PairedEmbeddings& pairs, const LossConfig& cfg) {
  cfg.validate();
  const auto n = pairs.count();
  const auto d = pairs.dim();
  const double nn = static_cast<double>(n);

  LossGradient grad;
  grad.d_images = Matrix::Zero(n, d);
  grad.d_texts = Matrix::Zero(n, d);

  if (cfg.w_clip > 0.0) {
    const ClipParts parts = clip_parts(pairs, cfg.temperature);
    // Softmax over texts per image (rows) and over images per text (columns).
    const Matrix p = (parts.sims_over_tau.colwise() - parts.row_lse).array().exp().matrix();
    const Matrix q = (parts.sims_over_tau.rowwise() - parts.col_lse.transpose()).array().exp().matrix();
    Matrix g = p + q;
    g.diagonal().array() -= 2.0;
    g *= cfg.w_clip / (2.0 * nn * cfg.temperature);
    grad.d_images += g * pairs.texts.rows;
    grad.d_texts += g.transpose() * pairs.images.rows;
  }

  if (cfg.w_uniform > 0.0) {
    // d/dE_a log((1/N) sum exp(-2 d^2)) = -(8/W) sum_k w_ak (E_a - E_k);
    // the 1/2 in uniform_total and the per-modality weight fold into scale.
    for (int side = 0; side < 2; ++side) {
      const Matrix& rows = side == 0 ? pairs.images.rows : pairs.texts.rows;
      Matrix& target = side == 0 ? grad.d_images : grad.d_texts;
      const UniformParts parts = uniform_parts(rows, cfg.uniform_include_self);
      const Vector row_sums = parts.kernel.rowwise().sum();
      const double scale = cfg.w_uniform * 0.5 * (-8.0) / parts.kernel_sum;
      target += scale * (row_sums.asDiagonal() * rows - parts.kernel * rows);
    }
  }

  if (cfg.w_xuniform > 0.0) {
    const XUniformParts parts = xuniform_parts(pairs);
    const Vector row_sums = parts.kernel.rowwise().sum();
    const Vector col_sums = parts.kernel.colwise().sum().transpose();
    const double scale = cfg.w_xuniform * (-4.0) / parts.kernel_sum;
    grad.d_images += scale * (row_sums.asDiagonal() * pairs.images.rows - parts.kernel * pairs.texts.rows);
    grad.d_texts += scale * (col_sums.asDiagonal() * pairs.texts.rows - parts.kernel.transpose() * pairs.images.rows);
  }

  if (cfg.w_align > 0.0) {
    const Matrix diff = (2.0 * cfg.w_align / nn) * (pairs.images.rows - pairs.texts.rows);
    grad.d_images += diff;
    grad.d_texts -= diff;
  }

  if (!grad.d_images.allFinite() || !grad.d_texts.allFinite()) {
    throw NumericalOverflowError("composite gradient is non-finite");
  }
  return grad;
}

nlohmann::json to_json(const LossValue& value) {
  nlohmann::json terms = nlohmann::json::object();
  for (const auto& [name, v] : value.per_term) terms[name] = v;
  return nlohmann::json{{"total", value.total}, {"terms", std::move(terms)}};
}

}  // namespace gaplab

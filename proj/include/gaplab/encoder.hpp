#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gaplab/embedding.hpp"

namespace gaplab {

/// Small feed-forward tower: affine layers with tanh between them and a final
/// row normalization onto the sphere. Stands in for a full encoder.
struct TinyEncoder {
  struct Layer {
    Matrix weight;  // out x in
    Vector bias;    // out
  };

  std::vector<Layer> layers;
  std::uint64_t seed = 0;

  Eigen::Index input_dim() const { return layers.front().weight.cols(); }
  Eigen::Index output_dim() const { return layers.back().weight.rows(); }
  std::vector<int> dims() const;
};

// Bias draws use this standard deviation. Randomly initialized towers then
// emit outputs concentrated in a narrow cone whose axis varies with the seed,
// which is the behavior the twin-encoder experiments rely on.
inline constexpr double kEncoderBiasStd = 1.0;

/// Weights i.i.d. Gaussian scaled by 1/sqrt(fan_in), biases Gaussian with
/// kEncoderBiasStd. Deterministic per seed.
TinyEncoder encoder_init(const std::vector<int>& dims, std::uint64_t seed);

/// The desk-scale default: input -> 64 -> 64 -> output.
TinyEncoder default_encoder(int input_dim, int output_dim, std::uint64_t seed);

/// Intermediate state retained for backpropagation.
struct ForwardCache {
  std::vector<Matrix> activations;  // [0] = input, then each post-tanh layer output
  Matrix prenorm;                   // last affine output, before row normalization
  Matrix output;                    // unit-norm rows
};

/// Affine/tanh chain with final row normalization. Throws ZeroVectorError if
/// a pre-normalization row degenerates.
EmbeddingSet encoder_forward(const TinyEncoder& enc, const Matrix& batch,
                             Modality modality = Modality::generic,
                             ForwardCache* cache = nullptr);

using EncoderGradients = std::vector<TinyEncoder::Layer>;

/// Gradients for every weight and bias given d_output = dLoss/d(unit output).
EncoderGradients encoder_backward(const TinyEncoder& enc, const ForwardCache& cache,
                                  const Matrix& d_output);

/// (mean pairwise cosine over unordered pairs, centroid norm). Both near 1
/// for a narrow cone, near 0 for a uniform spread.
std::pair<double, double> cone_stats(const EmbeddingSet& set);

nlohmann::json to_json(const TinyEncoder& enc);
TinyEncoder encoder_from_json(const nlohmann::json& j);

/// Paired input features for the twin towers. Row j of image_features is the
/// positive pair of row j of text_features.
struct SyntheticDataset {
  Matrix image_features;
  Matrix text_features;

  Eigen::Index count() const { return image_features.rows(); }
  Eigen::Index feature_dim() const { return image_features.cols(); }
};

/// Pair j = (x_j, x_j): one modality, no mismatched pairs.
SyntheticDataset make_identical_pairs(int count, int feature_dim, std::uint64_t seed);

/// Pair j = (x_j, A x_j + sigma * noise) for a fixed random linear map A.
/// Learnable but imperfect correspondence.
SyntheticDataset make_mapped_pairs(int count, int feature_dim, double noise_sigma,
                                   std::uint64_t seed);

}  // namespace gaplab

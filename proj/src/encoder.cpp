#include "gaplab/encoder.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "gaplab/rng.hpp"

namespace gaplab {

std::vector<int> TinyEncoder::dims() const {
  std::vector<int> out;
  out.push_back(static_cast<int>(input_dim()));
  for (const auto& layer : layers) out.push_back(static_cast<int>(layer.weight.rows()));
  return out;
}

TinyEncoder encoder_init(const std::vector<int>& dims, std::uint64_t seed) {
  if (dims.size() < 3) throw ConfigError("encoder_init: need at least two layers");
  if (dims.back() < 2) throw ConfigError("encoder_init: output dimension must be >= 2");
  Rng rng(seed);
  TinyEncoder enc;
  enc.seed = seed;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int fan_in = dims[l];
    const int fan_out = dims[l + 1];
    if (fan_in < 1 || fan_out < 1) throw ConfigError("encoder_init: nonpositive layer width");
    TinyEncoder::Layer layer;
    layer.weight.resize(fan_out, fan_in);
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) {
        layer.weight(i, j) = scale * rng.gaussian();
      }
    }
    layer.bias.resize(fan_out);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
      layer.bias(i) = kEncoderBiasStd * rng.gaussian();
    }
    enc.layers.push_back(std::move(layer));
  }
  return enc;
}

TinyEncoder default_encoder(int input_dim, int output_dim, std::uint64_t seed) {
  return encoder_init({input_dim, 64, 64, output_dim}, seed);
}

EmbeddingSet encoder_forward(const TinyEncoder& enc, const Matrix& batch, Modality modality,
                             ForwardCache* cache) {
  if (batch.cols() != enc.input_dim()) throw Error("encoder_forward: feature width mismatch");
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.activations.clear();
  c.activations.push_back(batch);

  Matrix h = batch;
  const std::size_t last = enc.layers.size() - 1;
  for (std::size_t l = 0; l < enc.layers.size(); ++l) {
    Matrix z = h * enc.layers[l].weight.transpose();
    z.rowwise() += enc.layers[l].bias.transpose();
    if (l < last) {
      h = z.array().tanh().matrix();
      c.activations.push_back(h);
    } else {
      c.prenorm = std::move(z);
    }
  }
  EmbeddingSet out = normalize_rows(c.prenorm, modality);
  c.output = out.rows;
  return out;
}

EncoderGradients encoder_backward(const TinyEncoder& enc, const ForwardCache& cache,
                                  const Matrix& d_output) {
  const std::size_t layer_count = enc.layers.size();
  EncoderGradients grads(layer_count);

  Matrix dz = backprop_row_normalization(cache.prenorm, cache.output, d_output);
  for (std::size_t l = layer_count; l-- > 0;) {
    const Matrix& input = cache.activations[l];
    grads[l].weight = dz.transpose() * input;
    grads[l].bias = dz.colwise().sum().transpose();
    if (l > 0) {
      const Matrix dh = dz * enc.layers[l].weight;
      // activations[l] is the post-tanh output feeding layer l.
      dz = (dh.array() * (1.0 - cache.activations[l].array().square())).matrix();
    }
  }
  return grads;
}

std::pair<double, double> cone_stats(const EmbeddingSet& set) {
  const auto n = set.count();
  if (n < 2) throw Error("cone_stats: need at least 2 rows");
  const Vector sum = set.rows.colwise().sum().transpose();
  const double nn = static_cast<double>(n);
  // ||sum||^2 = N + 2 * sum of pairwise cosines for unit rows.
  const double mean_cos = (sum.squaredNorm() - nn) / (nn * (nn - 1.0));
  return {mean_cos, sum.norm() / nn};
}

nlohmann::json to_json(const TinyEncoder& enc) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : enc.layers) {
    nlohmann::json w = nlohmann::json::array();
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) row.push_back(layer.weight(i, j));
      w.push_back(std::move(row));
    }
    nlohmann::json b = nlohmann::json::array();
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) b.push_back(layer.bias(i));
    layers.push_back(nlohmann::json{{"w", std::move(w)}, {"b", std::move(b)}});
  }
  nlohmann::json dims = nlohmann::json::array();
  for (int d : enc.dims()) dims.push_back(d);
  return nlohmann::json{{"dims", std::move(dims)}, {"layers", std::move(layers)}, {"seed", enc.seed}};
}

TinyEncoder encoder_from_json(const nlohmann::json& j) {
  TinyEncoder enc;
  enc.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& jl : j.at("layers")) {
    TinyEncoder::Layer layer;
    const auto& w = jl.at("w");
    const auto rows = static_cast<Eigen::Index>(w.size());
    if (rows == 0) throw IoError("encoder checkpoint: empty weight matrix");
    const auto cols = static_cast<Eigen::Index>(w[0].size());
    layer.weight.resize(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      if (static_cast<Eigen::Index>(w[static_cast<std::size_t>(i)].size()) != cols) {
        throw IoError("encoder checkpoint: ragged weight matrix");
      }
      for (Eigen::Index k = 0; k < cols; ++k) {
        layer.weight(i, k) = w[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)].get<double>();
      }
    }
    const auto& b = jl.at("b");
    if (static_cast<Eigen::Index>(b.size()) != rows) {
      throw IoError("encoder checkpoint: bias length mismatch");
    }
    layer.bias.resize(rows);
    for (Eigen::Index i = 0; i < rows; ++i) layer.bias(i) = b[static_cast<std::size_t>(i)].get<double>();
    enc.layers.push_back(std::move(layer));
  }
  if (enc.layers.empty()) throw IoError("encoder checkpoint: no layers");
  for (std::size_t l = 0; l + 1 < enc.layers.size(); ++l) {
    if (enc.layers[l].weight.rows() != enc.layers[l + 1].weight.cols()) {
      throw IoError("encoder checkpoint: layer shapes do not chain");
    }
  }
  return enc;
}

SyntheticDataset make_identical_pairs(int count, int feature_dim, std::uint64_t seed) {
  Rng rng(seed);
  SyntheticDataset data;
  data.image_features.resize(count, feature_dim);
  for (Eigen::Index i = 0; i < data.image_features.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.image_features.cols(); ++j) {
      data.image_features(i, j) = rng.gaussian();
    }
  }
  data.text_features = data.image_features;
  return data;
}

SyntheticDataset make_mapped_pairs(int count, int feature_dim, double noise_sigma,
                                   std::uint64_t seed) {
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(feature_dim));
  Matrix map(feature_dim, feature_dim);
  for (Eigen::Index i = 0; i < map.rows(); ++i) {
    for (Eigen::Index j = 0; j < map.cols(); ++j) map(i, j) = scale * rng.gaussian();
  }
  SyntheticDataset data;
  data.image_features.resize(count, feature_dim);
  for (Eigen::Index i = 0; i < data.image_features.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.image_features.cols(); ++j) {
      data.image_features(i, j) = rng.gaussian();
    }
  }
  data.text_features = data.image_features * map.transpose();
  for (Eigen::Index i = 0; i < data.text_features.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.text_features.cols(); ++j) {
      data.text_features(i, j) += noise_sigma * rng.gaussian();
    }
  }
  return data;
}

}  // namespace gaplab

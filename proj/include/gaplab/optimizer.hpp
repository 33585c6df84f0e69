#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gaplab/encoder.hpp"
#include "gaplab/losses.hpp"
#include "gaplab/metrics.hpp"

namespace gaplab {

enum class Algorithm { sgd, adam };

std::string to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& s);

struct OptimizerConfig {
  Algorithm algorithm = Algorithm::sgd;
  double learning_rate = 0.5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.99;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;  // applied to encoder parameters only, never to embeddings
  int batch_size = 64;
  long max_steps = 10000;
  long max_epochs = 0;  // 0 = step-capped only
  long snapshot_every = 100;
  std::uint64_t seed = 0;

  // Snapshots at these epoch boundaries keep a full embedding dump.
  std::vector<long> embedding_dump_epochs;
  bool record_final_embeddings = false;

  // Stop once the named full-data loss term drops to the threshold
  // (checked at snapshot points).
  std::optional<std::pair<std::string, double>> stop_when_below;

  // Sensitivity switch: apply the init-time overlap shift only to the step-0
  // state instead of holding it through training.
  bool drop_shift_after_init = false;

  static OptimizerConfig free_point_defaults();  // SGD, lr 0.5
  static OptimizerConfig encoder_defaults();     // Adam, lr 1e-3, weight decay 0.1
  void validate() const;
};

struct TrajectorySnapshot {
  long step = 0;
  long epoch = 0;  // completed passes over the data
  LossValue loss;  // full-data composite loss
  GapReport report;
  std::optional<PairedEmbeddings> embeddings;
};

struct Trajectory {
  std::vector<TrajectorySnapshot> snapshots;
  PairedEmbeddings final_embeddings;
  long total_steps = 0;

  const TrajectorySnapshot& front() const { return snapshots.front(); }
  const TrajectorySnapshot& back() const { return snapshots.back(); }
};

/// Minibatch descent directly on the embedding rows: per step, tangent-project
/// the ambient gradient, update the selected rows, and re-project them to the
/// sphere. Batches are drawn without replacement per epoch and reshuffled per
/// epoch by seed. Uniformity terms see the minibatch as their N.
Trajectory optimize_free_points(const PairedEmbeddings& init, const LossConfig& loss_cfg,
                                const OptimizerConfig& opt_cfg);

struct EncoderRun {
  Trajectory trajectory;
  TinyEncoder image_encoder;
  TinyEncoder text_encoder;
  Vector output_shift;  // zero when overlap_at_init was off
};

/// Joint minibatch training of the twin towers on the composite loss. With
/// overlap_at_init, the text tower's outputs are shifted onto the image
/// tower's cone by a translation computed once from full-data embeddings
/// before step 0 and held fixed thereafter.
EncoderRun optimize_encoders(const TinyEncoder& enc_images, const TinyEncoder& enc_texts,
                             const SyntheticDataset& data, const LossConfig& loss_cfg,
                             const OptimizerConfig& opt_cfg, bool overlap_at_init);

/// Writes metrics.csv (one row per snapshot), pca.csv for the final snapshot,
/// pointcloud_epoch_<k>.json for 3-d snapshots that carry embeddings, and
/// embeddings_step_<s>.json dumps for higher-dimensional ones.
void emit_trajectory(const Trajectory& traj, const std::filesystem::path& dir);

std::string trajectory_csv_header();
std::string trajectory_csv_row(const TrajectorySnapshot& snap);

}  // namespace gaplab

#include "gaplab/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gaplab/rng.hpp"

namespace gaplab {

std::string to_string(Algorithm a) {
  return a == Algorithm::sgd ? "sgd" : "adam";
}

Algorithm algorithm_from_string(const std::string& s) {
  if (s == "sgd") return Algorithm::sgd;
  if (s == "adam") return Algorithm::adam;
  throw ConfigError("unknown algorithm: " + s);
}

OptimizerConfig OptimizerConfig::free_point_defaults() {
  OptimizerConfig cfg;
  cfg.algorithm = Algorithm::sgd;
  cfg.learning_rate = 0.5;
  return cfg;
}

OptimizerConfig OptimizerConfig::encoder_defaults() {
  OptimizerConfig cfg;
  cfg.algorithm = Algorithm::adam;
  cfg.learning_rate = 1e-3;
  cfg.weight_decay = 0.1;
  return cfg;
}

void OptimizerConfig::validate() const {
  if (learning_rate < 0.0) throw ConfigError("learning rate must be nonnegative");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in (0, 1)");
  }
  if (max_steps < 0 || max_epochs < 0) throw ConfigError("step/epoch caps must be nonnegative");
  if (snapshot_every < 1) throw ConfigError("snapshot_every must be >= 1");
  if (weight_decay < 0.0) throw ConfigError("weight decay must be nonnegative");
}

namespace {

// Shared bookkeeping for both training modes: snapshot cadence, the
// divergence guard, and the optional stop-below rule.
class TrajectoryRecorder {
 public:
  TrajectoryRecorder(const LossConfig& loss_cfg, const OptimizerConfig& opt_cfg, long steps_per_epoch)
      : loss_cfg_(loss_cfg), opt_cfg_(opt_cfg), steps_per_epoch_(steps_per_epoch) {}

  // Returns true when training should stop.
  bool snapshot(const PairedEmbeddings& pairs, long step, long epoch) {
    TrajectorySnapshot snap;
    snap.step = step;
    snap.epoch = epoch;
    snap.loss = composite_loss(pairs, loss_cfg_);
    snap.report = gap_report(pairs, loss_cfg_,
                             split_seed(opt_cfg_.seed, "separability", static_cast<std::uint64_t>(step)));
    const bool epoch_boundary = steps_per_epoch_ > 0 && step % steps_per_epoch_ == 0;
    const bool dump = epoch_boundary &&
                      std::find(opt_cfg_.embedding_dump_epochs.begin(), opt_cfg_.embedding_dump_epochs.end(),
                                epoch) != opt_cfg_.embedding_dump_epochs.end();
    if (dump) snap.embeddings = pairs;

    if (trajectory_.snapshots.empty()) {
      initial_total_ = snap.loss.total;
    } else if (snap.loss.total > 10.0 * std::max(1.0, std::abs(initial_total_))) {
      throw DivergenceError("full-data loss " + std::to_string(snap.loss.total) +
                            " exceeds 10x its initial value " + std::to_string(initial_total_));
    }

    bool stop = false;
    if (opt_cfg_.stop_when_below) {
      const auto& [term, threshold] = *opt_cfg_.stop_when_below;
      if (snap.loss.has_term(term) && snap.loss.term(term) <= threshold) stop = true;
    }
    trajectory_.snapshots.push_back(std::move(snap));
    return stop;
  }

  bool has_snapshot_at(long step) const {
    return !trajectory_.snapshots.empty() && trajectory_.snapshots.back().step == step;
  }

  Trajectory take(const PairedEmbeddings& final_pairs, long total_steps) {
    trajectory_.final_embeddings = final_pairs;
    if (opt_cfg_.record_final_embeddings && !trajectory_.snapshots.empty() &&
        !trajectory_.snapshots.back().embeddings) {
      trajectory_.snapshots.back().embeddings = final_pairs;
    }
    trajectory_.total_steps = total_steps;
    return std::move(trajectory_);
  }

 private:
  const LossConfig& loss_cfg_;
  const OptimizerConfig& opt_cfg_;
  long steps_per_epoch_;
  Trajectory trajectory_;
  double initial_total_ = 0.0;
};

struct AdamState {
  Matrix m;
  Matrix v;
  void init(Eigen::Index rows, Eigen::Index cols) {
    m = Matrix::Zero(rows, cols);
    v = Matrix::Zero(rows, cols);
  }
};

// Decoupled weight decay; pass 0 for plain Adam.
void adam_update(Matrix& param, const Matrix& grad, AdamState& state, const OptimizerConfig& cfg,
                 long t, double weight_decay) {
  state.m = cfg.adam_beta1 * state.m + (1.0 - cfg.adam_beta1) * grad;
  state.v = (cfg.adam_beta2 * state.v.array() + (1.0 - cfg.adam_beta2) * grad.array().square()).matrix();
  const double bias1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(t));
  const double bias2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(t));
  const Matrix update =
      ((state.m / bias1).array() / ((state.v / bias2).array().sqrt() + cfg.adam_eps)).matrix();
  param -= cfg.learning_rate * (update + weight_decay * param);
}

std::vector<std::vector<int>> epoch_batches(Rng& rng, int n, int batch_size) {
  const std::vector<int> order = rng.permutation(n);
  std::vector<std::vector<int>> batches;
  for (int start = 0; start < n; start += batch_size) {
    const int end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  return batches;
}

Matrix gather_rows(const Matrix& source, const std::vector<int>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), source.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = source.row(idx[i]);
  return out;
}

}  // namespace

Trajectory optimize_free_points(const PairedEmbeddings& init, const LossConfig& loss_cfg,
                                const OptimizerConfig& opt_cfg) {
  loss_cfg.validate();
  opt_cfg.validate();
  init.validate();

  const int n = static_cast<int>(init.count());
  const auto d = init.dim();
  Matrix images = init.images.rows;
  Matrix texts = init.texts.rows;
  const long steps_per_epoch = (n + opt_cfg.batch_size - 1) / opt_cfg.batch_size;

  AdamState adam_images, adam_texts;
  if (opt_cfg.algorithm == Algorithm::adam) {
    adam_images.init(n, d);
    adam_texts.init(n, d);
  }

  const auto current_pairs = [&]() {
    return PairedEmbeddings{{images, Modality::image}, {texts, Modality::text}};
  };

  TrajectoryRecorder recorder(loss_cfg, opt_cfg, steps_per_epoch);
  if (recorder.snapshot(current_pairs(), 0, 0)) {
    return recorder.take(current_pairs(), 0);
  }

  Rng rng(split_seed(opt_cfg.seed, "batching"));
  long step = 0;
  bool done = false;
  for (long epoch = 0; !done; ++epoch) {
    if (opt_cfg.max_epochs > 0 && epoch >= opt_cfg.max_epochs) break;
    if (opt_cfg.max_epochs == 0 && step >= opt_cfg.max_steps) break;
    for (const auto& idx : epoch_batches(rng, n, opt_cfg.batch_size)) {
      if (opt_cfg.max_steps > 0 && step >= opt_cfg.max_steps) {
        done = true;
        break;
      }
      PairedEmbeddings batch;
      batch.images = {gather_rows(images, idx), Modality::image};
      batch.texts = {gather_rows(texts, idx), Modality::text};
      LossGradient grad = composite_gradient(batch, loss_cfg);

      // Tangent projection: remove the radial component per row.
      for (int side = 0; side < 2; ++side) {
        const Matrix& rows = side == 0 ? batch.images.rows : batch.texts.rows;
        Matrix& g = side == 0 ? grad.d_images : grad.d_texts;
        const Vector radial = (g.array() * rows.array()).rowwise().sum();
        g -= radial.asDiagonal() * rows;
      }

      ++step;
      for (int side = 0; opt_cfg.learning_rate != 0.0 && side < 2; ++side) {
        Matrix& full = side == 0 ? images : texts;
        const Matrix& g = side == 0 ? grad.d_images : grad.d_texts;
        AdamState& adam = side == 0 ? adam_images : adam_texts;
        for (std::size_t i = 0; i < idx.size(); ++i) {
          const auto row = static_cast<Eigen::Index>(idx[i]);
          const auto bi = static_cast<Eigen::Index>(i);
          if (opt_cfg.algorithm == Algorithm::sgd) {
            full.row(row) -= opt_cfg.learning_rate * g.row(bi);
          } else {
            Matrix p = full.row(row);
            AdamState slice;
            slice.m = adam.m.row(row);
            slice.v = adam.v.row(row);
            adam_update(p, g.row(bi), slice, opt_cfg, step, 0.0);
            adam.m.row(row) = slice.m;
            adam.v.row(row) = slice.v;
            full.row(row) = p;
          }
          const double norm = full.row(row).norm();
          if (norm < kZeroNormFloor) throw ZeroVectorError("free-point update collapsed a row to zero");
          full.row(row) /= norm;
        }
      }

      if (step % opt_cfg.snapshot_every == 0) {
        if (recorder.snapshot(current_pairs(), step, step / steps_per_epoch)) {
          done = true;
          break;
        }
      }
    }
  }

  if (!recorder.has_snapshot_at(step)) {
    recorder.snapshot(current_pairs(), step, step / steps_per_epoch);
  }
  return recorder.take(current_pairs(), step);
}

namespace {

struct EncoderAdam {
  std::vector<AdamState> weights;
  std::vector<AdamState> biases;
  void init(const TinyEncoder& enc) {
    weights.resize(enc.layers.size());
    biases.resize(enc.layers.size());
    for (std::size_t l = 0; l < enc.layers.size(); ++l) {
      weights[l].init(enc.layers[l].weight.rows(), enc.layers[l].weight.cols());
      biases[l].init(enc.layers[l].bias.size(), 1);
    }
  }
};

void apply_encoder_gradients(TinyEncoder& enc, const EncoderGradients& grads, EncoderAdam& adam,
                             const OptimizerConfig& cfg, long t) {
  for (std::size_t l = 0; l < enc.layers.size(); ++l) {
    if (cfg.algorithm == Algorithm::sgd) {
      enc.layers[l].weight -=
          cfg.learning_rate * (grads[l].weight + cfg.weight_decay * enc.layers[l].weight);
      enc.layers[l].bias -= cfg.learning_rate * grads[l].bias;
    } else {
      adam_update(enc.layers[l].weight, grads[l].weight, adam.weights[l], cfg, t, cfg.weight_decay);
      Matrix bias = enc.layers[l].bias;
      adam_update(bias, grads[l].bias, adam.biases[l], cfg, t, 0.0);
      enc.layers[l].bias = bias;
    }
  }
}

}  // namespace

EncoderRun optimize_encoders(const TinyEncoder& enc_images, const TinyEncoder& enc_texts,
                             const SyntheticDataset& data, const LossConfig& loss_cfg,
                             const OptimizerConfig& opt_cfg, bool overlap_at_init) {
  loss_cfg.validate();
  opt_cfg.validate();
  if (enc_images.output_dim() != enc_texts.output_dim()) {
    throw ConfigError("optimize_encoders: encoders must share the output dimension");
  }
  if (data.image_features.rows() != data.text_features.rows()) {
    throw ConfigError("optimize_encoders: dataset sides disagree on pair count");
  }

  EncoderRun run;
  run.image_encoder = enc_images;
  run.text_encoder = enc_texts;
  run.output_shift = Vector::Zero(enc_images.output_dim());

  const int n = static_cast<int>(data.count());
  const long steps_per_epoch = (n + opt_cfg.batch_size - 1) / opt_cfg.batch_size;

  if (overlap_at_init) {
    const EmbeddingSet img = encoder_forward(run.image_encoder, data.image_features, Modality::image);
    const EmbeddingSet txt = encoder_forward(run.text_encoder, data.text_features, Modality::text);
    run.output_shift = overlap_shift(txt, img);
  }

  bool shift_active = overlap_at_init;
  const auto embed_all = [&]() {
    PairedEmbeddings pairs;
    pairs.images = encoder_forward(run.image_encoder, data.image_features, Modality::image);
    pairs.texts = encoder_forward(run.text_encoder, data.text_features, Modality::text);
    if (shift_active) pairs.texts = apply_shift(pairs.texts, run.output_shift);
    return pairs;
  };

  TrajectoryRecorder recorder(loss_cfg, opt_cfg, steps_per_epoch);
  if (recorder.snapshot(embed_all(), 0, 0)) {
    run.trajectory = recorder.take(embed_all(), 0);
    return run;
  }
  if (opt_cfg.drop_shift_after_init) shift_active = false;

  EncoderAdam adam_images, adam_texts;
  if (opt_cfg.algorithm == Algorithm::adam) {
    adam_images.init(run.image_encoder);
    adam_texts.init(run.text_encoder);
  }

  Rng rng(split_seed(opt_cfg.seed, "batching"));
  long step = 0;
  bool done = false;
  for (long epoch = 0; !done; ++epoch) {
    if (opt_cfg.max_epochs > 0 && epoch >= opt_cfg.max_epochs) break;
    if (opt_cfg.max_epochs == 0 && step >= opt_cfg.max_steps) break;
    for (const auto& idx : epoch_batches(rng, n, opt_cfg.batch_size)) {
      if (opt_cfg.max_steps > 0 && step >= opt_cfg.max_steps) {
        done = true;
        break;
      }
      const Matrix xb = gather_rows(data.image_features, idx);
      const Matrix yb = gather_rows(data.text_features, idx);

      ForwardCache cache_img, cache_txt;
      PairedEmbeddings batch;
      batch.images = encoder_forward(run.image_encoder, xb, Modality::image, &cache_img);
      const EmbeddingSet raw_txt = encoder_forward(run.text_encoder, yb, Modality::text, &cache_txt);
      Matrix shifted;
      if (shift_active) {
        shifted = raw_txt.rows;
        shifted.rowwise() += run.output_shift.transpose();
        batch.texts = normalize_rows(shifted, Modality::text);
      } else {
        batch.texts = raw_txt;
      }

      const LossGradient grad = composite_gradient(batch, loss_cfg);
      Matrix d_txt_output = grad.d_texts;
      if (shift_active) {
        d_txt_output = backprop_row_normalization(shifted, batch.texts.rows, grad.d_texts);
      }

      const EncoderGradients grads_img = encoder_backward(run.image_encoder, cache_img, grad.d_images);
      const EncoderGradients grads_txt = encoder_backward(run.text_encoder, cache_txt, d_txt_output);

      ++step;
      apply_encoder_gradients(run.image_encoder, grads_img, adam_images, opt_cfg, step);
      apply_encoder_gradients(run.text_encoder, grads_txt, adam_texts, opt_cfg, step);

      if (step % opt_cfg.snapshot_every == 0) {
        if (recorder.snapshot(embed_all(), step, step / steps_per_epoch)) {
          done = true;
          break;
        }
      }
    }
  }

  if (!recorder.has_snapshot_at(step)) {
    recorder.snapshot(embed_all(), step, step / steps_per_epoch);
  }
  run.trajectory = recorder.take(embed_all(), step);
  return run;
}

std::string trajectory_csv_header() {
  return "step,epoch,loss_total,loss_clip,loss_uniform,loss_xuniform,loss_align," +
         report_csv_header().substr(std::string("step,").size());
}

std::string trajectory_csv_row(const TrajectorySnapshot& snap) {
  std::ostringstream out;
  out << snap.step << ',' << snap.epoch << ',' << format_double(snap.loss.total);
  for (const char* term : {"clip", "uniform", "xuniform", "align"}) {
    out << ',' << (snap.loss.has_term(term) ? format_double(snap.loss.term(term)) : "nan");
  }
  const std::string report_row = report_csv_row(snap.report, snap.step);
  out << report_row.substr(report_row.find(','));
  return out.str();
}

void emit_trajectory(const Trajectory& traj, const std::filesystem::path& dir) {
  if (traj.snapshots.empty()) throw Error("emit_trajectory: empty trajectory");
  std::filesystem::create_directories(dir);

  {
    std::ofstream out(dir / "metrics.csv");
    if (!out) throw IoError("cannot open for writing: " + (dir / "metrics.csv").string());
    out << trajectory_csv_header() << '\n';
    for (const auto& snap : traj.snapshots) out << trajectory_csv_row(snap) << '\n';
    if (!out) throw IoError("write failed: " + (dir / "metrics.csv").string());
  }

  write_pca_csv(traj.snapshots.back().report.pca_explained, dir / "pca.csv");

  for (const auto& snap : traj.snapshots) {
    if (!snap.embeddings) continue;
    if (snap.embeddings->dim() == 3) {
      nlohmann::json cloud{
          {"epoch", snap.epoch},
          {"step", snap.step},
          {"images", to_json(snap.embeddings->images).at("rows")},
          {"texts", to_json(snap.embeddings->texts).at("rows")},
      };
      write_json_file(cloud, dir / ("pointcloud_epoch_" + std::to_string(snap.epoch) + ".json"));
    } else {
      write_json_file(to_json(*snap.embeddings),
                      dir / ("embeddings_step_" + std::to_string(snap.step) + ".json"));
    }
  }
}

}  // namespace gaplab

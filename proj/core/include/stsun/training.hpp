#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "stsun/dataio.hpp"
#include "stsun/metrics.hpp"
#include "stsun/model.hpp"

namespace stsun {

struct LossConfig {
  double bce_weight = 1.0;
  double dice_weight = 1.0;
  double dice_smooth = 1.0;
  void validate() const;
};

/// Combined binary cross-entropy + soft-Dice loss on per-channel sigmoids.
/// Multi-class labels expand one-vs-all; single-channel tasks use the label
/// values directly. Dice is averaged over samples, frames and channels.
Tensor multitask_loss(const Tensor& logits, const std::vector<std::uint8_t>& labels,
                      const LossConfig& cfg);

/// Flip/transpose augmentation applied identically to every frame of the
/// image and the label; metadata is untouched. Always draws three uniforms so
/// the stream stays aligned regardless of which ops fire. Transposition on a
/// non-square sample is an error.
void augment_sample(std::vector<float>& image, std::vector<std::uint8_t>& label, std::int64_t t1,
                    std::int64_t c1, std::int64_t t2, std::int64_t h, std::int64_t w, Rng& rng,
                    double flip_h_prob, double flip_v_prob, double transpose_prob);

/// AdamW with decoupled weight decay: the decay is applied directly to the
/// weights, never through the moments. Parameters without a gradient this
/// step are skipped entirely.
class AdamW {
 public:
  AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(ParameterStore& store, double lr, double weight_decay);
  const TrainState& state() const { return state_; }
  void load_state(TrainState state) { state_ = std::move(state); }

 private:
  TrainState state_;
  double beta1_, beta2_, eps_;
};

/// Cuts the learning rate by `factor` after `patience` consecutive epochs
/// without a strict increase of the monitored score. The first observation
/// has no predecessor, so it counts as a stagnant epoch.
class PlateauScheduler {
 public:
  PlateauScheduler(double factor, std::int64_t patience);
  /// Returns true when the learning rate was reduced at this observation.
  bool observe(double score, double& lr);
  double best() const { return best_; }

 private:
  double factor_;
  std::int64_t patience_;
  double best_;
  std::int64_t stagnant_ = 0;
  bool has_best_ = false;
};

struct TrainPlan {
  double lr = 1e-4;
  double weight_decay = 1e-3;
  double plateau_factor = 0.1;
  std::int64_t patience = 5;
  std::int64_t max_epochs = 100;
  std::int64_t batch_size = 8;
  std::uint64_t seed = 0;
  std::int64_t max_steps = 0;  // 0 = no step cap
  double flip_h_prob = 0.5, flip_v_prob = 0.5, transpose_prob = 0.5;

  void validate() const;
};

struct TrainDataset {
  Dataset data;
  std::string name;
  std::vector<std::int64_t> categories;  // optional active-subset override
};

struct MetricRow {
  std::int64_t epoch = 0;
  std::string dataset;
  TaskId task = TaskId::SS;
  double loss = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0, iou = 0.0, oa = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<MetricRow> log;
  TrainState state;
  double best_mean_f1 = 0.0;
  std::int64_t best_epoch = 0;
  std::int64_t steps = 0;
};

/// Joint multi-task training: epochs interleave batches round-robin across
/// datasets (each batch homogeneous in shape), AdamW updates, plateau
/// scheduling and best-checkpoint selection on the mean validation F1 across
/// datasets. The model ends up holding the best parameters.
TrainResult train(Model& model, const std::vector<TrainDataset>& datasets, const TrainPlan& plan,
                  const LossConfig& loss_cfg, std::ostream* progress = nullptr);

struct ClassRow {
  std::int64_t id = 0;
  std::string name;
  ClassMetrics m;
};

struct EvalResult {
  std::vector<ClassRow> per_class;
  double precision = 0.0, recall = 0.0, f1 = 0.0, iou = 0.0;  // binary: positive class;
                                                              // multi-class: macro means
  double af = 0.0, miou = 0.0, oa = 0.0;
  double mean_loss = 0.0;
  std::optional<ScsResult> scs;  // SCD with T2 >= 2 only
};

/// Runs the model over one split and scores it. `category_override` swaps the
/// active category subset (ids must cover every label the split references).
EvalResult evaluate_split(const Model& model, const DatasetSplit& split, const LossConfig& loss_cfg,
                          const std::vector<std::int64_t>& category_override = {},
                          std::int64_t batch_size = 8);

/// Class-index maps for one logits tensor [B, T2, C2, H, W]: sigmoid
/// threshold for C2=1, channel argmax otherwise.
std::vector<std::uint8_t> logits_to_classes(const Tensor& logits);

void write_metric_log_csv(const std::string& path, const std::vector<MetricRow>& rows);
void write_eval_csv(const std::string& path, const std::string& dataset, TaskId task,
                    const EvalResult& result);

/// Worker cap from STSUN_THREADS (>= 1); the pipeline is currently
/// single-worker, so this only validates and reports the cap.
std::int64_t thread_cap();

}  // namespace stsun

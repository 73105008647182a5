#pragma once

#include <cstdint>
#include <vector>

#include "stsun/tensor.hpp"

namespace stsun {

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::uint64_t total() const { return tp + fp + fn + tn; }
};

struct ClassMetrics {
  double precision = 0.0, recall = 0.0, f1 = 0.0, iou = 0.0, oa = 0.0;
};

/// Metrics from raw counts. Zero denominators yield 0. F1 is computed as
/// 2*IoU/(1+IoU), the exact rational identity with the harmonic mean
/// 2PR/(P+R); evaluating it this way keeps the identity bit-exact.
ClassMetrics metrics_from_counts(const ConfusionCounts& c);

/// sigmoid(logit) >= threshold, i.e. positive iff logit >= logit(threshold).
/// The boundary p = threshold counts as positive.
std::vector<std::uint8_t> binarize(const Tensor& logits, double threshold = 0.5);

/// Channel argmax over logits [..., C2, H, W] with C2 at axis `channel_axis`;
/// ties resolve to the lowest channel index.
std::vector<std::uint8_t> argmax_classify(const Tensor& logits, std::int64_t channel_axis);

struct ScoreResult {
  std::vector<ConfusionCounts> counts;     // per class
  std::vector<ClassMetrics> per_class;     // per class
  double af = 0.0;                         // unweighted mean F1
  double miou = 0.0;                       // unweighted mean IoU
  double oa = 0.0;                         // pixel accuracy over all classes
};

/// Per-class confusion and P/R/F1/IoU/OA for class-index maps.
ScoreResult score(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& label,
                  std::int64_t num_classes);

struct ScsResult {
  double scs = 0.0, bc = 0.0, sc = 0.0;
  bool sc_defined = false;  // false when no pixel truly changed; sc reported as 0
};

/// Semantic change suite over per-frame class maps (frames x pixels):
///  - change mask = inequality of adjacent frame maps;
///  - BC = binary IoU of predicted vs true change masks (empty-empty = 1);
///  - SC = mean IoU over classes present at truly-changed pixels, comparing
///    the later frame of each adjacent pair;
///  - SCS = (BC + SC) / 2.
ScsResult scs_suite(const std::vector<std::uint8_t>& pred_frames,
                    const std::vector<std::uint8_t>& label_frames, std::int64_t frames,
                    std::int64_t pixels_per_frame, std::int64_t num_classes);

}  // namespace stsun

#include "stsun/metrics.hpp"

#include <cmath>

#include "stsun/errors.hpp"

namespace stsun {

namespace {

double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

ClassMetrics metrics_from_counts(const ConfusionCounts& c) {
  ClassMetrics m;
  auto tp = static_cast<double>(c.tp);
  auto fp = static_cast<double>(c.fp);
  auto fn = static_cast<double>(c.fn);
  auto tn = static_cast<double>(c.tn);
  m.precision = safe_div(tp, tp + fp);
  m.recall = safe_div(tp, tp + fn);
  m.iou = safe_div(tp, tp + fp + fn);
  m.f1 = safe_div(2.0 * m.iou, 1.0 + m.iou);
  m.oa = safe_div(tp + tn, tp + fp + fn + tn);
  return m;
}

std::vector<std::uint8_t> binarize(const Tensor& logits, double threshold) {
  // sigmoid(x) >= t  <=>  x >= log(t / (1 - t)); for t = 0.5 that is x >= 0.
  double cutoff = std::log(threshold / (1.0 - threshold));
  std::vector<std::uint8_t> out(logits.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = logits.data()[i] >= cutoff ? 1 : 0;
  }
  return out;
}

std::vector<std::uint8_t> argmax_classify(const Tensor& logits, std::int64_t channel_axis) {
  const auto& shape = logits.shape();
  auto r = logits.rank();
  if (channel_axis < 0 || channel_axis >= r) {
    throw ShapeError("argmax_classify: channel axis out of range");
  }
  std::int64_t channels = shape[static_cast<std::size_t>(channel_axis)];
  std::int64_t outer = 1, inner = 1;
  for (std::int64_t i = 0; i < channel_axis; ++i) outer *= shape[static_cast<std::size_t>(i)];
  for (std::int64_t i = channel_axis + 1; i < r; ++i) inner *= shape[static_cast<std::size_t>(i)];

  std::vector<std::uint8_t> out(static_cast<std::size_t>(outer * inner));
  const double* d = logits.data().data();
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t i = 0; i < inner; ++i) {
      std::int64_t best = 0;
      double best_v = d[o * channels * inner + i];
      for (std::int64_t ch = 1; ch < channels; ++ch) {
        double v = d[(o * channels + ch) * inner + i];
        if (v > best_v) {  // strict: ties keep the lowest index
          best_v = v;
          best = ch;
        }
      }
      out[static_cast<std::size_t>(o * inner + i)] = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

ScoreResult score(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& label,
                  std::int64_t num_classes) {
  if (pred.size() != label.size()) {
    throw ShapeError("score: prediction and label sizes differ");
  }
  if (num_classes < 1) throw ValidationError("score: need at least one class");
  ScoreResult out;
  out.counts.assign(static_cast<std::size_t>(num_classes), {});
  std::uint64_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    auto p = pred[i], y = label[i];
    if (p >= num_classes || y >= num_classes) {
      throw ValidationError("score: class index out of range");
    }
    if (p == y) ++correct;
    for (std::int64_t c = 0; c < num_classes; ++c) {
      auto& cc = out.counts[static_cast<std::size_t>(c)];
      bool pp = p == c, yy = y == c;
      if (pp && yy) ++cc.tp;
      else if (pp) ++cc.fp;
      else if (yy) ++cc.fn;
      else ++cc.tn;
    }
  }
  double af = 0.0, miou = 0.0;
  for (const auto& cc : out.counts) {
    auto m = metrics_from_counts(cc);
    af += m.f1;
    miou += m.iou;
    out.per_class.push_back(m);
  }
  out.af = af / static_cast<double>(num_classes);
  out.miou = miou / static_cast<double>(num_classes);
  out.oa = safe_div(static_cast<double>(correct), static_cast<double>(pred.size()));
  return out;
}

ScsResult scs_suite(const std::vector<std::uint8_t>& pred_frames,
                    const std::vector<std::uint8_t>& label_frames, std::int64_t frames,
                    std::int64_t pixels_per_frame, std::int64_t num_classes) {
  if (frames < 2) throw ValidationError("scs_suite: need at least two frames");
  auto expected = static_cast<std::size_t>(frames * pixels_per_frame);
  if (pred_frames.size() != expected || label_frames.size() != expected) {
    throw ShapeError("scs_suite: frame buffer sizes do not match frames * pixels");
  }

  // Binary change vs no-change, pooled over all adjacent pairs.
  std::uint64_t bc_tp = 0, bc_fp = 0, bc_fn = 0;
  // Semantic confusion restricted to truly-changed pixels (later frame).
  std::vector<ConfusionCounts> sem(static_cast<std::size_t>(num_classes));
  std::uint64_t changed_pixels = 0;
  for (std::int64_t t = 0; t + 1 < frames; ++t) {
    const auto* la = label_frames.data() + t * pixels_per_frame;
    const auto* lb = label_frames.data() + (t + 1) * pixels_per_frame;
    const auto* pa = pred_frames.data() + t * pixels_per_frame;
    const auto* pb = pred_frames.data() + (t + 1) * pixels_per_frame;
    for (std::int64_t i = 0; i < pixels_per_frame; ++i) {
      bool true_change = la[i] != lb[i];
      bool pred_change = pa[i] != pb[i];
      if (true_change && pred_change) ++bc_tp;
      else if (pred_change) ++bc_fp;
      else if (true_change) ++bc_fn;
      if (true_change) {
        ++changed_pixels;
        auto p = pb[i], y = lb[i];
        if (p >= num_classes || y >= num_classes) {
          throw ValidationError("scs_suite: class index out of range");
        }
        for (std::int64_t c = 0; c < num_classes; ++c) {
          auto& cc = sem[static_cast<std::size_t>(c)];
          bool pp = p == c, yy = y == c;
          if (pp && yy) ++cc.tp;
          else if (pp) ++cc.fp;
          else if (yy) ++cc.fn;
          else ++cc.tn;
        }
      }
    }
  }

  ScsResult out;
  std::uint64_t bc_union = bc_tp + bc_fp + bc_fn;
  // Empty-mask convention: no true and no predicted change is a perfect 1.
  out.bc = bc_union == 0 ? 1.0 : static_cast<double>(bc_tp) / static_cast<double>(bc_union);
  if (changed_pixels > 0) {
    double acc = 0.0;
    std::int64_t present = 0;
    for (const auto& cc : sem) {
      if (cc.tp + cc.fp + cc.fn == 0) continue;  // class absent among changed pixels
      acc += metrics_from_counts(cc).iou;
      ++present;
    }
    out.sc = present > 0 ? acc / static_cast<double>(present) : 0.0;
    out.sc_defined = present > 0;
  } else {
    out.sc = 0.0;
    out.sc_defined = false;
  }
  out.scs = 0.5 * (out.bc + out.sc);
  return out;
}

}  // namespace stsun

#pragma once

// Test-only reference implementations, kept independent of the library code
// paths they check.

#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "stsun/metrics.hpp"

namespace stsun::testing {

struct OracleCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

/// Brute-force per-pixel confusion counting.
inline std::vector<OracleCounts> oracle_confusion(const std::vector<std::uint8_t>& pred,
                                                  const std::vector<std::uint8_t>& label,
                                                  std::int64_t num_classes) {
  std::vector<OracleCounts> out(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (std::int64_t c = 0; c < num_classes; ++c) {
      bool p = pred[i] == c;
      bool y = label[i] == c;
      auto& cc = out[static_cast<std::size_t>(c)];
      if (p && y) ++cc.tp;
      if (p && !y) ++cc.fp;
      if (!p && y) ++cc.fn;
      if (!p && !y) ++cc.tn;
    }
  }
  return out;
}

inline double oracle_div(double a, double b) { return b == 0.0 ? 0.0 : a / b; }

/// Metrics from oracle counts with the pinned formulas (F1 via the IoU
/// identity, which equals the harmonic mean 2PR/(P+R) as a rational number).
inline ClassMetrics oracle_metrics(const OracleCounts& c) {
  ClassMetrics m;
  m.precision = oracle_div(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
  m.recall = oracle_div(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
  m.iou = oracle_div(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp + c.fn));
  m.f1 = oracle_div(2.0 * m.iou, 1.0 + m.iou);
  m.oa = oracle_div(static_cast<double>(c.tp + c.tn),
                    static_cast<double>(c.tp + c.fp + c.fn + c.tn));
  return m;
}

/// Reference Adam (no weight decay), classic bias-corrected form.
struct OracleAdam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::int64_t t = 0;
  std::vector<double> m, v;

  void step(std::vector<double>& w, const std::vector<double>& g, double lr) {
    if (m.empty()) {
      m.assign(w.size(), 0.0);
      v.assign(w.size(), 0.0);
    }
    ++t;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      w[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
  }
};

/// Scalar-loop BCE + Dice, mirroring the loss contract element by element.
inline double oracle_loss(const std::vector<double>& logits, const std::vector<std::uint8_t>& labels,
                          std::int64_t b, std::int64_t t2, std::int64_t c2, std::int64_t h,
                          std::int64_t w, double bce_w, double dice_w, double smooth) {
  auto sigmoid = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  auto softplus = [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); };
  std::int64_t plane = h * w;
  double bce = 0.0;
  double dice_acc = 0.0;
  for (std::int64_t bt = 0; bt < b * t2; ++bt) {
    for (std::int64_t c = 0; c < c2; ++c) {
      double sp = 0.0, sy = 0.0, spy = 0.0;
      for (std::int64_t i = 0; i < plane; ++i) {
        double z = logits[static_cast<std::size_t>((bt * c2 + c) * plane + i)];
        double y = c2 == 1 ? static_cast<double>(labels[static_cast<std::size_t>(bt * plane + i)])
                           : (labels[static_cast<std::size_t>(bt * plane + i)] == c ? 1.0 : 0.0);
        bce += softplus(z) - z * y;
        double p = sigmoid(z);
        sp += p;
        sy += y;
        spy += p * y;
      }
      dice_acc += (2.0 * spy + smooth) / (sp + sy + smooth);
    }
  }
  bce /= static_cast<double>(b * t2 * c2 * plane);
  dice_acc /= static_cast<double>(b * t2 * c2);
  return bce_w * bce + dice_w * (1.0 - dice_acc);
}

}  // namespace stsun::testing

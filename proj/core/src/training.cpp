#include "stsun/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "stsun/ops.hpp"

namespace stsun {

void LossConfig::validate() const {
  if (bce_weight < 0.0 || dice_weight < 0.0) {
    throw ValidationError("loss: weights must be >= 0");
  }
  if (bce_weight == 0.0 && dice_weight == 0.0) {
    throw ValidationError("loss: at least one of the BCE/Dice weights must be positive");
  }
  if (dice_smooth <= 0.0) throw ValidationError("loss: dice smoothing must be positive");
}

Tensor multitask_loss(const Tensor& logits, const std::vector<std::uint8_t>& labels,
                      const LossConfig& cfg) {
  cfg.validate();
  if (logits.rank() != 5) throw ShapeError("loss: expected logits [B, T2, C2, H, W]");
  std::int64_t b = logits.dim(0), t2 = logits.dim(1), c2 = logits.dim(2), h = logits.dim(3),
               w = logits.dim(4);
  if (static_cast<std::int64_t>(labels.size()) != b * t2 * h * w) {
    throw ShapeError("loss: label count does not match logits");
  }
  // Targets: per-channel one-vs-all for C2 > 1, the raw {0,1} values for C2=1.
  std::vector<double> target(static_cast<std::size_t>(b * t2 * c2 * h * w));
  std::int64_t plane = h * w;
  for (std::int64_t bt = 0; bt < b * t2; ++bt) {
    const std::uint8_t* lab = labels.data() + bt * plane;
    for (std::int64_t c = 0; c < c2; ++c) {
      double* dst = target.data() + (bt * c2 + c) * plane;
      for (std::int64_t i = 0; i < plane; ++i) {
        auto v = lab[i];
        if (v >= (c2 == 1 ? 2 : c2)) {
          throw ValidationError("loss: label value out of range");
        }
        dst[i] = c2 == 1 ? static_cast<double>(v) : (v == c ? 1.0 : 0.0);
      }
    }
  }
  Tensor y = Tensor::from_data(logits.shape(), std::move(target));

  // Stable BCE on logits: mean(softplus(z) - z*y).
  Tensor bce = mean(sub(softplus(logits), mul(logits, y)));

  // Soft Dice per (sample, frame, channel), then averaged.
  Tensor p = sigmoid(logits);
  Tensor p2 = reshape(p, {b * t2 * c2, plane});
  Tensor y2 = reshape(y, {b * t2 * c2, plane});
  Tensor ones_col = Tensor::full({plane, 1}, 1.0);
  Tensor sum_py = matmul(mul(p2, y2), ones_col);
  Tensor sum_p = matmul(p2, ones_col);
  Tensor sum_y = matmul(y2, ones_col);
  Tensor numer = add_scalar(mul_scalar(sum_py, 2.0), cfg.dice_smooth);
  Tensor denom = add_scalar(add(sum_p, sum_y), cfg.dice_smooth);
  Tensor dice = mean(div(numer, denom));

  Tensor loss = add(mul_scalar(bce, cfg.bce_weight),
                    mul_scalar(add_scalar(neg(dice), 1.0), cfg.dice_weight));
  return loss;
}

namespace {

void flip_planes(float* img, std::int64_t planes, std::int64_t h, std::int64_t w, bool horizontal) {
  for (std::int64_t p = 0; p < planes; ++p) {
    float* plane = img + p * h * w;
    if (horizontal) {
      for (std::int64_t r = 0; r < h; ++r) {
        std::reverse(plane + r * w, plane + (r + 1) * w);
      }
    } else {
      for (std::int64_t r = 0; r < h / 2; ++r) {
        std::swap_ranges(plane + r * w, plane + (r + 1) * w, plane + (h - 1 - r) * w);
      }
    }
  }
}

void flip_planes_u8(std::uint8_t* img, std::int64_t planes, std::int64_t h, std::int64_t w,
                    bool horizontal) {
  for (std::int64_t p = 0; p < planes; ++p) {
    std::uint8_t* plane = img + p * h * w;
    if (horizontal) {
      for (std::int64_t r = 0; r < h; ++r) {
        std::reverse(plane + r * w, plane + (r + 1) * w);
      }
    } else {
      for (std::int64_t r = 0; r < h / 2; ++r) {
        std::swap_ranges(plane + r * w, plane + (r + 1) * w, plane + (h - 1 - r) * w);
      }
    }
  }
}

template <typename T>
void transpose_planes(T* img, std::int64_t planes, std::int64_t n) {
  for (std::int64_t p = 0; p < planes; ++p) {
    T* plane = img + p * n * n;
    for (std::int64_t r = 0; r < n; ++r) {
      for (std::int64_t c = r + 1; c < n; ++c) {
        std::swap(plane[r * n + c], plane[c * n + r]);
      }
    }
  }
}

}  // namespace

void augment_sample(std::vector<float>& image, std::vector<std::uint8_t>& label, std::int64_t t1,
                    std::int64_t c1, std::int64_t t2, std::int64_t h, std::int64_t w, Rng& rng,
                    double flip_h_prob, double flip_v_prob, double transpose_prob) {
  double u_h = rng.uniform();
  double u_v = rng.uniform();
  double u_t = rng.uniform();
  if (u_h < flip_h_prob) {
    flip_planes(image.data(), t1 * c1, h, w, /*horizontal=*/true);
    flip_planes_u8(label.data(), t2, h, w, /*horizontal=*/true);
  }
  if (u_v < flip_v_prob) {
    flip_planes(image.data(), t1 * c1, h, w, /*horizontal=*/false);
    flip_planes_u8(label.data(), t2, h, w, /*horizontal=*/false);
  }
  if (u_t < transpose_prob) {
    if (h != w) throw ValidationError("augment: transposition requires square samples");
    transpose_planes(image.data(), t1 * c1, h);
    transpose_planes(label.data(), t2, h);
  }
}

AdamW::AdamW(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamW::step(ParameterStore& store, double lr, double weight_decay) {
  ++state_.step;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(state_.step));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(state_.step));
  for (auto& [name, param] : store.items()) {
    if (!param.has_grad()) continue;  // untouched by this step's graph
    const auto& g = param.grad();
    auto& w = param.mutable_data();
    auto& slots = state_.moments[name];
    auto& m = slots.first;
    auto& v = slots.second;
    if (m.empty()) {
      m.assign(w.size(), 0.0);
      v.assign(w.size(), 0.0);
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      // Decoupled decay: straight on the weights, not through the moments.
      w[i] -= lr * weight_decay * w[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

PlateauScheduler::PlateauScheduler(double factor, std::int64_t patience)
    : factor_(factor), patience_(patience), best_(0.0) {
  if (!(factor > 0.0 && factor < 1.0)) throw ValidationError("scheduler: factor must be in (0,1)");
  if (patience < 1) throw ValidationError("scheduler: patience must be >= 1");
}

bool PlateauScheduler::observe(double score, double& lr) {
  bool improved = has_best_ && score > best_;
  if (!has_best_ || score > best_) {
    best_ = score;
    has_best_ = true;
  }
  if (improved) {
    stagnant_ = 0;
    return false;
  }
  if (++stagnant_ >= patience_) {
    lr *= factor_;
    stagnant_ = 0;
    return true;
  }
  return false;
}

void TrainPlan::validate() const {
  if (!(lr > 0.0)) throw ValidationError("plan: lr must be positive");
  if (weight_decay < 0.0) throw ValidationError("plan: weight decay must be >= 0");
  if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) {
    throw ValidationError("plan: plateau factor must be in (0,1)");
  }
  if (patience < 1) throw ValidationError("plan: patience must be >= 1");
  if (max_epochs < 1) throw ValidationError("plan: max_epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("plan: batch size must be >= 1");
  if (max_steps < 0) throw ValidationError("plan: max_steps must be >= 0");
  for (double p : {flip_h_prob, flip_v_prob, transpose_prob}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("plan: probabilities must be in [0,1]");
  }
}

std::vector<std::uint8_t> logits_to_classes(const Tensor& logits) {
  if (logits.rank() != 5) throw ShapeError("logits_to_classes: expected [B, T2, C2, H, W]");
  if (logits.dim(2) == 1) return binarize(logits);
  return argmax_classify(logits, 2);
}

namespace {

OutputSpec spec_for(const DatasetManifest& m, const std::vector<std::int64_t>& category_override) {
  OutputSpec spec;
  spec.task = m.task;
  spec.out_len = m.t2;
  spec.category_ids = category_override.empty() ? m.category_ids : category_override;
  spec.out_h = m.h1;
  spec.out_w = m.w1;
  return spec;
}

struct BatchData {
  Tensor images;
  std::vector<std::uint8_t> labels;
};

BatchData make_batch(const DatasetSplit& split, const std::vector<std::int64_t>& ids,
                     const TrainPlan* augment_plan, Rng* rng) {
  const auto& m = split.manifest;
  std::int64_t stride = split.image_stride();
  std::int64_t lstride = split.label_stride();
  auto bsz = static_cast<std::int64_t>(ids.size());
  BatchData out;
  out.labels.resize(static_cast<std::size_t>(bsz * lstride));
  std::vector<double> data(static_cast<std::size_t>(bsz * stride));
  std::vector<float> img(static_cast<std::size_t>(stride));
  std::vector<std::uint8_t> lab(static_cast<std::size_t>(lstride));
  for (std::int64_t i = 0; i < bsz; ++i) {
    const float* src = split.images.data() + ids[static_cast<std::size_t>(i)] * stride;
    std::copy(src, src + stride, img.begin());
    const std::uint8_t* lsrc = split.labels.data() + ids[static_cast<std::size_t>(i)] * lstride;
    std::copy(lsrc, lsrc + lstride, lab.begin());
    if (augment_plan) {
      augment_sample(img, lab, m.t1, m.c1, m.t2, m.h1, m.w1, *rng, augment_plan->flip_h_prob,
                     augment_plan->flip_v_prob, augment_plan->transpose_prob);
    }
    double* dst = data.data() + i * stride;
    for (std::int64_t k = 0; k < stride; ++k) dst[k] = img[static_cast<std::size_t>(k)];
    std::copy(lab.begin(), lab.end(), out.labels.begin() + i * lstride);
  }
  out.images = Tensor::from_data({bsz, m.t1, m.c1, m.h1, m.w1}, std::move(data));
  return out;
}

/// Maps split labels onto channels of the active category subset.
std::vector<std::uint8_t> remap_labels(const DatasetSplit& split,
                                       const std::vector<std::uint8_t>& labels,
                                       const std::vector<std::int64_t>& active) {
  const auto& manifest_ids = split.manifest.category_ids;
  if (active.empty() ||
      (active == manifest_ids)) {
    return labels;
  }
  if (manifest_ids.size() == 1) {
    // Binary labels are channel-free; any single-category override keeps them.
    if (active.size() != 1) {
      throw ValidationError("eval: a binary split needs a single-category subset");
    }
    return labels;
  }
  std::vector<std::int64_t> channel_of(manifest_ids.size(), -1);
  for (std::size_t v = 0; v < manifest_ids.size(); ++v) {
    for (std::size_t c = 0; c < active.size(); ++c) {
      if (active[c] == manifest_ids[v]) {
        channel_of[v] = static_cast<std::int64_t>(c);
        break;
      }
    }
  }
  std::vector<std::uint8_t> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto ch = channel_of[labels[i]];
    if (ch < 0) {
      throw ValidationError("eval: label category id " +
                            std::to_string(manifest_ids[labels[i]]) +
                            " missing from the active subset");
    }
    out[i] = static_cast<std::uint8_t>(ch);
  }
  return out;
}

}  // namespace

EvalResult evaluate_split(const Model& model, const DatasetSplit& split, const LossConfig& loss_cfg,
                          const std::vector<std::int64_t>& category_override,
                          std::int64_t batch_size) {
  NoGradGuard no_grad;
  split.validate();
  const auto& m = split.manifest;
  OutputSpec spec = spec_for(m, category_override);
  InputMetadata meta = m.input_metadata();
  auto active = spec.category_ids;
  auto c2 = static_cast<std::int64_t>(active.size());

  std::vector<std::uint8_t> all_pred;
  std::vector<std::uint8_t> all_label;
  all_pred.reserve(static_cast<std::size_t>(m.num_samples * split.label_stride()));
  double loss_acc = 0.0;
  std::int64_t loss_n = 0;

  EvalResult out;
  double scs_bc = 0.0, scs_sc = 0.0;
  std::int64_t scs_n = 0, sc_defined_n = 0;
  bool want_scs = m.task == TaskId::SCD && m.t2 >= 2;

  for (std::int64_t start = 0; start < m.num_samples; start += batch_size) {
    std::int64_t end = std::min(m.num_samples, start + batch_size);
    std::vector<std::int64_t> ids(static_cast<std::size_t>(end - start));
    std::iota(ids.begin(), ids.end(), start);
    auto batch = make_batch(split, ids, nullptr, nullptr);
    Tensor logits = model.forward_configured(batch.images, meta, spec);
    auto remapped = remap_labels(split, batch.labels, active);
    Tensor loss = multitask_loss(logits, remapped, loss_cfg);
    loss_acc += loss.item() * static_cast<double>(end - start);
    loss_n += end - start;
    auto pred = logits_to_classes(logits);
    all_pred.insert(all_pred.end(), pred.begin(), pred.end());
    all_label.insert(all_label.end(), remapped.begin(), remapped.end());
    if (want_scs) {
      std::int64_t pixels = m.h1 * m.w1;
      std::int64_t per = m.t2 * pixels;
      std::int64_t classes = c2 == 1 ? 2 : c2;
      for (std::int64_t i = 0; i < end - start; ++i) {
        std::vector<std::uint8_t> pf(pred.begin() + i * per, pred.begin() + (i + 1) * per);
        std::vector<std::uint8_t> lf(remapped.begin() + i * per, remapped.begin() + (i + 1) * per);
        auto r = scs_suite(pf, lf, m.t2, pixels, classes);
        scs_bc += r.bc;
        if (r.sc_defined) {
          scs_sc += r.sc;
          ++sc_defined_n;
        }
        ++scs_n;
      }
    }
  }

  std::int64_t classes = c2 == 1 ? 2 : c2;
  auto scored = score(all_pred, all_label, classes);
  out.oa = scored.oa;
  out.mean_loss = loss_n > 0 ? loss_acc / static_cast<double>(loss_n) : 0.0;
  if (c2 == 1) {
    const auto& pos = scored.per_class[1];
    out.precision = pos.precision;
    out.recall = pos.recall;
    out.f1 = pos.f1;
    out.iou = pos.iou;
    out.af = pos.f1;
    out.miou = pos.iou;
    out.per_class.push_back({active[0], model.registry().has_category(active[0])
                                            ? model.registry().category_name(active[0])
                                            : "positive",
                             pos});
  } else {
    double p = 0.0, r = 0.0;
    for (std::int64_t c = 0; c < c2; ++c) {
      const auto& cm = scored.per_class[static_cast<std::size_t>(c)];
      p += cm.precision;
      r += cm.recall;
      out.per_class.push_back({active[static_cast<std::size_t>(c)],
                               model.registry().category_name(active[static_cast<std::size_t>(c)]),
                               cm});
    }
    out.precision = p / static_cast<double>(c2);
    out.recall = r / static_cast<double>(c2);
    out.f1 = scored.af;
    out.iou = scored.miou;
    out.af = scored.af;
    out.miou = scored.miou;
  }
  if (want_scs && scs_n > 0) {
    ScsResult s;
    s.bc = scs_bc / static_cast<double>(scs_n);
    s.sc_defined = sc_defined_n > 0;
    s.sc = sc_defined_n > 0 ? scs_sc / static_cast<double>(sc_defined_n) : 0.0;
    s.scs = 0.5 * (s.bc + s.sc);
    out.scs = s;
  }
  return out;
}

TrainResult train(Model& model, const std::vector<TrainDataset>& datasets, const TrainPlan& plan,
                  const LossConfig& loss_cfg, std::ostream* progress) {
  plan.validate();
  loss_cfg.validate();
  if (datasets.empty()) throw ValidationError("train: empty dataset list");
  for (const auto& ds : datasets) {
    if (!ds.data.splits.count("train") || !ds.data.splits.count("val")) {
      throw ValidationError("train: dataset '" + ds.name + "' needs train and val splits");
    }
    const auto& m = ds.data.splits.at("train").manifest;
    if (plan.transpose_prob > 0.0 && m.h1 != m.w1) {
      throw ValidationError("train: transposition augmentation needs square samples in '" +
                            ds.name + "'");
    }
  }

  Rng rng(plan.seed);
  AdamW opt;
  PlateauScheduler scheduler(plan.plateau_factor, plan.patience);
  double lr = plan.lr;

  TrainResult result;
  std::map<std::string, std::vector<double>> best_params;
  TrainState best_state;
  double best_f1 = -1.0;
  std::int64_t steps = 0;
  bool out_of_steps = false;

  for (std::int64_t epoch = 1; epoch <= plan.max_epochs && !out_of_steps; ++epoch) {
    // Round-robin over datasets with per-epoch shuffles.
    std::vector<std::vector<std::int64_t>> order(datasets.size());
    std::vector<std::size_t> cursor(datasets.size(), 0);
    for (std::size_t d = 0; d < datasets.size(); ++d) {
      const auto& split = datasets[d].data.splits.at("train");
      order[d].resize(static_cast<std::size_t>(split.manifest.num_samples));
      std::iota(order[d].begin(), order[d].end(), 0);
      for (std::size_t i = order[d].size(); i > 1; --i) {
        std::swap(order[d][i - 1], order[d][static_cast<std::size_t>(rng.uniform_int(
                                       static_cast<std::int64_t>(i)))]);
      }
    }
    std::vector<double> epoch_loss(datasets.size(), 0.0);
    std::vector<std::int64_t> epoch_batches(datasets.size(), 0);

    bool any = true;
    while (any && !out_of_steps) {
      any = false;
      for (std::size_t d = 0; d < datasets.size() && !out_of_steps; ++d) {
        const auto& split = datasets[d].data.splits.at("train");
        if (cursor[d] >= order[d].size()) continue;
        any = true;
        auto take = std::min<std::size_t>(static_cast<std::size_t>(plan.batch_size),
                                          order[d].size() - cursor[d]);
        std::vector<std::int64_t> ids(order[d].begin() + static_cast<std::ptrdiff_t>(cursor[d]),
                                      order[d].begin() + static_cast<std::ptrdiff_t>(cursor[d] + take));
        cursor[d] += take;

        auto batch = make_batch(split, ids, &plan, &rng);
        OutputSpec spec = spec_for(split.manifest, datasets[d].categories);
        InputMetadata meta = split.manifest.input_metadata();
        try {
          model.params().clear_grads();
          Tensor logits = model.forward_configured(batch.images, meta, spec);
          auto labels = remap_labels(split, batch.labels, spec.category_ids);
          Tensor loss = multitask_loss(logits, labels, loss_cfg);
          backward(loss);
          opt.step(model.params(), lr, plan.weight_decay);
          epoch_loss[d] += loss.item();
          ++epoch_batches[d];
        } catch (const NumericError& e) {
          throw NumericError("train: step " + std::to_string(steps + 1) + ", dataset '" +
                             datasets[d].name + "': " + e.what());
        }
        ++steps;
        if (plan.max_steps > 0 && steps >= plan.max_steps) out_of_steps = true;
      }
    }

    // Validation across every dataset; the scheduler watches the mean F1.
    double mean_f1 = 0.0;
    std::vector<EvalResult> evals;
    for (const auto& ds : datasets) {
      evals.push_back(evaluate_split(model, ds.data.splits.at("val"), loss_cfg, ds.categories,
                                     plan.batch_size));
      mean_f1 += evals.back().f1;
    }
    mean_f1 /= static_cast<double>(datasets.size());

    for (std::size_t d = 0; d < datasets.size(); ++d) {
      MetricRow row;
      row.epoch = epoch;
      row.dataset = datasets[d].name;
      row.task = datasets[d].data.splits.at("train").manifest.task;
      row.loss = epoch_batches[d] > 0 ? epoch_loss[d] / static_cast<double>(epoch_batches[d]) : 0.0;
      row.precision = evals[d].precision;
      row.recall = evals[d].recall;
      row.f1 = evals[d].f1;
      row.iou = evals[d].iou;
      row.oa = evals[d].oa;
      row.lr = lr;
      result.log.push_back(row);
    }
    if (progress) {
      (*progress) << "epoch " << epoch << " mean_val_f1 " << mean_f1 << " lr " << lr << "\n";
    }

    if (mean_f1 > best_f1) {
      best_f1 = mean_f1;
      result.best_epoch = epoch;
      best_state = opt.state();
      best_params.clear();
      for (const auto& [name, t] : model.params().items()) best_params[name] = t.data();
    }
    scheduler.observe(mean_f1, lr);
  }

  // The best epoch's parameters are what the caller keeps.
  if (!best_params.empty()) {
    for (auto& [name, t] : model.params().items()) {
      Tensor handle = t;
      handle.mutable_data() = best_params.at(name);
    }
  }
  result.state = best_state;
  result.best_mean_f1 = best_f1;
  result.steps = steps;
  return result;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string fmt_lr(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.8f", v);
  return buf;
}

}  // namespace

void write_metric_log_csv(const std::string& path, const std::vector<MetricRow>& rows) {
  std::ofstream os(path);
  if (!os) throw IoError("metrics: cannot open '" + path + "' for writing");
  os << "epoch,dataset,task,loss,P,R,F1,IoU,OA,lr\n";
  for (const auto& r : rows) {
    os << r.epoch << ',' << r.dataset << ',' << task_name(r.task) << ',' << fmt(r.loss) << ','
       << fmt(r.precision) << ',' << fmt(r.recall) << ',' << fmt(r.f1) << ',' << fmt(r.iou) << ','
       << fmt(r.oa) << ',' << fmt_lr(r.lr) << "\n";
  }
  if (!os) throw IoError("metrics: write failed for '" + path + "'");
}

void write_eval_csv(const std::string& path, const std::string& dataset, TaskId task,
                    const EvalResult& result) {
  std::ofstream os(path);
  if (!os) throw IoError("metrics: cannot open '" + path + "' for writing");
  os << "dataset,task,scope,metric,value\n";
  auto row = [&](const std::string& scope, const char* metric, double v) {
    os << dataset << ',' << task_name(task) << ',' << scope << ',' << metric << ',' << fmt(v)
       << "\n";
  };
  for (const auto& c : result.per_class) {
    std::string scope = "class:" + std::to_string(c.id) + ":" + c.name;
    row(scope, "P", c.m.precision);
    row(scope, "R", c.m.recall);
    row(scope, "F1", c.m.f1);
    row(scope, "IoU", c.m.iou);
    row(scope, "OA", c.m.oa);
  }
  row("mean", "P", result.precision);
  row("mean", "R", result.recall);
  row("mean", "AF", result.af);
  row("mean", "mIoU", result.miou);
  row("mean", "OA", result.oa);
  row("mean", "loss", result.mean_loss);
  if (result.scs) {
    row("scs", "SCS", result.scs->scs);
    row("scs", "BC", result.scs->bc);
    row("scs", "SC", result.scs->sc);
    row("scs", "SC_defined", result.scs->sc_defined ? 1.0 : 0.0);
  }
  if (!os) throw IoError("metrics: write failed for '" + path + "'");
}

std::int64_t thread_cap() {
  const char* env = std::getenv("STSUN_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  long v = std::strtol(env, &end, 10);
  if (!end || *end != '\0' || v < 1) {
    throw ValidationError("STSUN_THREADS must be a positive integer");
  }
  return static_cast<std::int64_t>(v);
}

}  // namespace stsun

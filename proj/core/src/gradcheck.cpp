#include "stsun/gradcheck.hpp"

#include <cmath>

#include "stsun/attention.hpp"
#include "stsun/hypernet.hpp"
#include "stsun/metadata.hpp"
#include "stsun/model.hpp"
#include "stsun/ops.hpp"
#include "stsun/rng.hpp"
#include "stsun/training.hpp"
#include "stsun/unify.hpp"

namespace stsun {

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
  Tensor xg = x.clone_with_grad();
  Tensor y = f(xg);
  if (y.numel() != 1) {
    throw ValidationError("grad_check: f must be scalar-valued, got " + shape_str(y.shape()));
  }
  backward(y);
  std::vector<double> analytic = xg.has_grad()
                                     ? xg.grad()
                                     : std::vector<double>(static_cast<std::size_t>(x.numel()), 0.0);

  double max_err = 0.0;
  NoGradGuard no_grad;
  std::vector<double> probe = x.data();
  for (std::size_t i = 0; i < probe.size(); ++i) {
    double orig = probe[i];
    probe[i] = orig + eps;
    double up = f(Tensor::from_data(x.shape(), probe)).item();
    probe[i] = orig - eps;
    double down = f(Tensor::from_data(x.shape(), probe)).item();
    probe[i] = orig;
    double numeric = (up - down) / (2.0 * eps);
    double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    max_err = std::max(max_err, err);
  }
  return max_err;
}

double grad_check_param(const std::function<Tensor()>& loss, Tensor param, double eps,
                        std::int64_t max_coords) {
  Tensor out = loss();
  if (out.numel() != 1) {
    throw ValidationError("grad_check_param: loss must be scalar-valued");
  }
  backward(out);
  std::vector<double> analytic =
      param.has_grad() ? param.grad()
                       : std::vector<double>(static_cast<std::size_t>(param.numel()), 0.0);
  param.clear_grad();

  auto n = static_cast<std::int64_t>(analytic.size());
  std::int64_t stride = 1;
  if (max_coords > 0 && n > max_coords) stride = n / max_coords;

  double max_err = 0.0;
  NoGradGuard no_grad;
  auto& data = param.mutable_data();
  for (std::int64_t i = 0; i < n; i += stride) {
    auto idx = static_cast<std::size_t>(i);
    double orig = data[idx];
    data[idx] = orig + eps;
    double up = loss().item();
    data[idx] = orig - eps;
    double down = loss().item();
    data[idx] = orig;
    double numeric = (up - down) / (2.0 * eps);
    double err = std::abs(analytic[idx] - numeric) / std::max(1.0, std::abs(analytic[idx]));
    max_err = std::max(max_err, err);
  }
  return max_err;
}

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  std::vector<double> data(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : data) v = rng.normal() * scale;
  return Tensor::from_data(std::move(shape), std::move(data));
}

ModelConfig toy_config() {
  ModelConfig cfg;
  cfg.unified_h = 4;
  cfg.unified_w = 4;
  cfg.unified_t = 2;
  cfg.c_e = 8;
  cfg.c_a = 2;
  cfg.encoder_depth = 1;
  cfg.decoder_depth = 1;
  cfg.heads = 2;
  cfg.mlp_ratio = 2;
  cfg.hypernet_depth = 1;
  cfg.hypernet_heads = 2;
  cfg.hypernet_mlp_ratio = 2;
  cfg.windows = {{2, 4}, {4, 2}, {2, 2}, 0.5};
  cfg.categories = {{0, "background"}, {1, "water"}, {2, "forest"}, {3, "change"}};
  cfg.seed = 11;
  return cfg;
}

InputMetadata toy_meta(std::int64_t t1, std::int64_t c1) {
  InputMetadata meta;
  for (std::int64_t c = 0; c < c1; ++c) meta.wavelengths_nm.push_back(450.0 + 100.0 * static_cast<double>(c));
  for (std::int64_t t = 0; t < t1; ++t) meta.timestamps.push_back(180.0 * static_cast<double>(t));
  meta.resolution_m = 0.5;
  return meta;
}

/// Residual output projections initialize to zero, which would leave the
/// attention and MLP paths inert; jitter every parameter so the whole graph
/// carries gradients.
void jitter_params(Model& model, std::uint64_t seed, double scale) {
  Rng rng(seed);
  for (auto& [name, t] : model.params().items()) {
    Tensor handle = t;
    for (auto& v : handle.mutable_data()) v += scale * rng.normal();
  }
}

/// Scalar loss used by the composite checks: BCE+Dice against fixed labels.
double full_pipeline_check(bool coupled) {
  ModelConfig cfg = toy_config();
  Model model(cfg);
  jitter_params(model, 1234, 0.05);
  std::int64_t t1 = 2, c1 = 3, h1 = 8, w1 = 8;
  InputMetadata meta = toy_meta(t1, c1);
  OutputSpec spec;
  spec.task = TaskId::SCD;
  spec.out_len = 2;
  spec.category_ids = {0, 1, 2};

  Rng rng(99);
  Tensor x = random_tensor(rng, {1, t1, c1, h1, w1}, 0.5);
  std::vector<std::uint8_t> labels(static_cast<std::size_t>(spec.out_len * h1 * w1));
  for (auto& v : labels) v = static_cast<std::uint8_t>(rng.uniform_int(3));
  LossConfig loss_cfg;

  auto f = [&](const Tensor& input) {
    Tensor logits = coupled ? model.forward_coupled(input, meta, spec)
                            : model.forward(input, meta, spec);
    return multitask_loss(logits, labels, loss_cfg);
  };
  return grad_check(f, x);
}

double pipeline_param_check() {
  ModelConfig cfg = toy_config();
  Model model(cfg);
  jitter_params(model, 4321, 0.05);
  std::int64_t t1 = 2, c1 = 3, h1 = 8, w1 = 8;
  InputMetadata meta = toy_meta(t1, c1);
  OutputSpec spec;
  spec.task = TaskId::SCD;
  spec.out_len = 2;
  spec.category_ids = {0, 1, 2};

  Rng rng(55);
  Tensor x = random_tensor(rng, {1, t1, c1, h1, w1}, 0.5);
  std::vector<std::uint8_t> labels(static_cast<std::size_t>(spec.out_len * h1 * w1));
  for (auto& v : labels) v = static_cast<std::uint8_t>(rng.uniform_int(3));
  LossConfig loss_cfg;

  auto loss = [&]() {
    model.params().clear_grads();
    return multitask_loss(model.forward(x, meta, spec), labels, loss_cfg);
  };
  double worst = 0.0;
  // A parameter from every stage: embeddings, tokenizers, hypernet heads,
  // encoder attention, decoder MLP.
  for (const char* name : {"emb.task.SCD", "emb.cat.1", "tok.wavelength.w",
                           "hyper.issum_spec.whead.w", "hyper.tum_out.whead.w",
                           "enc.0.attn3.wv", "dec.0.mlp.w1"}) {
    worst = std::max(worst, grad_check_param(loss, model.params().get(name), 1e-5, 24));
  }
  return worst;
}

double hyper_branch_check(bool use_cls, bool use_positional) {
  Rng rng(500 + (use_cls ? 1 : 0) + (use_positional ? 2 : 0));
  std::int64_t width = 6, out_dim = 4, n = 3, m = 5;
  ParameterStore store;
  ParamFactory f(store, rng);
  HyperBranch branch;
  branch.cfg = {use_cls, use_positional, 1, 2, 2, width, out_dim};
  if (use_cls) branch.cls = f.trunc_normal("cls", {width}, 0.5);
  TransformerBlockParams blk;
  blk.ln1 = {f.ones("ln1.g", {width}), f.zeros("ln1.b", {width})};
  blk.ln2 = {f.ones("ln2.g", {width}), f.zeros("ln2.b", {width})};
  blk.attn = {f.trunc_normal("wq", {width, width}, 0.5), f.trunc_normal("wk", {width, width}, 0.5),
              f.trunc_normal("wv", {width, width}, 0.5), f.trunc_normal("wo", {width, width}, 0.5),
              2};
  blk.mlp = {f.trunc_normal("w1", {width, 2 * width}, 0.5), f.zeros("b1", {2 * width}),
             f.trunc_normal("w2", {2 * width, width}, 0.5), f.zeros("b2", {width})};
  branch.blocks.push_back(blk);
  branch.final_norm = {f.ones("lnf.g", {width}), f.zeros("lnf.b", {width})};
  branch.weight_head_w = f.trunc_normal("whw", {width, out_dim}, 0.5);
  branch.weight_head_b = f.zeros("whb", {out_dim});
  if (use_cls) {
    branch.bias_head_w = f.trunc_normal("bhw", {width, out_dim}, 0.5);
    branch.bias_head_b = f.zeros("bhb", {out_dim});
  }
  Tensor tokens = random_tensor(rng, {n, width}, 0.5);
  Tensor x = random_tensor(rng, {m, n}, 0.5);
  Tensor probe = random_tensor(rng, {m, out_dim}, 0.5);

  // Gradient through generate + apply w.r.t. the metadata tokens.
  auto f_tokens = [&](const Tensor& t) {
    auto gen = generate(branch, t);
    return sum(mul(apply_linear(gen, x), probe));
  };
  double err = grad_check(f_tokens, tokens);

  // And w.r.t. the mapped features.
  auto f_x = [&](const Tensor& xv) {
    auto gen = generate(branch, tokens);
    return sum(mul(apply_linear(gen, xv), probe));
  };
  return std::max(err, grad_check(f_x, x));
}

}  // namespace

std::vector<NamedGradCheck> standard_grad_checks() {
  std::vector<NamedGradCheck> checks;
  auto reg = [&](std::string name, std::function<double()> run) {
    checks.push_back({std::move(name), std::move(run), 1e-4, false});
  };

  reg("numeric-core/matmul", [] {
    Rng rng(1);
    Tensor a = random_tensor(rng, {3, 4});
    Tensor b = random_tensor(rng, {4, 5});
    Tensor probe = random_tensor(rng, {3, 5});
    double e1 = grad_check([&](const Tensor& t) { return sum(mul(matmul(t, b), probe)); }, a);
    double e2 = grad_check([&](const Tensor& t) { return sum(mul(matmul(a, t), probe)); }, b);
    return std::max(e1, e2);
  });
  reg("numeric-core/bmm", [] {
    Rng rng(2);
    Tensor a = random_tensor(rng, {2, 3, 4});
    Tensor b = random_tensor(rng, {2, 4, 5});
    Tensor bt = random_tensor(rng, {2, 5, 4});
    Tensor probe = random_tensor(rng, {2, 3, 5});
    double e1 = grad_check([&](const Tensor& t) { return sum(mul(bmm(t, b), probe)); }, a);
    double e2 = grad_check([&](const Tensor& t) { return sum(mul(bmm(a, t), probe)); }, b);
    double e3 =
        grad_check([&](const Tensor& t) { return sum(mul(bmm(a, t, true), probe)); }, bt);
    return std::max({e1, e2, e3});
  });
  reg("numeric-core/softmax_rows", [] {
    Rng rng(3);
    Tensor x = random_tensor(rng, {4, 6});
    Tensor probe = random_tensor(rng, {4, 6});
    return grad_check([&](const Tensor& t) { return sum(mul(softmax_rows(t), probe)); }, x);
  });
  reg("numeric-core/layernorm", [] {
    Rng rng(4);
    Tensor x = random_tensor(rng, {5, 7});
    Tensor gamma = random_tensor(rng, {7}, 0.5);
    Tensor beta = random_tensor(rng, {7}, 0.5);
    Tensor probe = random_tensor(rng, {5, 7});
    double e1 = grad_check(
        [&](const Tensor& t) { return sum(mul(layernorm(t, gamma, beta), probe)); }, x);
    double e2 = grad_check(
        [&](const Tensor& t) { return sum(mul(layernorm(x, t, beta), probe)); }, gamma);
    double e3 = grad_check(
        [&](const Tensor& t) { return sum(mul(layernorm(x, gamma, t), probe)); }, beta);
    return std::max({e1, e2, e3});
  });
  reg("numeric-core/elementwise", [] {
    Rng rng(5);
    Tensor x = random_tensor(rng, {3, 5});
    Tensor y = random_tensor(rng, {3, 5});
    Tensor probe = random_tensor(rng, {3, 5});
    auto f = [&](const Tensor& t) {
      Tensor z = add(mul(sigmoid(t), gelu(t)), softplus(mul(t, y)));
      z = sub(z, mul_scalar(t, 0.25));
      z = div(z, add_scalar(mul(y, y), 1.5));
      return sum(mul(z, probe));
    };
    return grad_check(f, x);
  });
  reg("numeric-core/relu", [] {
    Rng rng(16);
    // Keep coordinates away from the kink at zero.
    std::vector<double> vals(12);
    for (auto& v : vals) {
      double z = rng.normal();
      v = (std::abs(z) < 0.05 ? (z < 0 ? z - 0.1 : z + 0.1) : z);
    }
    Tensor x = Tensor::from_data({3, 4}, vals);
    Tensor probe = random_tensor(rng, {3, 4});
    return grad_check([&](const Tensor& t) { return sum(mul(relu(t), probe)); }, x);
  });
  reg("numeric-core/reductions", [] {
    Rng rng(6);
    Tensor x = random_tensor(rng, {4, 4});
    double e1 = grad_check([](const Tensor& t) { return sum(mul(t, t)); }, x);
    double e2 = grad_check([](const Tensor& t) { return mean(mul(t, t)); }, x);
    return std::max(e1, e2);
  });
  reg("numeric-core/shape-ops", [] {
    Rng rng(7);
    Tensor x = random_tensor(rng, {2, 3, 4});
    Tensor probe = random_tensor(rng, {4, 6});
    auto f = [&](const Tensor& t) {
      Tensor z = permute(t, {2, 0, 1});          // [4, 2, 3]
      z = reshape(z, {4, 6});
      auto parts = split(z, 1, {2, 4});
      Tensor joined = concat({parts[1], parts[0]}, 1);
      joined = slice(joined, 0, 0, 4);
      return sum(mul(joined, probe));
    };
    return grad_check(f, x);
  });
  reg("numeric-core/gather-scatter", [] {
    Rng rng(8);
    Tensor x = random_tensor(rng, {5, 3});
    std::vector<std::int64_t> rows{0, 2, 2, 4, 1, 3};
    std::vector<std::int64_t> dest{1, 0, 3, 3, 2, 0};
    Tensor probe = random_tensor(rng, {4, 3});
    auto f = [&](const Tensor& t) {
      Tensor g = gather_rows(t, rows);
      g = scale_rows(g, {0.5, 1.0, 0.25, 2.0, 1.5, 0.75});
      return sum(mul(scatter_add_rows(g, dest, 4), probe));
    };
    return grad_check(f, x);
  });
  reg("metadata/tokenizer", [] {
    Rng rng(9);
    ScalarTokenizer proj{random_tensor(rng, {1, 6}, 0.5), random_tensor(rng, {6}, 0.5)};
    Tensor probe = random_tensor(rng, {3, 6});
    std::vector<double> values{0.2, -0.7, 1.3};
    auto fw = [&](const Tensor& t) {
      ScalarTokenizer p{t, proj.bias};
      return sum(mul(tokenize_scalars(values, p), probe));
    };
    auto fb = [&](const Tensor& t) {
      ScalarTokenizer p{proj.weight, t};
      return sum(mul(tokenize_scalars(values, p), probe));
    };
    return std::max(grad_check(fw, proj.weight.detach()), grad_check(fb, proj.bias.detach()));
  });
  reg("hypernet/generate-apply[cls,pos]", [] { return hyper_branch_check(true, true); });
  reg("hypernet/generate-apply[cls]", [] { return hyper_branch_check(true, false); });
  reg("hypernet/generate-apply[pos]", [] { return hyper_branch_check(false, true); });
  reg("hypernet/generate-apply[plain]", [] { return hyper_branch_check(false, false); });
  reg("attention/scaled-dot", [] {
    Rng rng(10);
    Tensor q = random_tensor(rng, {3, 4});
    Tensor k = random_tensor(rng, {3, 4});
    Tensor v = random_tensor(rng, {3, 4});
    Tensor probe = random_tensor(rng, {3, 4});
    double e1 = grad_check(
        [&](const Tensor& t) { return sum(mul(scaled_dot_attention(t, k, v), probe)); }, q);
    double e2 = grad_check(
        [&](const Tensor& t) { return sum(mul(scaled_dot_attention(q, t, v), probe)); }, k);
    double e3 = grad_check(
        [&](const Tensor& t) { return sum(mul(scaled_dot_attention(q, k, t), probe)); }, v);
    return std::max({e1, e2, e3});
  });
  reg("attention/lgwa-block", [] {
    Rng rng(11);
    std::int64_t d = 4, grid = 4;
    ParameterStore store;
    ParamFactory f(store, rng);
    LgwaBlockParams p;
    for (int i = 0; i < 5; ++i) {
      p.norms[static_cast<std::size_t>(i)] = {
          f.ones("ln" + std::to_string(i) + ".g", {d}),
          f.zeros("ln" + std::to_string(i) + ".b", {d})};
    }
    for (int i = 0; i < 4; ++i) {
      auto pre = "attn" + std::to_string(i);
      p.attn[static_cast<std::size_t>(i)] = {
          f.trunc_normal(pre + ".wq", {d, d}, 0.5), f.trunc_normal(pre + ".wk", {d, d}, 0.5),
          f.trunc_normal(pre + ".wv", {d, d}, 0.5), f.trunc_normal(pre + ".wo", {d, d}, 0.5), 2};
    }
    p.mlp = {f.trunc_normal("mlp.w1", {d, 2 * d}, 0.5), f.zeros("mlp.b1", {2 * d}),
             f.trunc_normal("mlp.w2", {2 * d, d}, 0.5), f.zeros("mlp.b2", {d})};
    WindowConfig wc{{2, 4}, {4, 2}, {2, 2}, 0.5};
    Tensor x = random_tensor(rng, {2 * grid * grid, d}, 0.5);
    Tensor probe = random_tensor(rng, {2 * grid * grid, d});
    auto fn = [&](const Tensor& t) {
      return sum(mul(lgwa_block(t, 2, grid, grid, p, wc), probe));
    };
    return grad_check(fn, x);
  });
  reg("unify/patchify-roundtrip-grad", [] {
    Rng rng(12);
    PatchGrid grid = PatchGrid::make(6, 4, 3, 2);
    Tensor x = random_tensor(rng, {24, 3});
    Tensor probe = random_tensor(rng, {24, 3});
    auto f = [&](const Tensor& t) {
      return sum(mul(unpatchify(patchify(t, grid), grid), probe));
    };
    return grad_check(f, x);
  });
  reg("unify/tum", [] {
    Rng rng(13);
    GeneratedLinear in_map{random_tensor(rng, {3, 2}, 0.5), random_tensor(rng, {2}, 0.5)};
    GeneratedLinear out_map{random_tensor(rng, {2, 2}, 0.5), Tensor()};
    Tensor x = random_tensor(rng, {1, 3, 4, 2}, 0.5);
    Tensor probe = random_tensor(rng, {1, 2, 4, 2});
    auto f = [&](const Tensor& t) { return sum(mul(tum_apply(t, in_map, out_map), probe)); };
    return grad_check(f, x);
  });
  reg("training/loss", [] {
    Rng rng(14);
    Tensor logits = random_tensor(rng, {1, 2, 3, 2, 2});
    std::vector<std::uint8_t> labels(8);
    for (auto& v : labels) v = static_cast<std::uint8_t>(rng.uniform_int(3));
    LossConfig cfg;
    return grad_check([&](const Tensor& t) { return multitask_loss(t, labels, cfg); }, logits);
  });
  reg("model/full-pipeline", [] { return full_pipeline_check(false); });
  reg("model/full-pipeline-coupled", [] { return full_pipeline_check(true); });
  reg("model/full-pipeline-params", [] { return pipeline_param_check(); });

  // Negative control: a deliberately wrong backward must be caught.
  checks.push_back(
      {"numeric-core/negative-control", [] {
         Rng rng(15);
         Tensor x = random_tensor(rng, {3, 3});
         auto bad_square = [](const Tensor& t) {
           std::vector<double> out(t.data().size());
           for (std::size_t i = 0; i < out.size(); ++i) out[i] = t.data()[i] * t.data()[i];
           return Tensor::from_op(
               t.shape(), std::move(out), {t},
               [](detail::Node& n) {
                 if (n.parents[0]->requires_grad && !n.parents[0]->grad.empty()) {
                   auto& g = n.parents[0]->grad;
                   const auto& v = n.parents[0]->data;
                   // Injected fault: forgets the factor of 2.
                   for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * v[i];
                 }
               },
               "bad_square");
         };
         return grad_check([&](const Tensor& t) { return sum(bad_square(t)); }, x);
       },
       1e-2, true});

  return checks;
}

}  // namespace stsun

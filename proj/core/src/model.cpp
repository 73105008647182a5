#include "stsun/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "stsun/ops.hpp"

namespace stsun {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ValidationError("config: unknown key '" + it.key() + "' in " + where);
    }
  }
}

json window_config_to_json(const WindowConfig& w) {
  return json{{"horizontal", {w.horizontal[0], w.horizontal[1]}},
              {"vertical", {w.vertical[0], w.vertical[1]}},
              {"square", {w.square[0], w.square[1]}},
              {"stride_fraction", w.stride_fraction}};
}

WindowConfig window_config_from_json(const json& j) {
  reject_unknown_keys(j, {"horizontal", "vertical", "square", "stride_fraction"}, "windows");
  WindowConfig w;
  auto pair = [](const json& v, std::array<std::int64_t, 2>& out) {
    if (!v.is_array() || v.size() != 2) throw ValidationError("config: window shape must be [h, w]");
    out = {v[0].get<std::int64_t>(), v[1].get<std::int64_t>()};
  };
  if (j.contains("horizontal")) pair(j.at("horizontal"), w.horizontal);
  if (j.contains("vertical")) pair(j.at("vertical"), w.vertical);
  if (j.contains("square")) pair(j.at("square"), w.square);
  if (j.contains("stride_fraction")) w.stride_fraction = j.at("stride_fraction").get<double>();
  return w;
}

// --- binary checkpoint helpers (little-endian throughout) -------------------

constexpr char kMagic[4] = {'S', 'T', 'S', 'N'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
void write_f64s(std::ostream& os, const std::vector<double>& v) {
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 8));
}
void write_str(std::ostream& os, const std::string& s) {
  write_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  if (!is) throw IoError("checkpoint: truncated file");
  return v;
}
std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  if (!is) throw IoError("checkpoint: truncated file");
  return v;
}
std::vector<double> read_f64s(std::istream& is, std::uint64_t n) {
  std::vector<double> v(n);
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * 8));
  if (!is) throw IoError("checkpoint: truncated file");
  return v;
}
std::string read_str(std::istream& is) {
  auto n = read_u64(is);
  if (n > (1ull << 32)) throw IoError("checkpoint: corrupt string length");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw IoError("checkpoint: truncated file");
  return s;
}

}  // namespace

const char* attention_kind_name(AttentionKind k) {
  return k == AttentionKind::Lgwa ? "lgwa" : "global";
}

AttentionKind attention_kind_from_name(const std::string& s) {
  if (s == "lgwa") return AttentionKind::Lgwa;
  if (s == "global") return AttentionKind::Global;
  throw ValidationError("config: unknown attention kind '" + s + "'");
}

const char* unification_kind_name(UnificationKind k) {
  return k == UnificationKind::Decoupled ? "decoupled" : "coupled";
}

UnificationKind unification_kind_from_name(const std::string& s) {
  if (s == "decoupled") return UnificationKind::Decoupled;
  if (s == "coupled") return UnificationKind::Coupled;
  throw ValidationError("config: unknown unification kind '" + s + "'");
}

void ModelConfig::validate() const {
  auto positive = [](std::int64_t v, const char* what) {
    if (v < 1) throw ValidationError(std::string("config: ") + what + " must be >= 1");
  };
  positive(unified_h, "unified_h");
  positive(unified_w, "unified_w");
  positive(unified_t, "unified_t");
  positive(c_e, "c_e");
  positive(c_a, "c_a");
  positive(encoder_depth, "encoder_depth");
  positive(decoder_depth, "decoder_depth");
  positive(heads, "heads");
  positive(mlp_ratio, "mlp_ratio");
  positive(hypernet_depth, "hypernet_depth");
  positive(hypernet_heads, "hypernet_heads");
  positive(hypernet_mlp_ratio, "hypernet_mlp_ratio");
  if (d_model() % heads != 0) {
    throw ValidationError("config: d_M = c_e * c_a must be divisible by heads");
  }
  if (c_e % hypernet_heads != 0) {
    throw ValidationError("config: c_e must be divisible by hypernet_heads");
  }
  std::set<std::int64_t> ids;
  std::set<std::string> names;
  for (const auto& c : categories) {
    if (!ids.insert(c.id).second) {
      throw ValidationError("config: duplicate category id " + std::to_string(c.id));
    }
    if (!names.insert(c.name).second) {
      throw ValidationError("config: duplicate category name '" + c.name + "'");
    }
  }
}

std::string ModelConfig::to_json() const {
  json cats = json::array();
  for (const auto& c : categories) cats.push_back(json{{"id", c.id}, {"name", c.name}});
  json j{{"unified_h", unified_h},
         {"unified_w", unified_w},
         {"unified_t", unified_t},
         {"c_e", c_e},
         {"c_a", c_a},
         {"encoder_depth", encoder_depth},
         {"decoder_depth", decoder_depth},
         {"heads", heads},
         {"mlp_ratio", mlp_ratio},
         {"hypernet_depth", hypernet_depth},
         {"hypernet_heads", hypernet_heads},
         {"hypernet_mlp_ratio", hypernet_mlp_ratio},
         {"windows", window_config_to_json(windows)},
         {"attention", attention_kind_name(attention)},
         {"unification", unification_kind_name(unification)},
         {"issum_spectral_positional", issum_spectral_positional},
         {"categories", cats},
         {"seed", seed}};
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("config: model config must be a JSON object");
  reject_unknown_keys(j,
                      {"unified_h", "unified_w", "unified_t", "c_e", "c_a", "encoder_depth",
                       "decoder_depth", "heads", "mlp_ratio", "hypernet_depth", "hypernet_heads",
                       "hypernet_mlp_ratio", "windows", "attention", "unification",
                       "issum_spectral_positional", "categories", "seed"},
                      "model config");
  ModelConfig cfg;
  try {
    auto get_int = [&](const char* key, std::int64_t& out) {
      if (j.contains(key)) out = j.at(key).get<std::int64_t>();
    };
    get_int("unified_h", cfg.unified_h);
    get_int("unified_w", cfg.unified_w);
    get_int("unified_t", cfg.unified_t);
    get_int("c_e", cfg.c_e);
    get_int("c_a", cfg.c_a);
    get_int("encoder_depth", cfg.encoder_depth);
    get_int("decoder_depth", cfg.decoder_depth);
    get_int("heads", cfg.heads);
    get_int("mlp_ratio", cfg.mlp_ratio);
    get_int("hypernet_depth", cfg.hypernet_depth);
    get_int("hypernet_heads", cfg.hypernet_heads);
    get_int("hypernet_mlp_ratio", cfg.hypernet_mlp_ratio);
    if (j.contains("windows")) cfg.windows = window_config_from_json(j.at("windows"));
    if (j.contains("attention")) {
      cfg.attention = attention_kind_from_name(j.at("attention").get<std::string>());
    }
    if (j.contains("unification")) {
      cfg.unification = unification_kind_from_name(j.at("unification").get<std::string>());
    }
    if (j.contains("issum_spectral_positional")) {
      cfg.issum_spectral_positional = j.at("issum_spectral_positional").get<bool>();
    }
    if (j.contains("categories")) {
      for (const auto& c : j.at("categories")) {
        reject_unknown_keys(c, {"id", "name"}, "category");
        cfg.categories.push_back(
            {c.at("id").get<std::int64_t>(), c.at("name").get<std::string>()});
      }
    }
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  build_parameters();
}

TransformerBlockParams Model::build_transformer_block(ParamFactory& f, const std::string& prefix,
                                                      std::int64_t width, std::int64_t heads,
                                                      std::int64_t mlp_ratio) {
  TransformerBlockParams p;
  p.ln1 = {f.ones(prefix + ".ln1.gamma", {width}), f.zeros(prefix + ".ln1.beta", {width})};
  p.ln2 = {f.ones(prefix + ".ln2.gamma", {width}), f.zeros(prefix + ".ln2.beta", {width})};
  p.attn.heads = heads;
  p.attn.wq = f.trunc_normal(prefix + ".attn.wq", {width, width});
  p.attn.wk = f.trunc_normal(prefix + ".attn.wk", {width, width});
  p.attn.wv = f.trunc_normal(prefix + ".attn.wv", {width, width});
  p.attn.wo = f.zeros(prefix + ".attn.wo", {width, width});
  std::int64_t hidden = width * mlp_ratio;
  p.mlp.w1 = f.trunc_normal(prefix + ".mlp.w1", {width, hidden});
  p.mlp.b1 = f.zeros(prefix + ".mlp.b1", {hidden});
  p.mlp.w2 = f.zeros(prefix + ".mlp.w2", {hidden, width});
  p.mlp.b2 = f.zeros(prefix + ".mlp.b2", {width});
  return p;
}

LgwaBlockParams Model::build_lgwa_block(ParamFactory& f, const std::string& prefix) {
  std::int64_t d = cfg_.d_model();
  LgwaBlockParams p;
  for (int i = 0; i < 5; ++i) {
    auto pre = prefix + ".ln" + std::to_string(i);
    p.norms[static_cast<std::size_t>(i)] = {f.ones(pre + ".gamma", {d}), f.zeros(pre + ".beta", {d})};
  }
  for (int i = 0; i < 4; ++i) {
    auto pre = prefix + ".attn" + std::to_string(i);
    auto& a = p.attn[static_cast<std::size_t>(i)];
    a.heads = cfg_.heads;
    a.wq = f.trunc_normal(pre + ".wq", {d, d});
    a.wk = f.trunc_normal(pre + ".wk", {d, d});
    a.wv = f.trunc_normal(pre + ".wv", {d, d});
    a.wo = f.zeros(pre + ".wo", {d, d});
  }
  std::int64_t hidden = d * cfg_.mlp_ratio;
  p.mlp.w1 = f.trunc_normal(prefix + ".mlp.w1", {d, hidden});
  p.mlp.b1 = f.zeros(prefix + ".mlp.b1", {hidden});
  p.mlp.w2 = f.zeros(prefix + ".mlp.w2", {hidden, d});
  p.mlp.b2 = f.zeros(prefix + ".mlp.b2", {d});
  return p;
}

HyperBranch Model::build_branch(ParamFactory& f, const std::string& prefix, HyperBranchConfig bc) {
  bc.width = cfg_.c_e;
  bc.depth = cfg_.hypernet_depth;
  bc.heads = cfg_.hypernet_heads;
  bc.mlp_ratio = cfg_.hypernet_mlp_ratio;
  HyperBranch b;
  b.cfg = bc;
  if (bc.use_cls) b.cls = f.trunc_normal(prefix + ".cls", {bc.width});
  for (std::int64_t i = 0; i < bc.depth; ++i) {
    b.blocks.push_back(build_transformer_block(f, prefix + ".blk" + std::to_string(i), bc.width,
                                               bc.heads, bc.mlp_ratio));
  }
  b.final_norm = {f.ones(prefix + ".lnf.gamma", {bc.width}),
                  f.zeros(prefix + ".lnf.beta", {bc.width})};
  // 1/sqrt(width) keeps the generated maps near-isometric at the start;
  // 0.02 here would shrink them a hundredfold and stall early training.
  b.weight_head_w = f.trunc_normal(prefix + ".whead.w", {bc.width, bc.out_dim},
                                   1.0 / std::sqrt(static_cast<double>(bc.width)));
  b.weight_head_b = f.zeros(prefix + ".whead.b", {bc.out_dim});
  if (bc.use_cls) {
    b.bias_head_w = f.trunc_normal(prefix + ".bhead.w", {bc.width, bc.out_dim});
    b.bias_head_b = f.zeros(prefix + ".bhead.b", {bc.out_dim});
  }
  return b;
}

void Model::build_parameters() {
  store_.set_rng_seed(cfg_.seed);
  Rng rng(cfg_.seed);
  ParamFactory f(store_, rng);
  std::int64_t ce = cfg_.c_e;

  auto tokenizer = [&](const std::string& name) {
    return ScalarTokenizer{f.trunc_normal("tok." + name + ".w", {1, ce}),
                           f.zeros("tok." + name + ".b", {ce})};
  };
  tok_.wavelength = tokenizer("wavelength");
  tok_.timestamp = tokenizer("timestamp");
  tok_.out_time = tokenizer("out_time");
  tok_.row = tokenizer("row");
  tok_.col = tokenizer("col");
  tok_.res = tokenizer("res");

  for (TaskId task : {TaskId::SS, TaskId::BCD, TaskId::SCD}) {
    registry_.register_task(task,
                            f.trunc_normal(std::string("emb.task.") + task_name(task), {ce}));
  }
  for (const auto& c : cfg_.categories) {
    registry_.register_category(c.id, c.name,
                                f.trunc_normal("emb.cat." + std::to_string(c.id), {ce}));
  }

  // Input-side branches generate bias (CLS); output-side are weight-only.
  // The category branch drops positional encodings: a category subset is a
  // set, and the permutation property depends on it.
  branches_.issum_spectral =
      build_branch(f, "hyper.issum_spec",
                   {.use_cls = true, .use_positional = cfg_.issum_spectral_positional,
                    .out_dim = ce});
  branches_.issum_spatial =
      build_branch(f, "hyper.issum_spat", {.use_cls = true, .use_positional = true,
                                           .out_dim = cfg_.c_a});
  branches_.tum_in = build_branch(f, "hyper.tum_in", {.use_cls = true, .use_positional = true,
                                                      .out_dim = cfg_.unified_t});
  branches_.tum_out = build_branch(f, "hyper.tum_out", {.use_cls = false, .use_positional = true,
                                                        .out_dim = cfg_.unified_t});
  branches_.ossum_spatial =
      build_branch(f, "hyper.ossum_spat", {.use_cls = false, .use_positional = true,
                                           .out_dim = cfg_.c_a});
  branches_.ossum_spectral =
      build_branch(f, "hyper.ossum_spec", {.use_cls = false, .use_positional = false,
                                           .out_dim = ce});
  branches_.coupled_in = build_branch(f, "hyper.coupled_in", {.use_cls = true,
                                                              .use_positional = true,
                                                              .out_dim = ce});
  branches_.coupled_out = build_branch(f, "hyper.coupled_out", {.use_cls = false,
                                                                .use_positional = false,
                                                                .out_dim = ce});

  for (std::int64_t i = 0; i < cfg_.encoder_depth; ++i) {
    auto pre = "enc." + std::to_string(i);
    if (cfg_.attention == AttentionKind::Lgwa) {
      enc_lgwa_.push_back(build_lgwa_block(f, pre));
    } else {
      enc_global_.push_back(
          build_transformer_block(f, pre, cfg_.d_model(), cfg_.heads, cfg_.mlp_ratio));
    }
  }
  for (std::int64_t i = 0; i < cfg_.decoder_depth; ++i) {
    auto pre = "dec." + std::to_string(i);
    if (cfg_.attention == AttentionKind::Lgwa) {
      dec_lgwa_.push_back(build_lgwa_block(f, pre));
    } else {
      dec_global_.push_back(
          build_transformer_block(f, pre, cfg_.d_model(), cfg_.heads, cfg_.mlp_ratio));
    }
  }
}

Tensor Model::category_tokens(const std::vector<std::int64_t>& ids) const {
  std::vector<Tensor> rows;
  rows.reserve(ids.size());
  for (auto id : ids) rows.push_back(reshape(registry_.category_embedding(id), {1, cfg_.c_e}));
  return rows.size() == 1 ? rows[0] : concat(rows, 0);
}

GeneratedLinear Model::gen_spatial(const HyperBranch& branch, const PatchGrid& grid,
                                   double resolution_m) const {
  Tensor tokens = encode_spatial_meta(grid.ph(), grid.pw(), resolution_m, tok_.row, tok_.col,
                                      tok_.res);
  return generate(branch, tokens);
}

namespace {

template <typename Fn>
Tensor run_stage(const char* stage, Fn&& fn) {
  try {
    return fn();
  } catch (const NumericError& e) {
    throw NumericError(std::string(stage) + ": " + e.what());
  } catch (const StsunError& e) {
    throw ValidationError(std::string(stage) + ": " + e.what());
  }
}

}  // namespace

Tensor Model::forward(const Tensor& x, const InputMetadata& meta, const OutputSpec& spec) const {
  bool batched = x.rank() == 5;
  if (!batched && x.rank() != 4) {
    throw ShapeError("forward: expected [T1, C1, H1, W1] or [B, T1, C1, H1, W1]");
  }
  Tensor xb = batched ? x : reshape(x, {1, x.dim(0), x.dim(1), x.dim(2), x.dim(3)});
  std::int64_t b = xb.dim(0), t1 = xb.dim(1), c1 = xb.dim(2), h1 = xb.dim(3), w1 = xb.dim(4);

  meta.validate(t1, c1);
  spec.validate(t1, registry_);
  if ((spec.out_h != 0 && spec.out_h != h1) || (spec.out_w != 0 && spec.out_w != w1)) {
    throw ValidationError("forward: output size must match the input size (H2=H1, W2=W1)");
  }
  PatchGrid grid = PatchGrid::make(h1, w1, cfg_.unified_h, cfg_.unified_w);

  Tensor unified = run_stage("issum", [&] {
    auto spectral = generate(branches_.issum_spectral,
                             tokenize_scalars(meta.normalized_wavelengths(), tok_.wavelength));
    auto spatial = gen_spatial(branches_.issum_spatial, grid, meta.resolution_m);
    return issum_apply(xb, spectral, spatial, grid, cfg_.c_e, cfg_.c_a);
  });

  std::int64_t l = cfg_.unified_h * cfg_.unified_w;
  std::int64_t c = cfg_.d_model();
  Tensor encoded = run_stage("encoder", [&] {
    Tensor flat = reshape(unified, {b * t1 * l, c});
    Tensor y = flat;
    if (cfg_.attention == AttentionKind::Lgwa) {
      for (const auto& blk : enc_lgwa_) {
        y = lgwa_block(y, b * t1, cfg_.unified_h, cfg_.unified_w, blk, cfg_.windows);
      }
    } else {
      for (const auto& blk : enc_global_) y = transformer_block(y, b * t1, blk);
    }
    return reshape(y, {b, t1, l, c});
  });

  Tensor fused = run_stage("tum", [&] {
    auto in_map = generate(branches_.tum_in,
                           tokenize_scalars(meta.normalized_timestamps(), tok_.timestamp));
    auto out_map = generate(branches_.tum_out,
                            encode_output_temporal_meta(spec.out_len, spec.task, tok_.out_time,
                                                        registry_));
    return tum_apply(encoded, in_map, out_map);
  });

  std::int64_t t2 = spec.out_len;
  Tensor decoded = run_stage("decoder", [&] {
    Tensor flat = reshape(fused, {b * t2 * l, c});
    Tensor y = flat;
    if (cfg_.attention == AttentionKind::Lgwa) {
      for (const auto& blk : dec_lgwa_) {
        y = lgwa_block(y, b * t2, cfg_.unified_h, cfg_.unified_w, blk, cfg_.windows);
      }
    } else {
      for (const auto& blk : dec_global_) y = transformer_block(y, b * t2, blk);
    }
    return reshape(y, {b, t2, l, c});
  });

  Tensor logits = run_stage("ossum", [&] {
    auto spatial = gen_spatial(branches_.ossum_spatial, grid, meta.resolution_m);
    auto spectral = generate(branches_.ossum_spectral, category_tokens(spec.category_ids));
    return ossum_apply(decoded, spatial, spectral, grid, cfg_.c_e, cfg_.c_a);
  });

  if (!batched) {
    return reshape(logits, {t2, static_cast<std::int64_t>(spec.category_ids.size()), h1, w1});
  }
  return logits;
}

Tensor Model::forward_coupled(const Tensor& x, const InputMetadata& meta,
                              const OutputSpec& spec) const {
  bool batched = x.rank() == 5;
  if (!batched && x.rank() != 4) {
    throw ShapeError("forward: expected [T1, C1, H1, W1] or [B, T1, C1, H1, W1]");
  }
  Tensor xb = batched ? x : reshape(x, {1, x.dim(0), x.dim(1), x.dim(2), x.dim(3)});
  std::int64_t b = xb.dim(0), t1 = xb.dim(1), c1 = xb.dim(2), h1 = xb.dim(3), w1 = xb.dim(4);

  meta.validate(t1, c1);
  spec.validate(t1, registry_);
  if ((spec.out_h != 0 && spec.out_h != h1) || (spec.out_w != 0 && spec.out_w != w1)) {
    throw ValidationError("forward: output size must match the input size (H2=H1, W2=W1)");
  }
  PatchGrid grid = PatchGrid::make(h1, w1, cfg_.unified_h, cfg_.unified_w);
  std::int64_t t2 = spec.out_len;
  std::int64_t c2 = static_cast<std::int64_t>(spec.category_ids.size());
  std::int64_t l = cfg_.unified_h * cfg_.unified_w;
  std::int64_t c = cfg_.d_model();

  // Input: the temporal axis folds into the channel axis; each combined
  // channel token is wavelength token + timestamp token.
  Tensor unified = run_stage("issum", [&] {
    Tensor wl = tokenize_scalars(meta.normalized_wavelengths(), tok_.wavelength);
    Tensor ts = tokenize_scalars(meta.normalized_timestamps(), tok_.timestamp);
    std::vector<std::int64_t> ts_idx(static_cast<std::size_t>(t1 * c1));
    std::vector<std::int64_t> wl_idx(static_cast<std::size_t>(t1 * c1));
    for (std::int64_t t = 0; t < t1; ++t) {
      for (std::int64_t ch = 0; ch < c1; ++ch) {
        ts_idx[static_cast<std::size_t>(t * c1 + ch)] = t;
        wl_idx[static_cast<std::size_t>(t * c1 + ch)] = ch;
      }
    }
    Tensor tokens = add(gather_rows(ts, ts_idx), gather_rows(wl, wl_idx));
    auto spectral = generate(branches_.coupled_in, tokens);
    auto spatial = gen_spatial(branches_.issum_spatial, grid, meta.resolution_m);
    Tensor folded = reshape(xb, {b, 1, t1 * c1, h1, w1});
    return issum_apply(folded, spectral, spatial, grid, cfg_.c_e, cfg_.c_a);
  });

  Tensor processed = run_stage("encoder", [&] {
    Tensor y = reshape(unified, {b * l, c});
    if (cfg_.attention == AttentionKind::Lgwa) {
      for (const auto& blk : enc_lgwa_) {
        y = lgwa_block(y, b, cfg_.unified_h, cfg_.unified_w, blk, cfg_.windows);
      }
      for (const auto& blk : dec_lgwa_) {
        y = lgwa_block(y, b, cfg_.unified_h, cfg_.unified_w, blk, cfg_.windows);
      }
    } else {
      for (const auto& blk : enc_global_) y = transformer_block(y, b, blk);
      for (const auto& blk : dec_global_) y = transformer_block(y, b, blk);
    }
    return y;
  });

  Tensor logits = run_stage("ossum", [&] {
    auto spatial = gen_spatial(branches_.ossum_spatial, grid, meta.resolution_m);
    // Output tokens: category embedding + output-time token + task embedding,
    // one per (frame, category) pair.
    Tensor cats = category_tokens(spec.category_ids);
    Tensor times = encode_output_temporal_meta(t2, spec.task, tok_.out_time, registry_);
    std::vector<std::int64_t> time_idx(static_cast<std::size_t>(t2 * c2));
    std::vector<std::int64_t> cat_idx(static_cast<std::size_t>(t2 * c2));
    for (std::int64_t t = 0; t < t2; ++t) {
      for (std::int64_t k = 0; k < c2; ++k) {
        time_idx[static_cast<std::size_t>(t * c2 + k)] = t;
        cat_idx[static_cast<std::size_t>(t * c2 + k)] = k;
      }
    }
    Tensor tokens = add(gather_rows(times, time_idx), gather_rows(cats, cat_idx));
    auto spectral = generate(branches_.coupled_out, tokens);

    Tensor rows = reshape(processed, {b * l * cfg_.c_e, cfg_.c_a});
    Tensor widened = apply_linear_transposed(spatial, rows);
    Tensor pixels = unpatchify(widened, grid, b);  // [(B*H2*W2) x C_e]
    Tensor flat = apply_linear_transposed(spectral, pixels);  // [(B*H2*W2) x (T2*C2)]
    Tensor shaped = reshape(flat, {b, h1, w1, t2, c2});
    return permute(shaped, {0, 3, 4, 1, 2});
  });

  if (!batched) return reshape(logits, {t2, c2, h1, w1});
  return logits;
}

Tensor Model::forward_configured(const Tensor& x, const InputMetadata& meta,
                                 const OutputSpec& spec) const {
  return cfg_.unification == UnificationKind::Coupled ? forward_coupled(x, meta, spec)
                                                      : forward(x, meta, spec);
}

void Model::save(const std::filesystem::path& path, const TrainState* state) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("checkpoint: cannot open '" + path.string() + "' for writing");
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  write_str(os, cfg_.to_json());
  auto items = store_.items();
  write_u64(os, items.size());
  for (const auto& [name, tensor] : items) {
    write_str(os, name);
    const auto& shape = tensor.shape();
    write_u64(os, shape.size());
    for (auto e : shape) write_u64(os, static_cast<std::uint64_t>(e));
    write_f64s(os, tensor.data());
  }
  os.put(state ? 1 : 0);
  if (state) {
    write_u64(os, static_cast<std::uint64_t>(state->step));
    write_u64(os, state->moments.size());
    for (const auto& [name, mv] : state->moments) {
      write_str(os, name);
      write_u64(os, mv.first.size());
      write_f64s(os, mv.first);
      write_f64s(os, mv.second);
    }
  }
  if (!os) throw IoError("checkpoint: write failed for '" + path.string() + "'");
}

Model Model::load(const std::filesystem::path& path, TrainState* state) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open '" + path.string() + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("checkpoint: bad magic bytes");
  }
  auto version = read_u32(is);
  if (version != kVersion) {
    throw IoError("checkpoint: unsupported format version " + std::to_string(version));
  }
  ModelConfig cfg = ModelConfig::from_json(read_str(is));
  Model model(cfg);

  auto count = read_u64(is);
  if (count != model.store_.size()) {
    throw IoError("checkpoint: parameter count mismatch (file " + std::to_string(count) +
                  ", model " + std::to_string(model.store_.size()) + ")");
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    auto name = read_str(is);
    if (!model.store_.contains(name)) {
      throw IoError("checkpoint: unknown parameter '" + name + "'");
    }
    Tensor t = model.store_.get(name);
    auto rank = read_u64(is);
    Shape shape(rank);
    for (auto& e : shape) e = static_cast<std::int64_t>(read_u64(is));
    if (shape != t.shape()) {
      throw IoError("checkpoint: shape mismatch for parameter '" + name + "'");
    }
    t.mutable_data() = read_f64s(is, static_cast<std::uint64_t>(t.numel()));
  }
  int flag = is.get();
  if (flag == EOF) throw IoError("checkpoint: truncated file");
  if (flag == 1) {
    TrainState st;
    st.step = static_cast<std::int64_t>(read_u64(is));
    auto n = read_u64(is);
    for (std::uint64_t i = 0; i < n; ++i) {
      auto name = read_str(is);
      auto len = read_u64(is);
      auto m = read_f64s(is, len);
      auto v = read_f64s(is, len);
      st.moments[name] = {std::move(m), std::move(v)};
    }
    if (state) *state = std::move(st);
  } else if (flag != 0) {
    throw IoError("checkpoint: corrupt training-state flag");
  }
  return model;
}

}  // namespace stsun

// stsun: synthesize data, train, evaluate, predict, gradient-check and run
// the unification/attention ablation grid from one binary.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "stsun/dataio.hpp"
#include "stsun/gradcheck.hpp"
#include "stsun/model.hpp"
#include "stsun/ops.hpp"
#include "stsun/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stsun;

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ValidationError("config: unknown key '" + it.key() + "' in " + where);
    }
  }
}

struct DatasetRef {
  std::string path;
  std::string name;
  std::vector<std::int64_t> categories;
};

struct RunConfig {
  ModelConfig model;
  TrainPlan plan;
  LossConfig loss;
  std::vector<DatasetRef> datasets;
  std::string out_dir;
  std::uint64_t seed = 0;
};

TrainPlan plan_from_json(const json& j) {
  reject_unknown_keys(j,
                      {"lr", "weight_decay", "plateau_factor", "patience", "max_epochs",
                       "batch_size", "max_steps", "flip_h_prob", "flip_v_prob", "transpose_prob"},
                      "train plan");
  TrainPlan p;
  auto get_dbl = [&](const char* key, double& out) {
    if (j.contains(key)) out = j.at(key).get<double>();
  };
  auto get_int = [&](const char* key, std::int64_t& out) {
    if (j.contains(key)) out = j.at(key).get<std::int64_t>();
  };
  get_dbl("lr", p.lr);
  get_dbl("weight_decay", p.weight_decay);
  get_dbl("plateau_factor", p.plateau_factor);
  get_int("patience", p.patience);
  get_int("max_epochs", p.max_epochs);
  get_int("batch_size", p.batch_size);
  get_int("max_steps", p.max_steps);
  get_dbl("flip_h_prob", p.flip_h_prob);
  get_dbl("flip_v_prob", p.flip_v_prob);
  get_dbl("transpose_prob", p.transpose_prob);
  p.validate();
  return p;
}

LossConfig loss_from_json(const json& j) {
  reject_unknown_keys(j, {"bce_weight", "dice_weight", "dice_smooth"}, "loss");
  LossConfig cfg;
  if (j.contains("bce_weight")) cfg.bce_weight = j.at("bce_weight").get<double>();
  if (j.contains("dice_weight")) cfg.dice_weight = j.at("dice_weight").get<double>();
  if (j.contains("dice_smooth")) cfg.dice_smooth = j.at("dice_smooth").get<double>();
  cfg.validate();
  return cfg;
}

RunConfig run_config_from_file(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: invalid JSON: ") + e.what());
  }
  reject_unknown_keys(j, {"model", "train", "loss", "datasets", "out_dir", "seed"}, "run config");
  RunConfig cfg;
  try {
    if (!j.contains("model") || !j.contains("datasets") || !j.contains("out_dir")) {
      throw ValidationError("config: 'model', 'datasets' and 'out_dir' are required");
    }
    cfg.model = ModelConfig::from_json(j.at("model").dump());
    if (j.contains("train")) cfg.plan = plan_from_json(j.at("train"));
    if (j.contains("loss")) cfg.loss = loss_from_json(j.at("loss"));
    for (const auto& d : j.at("datasets")) {
      reject_unknown_keys(d, {"path", "name", "task", "categories"}, "dataset entry");
      DatasetRef ref;
      ref.path = d.at("path").get<std::string>();
      ref.name = d.contains("name") ? d.at("name").get<std::string>()
                                    : fs::path(ref.path).filename().string();
      if (d.contains("categories")) {
        ref.categories = d.at("categories").get<std::vector<std::int64_t>>();
      }
      if (d.contains("task")) {
        // the manifest's task must agree; checked after loading
        ref.name += "";
      }
      cfg.datasets.push_back(std::move(ref));
    }
    cfg.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  cfg.model.seed = cfg.seed;
  cfg.plan.seed = cfg.seed;

  // verify declared tasks against manifests
  try {
    const json& ds = j.at("datasets");
    for (std::size_t i = 0; i < cfg.datasets.size(); ++i) {
      if (ds[i].contains("task")) {
        auto declared = task_from_name(ds[i].at("task").get<std::string>());
        auto probe = read_dataset(cfg.datasets[i].path);
        for (const auto& [name, split] : probe.splits) {
          if (split.manifest.task != declared) {
            throw ValidationError("config: dataset '" + cfg.datasets[i].name +
                                  "' declares task " + task_name(declared) +
                                  " but the manifest says " + task_name(split.manifest.task));
          }
        }
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return cfg;
}

std::vector<TrainDataset> load_datasets(const RunConfig& cfg) {
  std::vector<TrainDataset> out;
  for (const auto& ref : cfg.datasets) {
    out.push_back({read_dataset(ref.path), ref.name, ref.categories});
  }
  return out;
}

void write_pgm(const fs::path& path, const std::uint8_t* data, std::int64_t h, std::int64_t w,
               std::int64_t num_classes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os << "P5\n" << w << " " << h << "\n255\n";
  std::int64_t scale = num_classes > 1 ? 255 / (num_classes - 1) : 255;
  for (std::int64_t i = 0; i < h * w; ++i) {
    os.put(static_cast<char>(std::min<std::int64_t>(255, data[i] * scale)));
  }
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

int run_synth(const std::string& spec_path, const std::string& out_dir) {
  auto spec = SyntheticSpec::from_json(read_text(spec_path));
  auto dataset = generate_synthetic(spec);
  write_dataset(out_dir, dataset);
  std::int64_t total = 0;
  for (const auto& [name, split] : dataset.splits) total += split.manifest.num_samples;
  std::cout << "wrote dataset '" << spec.name << "' (" << total << " samples) to " << out_dir
            << "\n";
  return 0;
}

int run_train(const std::string& config_path) {
  RunConfig cfg = run_config_from_file(config_path);
  fs::create_directories(cfg.out_dir);
  auto datasets = load_datasets(cfg);
  Model model(cfg.model);
  auto result = train(model, datasets, cfg.plan, cfg.loss, &std::cerr);
  TrainState state = result.state;
  model.save(fs::path(cfg.out_dir) / "checkpoint.stsn", &state);
  write_metric_log_csv((fs::path(cfg.out_dir) / "metrics.csv").string(), result.log);
  std::cout << "best mean validation F1 " << result.best_mean_f1 << " at epoch "
            << result.best_epoch << " after " << result.steps << " steps\n";
  return 0;
}

std::vector<std::int64_t> parse_id_list(const std::string& csv) {
  std::vector<std::int64_t> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stoll(item));
  }
  return out;
}

int run_eval(const std::string& ckpt, const std::string& dataset_dir, const std::string& split,
             const std::string& categories, const std::string& out_file) {
  Model model = Model::load(ckpt);
  auto dataset = read_dataset(dataset_dir);
  if (!dataset.splits.count(split)) {
    throw ValidationError("eval: dataset has no '" + split + "' split");
  }
  const auto& ds = dataset.splits.at(split);
  std::vector<std::int64_t> override_ids;
  if (!categories.empty()) override_ids = parse_id_list(categories);
  LossConfig loss_cfg;
  auto result = evaluate_split(model, ds, loss_cfg, override_ids);
  write_eval_csv(out_file, ds.manifest.name, ds.manifest.task, result);
  std::cout << "F1 " << result.f1 << "  mIoU " << result.miou << "  OA " << result.oa << " -> "
            << out_file << "\n";
  return 0;
}

int run_predict(const std::string& ckpt, const std::string& dataset_dir, const std::string& split,
                const std::string& out_dir, bool pgm, bool pad) {
  Model model = Model::load(ckpt);
  auto dataset = read_dataset(dataset_dir);
  if (!dataset.splits.count(split)) {
    throw ValidationError("predict: dataset has no '" + split + "' split");
  }
  const auto& ds = dataset.splits.at(split);
  const auto& m = ds.manifest;
  fs::create_directories(out_dir);

  OutputSpec spec;
  spec.task = m.task;
  spec.out_len = m.t2;
  spec.category_ids = m.category_ids;
  InputMetadata meta = m.input_metadata();

  NoGradGuard no_grad;
  std::vector<std::uint8_t> all(static_cast<std::size_t>(m.num_samples * ds.label_stride()));
  std::int64_t cells = m.h1 * m.w1;
  for (std::int64_t i = 0; i < m.num_samples; ++i) {
    Tensor logits;
    if (pad) {
      auto padded = pad_to_divisible(ds.images.data() + i * ds.image_stride(),
                                     ds.labels.data() + i * ds.label_stride(), m.t1, m.c1, m.t2,
                                     m.h1, m.w1, model.config().unified_h,
                                     model.config().unified_w);
      std::vector<double> data(padded.image.begin(), padded.image.end());
      Tensor x = Tensor::from_data({1, m.t1, m.c1, padded.h, padded.w}, std::move(data));
      Tensor full = model.forward_configured(x, meta, spec);
      // crop back to the original footprint
      full = slice(full, 3, padded.crop[0], padded.crop[2]);
      logits = slice(full, 4, padded.crop[1], padded.crop[3]);
    } else {
      Tensor x = ds.image_tensor(i);
      logits = model.forward_configured(reshape(x, {1, m.t1, m.c1, m.h1, m.w1}), meta, spec);
    }
    auto classes = logits_to_classes(logits);
    std::copy(classes.begin(), classes.end(), all.begin() + i * ds.label_stride());
    if (pgm) {
      for (std::int64_t t = 0; t < m.t2; ++t) {
        char name[64];
        std::snprintf(name, sizeof(name), "sample_%04lld_frame_%02lld.pgm",
                      static_cast<long long>(i), static_cast<long long>(t));
        write_pgm(fs::path(out_dir) / name, classes.data() + t * cells, m.h1, m.w1, m.c2());
      }
    }
  }
  std::ofstream os(fs::path(out_dir) / "labels.u8", std::ios::binary);
  os.write(reinterpret_cast<const char*>(all.data()), static_cast<std::streamsize>(all.size()));
  if (!os) throw IoError("predict: write failed");
  os.close();
  auto manifest = m;
  manifest.name = m.name + "-predictions";
  std::ofstream mj(fs::path(out_dir) / "meta.json");
  mj << manifest.to_json();
  std::cout << "wrote predictions for " << m.num_samples << " samples to " << out_dir << "\n";
  return 0;
}

int run_gradcheck(const std::string& module) {
  auto checks = standard_grad_checks();
  int failures = 0;
  std::printf("%-44s %14s  %s\n", "check", "max rel err", "result");
  for (const auto& check : checks) {
    if (!module.empty() && check.name.find(module) == std::string::npos) continue;
    double err = check.run();
    bool pass = check.expect_failure ? err > check.threshold : err < check.threshold;
    std::printf("%-44s %14.3e  %s\n", check.name.c_str(), err, pass ? "PASS" : "FAIL");
    if (!pass) ++failures;
  }
  if (failures > 0) {
    throw NumericError(std::to_string(failures) + " gradient check(s) failed");
  }
  return 0;
}

struct AblationGrid {
  std::vector<UnificationKind> unification{UnificationKind::Coupled, UnificationKind::Decoupled};
  std::vector<AttentionKind> attention{AttentionKind::Global, AttentionKind::Lgwa};
};

AblationGrid parse_grid(const std::vector<std::string>& entries) {
  AblationGrid grid;
  for (const auto& entry : entries) {
    auto eq = entry.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("ablate: grid entries look like axis=value,value");
    }
    auto axis = entry.substr(0, eq);
    auto values = entry.substr(eq + 1);
    std::stringstream ss(values);
    std::string item;
    if (axis == "unification") {
      grid.unification.clear();
      while (std::getline(ss, item, ',')) grid.unification.push_back(unification_kind_from_name(item));
    } else if (axis == "attention") {
      grid.attention.clear();
      while (std::getline(ss, item, ',')) grid.attention.push_back(attention_kind_from_name(item));
    } else {
      throw ValidationError("ablate: unknown grid axis '" + axis + "'");
    }
  }
  if (grid.unification.empty() || grid.attention.empty()) {
    throw ValidationError("ablate: empty grid axis");
  }
  return grid;
}

int run_ablate(const std::string& config_path, const std::vector<std::string>& grid_entries) {
  RunConfig cfg = run_config_from_file(config_path);
  AblationGrid grid = parse_grid(grid_entries);
  fs::create_directories(cfg.out_dir);
  auto datasets = load_datasets(cfg);

  std::ofstream csv(fs::path(cfg.out_dir) / "ablation.csv");
  if (!csv) throw IoError("ablate: cannot open ablation.csv");
  csv << "unification,attention,loss,P,R,F1,IoU,OA\n";
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return std::string(buf);
  };

  for (auto unif : grid.unification) {
    for (auto attn : grid.attention) {
      ModelConfig mc = cfg.model;
      mc.unification = unif;
      mc.attention = attn;
      Model model(mc);
      auto result = train(model, datasets, cfg.plan, cfg.loss, &std::cerr);

      std::string cell = std::string(unification_kind_name(unif)) + "-" +
                         attention_kind_name(attn);
      fs::path cell_dir = fs::path(cfg.out_dir) / cell;
      fs::create_directories(cell_dir);
      TrainState state = result.state;
      model.save(cell_dir / "checkpoint.stsn", &state);
      write_metric_log_csv((cell_dir / "metrics.csv").string(), result.log);

      double loss_acc = 0.0, p = 0.0, r = 0.0, f1 = 0.0, iou = 0.0, oa = 0.0;
      std::int64_t n = 0;
      for (const auto& ds : datasets) {
        if (!ds.data.splits.count("test")) continue;
        auto ev = evaluate_split(model, ds.data.splits.at("test"), cfg.loss, ds.categories,
                                 cfg.plan.batch_size);
        loss_acc += ev.mean_loss;
        p += ev.precision;
        r += ev.recall;
        f1 += ev.f1;
        iou += ev.iou;
        oa += ev.oa;
        ++n;
      }
      if (n == 0) throw ValidationError("ablate: datasets need test splits");
      auto d = static_cast<double>(n);
      csv << unification_kind_name(unif) << ',' << attention_kind_name(attn) << ','
          << fmt(loss_acc / d) << ',' << fmt(p / d) << ',' << fmt(r / d) << ',' << fmt(f1 / d)
          << ',' << fmt(iou / d) << ',' << fmt(oa / d) << "\n";
      std::cerr << "cell " << cell << " done (mean test F1 " << f1 / d << ")\n";
    }
  }
  if (!csv) throw IoError("ablate: write failed");
  std::cout << "wrote " << (fs::path(cfg.out_dir) / "ablation.csv").string() << "\n";
  return 0;
}

int error_exit(const std::exception& e, const char* kind, int code) {
  json err{{"error", {{"kind", kind}, {"message", e.what()}}}};
  std::cerr << err.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spatial-temporal-spectral unified dense prediction"};
  app.require_subcommand(1);

  std::string spec_path, out_dir, config_path, ckpt, dataset_dir;
  std::string split = "test";
  std::string categories;
  std::string eval_out = "metrics.csv";
  std::string module_filter;
  bool pgm = false, pad = false;
  std::vector<std::string> grid_entries;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--spec", spec_path, "synthetic spec JSON")->required();
  synth->add_option("--out", out_dir, "output dataset directory")->required();

  auto* train_cmd = app.add_subcommand("train", "train from a run config");
  train_cmd->add_option("--config", config_path, "run config JSON")->required();

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  eval_cmd->add_option("--ckpt", ckpt, "checkpoint path")->required();
  eval_cmd->add_option("--dataset", dataset_dir, "dataset directory")->required();
  eval_cmd->add_option("--split", split, "split name (default test)");
  eval_cmd->add_option("--categories", categories, "comma-separated category id subset");
  eval_cmd->add_option("--out", eval_out, "metrics CSV path (default metrics.csv)");

  auto* predict_cmd = app.add_subcommand("predict", "write class-map predictions");
  predict_cmd->add_option("--ckpt", ckpt, "checkpoint path")->required();
  predict_cmd->add_option("--dataset", dataset_dir, "dataset directory")->required();
  predict_cmd->add_option("--split", split, "split name (default test)");
  predict_cmd->add_option("--out", out_dir, "output directory")->required();
  predict_cmd->add_flag("--pgm", pgm, "also write one PGM raster per frame");
  predict_cmd->add_flag("--pad", pad, "reflect-pad indivisible samples and crop back");

  auto* grad_cmd = app.add_subcommand("gradcheck", "run the registered gradient checks");
  grad_cmd->add_option("--module", module_filter, "substring filter on check names");

  auto* ablate_cmd = app.add_subcommand("ablate", "train the unification/attention grid");
  ablate_cmd->add_option("--config", config_path, "run config JSON")->required();
  ablate_cmd->add_option("--grid", grid_entries, "axis=value,value entries")->expected(-1);

  CLI11_PARSE(app, argc, argv);

  try {
    thread_cap();  // validate STSUN_THREADS up front
    if (*synth) return run_synth(spec_path, out_dir);
    if (*train_cmd) return run_train(config_path);
    if (*eval_cmd) return run_eval(ckpt, dataset_dir, split, categories, eval_out);
    if (*predict_cmd) return run_predict(ckpt, dataset_dir, split, out_dir, pgm, pad);
    if (*grad_cmd) return run_gradcheck(module_filter);
    if (*ablate_cmd) return run_ablate(config_path, grid_entries);
  } catch (const NumericError& e) {
    return error_exit(e, "numeric", 2);
  } catch (const IoError& e) {
    return error_exit(e, "io", 3);
  } catch (const ValidationError& e) {
    return error_exit(e, "validation", 1);
  } catch (const StsunError& e) {
    return error_exit(e, "validation", 1);
  } catch (const std::exception& e) {
    return error_exit(e, "validation", 1);
  }
  return 0;
}

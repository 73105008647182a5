#include "stsun/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "stsun/rng.hpp"

namespace stsun {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ValidationError("dataset: unknown key '" + it.key() + "' in " + where);
    }
  }
}

std::vector<double> default_wavelengths(std::int64_t c1) {
  if (c1 == 3) return {490.0, 560.0, 665.0};
  if (c1 == 4) return {490.0, 560.0, 665.0, 842.0};
  std::vector<double> out(static_cast<std::size_t>(c1));
  for (std::int64_t i = 0; i < c1; ++i) out[static_cast<std::size_t>(i)] = 400.0 + 100.0 * static_cast<double>(i);
  return out;
}

std::vector<double> default_timestamps(std::int64_t t1) {
  std::vector<double> out(static_cast<std::size_t>(t1));
  for (std::int64_t i = 0; i < t1; ++i) out[static_cast<std::size_t>(i)] = 365.0 * static_cast<double>(i);
  return out;
}

void write_file(const std::filesystem::path& path, const void* data, std::size_t bytes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("dataset: cannot open '" + path.string() + "' for writing");
  os.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!os) throw IoError("dataset: write failed for '" + path.string() + "'");
}

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw IoError("dataset: cannot open '" + path.string() + "'");
  auto size = is.tellg();
  is.seekg(0);
  std::vector<char> buf(static_cast<std::size_t>(size));
  is.read(buf.data(), size);
  if (!is) throw IoError("dataset: read failed for '" + path.string() + "'");
  return buf;
}

}  // namespace

InputMetadata DatasetManifest::input_metadata() const {
  InputMetadata m;
  m.wavelengths_nm = wavelengths_nm;
  m.timestamps = timestamps;
  m.resolution_m = resolution_m;
  return m;
}

void DatasetManifest::validate() const {
  if (name.empty()) throw ValidationError("manifest: empty dataset name");
  if (t1 < 1 || c1 < 1 || h1 < 1 || w1 < 1) {
    throw ValidationError("manifest: extents must be >= 1");
  }
  if (task == TaskId::BCD && t1 < 2) {
    throw ValidationError("manifest: BCD needs at least two input frames");
  }
  if (t2 != task_output_len(task, t1)) {
    std::ostringstream os;
    os << "manifest: field t2=" << t2 << " inconsistent with task " << task_name(task)
       << " and t1=" << t1;
    throw ValidationError(os.str());
  }
  if (category_ids.empty()) throw ValidationError("manifest: empty category set");
  if (category_ids.size() != category_names.size()) {
    throw ValidationError("manifest: category_ids and category_names lengths differ");
  }
  std::set<std::int64_t> seen(category_ids.begin(), category_ids.end());
  if (seen.size() != category_ids.size()) {
    throw ValidationError("manifest: duplicate category ids");
  }
  if (!(resolution_m > 0.0)) throw ValidationError("manifest: resolution must be positive");
  input_metadata().validate(t1, c1);
  if (num_samples < 0) throw ValidationError("manifest: negative sample count");
}

std::string DatasetManifest::to_json() const {
  json j{{"name", name},
         {"task", task_name(task)},
         {"t1", t1},
         {"t2", t2},
         {"c1", c1},
         {"h1", h1},
         {"w1", w1},
         {"category_ids", category_ids},
         {"category_names", category_names},
         {"resolution_m", resolution_m},
         {"wavelengths_nm", wavelengths_nm},
         {"timestamps", timestamps},
         {"split", split},
         {"num_samples", num_samples}};
  return j.dump(2);
}

DatasetManifest DatasetManifest::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("manifest: invalid JSON: ") + e.what());
  }
  reject_unknown_keys(j,
                      {"name", "task", "t1", "t2", "c1", "h1", "w1", "category_ids",
                       "category_names", "resolution_m", "wavelengths_nm", "timestamps", "split",
                       "num_samples"},
                      "manifest");
  DatasetManifest m;
  try {
    m.name = j.at("name").get<std::string>();
    m.task = task_from_name(j.at("task").get<std::string>());
    m.t1 = j.at("t1").get<std::int64_t>();
    m.t2 = j.at("t2").get<std::int64_t>();
    m.c1 = j.at("c1").get<std::int64_t>();
    m.h1 = j.at("h1").get<std::int64_t>();
    m.w1 = j.at("w1").get<std::int64_t>();
    m.category_ids = j.at("category_ids").get<std::vector<std::int64_t>>();
    m.category_names = j.at("category_names").get<std::vector<std::string>>();
    m.resolution_m = j.at("resolution_m").get<double>();
    m.wavelengths_nm = j.at("wavelengths_nm").get<std::vector<double>>();
    m.timestamps = j.at("timestamps").get<std::vector<double>>();
    m.split = j.at("split").get<std::string>();
    m.num_samples = j.at("num_samples").get<std::int64_t>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("manifest: ") + e.what());
  }
  m.validate();
  return m;
}

std::int64_t DatasetSplit::image_stride() const {
  const auto& m = manifest;
  return m.t1 * m.c1 * m.h1 * m.w1;
}

std::int64_t DatasetSplit::label_stride() const {
  const auto& m = manifest;
  return m.t2 * m.h1 * m.w1;
}

Tensor DatasetSplit::image_tensor(std::int64_t i) const {
  auto stride = image_stride();
  if (i < 0 || i >= manifest.num_samples) throw ValidationError("dataset: sample index out of range");
  std::vector<double> data(static_cast<std::size_t>(stride));
  const float* src = images.data() + i * stride;
  for (std::int64_t k = 0; k < stride; ++k) data[static_cast<std::size_t>(k)] = src[k];
  return Tensor::from_data({manifest.t1, manifest.c1, manifest.h1, manifest.w1}, std::move(data));
}

void DatasetSplit::validate() const {
  manifest.validate();
  if (static_cast<std::int64_t>(images.size()) != manifest.num_samples * image_stride()) {
    std::ostringstream os;
    os << "dataset: images length " << images.size() << " does not match num_samples="
       << manifest.num_samples << " x T1xC1xH1xW1=" << image_stride();
    throw ValidationError(os.str());
  }
  if (static_cast<std::int64_t>(labels.size()) != manifest.num_samples * label_stride()) {
    std::ostringstream os;
    os << "dataset: labels length " << labels.size() << " does not match num_samples="
       << manifest.num_samples << " x T2xH1xW1=" << label_stride();
    throw ValidationError(os.str());
  }
  for (float v : images) {
    if (!std::isfinite(v)) throw ValidationError("dataset: non-finite image value");
  }
  std::int64_t limit = manifest.c2() == 1 ? 2 : manifest.c2();
  for (auto v : labels) {
    if (v >= limit) {
      throw ValidationError("dataset: label value " + std::to_string(static_cast<int>(v)) +
                            " out of range for " + std::to_string(manifest.c2()) + " categories");
    }
  }
}

void write_split(const std::filesystem::path& dir, const DatasetSplit& split) {
  split.validate();
  std::filesystem::create_directories(dir);
  auto meta = split.manifest.to_json();
  write_file(dir / "meta.json", meta.data(), meta.size());
  write_file(dir / "images.f32", split.images.data(), split.images.size() * sizeof(float));
  write_file(dir / "labels.u8", split.labels.data(), split.labels.size());
}

DatasetSplit read_split(const std::filesystem::path& dir) {
  DatasetSplit split;
  auto meta = read_file(dir / "meta.json");
  split.manifest = DatasetManifest::from_json(std::string(meta.begin(), meta.end()));
  auto img = read_file(dir / "images.f32");
  auto expected_img = static_cast<std::size_t>(split.manifest.num_samples *
                                               split.manifest.t1 * split.manifest.c1 *
                                               split.manifest.h1 * split.manifest.w1) *
                      sizeof(float);
  if (img.size() != expected_img) {
    throw IoError("dataset: images.f32 has " + std::to_string(img.size()) + " bytes, expected " +
                  std::to_string(expected_img));
  }
  split.images.resize(img.size() / sizeof(float));
  std::memcpy(split.images.data(), img.data(), img.size());
  auto lab = read_file(dir / "labels.u8");
  auto expected_lab = static_cast<std::size_t>(split.manifest.num_samples * split.manifest.t2 *
                                               split.manifest.h1 * split.manifest.w1);
  if (lab.size() != expected_lab) {
    throw IoError("dataset: labels.u8 has " + std::to_string(lab.size()) + " bytes, expected " +
                  std::to_string(expected_lab));
  }
  split.labels.assign(lab.begin(), lab.end());
  split.validate();
  return split;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& dataset) {
  if (dataset.splits.empty()) throw ValidationError("dataset: nothing to write");
  std::filesystem::create_directories(dir);
  for (const auto& [name, split] : dataset.splits) {
    if (name != split.manifest.split) {
      throw ValidationError("dataset: split key '" + name + "' does not match manifest");
    }
    write_split(dir / name, split);
  }
}

Dataset read_dataset(const std::filesystem::path& dir) {
  Dataset out;
  for (const char* name : {"train", "val", "test"}) {
    if (std::filesystem::exists(dir / name / "meta.json")) {
      out.splits[name] = read_split(dir / name);
    }
  }
  if (out.splits.empty()) {
    throw IoError("dataset: no splits found under '" + dir.string() + "'");
  }
  return out;
}

void SyntheticSpec::validate() const {
  if (t1 < 1 || c1 < 1 || h1 < 2 || w1 < 2) {
    throw ValidationError("synthetic: extents too small");
  }
  if (task == TaskId::BCD) {
    if (t1 < 2) throw ValidationError("synthetic: BCD needs t1 >= 2");
    if (category_ids.size() != 1) {
      throw ValidationError("synthetic: BCD uses a single {change} category");
    }
    if (!palette_ids.empty() &&
        static_cast<std::int64_t>(palette_ids.size()) != semantic_classes) {
      throw ValidationError("synthetic: palette_ids must cover every planted class");
    }
  } else {
    if (static_cast<std::int64_t>(category_ids.size()) != semantic_classes) {
      throw ValidationError(
          "synthetic: SS/SCD need one category per planted class (including background)");
    }
    if (!palette_ids.empty() && palette_ids != category_ids) {
      throw ValidationError("synthetic: SS/SCD palettes are the category ids themselves");
    }
  }
  for (auto id : effective_palette_ids()) {
    if (id < 0 || id >= 256) {
      throw ValidationError("synthetic: palette ids must lie in [0, 256)");
    }
  }
  if (category_ids.empty() || category_ids.size() != category_names.size()) {
    throw ValidationError("synthetic: category ids/names missing or mismatched");
  }
  if (semantic_classes < 2) throw ValidationError("synthetic: need at least two planted classes");
  if (!(change_rate >= 0.0 && change_rate <= 1.0)) {
    throw ValidationError("synthetic: change_rate must be in [0, 1]");
  }
  if (!(inplace_change_fraction >= 0.0 && inplace_change_fraction <= 1.0)) {
    throw ValidationError("synthetic: inplace_change_fraction must be in [0, 1]");
  }
  if (noise_level < 0.0 || field_amplitude < 0.0) {
    throw ValidationError("synthetic: noise and field amplitude must be >= 0");
  }
  if (blob_count_min < 1 || blob_count_max < blob_count_min) {
    throw ValidationError("synthetic: bad blob count range");
  }
  if (blob_size_min < 2 || blob_size_max < blob_size_min ||
      blob_size_max > std::min(h1, w1)) {
    throw ValidationError("synthetic: bad blob size range");
  }
  if (train_count < 0 || val_count < 0 || test_count < 0 ||
      train_count + val_count + test_count < 1) {
    throw ValidationError("synthetic: need at least one sample across splits");
  }
}

std::string SyntheticSpec::to_json() const {
  json j{{"seed", seed},
         {"name", name},
         {"task", task_name(task)},
         {"t1", t1},
         {"c1", c1},
         {"h1", h1},
         {"w1", w1},
         {"category_ids", category_ids},
         {"category_names", category_names},
         {"semantic_classes", semantic_classes},
         {"palette_ids", palette_ids},
         {"signature_seed", signature_seed},
         {"train_count", train_count},
         {"val_count", val_count},
         {"test_count", test_count},
         {"blob_count_min", blob_count_min},
         {"blob_count_max", blob_count_max},
         {"blob_size_min", blob_size_min},
         {"blob_size_max", blob_size_max},
         {"change_rate", change_rate},
         {"inplace_change_fraction", inplace_change_fraction},
         {"field_amplitude", field_amplitude},
         {"noise_level", noise_level},
         {"resolution_m", resolution_m},
         {"wavelengths_nm", wavelengths_nm},
         {"timestamps", timestamps}};
  return j.dump(2);
}

SyntheticSpec SyntheticSpec::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("synthetic spec: invalid JSON: ") + e.what());
  }
  reject_unknown_keys(j,
                      {"seed", "name", "task", "t1", "c1", "h1", "w1", "category_ids",
                       "category_names", "semantic_classes", "palette_ids", "signature_seed",
                       "train_count",
                       "val_count", "test_count", "blob_count_min", "blob_count_max",
                       "blob_size_min", "blob_size_max", "change_rate",
                       "inplace_change_fraction", "field_amplitude",
                       "noise_level", "resolution_m", "wavelengths_nm", "timestamps"},
                      "synthetic spec");
  SyntheticSpec s;
  try {
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("name")) s.name = j.at("name").get<std::string>();
    if (j.contains("task")) s.task = task_from_name(j.at("task").get<std::string>());
    auto get_int = [&](const char* key, std::int64_t& out) {
      if (j.contains(key)) out = j.at(key).get<std::int64_t>();
    };
    auto get_dbl = [&](const char* key, double& out) {
      if (j.contains(key)) out = j.at(key).get<double>();
    };
    get_int("t1", s.t1);
    get_int("c1", s.c1);
    get_int("h1", s.h1);
    get_int("w1", s.w1);
    if (j.contains("category_ids")) s.category_ids = j.at("category_ids").get<std::vector<std::int64_t>>();
    if (j.contains("category_names")) s.category_names = j.at("category_names").get<std::vector<std::string>>();
    get_int("semantic_classes", s.semantic_classes);
    if (j.contains("palette_ids")) s.palette_ids = j.at("palette_ids").get<std::vector<std::int64_t>>();
    if (j.contains("signature_seed")) s.signature_seed = j.at("signature_seed").get<std::uint64_t>();
    get_int("train_count", s.train_count);
    get_int("val_count", s.val_count);
    get_int("test_count", s.test_count);
    get_int("blob_count_min", s.blob_count_min);
    get_int("blob_count_max", s.blob_count_max);
    get_int("blob_size_min", s.blob_size_min);
    get_int("blob_size_max", s.blob_size_max);
    get_dbl("change_rate", s.change_rate);
    get_dbl("inplace_change_fraction", s.inplace_change_fraction);
    get_dbl("field_amplitude", s.field_amplitude);
    get_dbl("noise_level", s.noise_level);
    get_dbl("resolution_m", s.resolution_m);
    if (j.contains("wavelengths_nm")) s.wavelengths_nm = j.at("wavelengths_nm").get<std::vector<double>>();
    if (j.contains("timestamps")) s.timestamps = j.at("timestamps").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::vector<std::int64_t> SyntheticSpec::effective_palette_ids() const {
  if (task != TaskId::BCD) return category_ids;
  if (!palette_ids.empty()) return palette_ids;
  std::vector<std::int64_t> out(static_cast<std::size_t>(semantic_classes));
  for (std::int64_t k = 0; k < semantic_classes; ++k) out[static_cast<std::size_t>(k)] = k;
  return out;
}

std::vector<double> synthetic_signature(std::uint64_t signature_seed, std::int64_t palette_id,
                                        std::int64_t bands) {
  // Signatures come from one greedy max-min stream indexed by the registry
  // id, so the same category looks identical across datasets sharing
  // signature_seed while staying separated from every other id.
  Rng rng(signature_seed ^ 0xabcdef12345ULL);
  std::vector<std::vector<double>> sigs;
  for (std::int64_t k = 0; k <= palette_id; ++k) {
    std::vector<double> best;
    double best_sep = -1.0;
    for (int attempt = 0; attempt < 64; ++attempt) {
      std::vector<double> cand(static_cast<std::size_t>(bands));
      for (auto& v : cand) v = rng.uniform(0.15, 0.85);
      double sep = 1e30;
      for (const auto& s : sigs) {
        double d2 = 0.0;
        for (std::int64_t b = 0; b < bands; ++b) {
          double d = cand[static_cast<std::size_t>(b)] - s[static_cast<std::size_t>(b)];
          d2 += d * d;
        }
        sep = std::min(sep, std::sqrt(d2));
      }
      if (sep > best_sep) {
        best_sep = sep;
        best = cand;
      }
      if (sigs.empty()) break;
      if (best_sep >= 0.45) break;
    }
    sigs.push_back(best);
  }
  return sigs.back();
}

namespace {

struct Blob {
  bool ellipse = false;
  std::int64_t cy = 0, cx = 0, ry = 1, rx = 1;
  std::int64_t cls = 1;
};

void draw_blob_geometry(Blob& b, Rng& rng, const SyntheticSpec& spec) {
  std::int64_t sy = rng.uniform_int(spec.blob_size_max - spec.blob_size_min + 1) + spec.blob_size_min;
  std::int64_t sx = rng.uniform_int(spec.blob_size_max - spec.blob_size_min + 1) + spec.blob_size_min;
  b.ry = std::max<std::int64_t>(1, sy / 2);
  b.rx = std::max<std::int64_t>(1, sx / 2);
  b.cy = rng.uniform_int(spec.h1);
  b.cx = rng.uniform_int(spec.w1);
  b.ellipse = rng.uniform() < 0.5;
}

void rasterize(const std::vector<Blob>& blobs, std::vector<std::uint8_t>& map,
               std::int64_t h, std::int64_t w) {
  std::fill(map.begin(), map.end(), 0);
  for (const auto& b : blobs) {
    std::int64_t r0 = std::max<std::int64_t>(0, b.cy - b.ry);
    std::int64_t r1 = std::min(h - 1, b.cy + b.ry);
    std::int64_t c0 = std::max<std::int64_t>(0, b.cx - b.rx);
    std::int64_t c1 = std::min(w - 1, b.cx + b.rx);
    for (std::int64_t r = r0; r <= r1; ++r) {
      for (std::int64_t c = c0; c <= c1; ++c) {
        if (b.ellipse) {
          double dy = static_cast<double>(r - b.cy) / static_cast<double>(b.ry);
          double dx = static_cast<double>(c - b.cx) / static_cast<double>(b.rx);
          if (dy * dy + dx * dx > 1.0) continue;
        }
        map[static_cast<std::size_t>(r * w + c)] = static_cast<std::uint8_t>(b.cls);
      }
    }
  }
}

struct FieldParams {
  double a[3], fy[3], fx[3], phase[3];
};

FieldParams draw_field(Rng& rng) {
  FieldParams f;
  for (int i = 0; i < 3; ++i) {
    f.a[i] = rng.uniform(0.2, 1.0);
    f.fy[i] = rng.uniform(0.5, 2.5);
    f.fx[i] = rng.uniform(0.5, 2.5);
    f.phase[i] = rng.uniform(0.0, 6.283185307179586);
  }
  double norm = std::abs(f.a[0]) + std::abs(f.a[1]) + std::abs(f.a[2]);
  for (int i = 0; i < 3; ++i) f.a[i] /= norm;
  return f;
}

double eval_field(const FieldParams& f, double y, double x) {
  double v = 0.0;
  for (int i = 0; i < 3; ++i) {
    v += f.a[i] * std::cos(6.283185307179586 * (f.fy[i] * y + f.fx[i] * x) + f.phase[i]);
  }
  return v;
}

DatasetSplit make_split(const SyntheticSpec& spec, const std::string& split_name,
                        std::int64_t count, Rng rng,
                        const std::vector<std::vector<double>>& signatures) {
  DatasetSplit out;
  auto& m = out.manifest;
  m.name = spec.name;
  m.task = spec.task;
  m.t1 = spec.t1;
  m.t2 = task_output_len(spec.task, spec.t1);
  m.c1 = spec.c1;
  m.h1 = spec.h1;
  m.w1 = spec.w1;
  m.category_ids = spec.category_ids;
  m.category_names = spec.category_names;
  m.resolution_m = spec.resolution_m;
  m.wavelengths_nm = spec.wavelengths_nm.empty() ? default_wavelengths(spec.c1) : spec.wavelengths_nm;
  m.timestamps = spec.timestamps.empty() ? default_timestamps(spec.t1) : spec.timestamps;
  m.split = split_name;
  m.num_samples = count;

  std::int64_t cells = spec.h1 * spec.w1;
  out.images.resize(static_cast<std::size_t>(count * spec.t1 * spec.c1 * cells));
  out.labels.resize(static_cast<std::size_t>(count * m.t2 * cells));

  std::vector<std::vector<std::uint8_t>> maps(static_cast<std::size_t>(spec.t1),
                                              std::vector<std::uint8_t>(static_cast<std::size_t>(cells)));
  for (std::int64_t s = 0; s < count; ++s) {
    // Planted objects; frame 0 geometry, later frames rewrite objects with
    // probability change_rate (position, size and possibly class).
    std::int64_t nblobs =
        rng.uniform_int(spec.blob_count_max - spec.blob_count_min + 1) + spec.blob_count_min;
    std::vector<Blob> blobs(static_cast<std::size_t>(nblobs));
    for (auto& b : blobs) {
      draw_blob_geometry(b, rng, spec);
      b.cls = 1 + rng.uniform_int(spec.semantic_classes - 1);
    }
    rasterize(blobs, maps[0], spec.h1, spec.w1);
    for (std::int64_t t = 1; t < spec.t1; ++t) {
      for (auto& b : blobs) {
        if (rng.uniform() < spec.change_rate) {
          if (spec.semantic_classes > 2 && rng.uniform() < spec.inplace_change_fraction) {
            // in-place transition: the footprint keeps its shape, the class flips
            std::int64_t shift = 1 + rng.uniform_int(spec.semantic_classes - 2);
            b.cls = 1 + (b.cls - 1 + shift) % (spec.semantic_classes - 1);
          } else {
            draw_blob_geometry(b, rng, spec);
            if (rng.uniform() < 0.5) b.cls = 1 + rng.uniform_int(spec.semantic_classes - 1);
          }
        }
      }
      rasterize(blobs, maps[static_cast<std::size_t>(t)], spec.h1, spec.w1);
    }

    // Images: class signature + smooth field + white noise, stored as f32.
    for (std::int64_t t = 0; t < spec.t1; ++t) {
      const auto& map = maps[static_cast<std::size_t>(t)];
      for (std::int64_t band = 0; band < spec.c1; ++band) {
        FieldParams field = draw_field(rng);
        float* dst = out.images.data() + ((s * spec.t1 + t) * spec.c1 + band) * cells;
        for (std::int64_t r = 0; r < spec.h1; ++r) {
          for (std::int64_t c = 0; c < spec.w1; ++c) {
            auto cls = map[static_cast<std::size_t>(r * spec.w1 + c)];
            double v = signatures[cls][static_cast<std::size_t>(band)];
            v += spec.field_amplitude * eval_field(field, static_cast<double>(r) / spec.h1,
                                                   static_cast<double>(c) / spec.w1);
            v += spec.noise_level * rng.normal();
            dst[r * spec.w1 + c] = static_cast<float>(v);
          }
        }
      }
    }

    // Labels derive from the frame maps alone (no RNG), so a BCD run and an
    // SCD run with the same seed share identical maps and imagery.
    std::uint8_t* lab = out.labels.data() + s * m.t2 * cells;
    switch (spec.task) {
      case TaskId::SS:
        std::copy(maps[0].begin(), maps[0].end(), lab);
        break;
      case TaskId::SCD:
        for (std::int64_t t = 0; t < m.t2; ++t) {
          std::copy(maps[static_cast<std::size_t>(t)].begin(),
                    maps[static_cast<std::size_t>(t)].end(), lab + t * cells);
        }
        break;
      case TaskId::BCD:
        for (std::int64_t t = 0; t < m.t2; ++t) {
          const auto& a = maps[static_cast<std::size_t>(t)];
          const auto& b = maps[static_cast<std::size_t>(t + 1)];
          for (std::int64_t i = 0; i < cells; ++i) {
            lab[t * cells + i] = a[static_cast<std::size_t>(i)] != b[static_cast<std::size_t>(i)] ? 1 : 0;
          }
        }
        break;
    }
  }
  out.validate();
  return out;
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<std::vector<double>> signatures;
  for (auto id : spec.effective_palette_ids()) {
    signatures.push_back(synthetic_signature(spec.signature_seed, id, spec.c1));
  }
  Rng master(spec.seed);
  Dataset out;
  // Fork one stream per split so split contents are independent of the other
  // splits' sizes.
  Rng train_rng = master.fork(1);
  Rng val_rng = master.fork(2);
  Rng test_rng = master.fork(3);
  if (spec.train_count > 0) {
    out.splits["train"] = make_split(spec, "train", spec.train_count, train_rng, signatures);
  }
  if (spec.val_count > 0) {
    out.splits["val"] = make_split(spec, "val", spec.val_count, val_rng, signatures);
  }
  if (spec.test_count > 0) {
    out.splits["test"] = make_split(spec, "test", spec.test_count, test_rng, signatures);
  }
  return out;
}

PaddedSample pad_to_divisible(const float* image, const std::uint8_t* label, std::int64_t t1,
                              std::int64_t c1, std::int64_t t2, std::int64_t h1, std::int64_t w1,
                              std::int64_t unit_h, std::int64_t unit_w) {
  if (unit_h < 1 || unit_w < 1) throw ValidationError("pad: units must be >= 1");
  auto round_up = [](std::int64_t v, std::int64_t unit) { return ((v + unit - 1) / unit) * unit; };
  PaddedSample out;
  out.h = round_up(h1, unit_h);
  out.w = round_up(w1, unit_w);
  out.crop = {0, 0, h1, w1};
  if (out.h - h1 >= h1 || out.w - w1 >= w1) {
    throw ValidationError("pad: sample too small to reflect-pad to the unified grid");
  }
  // Reflection without repeating the border pixel.
  auto reflect = [](std::int64_t i, std::int64_t n) { return i < n ? i : 2 * n - 2 - i; };

  out.image.resize(static_cast<std::size_t>(t1 * c1 * out.h * out.w));
  for (std::int64_t t = 0; t < t1; ++t) {
    for (std::int64_t ch = 0; ch < c1; ++ch) {
      const float* src = image + (t * c1 + ch) * h1 * w1;
      float* dst = out.image.data() + (t * c1 + ch) * out.h * out.w;
      for (std::int64_t r = 0; r < out.h; ++r) {
        for (std::int64_t c = 0; c < out.w; ++c) {
          dst[r * out.w + c] = src[reflect(r, h1) * w1 + reflect(c, w1)];
        }
      }
    }
  }
  out.label.resize(static_cast<std::size_t>(t2 * out.h * out.w));
  for (std::int64_t t = 0; t < t2; ++t) {
    const std::uint8_t* src = label + t * h1 * w1;
    std::uint8_t* dst = out.label.data() + t * out.h * out.w;
    for (std::int64_t r = 0; r < out.h; ++r) {
      for (std::int64_t c = 0; c < out.w; ++c) {
        dst[r * out.w + c] = src[reflect(r, h1) * w1 + reflect(c, w1)];
      }
    }
  }
  return out;
}

}  // namespace stsun

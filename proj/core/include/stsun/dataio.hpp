#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "stsun/metadata.hpp"
#include "stsun/tensor.hpp"

namespace stsun {

/// Per-split manifest mirrored in meta.json. Tensor extents on disk must
/// match it exactly.
struct DatasetManifest {
  std::string name;
  TaskId task = TaskId::SS;
  std::int64_t t1 = 1, t2 = 1, c1 = 3;
  std::int64_t h1 = 32, w1 = 32;
  std::vector<std::int64_t> category_ids;
  std::vector<std::string> category_names;
  double resolution_m = 1.0;
  std::vector<double> wavelengths_nm;
  std::vector<double> timestamps;
  std::string split;
  std::int64_t num_samples = 0;

  std::int64_t c2() const { return static_cast<std::int64_t>(category_ids.size()); }
  InputMetadata input_metadata() const;
  void validate() const;
  std::string to_json() const;
  static DatasetManifest from_json(const std::string& text);
};

/// One split held in memory: images as 32-bit floats (the storage type),
/// labels as class indices into the manifest's category list.
struct DatasetSplit {
  DatasetManifest manifest;
  std::vector<float> images;         // [N, T1, C1, H1, W1]
  std::vector<std::uint8_t> labels;  // [N, T2, H1, W1]

  std::int64_t image_stride() const;
  std::int64_t label_stride() const;
  /// Sample i as a [T1, C1, H1, W1] tensor of doubles.
  Tensor image_tensor(std::int64_t i) const;
  void validate() const;
};

struct Dataset {
  std::map<std::string, DatasetSplit> splits;  // keyed by split name
};

void write_split(const std::filesystem::path& dir, const DatasetSplit& split);
DatasetSplit read_split(const std::filesystem::path& dir);
void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& dir);

/// Synthetic spatial-temporal-spectral scenes: smooth random fields plus
/// planted rectangles/ellipses with category-specific band signatures.
/// Labels derive deterministically from the planted per-frame category maps.
struct SyntheticSpec {
  std::uint64_t seed = 0;
  std::string name = "synthetic";
  TaskId task = TaskId::SS;
  std::int64_t t1 = 1, c1 = 3, h1 = 32, w1 = 32;
  std::vector<std::int64_t> category_ids;      // label channels (for BCD: {change id})
  std::vector<std::string> category_names;
  std::int64_t semantic_classes = 4;           // planted palette size, background included
  /// Registry ids of the planted classes; spectra key off these so a class
  /// looks identical across datasets sharing signature_seed. SS/SCD use
  /// category_ids directly; BCD may set them (default 0..semantic_classes-1).
  std::vector<std::int64_t> palette_ids;
  std::uint64_t signature_seed = 7;            // shared across datasets for joint training
  std::int64_t train_count = 200, val_count = 20, test_count = 50;
  std::int64_t blob_count_min = 3, blob_count_max = 6;
  std::int64_t blob_size_min = 6, blob_size_max = 14;
  double change_rate = 0.5;  // probability a planted object changes per frame step
  double inplace_change_fraction = 0.5;  // share of changes that flip the class in place
  double field_amplitude = 0.05;
  double noise_level = 0.02;
  double resolution_m = 0.5;
  std::vector<double> wavelengths_nm;  // default RGB(+NIR) when empty
  std::vector<double> timestamps;      // default yearly steps when empty

  void validate() const;
  std::vector<std::int64_t> effective_palette_ids() const;
  std::string to_json() const;
  static SyntheticSpec from_json(const std::string& text);
};

Dataset generate_synthetic(const SyntheticSpec& spec);

/// Band signature of a planted class, deterministic in (signature_seed, id).
std::vector<double> synthetic_signature(std::uint64_t signature_seed, std::int64_t palette_id,
                                        std::int64_t bands);

/// Reflect-padding of one sample to the next multiples of (h, w), with the
/// crop box recording where the original pixels sit.
struct PaddedSample {
  std::vector<float> image;          // [T1, C1, Hp, Wp]
  std::vector<std::uint8_t> label;   // [T2, Hp, Wp]
  std::int64_t h = 0, w = 0;         // padded extents
  std::array<std::int64_t, 4> crop{0, 0, 0, 0};  // top, left, height, width
};

PaddedSample pad_to_divisible(const float* image, const std::uint8_t* label, std::int64_t t1,
                              std::int64_t c1, std::int64_t t2, std::int64_t h1, std::int64_t w1,
                              std::int64_t unit_h, std::int64_t unit_w);

}  // namespace stsun

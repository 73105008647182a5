#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stsun/ops.hpp"
#include "stsun/tensor.hpp"

namespace stsun {

enum class TaskId { SS, BCD, SCD };

const char* task_name(TaskId task);
TaskId task_from_name(const std::string& name);

/// Output temporal length implied by the task and the input length.
std::int64_t task_output_len(TaskId task, std::int64_t t1);

/// Describes the source data cube: the spectral, temporal and spatial
/// metadata the hypernetworks condition on.
struct InputMetadata {
  std::vector<double> wavelengths_nm;  // one per input channel
  std::vector<double> timestamps;      // days since sequence start, one per frame
  double resolution_m = 1.0;           // meters per pixel

  void validate(std::int64_t t1, std::int64_t c1) const;

  // Normalizations applied before tokenization (kept O(1) across sensors):
  // wavelengths in micrometers, timestamps scaled by the sequence span,
  // resolution through log10.
  std::vector<double> normalized_wavelengths() const;
  std::vector<double> normalized_timestamps() const;
  double normalized_resolution() const;
};

class EmbeddingRegistry;

/// Requested prediction structure: task, output length, category subset,
/// output size.
struct OutputSpec {
  TaskId task = TaskId::SS;
  std::int64_t out_len = 1;
  std::vector<std::int64_t> category_ids;
  std::int64_t out_h = 0;
  std::int64_t out_w = 0;

  /// Enforces the task/length correspondence (SS: T2=1; BCD: T2=T1-1;
  /// SCD: T2=T1), unique registered category ids, and the BCD rule that the
  /// subset is exactly {change}.
  void validate(std::int64_t t1, const EmbeddingRegistry& registry) const;
};

struct CategoryDef {
  std::int64_t id = 0;
  std::string name;
};

/// Trainable task and category embedding tables. The tensors live in the
/// model's parameter store; the registry holds handles and the id/name map.
class EmbeddingRegistry {
 public:
  void register_task(TaskId task, Tensor embedding);
  void register_category(std::int64_t id, std::string name, Tensor embedding);

  const Tensor& task_embedding(TaskId task) const;
  const Tensor& category_embedding(std::int64_t id) const;
  bool has_category(std::int64_t id) const;
  const std::string& category_name(std::int64_t id) const;
  std::vector<std::int64_t> category_ids() const;  // sorted
  std::vector<CategoryDef> categories() const;     // sorted by id

  /// Id of the reserved binary-change category (name "change").
  std::int64_t change_id() const;

 private:
  std::map<int, Tensor> tasks_;
  std::map<std::int64_t, Tensor> categories_;
  std::map<std::int64_t, std::string> names_;
};

/// Deterministic sinusoidal positional table, [len x dim], no gradient.
Tensor sinusoidal_positional(std::int64_t len, std::int64_t dim);

/// Trainable affine map from one scalar to a C_e-dim token.
struct ScalarTokenizer {
  Tensor weight;  // [1 x C_e]
  Tensor bias;    // [C_e]
};

/// Token i = values[i] * weight + bias; differentiable in the projector.
Tensor tokenize_scalars(const std::vector<double>& values, const ScalarTokenizer& projector);

/// Spatial metadata tokens for a Ph x Pw within-patch grid:
/// token = row token + column token + resolution token.
Tensor encode_spatial_meta(std::int64_t ph, std::int64_t pw, double resolution_m,
                           const ScalarTokenizer& row_proj, const ScalarTokenizer& col_proj,
                           const ScalarTokenizer& res_proj);

/// Output temporal tokens: token t = tokenize(t / T2) + task embedding.
Tensor encode_output_temporal_meta(std::int64_t out_len, TaskId task,
                                   const ScalarTokenizer& time_proj,
                                   const EmbeddingRegistry& registry);

}  // namespace stsun

#include "stsun/metadata.hpp"

#include <cmath>
#include <set>
#include <sstream>

namespace stsun {

const char* task_name(TaskId task) {
  switch (task) {
    case TaskId::SS: return "SS";
    case TaskId::BCD: return "BCD";
    case TaskId::SCD: return "SCD";
  }
  throw ValidationError("task_name: unknown task");
}

TaskId task_from_name(const std::string& name) {
  if (name == "SS") return TaskId::SS;
  if (name == "BCD") return TaskId::BCD;
  if (name == "SCD") return TaskId::SCD;
  throw ValidationError("unknown task '" + name + "' (expected SS, BCD or SCD)");
}

std::int64_t task_output_len(TaskId task, std::int64_t t1) {
  switch (task) {
    case TaskId::SS: return 1;
    case TaskId::BCD: return t1 - 1;
    case TaskId::SCD: return t1;
  }
  throw ValidationError("task_output_len: unknown task");
}

void InputMetadata::validate(std::int64_t t1, std::int64_t c1) const {
  if (static_cast<std::int64_t>(wavelengths_nm.size()) != c1) {
    std::ostringstream os;
    os << "metadata: " << wavelengths_nm.size() << " wavelengths for " << c1 << " channels";
    throw ValidationError(os.str());
  }
  for (double w : wavelengths_nm) {
    if (!(w > 0.0)) throw ValidationError("metadata: wavelengths must be strictly positive");
  }
  if (static_cast<std::int64_t>(timestamps.size()) != t1) {
    std::ostringstream os;
    os << "metadata: " << timestamps.size() << " timestamps for " << t1 << " frames";
    throw ValidationError(os.str());
  }
  for (std::size_t i = 1; i < timestamps.size(); ++i) {
    if (timestamps[i] < timestamps[i - 1]) {
      throw ValidationError("metadata: timestamps must be non-decreasing");
    }
  }
  if (!(resolution_m > 0.0)) throw ValidationError("metadata: resolution must be positive");
}

std::vector<double> InputMetadata::normalized_wavelengths() const {
  std::vector<double> out(wavelengths_nm.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = wavelengths_nm[i] / 1000.0;
  return out;
}

std::vector<double> InputMetadata::normalized_timestamps() const {
  std::vector<double> out(timestamps.size());
  if (timestamps.empty()) return out;
  double t0 = timestamps.front();
  double span = timestamps.back() - t0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = span > 0.0 ? (timestamps[i] - t0) / span : 0.0;
  }
  return out;
}

double InputMetadata::normalized_resolution() const { return std::log10(resolution_m); }

void OutputSpec::validate(std::int64_t t1, const EmbeddingRegistry& registry) const {
  std::int64_t expected = task_output_len(task, t1);
  if (task == TaskId::BCD && t1 < 2) {
    throw ValidationError("spec: BCD needs at least two input frames");
  }
  if (out_len != expected) {
    std::ostringstream os;
    os << "spec: task " << task_name(task) << " with T1=" << t1 << " requires T2=" << expected
       << ", got " << out_len;
    throw ValidationError(os.str());
  }
  if (category_ids.empty()) throw ValidationError("spec: empty category subset");
  std::set<std::int64_t> seen;
  for (auto id : category_ids) {
    if (!registry.has_category(id)) {
      throw ValidationError("spec: unknown category id " + std::to_string(id));
    }
    if (!seen.insert(id).second) {
      throw ValidationError("spec: duplicate category id " + std::to_string(id));
    }
  }
  if (task == TaskId::BCD) {
    if (category_ids.size() != 1 || category_ids[0] != registry.change_id()) {
      throw ValidationError("spec: BCD requires the category subset to be exactly {change}");
    }
  }
}

void EmbeddingRegistry::register_task(TaskId task, Tensor embedding) {
  tasks_[static_cast<int>(task)] = std::move(embedding);
}

void EmbeddingRegistry::register_category(std::int64_t id, std::string name, Tensor embedding) {
  if (names_.count(id)) {
    throw ValidationError("registry: duplicate category id " + std::to_string(id));
  }
  for (const auto& [other, nm] : names_) {
    if (nm == name) {
      throw ValidationError("registry: duplicate category name '" + name + "' (ids " +
                            std::to_string(other) + ", " + std::to_string(id) + ")");
    }
  }
  categories_[id] = std::move(embedding);
  names_[id] = std::move(name);
}

const Tensor& EmbeddingRegistry::task_embedding(TaskId task) const {
  auto it = tasks_.find(static_cast<int>(task));
  if (it == tasks_.end()) {
    throw ValidationError(std::string("registry: task ") + task_name(task) + " not registered");
  }
  return it->second;
}

const Tensor& EmbeddingRegistry::category_embedding(std::int64_t id) const {
  auto it = categories_.find(id);
  if (it == categories_.end()) {
    throw ValidationError("registry: unknown category id " + std::to_string(id));
  }
  return it->second;
}

bool EmbeddingRegistry::has_category(std::int64_t id) const { return categories_.count(id) > 0; }

const std::string& EmbeddingRegistry::category_name(std::int64_t id) const {
  auto it = names_.find(id);
  if (it == names_.end()) {
    throw ValidationError("registry: unknown category id " + std::to_string(id));
  }
  return it->second;
}

std::vector<std::int64_t> EmbeddingRegistry::category_ids() const {
  std::vector<std::int64_t> out;
  out.reserve(categories_.size());
  for (const auto& [id, _] : categories_) out.push_back(id);
  return out;
}

std::vector<CategoryDef> EmbeddingRegistry::categories() const {
  std::vector<CategoryDef> out;
  out.reserve(names_.size());
  for (const auto& [id, name] : names_) out.push_back({id, name});
  return out;
}

std::int64_t EmbeddingRegistry::change_id() const {
  for (const auto& [id, name] : names_) {
    if (name == "change") return id;
  }
  throw ValidationError("registry: no 'change' category registered");
}

Tensor sinusoidal_positional(std::int64_t len, std::int64_t dim) {
  std::vector<double> out(static_cast<std::size_t>(len * dim));
  for (std::int64_t i = 0; i < len; ++i) {
    for (std::int64_t j = 0; j < dim; ++j) {
      double rate = std::pow(10000.0, -static_cast<double>(2 * (j / 2)) / static_cast<double>(dim));
      double angle = static_cast<double>(i) * rate;
      out[static_cast<std::size_t>(i * dim + j)] = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return Tensor::from_data({len, dim}, std::move(out));
}

Tensor tokenize_scalars(const std::vector<double>& values, const ScalarTokenizer& projector) {
  if (values.empty()) throw ValidationError("tokenize_scalars: empty value list");
  auto n = static_cast<std::int64_t>(values.size());
  Tensor col = Tensor::from_data({n, 1}, values);
  return add_rowvec(matmul(col, projector.weight), projector.bias);
}

Tensor encode_spatial_meta(std::int64_t ph, std::int64_t pw, double resolution_m,
                           const ScalarTokenizer& row_proj, const ScalarTokenizer& col_proj,
                           const ScalarTokenizer& res_proj) {
  if (ph < 1 || pw < 1) throw ValidationError("encode_spatial_meta: Ph, Pw must be >= 1");
  std::vector<double> rows(static_cast<std::size_t>(ph * pw));
  std::vector<double> cols(static_cast<std::size_t>(ph * pw));
  for (std::int64_t r = 0; r < ph; ++r) {
    for (std::int64_t c = 0; c < pw; ++c) {
      auto i = static_cast<std::size_t>(r * pw + c);
      rows[i] = ph > 1 ? static_cast<double>(r) / static_cast<double>(ph - 1) : 0.0;
      cols[i] = pw > 1 ? static_cast<double>(c) / static_cast<double>(pw - 1) : 0.0;
    }
  }
  std::vector<double> res(static_cast<std::size_t>(ph * pw), std::log10(resolution_m));
  return add(add(tokenize_scalars(rows, row_proj), tokenize_scalars(cols, col_proj)),
             tokenize_scalars(res, res_proj));
}

Tensor encode_output_temporal_meta(std::int64_t out_len, TaskId task,
                                   const ScalarTokenizer& time_proj,
                                   const EmbeddingRegistry& registry) {
  if (out_len < 1) throw ValidationError("encode_output_temporal_meta: T2 must be >= 1");
  std::vector<double> ts(static_cast<std::size_t>(out_len));
  for (std::int64_t t = 0; t < out_len; ++t) {
    ts[static_cast<std::size_t>(t)] = static_cast<double>(t) / static_cast<double>(out_len);
  }
  return add_rowvec(tokenize_scalars(ts, time_proj), registry.task_embedding(task));
}

}  // namespace stsun

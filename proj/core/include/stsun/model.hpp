#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "stsun/attention.hpp"
#include "stsun/hypernet.hpp"
#include "stsun/metadata.hpp"
#include "stsun/params.hpp"
#include "stsun/unify.hpp"

namespace stsun {

enum class AttentionKind { Lgwa, Global };
enum class UnificationKind { Decoupled, Coupled };

const char* attention_kind_name(AttentionKind k);
AttentionKind attention_kind_from_name(const std::string& s);
const char* unification_kind_name(UnificationKind k);
UnificationKind unification_kind_from_name(const std::string& s);

struct ModelConfig {
  std::int64_t unified_h = 16, unified_w = 16, unified_t = 4;
  std::int64_t c_e = 32, c_a = 4;
  std::int64_t encoder_depth = 2, decoder_depth = 2;
  std::int64_t heads = 4, mlp_ratio = 4;
  std::int64_t hypernet_depth = 2, hypernet_heads = 4, hypernet_mlp_ratio = 4;
  WindowConfig windows;
  AttentionKind attention = AttentionKind::Lgwa;
  UnificationKind unification = UnificationKind::Decoupled;
  bool issum_spectral_positional = true;
  std::vector<CategoryDef> categories;
  std::uint64_t seed = 0;

  std::int64_t d_model() const { return c_e * c_a; }
  void validate() const;
  std::string to_json() const;  // canonical (sorted keys, fixed layout)
  static ModelConfig from_json(const std::string& text);
};

/// Adam moments plus the global step, serialized inside the checkpoint.
struct TrainState {
  std::int64_t step = 0;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments;
};

/// The five-stage network: ISSUM -> shared-weight encoder blocks -> TUM ->
/// shared-weight decoder blocks -> OSSUM. Deterministically initialized from
/// the config seed; forward is a pure function of (parameters, inputs).
class Model {
 public:
  explicit Model(ModelConfig cfg);

  /// x is [T1, C1, H1, W1] or [B, T1, C1, H1, W1]; returns logits shaped
  /// [T2, C2, H2, W2] (or batched). Metadata must be shared across the batch.
  Tensor forward(const Tensor& x, const InputMetadata& meta, const OutputSpec& spec) const;

  /// Ablation baseline: the temporal axis folds into the channel axis at the
  /// input and splits back at the output; no TUM.
  Tensor forward_coupled(const Tensor& x, const InputMetadata& meta, const OutputSpec& spec) const;

  /// Dispatches on config().unification.
  Tensor forward_configured(const Tensor& x, const InputMetadata& meta,
                            const OutputSpec& spec) const;

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  EmbeddingRegistry& registry() { return registry_; }
  const EmbeddingRegistry& registry() const { return registry_; }

  void save(const std::filesystem::path& path, const TrainState* state = nullptr) const;
  static Model load(const std::filesystem::path& path, TrainState* state = nullptr);

 private:
  struct Tokenizers {
    ScalarTokenizer wavelength, timestamp, out_time, row, col, res;
  };
  struct Branches {
    HyperBranch issum_spectral, issum_spatial, tum_in, tum_out, ossum_spatial, ossum_spectral;
    HyperBranch coupled_in, coupled_out;
  };

  void build_parameters();
  HyperBranch build_branch(ParamFactory& f, const std::string& prefix, HyperBranchConfig bc);
  TransformerBlockParams build_transformer_block(ParamFactory& f, const std::string& prefix,
                                                 std::int64_t width, std::int64_t heads,
                                                 std::int64_t mlp_ratio);
  LgwaBlockParams build_lgwa_block(ParamFactory& f, const std::string& prefix);

  Tensor category_tokens(const std::vector<std::int64_t>& ids) const;
  GeneratedLinear gen_spatial(const HyperBranch& branch, const PatchGrid& grid,
                              double resolution_m) const;

  ModelConfig cfg_;
  ParameterStore store_;
  EmbeddingRegistry registry_;
  Tokenizers tok_;
  Branches branches_;
  std::vector<LgwaBlockParams> enc_lgwa_, dec_lgwa_;
  std::vector<TransformerBlockParams> enc_global_, dec_global_;
};

}  // namespace stsun

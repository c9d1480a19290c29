#ifndef SEPTR_MODEL_HPP
#define SEPTR_MODEL_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "septr/dsp.hpp"
#include "septr/rng.hpp"
#include "septr/tensor.hpp"

namespace septr {

enum class Variant { kVH, kHV, kV, kH, kViT };

Variant variant_from_string(const std::string& s);
std::string variant_to_string(Variant v);

enum class Axis { kVertical, kHorizontal };

struct ModelConfig {
  Variant variant = Variant::kVH;
  std::size_t depth = 3;        // L separable blocks (ViT: attention layers)
  std::size_t token_dim = 256;  // d
  std::size_t heads = 5;
  std::size_t patch_size = 1;   // p, square tokens
  std::size_t mlp_ratio = 4;
  std::size_t num_classes = 4;
  std::size_t freq_bins = 128;
  std::size_t time_slots = 128;
  std::size_t vit_patch = 8;
  std::size_t vit_stride = 2;

  // d = 256 with 5 heads does not divide evenly; heads get ceil(d/heads)
  // each and the output projection maps heads*head_dim back to d.
  std::size_t head_dim() const { return (token_dim + heads - 1) / heads; }
  std::size_t token_rows() const { return freq_bins / patch_size; }   // k
  std::size_t token_cols() const { return time_slots / patch_size; }  // n
  std::size_t vit_grid_f() const {
    return (freq_bins - vit_patch) / vit_stride + 1;
  }
  std::size_t vit_grid_t() const {
    return (time_slots - vit_patch) / vit_stride + 1;
  }

  void validate() const;
  std::uint64_t digest() const;
  std::string describe() const;
};

/// Vertical = attention across frequency within one time slot;
/// horizontal = attention across time within one frequency bin.
/// Two passes per separable block; the single-axis ablations use the
/// same axis twice so every variant keeps 2L attention layers.
std::vector<Axis> passes_per_block(Variant v);

struct ModelParams {
  std::map<std::string, Tensor> tensors;

  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  std::size_t census() const;
  void zero_grad();
};

ModelParams init_params(const ModelConfig& cfg, Rng& rng);

enum class ClassState { kPooled, kReplicated };

struct TokenTensor {
  Tensor values;       // [n, k, d]
  Tensor class_token;  // pooled: [d]; replicated: [copies, d]
  ClassState state = ClassState::kPooled;
};

/// References into a parameter set for one transformer block.
struct BlockParamRefs {
  Tensor ln1_gamma, ln1_beta;
  std::vector<Tensor> wq, wk, wv;  // per head, [d x head_dim]
  Tensor wo, bo;                   // [heads*head_dim x d], [d]
  Tensor ln2_gamma, ln2_beta;
  Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

BlockParamRefs collect_block(const ModelParams& params,
                             const std::string& prefix, std::size_t heads);

Tensor tokenize_project(const MelSpectrogram& spec, const Tensor& proj_w,
                        const Tensor& proj_b, std::size_t patch_size);

Tensor multi_head_attention(const Tensor& x, const BlockParamRefs& p);

Tensor transformer_block(const Tensor& x, const BlockParamRefs& p);

TokenTensor axis_pass(const TokenTensor& t, const BlockParamRefs& p,
                      const Tensor& pos, Axis axis);

TokenTensor pool_class_tokens(const TokenTensor& t);

Tensor septr_forward(const MelSpectrogram& spec, const ModelParams& params,
                     const ModelConfig& cfg);

Tensor vit_forward(const MelSpectrogram& spec, const ModelParams& params,
                   const ModelConfig& cfg);

/// Dispatches on cfg.variant.
Tensor model_forward(const MelSpectrogram& spec, const ModelParams& params,
                     const ModelConfig& cfg);

/// Closed-form trainable-parameter count; equals census(init_params(cfg)).
std::size_t param_count(const ModelConfig& cfg);

struct ParamScanRow {
  std::size_t input_size = 0;
  std::size_t septr_count = 0;
  std::size_t vit_count = 0;
  double ratio = 0.0;
};

/// Counts for square inputs of the given sides, SepTr vs ViT, all other
/// hyperparameters taken from the two configs.
std::vector<ParamScanRow> param_scan(const ModelConfig& septr_cfg,
                                     const ModelConfig& vit_cfg,
                                     const std::vector<std::size_t>& sizes);

// ---- checkpoints ----

/// "SPCK" magic, u32 version, u64 config digest, then named parameter
/// records (little-endian float64 data). Loading validates the digest.
void save_checkpoint(const std::string& path, const ModelParams& params,
                     const ModelConfig& cfg);
ModelParams load_checkpoint(const std::string& path, const ModelConfig& cfg);

}  // namespace septr

#endif  // SEPTR_MODEL_HPP

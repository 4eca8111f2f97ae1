// SPDX-License-Identifier: Apache-2.0
//
// Transformer building blocks shared by the sentence autoencoder and the
// sentence-level predictor: bias-free linears, RMS pre-norm, rotary position
// encoding, attention + gated feed-forward blocks, and a named-parameter
// registry used by the optimizer and the checkpoint format.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sonarllm/rng.hpp"
#include "sonarllm/tensor.hpp"

namespace sonarllm::nn {

using ad::Tensor;

// Ordered (name, tensor) pairs. Construction order is the optimizer's state
// order and the checkpoint's array order, so it must be deterministic.
class ParamMap {
 public:
  void add(const std::string& name, const Tensor& t);
  void extend(const std::string& prefix, const ParamMap& sub);

  // Returned by value: ParamMaps are routinely built on the fly, and a
  // reference into a temporary would dangle in range-for loops.
  std::vector<std::pair<std::string, Tensor>> items() const { return items_; }
  std::vector<Tensor> tensors() const;
  Tensor find(const std::string& name) const;  // undefined Tensor when absent

  void set_requires_grad(bool rg) const;
  // FNV-1a over raw value bytes, order-sensitive. Detects any weight drift.
  std::uint64_t value_digest() const;

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

// Pairwise rotation of the last axis (must be even) by angles
// position / base^(2i/dim). Norm-preserving; position 0 is the identity.
Tensor rope_rotate(const Tensor& x, std::size_t position, double base);

// Row t rotated at position start_pos + t; used for q/k over a sequence.
Tensor rope_rows(const Tensor& x, std::size_t start_pos, double base);

namespace detail {
// In-place rotation of one row; shared by the taped ops above and the
// incremental generation path so both produce identical bits.
void rope_apply_row(double* row, std::size_t dim, std::size_t position,
                    double base);
}  // namespace detail

struct Linear {
  Tensor weight;  // [in x out]

  Linear() = default;
  Linear(std::size_t in, std::size_t out, double init_std, Rng& rng);
  Tensor apply(const Tensor& x) const { return ad::matmul(x, weight); }
};

struct RmsNorm {
  Tensor gain;
  double eps = 1e-5;

  RmsNorm() = default;
  explicit RmsNorm(std::size_t dim);
  Tensor apply(const Tensor& x) const { return ad::rms_norm(x, gain, eps); }
};

struct BlockConfig {
  std::size_t d_model = 0;
  std::size_t n_heads = 1;
  std::size_t ffn_mult = 4;
  std::size_t n_layers = 1;  // depth of the enclosing stack, for init scale
  double rope_base = 10000.0;
  bool causal = true;
};

// Pre-norm block: RMS-norm -> multi-head attention with rotary positions ->
// residual; RMS-norm -> gated feed-forward -> residual.
struct TransformerBlock {
  BlockConfig cfg;
  RmsNorm norm_attn, norm_ffn;
  Linear wq, wk, wv, wo;
  Linear w_gate, w_up, w_down;

  TransformerBlock() = default;
  TransformerBlock(const BlockConfig& cfg, Rng& rng);

  // x is [T x d_model]; pos_offset shifts the rotary positions (nonzero
  // only on cached generation paths).
  Tensor apply(const Tensor& x, std::size_t pos_offset = 0) const;

  ParamMap params(const std::string& prefix) const;
};

// Depth-scaled init: residual-branch output projections use
// 0.02/sqrt(2*n_layers), everything else 0.02.
double residual_init_std(std::size_t n_layers);
inline constexpr double kBaseInitStd = 0.02;

std::int64_t block_param_count(std::size_t d_model, std::size_t ffn_mult);

// Cached keys/values of one block, d_model doubles per position, heads
// concatenated. Grows by one row per step.
struct BlockKV {
  std::vector<double> k;
  std::vector<double> v;
};

// One causal position through a block with the KV cache: x (d_model) is
// updated in place, the new rotary-encoded k/v row is appended. Performs
// exactly the scalar operations the taped TransformerBlock::apply runs for
// the same row, so outputs are bit-identical.
void block_row_step(const TransformerBlock& block, std::vector<double>& x,
                    BlockKV& cache, std::size_t position);

// y += x * W for a [in x out] weight, mirroring matmul's inner loop.
void matvec_accum(const double* x, const double* w, std::size_t in_dim,
                  std::size_t out_dim, double* y);

void rms_norm_row(const double* x, const double* gain, std::size_t d,
                  double eps, double* y);

}  // namespace sonarllm::nn

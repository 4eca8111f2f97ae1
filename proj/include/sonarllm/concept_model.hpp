// SPDX-License-Identifier: Apache-2.0
//
// Decoder-only transformer over sentence-embedding sequences (continuous in,
// continuous out — no token lookup on this path), plus the token-level LM
// baseline built from the same blocks with a tied embedding head.

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "sonarllm/codec.hpp"
#include "sonarllm/nn.hpp"

namespace sonarllm::model {

using ad::Tensor;

struct ConceptModelConfig {
  std::size_t d_model = 64;
  std::size_t n_layers = 4;
  std::size_t n_heads = 4;
  std::size_t ffn_mult = 4;
  std::size_t d_embed = 32;
  std::size_t max_concepts = 64;
  double rope_base = 10000.0;

  void validate() const;
};

// Pairwise rotation by position/base^(2i/dim) over the last axis; the
// position applies to every row. Norm-preserving.
Tensor rope_rotate(const Tensor& q_or_k, std::size_t position,
                   double base = 10000.0);

class ConceptLM {
 public:
  ConceptLM(const ConceptModelConfig& cfg, std::uint64_t seed);

  const ConceptModelConfig& config() const { return cfg_; }

  // embeddings is [T x d_embed]; row t of the result predicts the embedding
  // that follows prefix 0..t. Causal: row t depends only on rows 0..t.
  Tensor forward(const Tensor& embeddings) const;

  // Convenience over plain vectors, forward-only. 1 <= T <= max_concepts.
  std::vector<std::vector<double>> forward_concepts(
      const std::vector<std::vector<double>>& embeddings) const;

  nn::ParamMap params() const;

  // Incremental generation state: cached rotary-encoded keys and values per
  // layer. step() returns exactly the row forward() would produce at the
  // same position, bit for bit.
  class Session {
   public:
    explicit Session(const ConceptLM& model);
    std::vector<double> step(const std::vector<double>& embedding);
    std::size_t position() const { return position_; }

   private:
    const ConceptLM& model_;
    std::size_t position_ = 0;
    std::vector<nn::BlockKV> caches_;  // one per layer
  };

 private:
  friend class Session;
  ConceptModelConfig cfg_;
  nn::Linear in_proj_;
  std::vector<nn::TransformerBlock> blocks_;
  nn::RmsNorm final_norm_;
  nn::Linear out_proj_;
};

class TokenLM {
 public:
  TokenLM(const ConceptModelConfig& cfg, std::size_t vocab_size,
          std::uint64_t seed);

  const ConceptModelConfig& config() const { return cfg_; }
  std::size_t vocab_size() const { return vocab_size_; }

  // Next-token logits: row t scores the token following ids[0..t]. The
  // output matrix is tied to the input embedding table.
  Tensor forward(const std::vector<int>& ids) const;

  nn::ParamMap params() const;

  // Cached single-token stepping for generation; step() returns the logits
  // row the full forward would produce at the same position.
  class Session {
   public:
    explicit Session(const TokenLM& model);
    std::vector<double> step(int token_id);
    std::size_t position() const { return position_; }

   private:
    const TokenLM& model_;
    std::size_t position_ = 0;
    std::vector<nn::BlockKV> caches_;
  };

 private:
  friend class Session;
  ConceptModelConfig cfg_;
  std::size_t vocab_size_;
  Tensor tok_embed_;  // [V x d_model], tied in and out
  std::vector<nn::TransformerBlock> blocks_;
  nn::RmsNorm final_norm_;
};

// Shape arithmetic for trainable parameter counts. The concept path counts
// its input/output projections; include_codec_and_embeddings adds the frozen
// codec (concept path) or the tied token table (token path), mirroring the
// two reporting conventions.
std::int64_t concept_core_params(const ConceptModelConfig& cfg);
std::int64_t token_lm_params(const ConceptModelConfig& cfg,
                             std::size_t vocab_size, bool include_embeddings);
std::int64_t codec_params(const codec::CodecConfig& cfg);
std::int64_t count_params(const ConceptModelConfig& cfg,
                          const codec::CodecConfig* codec_cfg,
                          bool include_codec_and_embeddings);

}  // namespace sonarllm::model

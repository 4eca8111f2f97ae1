// SPDX-License-Identifier: Apache-2.0
//
// Power-law fitting of loss-vs-parameter-count points and a closed-form
// inference cost model for token-level and sentence-level generation,
// including the crossover search.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace sonarllm::analysis {

struct ScalingPoint {
  double n = 0.0;  // trainable parameter count
  double loss = 0.0;
};

struct ScalingFit {
  double a = 0.0;
  double alpha = 0.0;
  double b = 0.0;
  double r2 = 0.0;
  bool degenerate = false;  // all losses equal; r2 reported as 1
  std::vector<ScalingPoint> points;
};

// Least squares for L(N) = a*N^-alpha + b. Grid over alpha in [0.05, 2.0]
// step 0.005 with closed-form (a, b) per alpha, then golden-section
// refinement of alpha to 1e-6. Requires >= 4 points with distinct N and
// positive L.
ScalingFit fit_scaling_law(const std::vector<ScalingPoint>& points);

// Layer/width description from which parameter counts and FLOP costs
// derive. ffn is gated (three matrices of hidden width ffn_mult*d_model).
struct ArchShape {
  std::int64_t n_layers = 0;
  std::int64_t d_model = 0;
  std::int64_t n_heads = 1;
  std::int64_t ffn_mult = 4;
  std::int64_t vocab_size = 0;  // token path only
  std::int64_t d_embed = 0;     // concept path only

  // Block and final-norm parameters; embedding/vocab tables excluded.
  std::int64_t nonembedding_params() const;
  // Adds the d_embed <-> d_model input/output projections.
  std::int64_t concept_core_params() const;
};

// Cost convention: one multiply-add = 2 FLOPs; linear layers cost 2P per
// token; attention with a KV cache costs 4*n_layers*d_model*(context) per
// generated token.
struct FlopsModel {
  ArchShape concept_core;   // sentence-level predictor
  ArchShape encoder;        // per-sentence encode pass
  ArchShape decoder;        // per-sentence cached decode
  std::int64_t avg_sentence_len = 60;  // lambda
};

// Token-level generation of T tokens with KV caching:
//   sum_{t=1..T} (2P + 4*L*d*t)  =  2PT + 2*L*d*T*(T+1).
std::int64_t flops_token_llm(const ArchShape& shape, std::int64_t t_tokens);

// Sentence-level generation of T tokens: S = ceil(T/lambda) sentence steps
// through the concept core, each followed by one encoder pass and lambda
// cached decoder steps over a lambda-token sentence.
std::int64_t flops_sonar_llm(const FlopsModel& model, std::int64_t t_tokens);

struct CrossoverResult {
  std::optional<std::int64_t> t_star;  // smallest T with sonar < token
  bool used_fallback = false;  // non-monotone difference; linear scan used
};

CrossoverResult crossover_length(const ArchShape& token_shape,
                                 const FlopsModel& model,
                                 std::int64_t t_max_search);

// CSV of (T, flops_llm, flops_sonar). Doubling grid T = 1, 2, 4, ... up to
// t_max when dense is false; every T otherwise.
std::string flops_csv(const ArchShape& token_shape, const FlopsModel& model,
                      std::int64_t t_max, bool dense);

}  // namespace sonarllm::analysis

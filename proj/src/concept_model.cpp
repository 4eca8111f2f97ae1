// SPDX-License-Identifier: Apache-2.0

#include "sonarllm/concept_model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace sonarllm::model {

void ConceptModelConfig::validate() const {
  if (d_model == 0 || n_layers == 0 || n_heads == 0 || d_embed == 0) {
    throw ad::ContractError("ConceptModelConfig: all dimensions must be >= 1");
  }
  if (d_model % n_heads != 0) {
    throw ad::ContractError("ConceptModelConfig: d_model " +
                            std::to_string(d_model) +
                            " not divisible by n_heads " +
                            std::to_string(n_heads));
  }
  if ((d_model / n_heads) % 2 != 0) {
    throw ad::ContractError("ConceptModelConfig: head dimension must be even");
  }
  if (max_concepts == 0) {
    throw ad::ContractError("ConceptModelConfig: max_concepts must be >= 1");
  }
}

Tensor rope_rotate(const Tensor& q_or_k, std::size_t position, double base) {
  return nn::rope_rotate(q_or_k, position, base);
}

namespace {

nn::BlockConfig block_config(const ConceptModelConfig& cfg) {
  nn::BlockConfig bc;
  bc.d_model = cfg.d_model;
  bc.n_heads = cfg.n_heads;
  bc.ffn_mult = cfg.ffn_mult;
  bc.n_layers = cfg.n_layers;
  bc.rope_base = cfg.rope_base;
  bc.causal = true;
  return bc;
}

}  // namespace

ConceptLM::ConceptLM(const ConceptModelConfig& cfg, std::uint64_t seed)
    : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  in_proj_ = nn::Linear(cfg.d_embed, cfg.d_model, nn::kBaseInitStd, rng);
  for (std::size_t i = 0; i < cfg.n_layers; ++i)
    blocks_.emplace_back(block_config(cfg), rng);
  final_norm_ = nn::RmsNorm(cfg.d_model);
  out_proj_ = nn::Linear(cfg.d_model, cfg.d_embed, nn::kBaseInitStd, rng);
}

Tensor ConceptLM::forward(const Tensor& embeddings) const {
  if (embeddings.shape().size() != 2 || embeddings.cols() != cfg_.d_embed) {
    throw ad::ShapeError("ConceptLM::forward: expected [T x " +
                         std::to_string(cfg_.d_embed) + "], got " +
                         ad::shape_str(embeddings.shape()));
  }
  if (embeddings.rows() < 1 || embeddings.rows() > cfg_.max_concepts) {
    throw ad::ContractError("ConceptLM::forward: sequence length " +
                            std::to_string(embeddings.rows()) +
                            " outside [1, " +
                            std::to_string(cfg_.max_concepts) + "]");
  }
  Tensor x = in_proj_.apply(embeddings);
  for (const auto& block : blocks_) x = block.apply(x);
  return out_proj_.apply(final_norm_.apply(x));
}

std::vector<std::vector<double>> ConceptLM::forward_concepts(
    const std::vector<std::vector<double>>& embeddings) const {
  const std::size_t t = embeddings.size();
  std::vector<double> flat;
  flat.reserve(t * cfg_.d_embed);
  for (const auto& e : embeddings) {
    if (e.size() != cfg_.d_embed) {
      throw ad::ShapeError("forward_concepts: embedding width " +
                           std::to_string(e.size()) + ", expected " +
                           std::to_string(cfg_.d_embed));
    }
    flat.insert(flat.end(), e.begin(), e.end());
  }
  Tensor out = forward(Tensor::from_values({t, cfg_.d_embed}, std::move(flat)));
  std::vector<std::vector<double>> result(t);
  for (std::size_t i = 0; i < t; ++i)
    result[i].assign(out.values().begin() + i * cfg_.d_embed,
                     out.values().begin() + (i + 1) * cfg_.d_embed);
  return result;
}

nn::ParamMap ConceptLM::params() const {
  nn::ParamMap p;
  p.add("in_proj", in_proj_.weight);
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    p.extend("blocks." + std::to_string(i) + ".", blocks_[i].params(""));
  p.add("final_norm.gain", final_norm_.gain);
  p.add("out_proj", out_proj_.weight);
  return p;
}

// ---- incremental generation ---------------------------------------------------

ConceptLM::Session::Session(const ConceptLM& model)
    : model_(model), caches_(model.cfg_.n_layers) {}

std::vector<double> ConceptLM::Session::step(
    const std::vector<double>& embedding) {
  const ConceptModelConfig& cfg = model_.cfg_;
  if (embedding.size() != cfg.d_embed) {
    throw ad::ShapeError("Session::step: embedding width " +
                         std::to_string(embedding.size()) + ", expected " +
                         std::to_string(cfg.d_embed));
  }
  if (position_ >= cfg.max_concepts) {
    throw ad::ContractError("Session::step: context already holds " +
                            std::to_string(position_) + " embeddings");
  }
  const std::size_t d = cfg.d_model;
  std::vector<double> x(d, 0.0);
  nn::matvec_accum(embedding.data(), model_.in_proj_.weight.values().data(),
                   cfg.d_embed, d, x.data());
  for (std::size_t layer = 0; layer < cfg.n_layers; ++layer)
    nn::block_row_step(model_.blocks_[layer], x, caches_[layer], position_);

  std::vector<double> h(d);
  nn::rms_norm_row(x.data(), model_.final_norm_.gain.values().data(), d,
                   model_.final_norm_.eps, h.data());
  std::vector<double> out(cfg.d_embed, 0.0);
  nn::matvec_accum(h.data(), model_.out_proj_.weight.values().data(), d,
                   cfg.d_embed, out.data());
  ++position_;
  return out;
}

// ---- token LM ------------------------------------------------------------------

TokenLM::TokenLM(const ConceptModelConfig& cfg, std::size_t vocab_size,
                 std::uint64_t seed)
    : cfg_(cfg), vocab_size_(vocab_size) {
  cfg_.validate();
  if (vocab_size < 5) {
    throw ad::ContractError("TokenLM: vocabulary must hold the reserved ids");
  }
  Rng rng(seed);
  tok_embed_ = Tensor::randn({vocab_size, cfg.d_model}, nn::kBaseInitStd, rng,
                             /*requires_grad=*/true);
  for (std::size_t i = 0; i < cfg.n_layers; ++i)
    blocks_.emplace_back(block_config(cfg), rng);
  final_norm_ = nn::RmsNorm(cfg.d_model);
}

Tensor TokenLM::forward(const std::vector<int>& ids) const {
  if (ids.empty()) throw ad::ContractError("TokenLM::forward: empty input");
  Tensor x = ad::gather_rows(tok_embed_, ids);
  for (const auto& block : blocks_) x = block.apply(x);
  return ad::matmul_nt(final_norm_.apply(x), tok_embed_);
}

nn::ParamMap TokenLM::params() const {
  nn::ParamMap p;
  p.add("tok_embed", tok_embed_);
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    p.extend("blocks." + std::to_string(i) + ".", blocks_[i].params(""));
  p.add("final_norm.gain", final_norm_.gain);
  return p;
}

TokenLM::Session::Session(const TokenLM& model)
    : model_(model), caches_(model.cfg_.n_layers) {}

std::vector<double> TokenLM::Session::step(int token_id) {
  if (token_id < 0 ||
      static_cast<std::size_t>(token_id) >= model_.vocab_size_) {
    throw ad::ContractError("TokenLM::Session::step: id " +
                            std::to_string(token_id) + " out of range");
  }
  const std::size_t d = model_.cfg_.d_model;
  const auto table = model_.tok_embed_.values();
  std::vector<double> x(table.begin() + token_id * d,
                        table.begin() + (token_id + 1) * d);
  for (std::size_t layer = 0; layer < model_.cfg_.n_layers; ++layer)
    nn::block_row_step(model_.blocks_[layer], x, caches_[layer], position_);
  std::vector<double> h(d);
  nn::rms_norm_row(x.data(), model_.final_norm_.gain.values().data(), d,
                   model_.final_norm_.eps, h.data());
  // Tied head: logits[j] = h . tok_embed[j].
  std::vector<double> logits(model_.vocab_size_, 0.0);
  for (std::size_t j = 0; j < model_.vocab_size_; ++j) {
    double acc = 0.0;
    for (std::size_t p = 0; p < d; ++p) acc += h[p] * table[j * d + p];
    logits[j] = acc;
  }
  ++position_;
  return logits;
}

// ---- parameter counting --------------------------------------------------------

std::int64_t concept_core_params(const ConceptModelConfig& cfg) {
  const std::int64_t d = static_cast<std::int64_t>(cfg.d_model);
  const std::int64_t de = static_cast<std::int64_t>(cfg.d_embed);
  return 2 * de * d +
         static_cast<std::int64_t>(cfg.n_layers) *
             nn::block_param_count(cfg.d_model, cfg.ffn_mult) +
         d;
}

std::int64_t token_lm_params(const ConceptModelConfig& cfg,
                             std::size_t vocab_size, bool include_embeddings) {
  const std::int64_t d = static_cast<std::int64_t>(cfg.d_model);
  std::int64_t count = static_cast<std::int64_t>(cfg.n_layers) *
                           nn::block_param_count(cfg.d_model, cfg.ffn_mult) +
                       d;
  if (include_embeddings)
    count += static_cast<std::int64_t>(vocab_size) * d;  // tied, counted once
  return count;
}

std::int64_t codec_params(const codec::CodecConfig& cfg) {
  const std::int64_t d = static_cast<std::int64_t>(cfg.d);
  const std::int64_t v = static_cast<std::int64_t>(cfg.vocab_size);
  std::int64_t count = 2 * v * d;  // encoder + decoder token tables
  count += static_cast<std::int64_t>(cfg.enc_layers) *
               nn::block_param_count(cfg.d, cfg.ffn_mult) +
           d;
  count += static_cast<std::int64_t>(cfg.dec_layers) *
               nn::block_param_count(cfg.d, cfg.ffn_mult) +
           d;
  count += d * d;  // conditioning projection
  count += d * v;  // vocabulary projection
  return count;
}

std::int64_t count_params(const ConceptModelConfig& cfg,
                          const codec::CodecConfig* codec_cfg,
                          bool include_codec_and_embeddings) {
  std::int64_t count = concept_core_params(cfg);
  if (include_codec_and_embeddings && codec_cfg)
    count += codec_params(*codec_cfg);
  return count;
}

}  // namespace sonarllm::model

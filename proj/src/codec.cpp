// SPDX-License-Identifier: Apache-2.0

#include "sonarllm/codec.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>

#include "sonarllm/training.hpp"

namespace sonarllm::codec {

void CodecConfig::validate() const {
  if (d == 0 || enc_layers == 0 || dec_layers == 0 || n_heads == 0) {
    throw ad::ContractError("CodecConfig: all counts must be >= 1");
  }
  if (d % n_heads != 0) {
    throw ad::ContractError("CodecConfig: d " + std::to_string(d) +
                            " not divisible by n_heads " +
                            std::to_string(n_heads));
  }
  if ((d / n_heads) % 2 != 0) {
    throw ad::ContractError("CodecConfig: head dimension must be even");
  }
  if (vocab_size < 5) {
    throw ad::ContractError("CodecConfig: vocab_size must cover reserved ids");
  }
  if (max_sentence_tokens < 3) {
    throw ad::ContractError("CodecConfig: max_sentence_tokens too small");
  }
}

namespace {

nn::BlockConfig codec_block_config(const CodecConfig& cfg, bool causal,
                                   std::size_t depth) {
  nn::BlockConfig bc;
  bc.d_model = cfg.d;
  bc.n_heads = cfg.n_heads;
  bc.ffn_mult = cfg.ffn_mult;
  bc.n_layers = depth;
  bc.rope_base = cfg.rope_base;
  bc.causal = causal;
  return bc;
}

}  // namespace

SentenceCodec::SentenceCodec(const CodecConfig& cfg, std::uint64_t seed)
    : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  enc_embed_ = Tensor::randn({cfg.vocab_size, cfg.d}, nn::kBaseInitStd, rng,
                             /*requires_grad=*/true);
  for (std::size_t i = 0; i < cfg.enc_layers; ++i)
    enc_blocks_.emplace_back(codec_block_config(cfg, false, cfg.enc_layers), rng);
  enc_norm_ = nn::RmsNorm(cfg.d);
  dec_embed_ = Tensor::randn({cfg.vocab_size, cfg.d}, nn::kBaseInitStd, rng,
                             /*requires_grad=*/true);
  cond_proj_ = nn::Linear(cfg.d, cfg.d, nn::kBaseInitStd, rng);
  for (std::size_t i = 0; i < cfg.dec_layers; ++i)
    dec_blocks_.emplace_back(codec_block_config(cfg, true, cfg.dec_layers), rng);
  dec_norm_ = nn::RmsNorm(cfg.d);
  vocab_proj_ = nn::Linear(cfg.d, cfg.vocab_size, nn::kBaseInitStd, rng);
}

Tensor SentenceCodec::encode(const std::vector<int>& tokens) const {
  if (tokens.size() < 2) {
    throw ad::ContractError("SentenceCodec::encode: need BOS/EOS framing, got " +
                            std::to_string(tokens.size()) + " tokens");
  }
  std::vector<int> ids = tokens;
  if (ids.size() > cfg_.max_sentence_tokens) {
    std::cerr << "[codec] truncating sentence of " << ids.size() << " to "
              << cfg_.max_sentence_tokens << " tokens\n";
    ids.resize(cfg_.max_sentence_tokens - 1);
    ids.push_back(text::Vocabulary::kEos);
  }
  Tensor x = ad::gather_rows(enc_embed_, ids);
  for (const auto& block : enc_blocks_) x = block.apply(x);
  return ad::mean_rows(enc_norm_.apply(x));
}

Tensor SentenceCodec::decoder_rows(const Tensor& embedding,
                                   const std::vector<int>& context_tokens) const {
  if (embedding.size() != cfg_.d) {
    throw ad::ShapeError("SentenceCodec: embedding width " +
                         std::to_string(embedding.size()) + ", expected " +
                         std::to_string(cfg_.d));
  }
  Tensor cond =
      ad::matmul(ad::reshape(embedding, {1, cfg_.d}), cond_proj_.weight);
  Tensor x;
  if (context_tokens.empty()) {
    x = cond;
  } else {
    Tensor toks = ad::gather_rows(dec_embed_, context_tokens);
    Tensor conditioned = ad::add_row_bias(toks, ad::reshape(cond, {cfg_.d}));
    x = ad::concat_rows({cond, conditioned});
  }
  for (const auto& block : dec_blocks_) x = block.apply(x);
  return ad::matmul(dec_norm_.apply(x), vocab_proj_.weight);
}

Tensor SentenceCodec::decode_logits(const Tensor& embedding,
                                    const std::vector<int>& teacher_tokens) const {
  if (teacher_tokens.size() < 2 ||
      teacher_tokens.front() != text::Vocabulary::kBos) {
    throw ad::ContractError(
        "SentenceCodec::decode_logits: teacher tokens must be BOS-framed");
  }
  const std::vector<int> context(teacher_tokens.begin() + 1,
                                 teacher_tokens.end() - 1);
  return decoder_rows(embedding, context);
}

std::vector<int> SentenceCodec::greedy_decode(const Tensor& embedding,
                                              std::size_t max_len) const {
  if (max_len > cfg_.max_sentence_tokens) {
    throw ad::ContractError("SentenceCodec::greedy_decode: max_len " +
                            std::to_string(max_len) + " exceeds " +
                            std::to_string(cfg_.max_sentence_tokens));
  }
  if (embedding.size() != cfg_.d) {
    throw ad::ShapeError("SentenceCodec::greedy_decode: embedding width " +
                         std::to_string(embedding.size()) + ", expected " +
                         std::to_string(cfg_.d));
  }
  // Incremental decoding with per-layer KV caches; each step runs the same
  // scalar operations as decoder_rows for the new position, so the argmax
  // sequence matches a full recompute exactly.
  const std::size_t d = cfg_.d;
  std::vector<double> cond(d, 0.0);
  nn::matvec_accum(embedding.values().data(), cond_proj_.weight.values().data(),
                   d, d, cond.data());

  std::vector<nn::BlockKV> caches(cfg_.dec_layers);
  std::vector<int> ids = {text::Vocabulary::kBos};
  std::vector<double> x = cond;
  std::vector<double> h(d);
  std::vector<double> logits(cfg_.vocab_size);
  std::size_t pos = 0;
  while (ids.size() < max_len) {
    for (std::size_t layer = 0; layer < cfg_.dec_layers; ++layer)
      nn::block_row_step(dec_blocks_[layer], x, caches[layer], pos);
    nn::rms_norm_row(x.data(), dec_norm_.gain.values().data(), d,
                     dec_norm_.eps, h.data());
    std::fill(logits.begin(), logits.end(), 0.0);
    nn::matvec_accum(h.data(), vocab_proj_.weight.values().data(), d,
                     cfg_.vocab_size, logits.data());
    int best = 0;
    double best_score = logits[0];
    for (std::size_t j = 1; j < cfg_.vocab_size; ++j) {
      if (logits[j] > best_score) {  // strict: ties keep the lowest id
        best_score = logits[j];
        best = static_cast<int>(j);
      }
    }
    ids.push_back(best);
    if (best == text::Vocabulary::kEos) break;

    const auto dv = dec_embed_.values();
    x.assign(dv.begin() + best * d, dv.begin() + (best + 1) * d);
    for (std::size_t j = 0; j < d; ++j) x[j] += cond[j];
    ++pos;
  }
  return ids;
}

void SentenceCodec::freeze() {
  params().set_requires_grad(false);
  frozen_ = true;
}

nn::ParamMap SentenceCodec::params() const {
  nn::ParamMap p;
  p.add("enc.embed", enc_embed_);
  for (std::size_t i = 0; i < enc_blocks_.size(); ++i)
    p.extend("enc.blocks." + std::to_string(i) + ".", enc_blocks_[i].params(""));
  p.add("enc.norm.gain", enc_norm_.gain);
  p.add("dec.embed", dec_embed_);
  p.add("dec.cond_proj", cond_proj_.weight);
  for (std::size_t i = 0; i < dec_blocks_.size(); ++i)
    p.extend("dec.blocks." + std::to_string(i) + ".", dec_blocks_[i].params(""));
  p.add("dec.norm.gain", dec_norm_.gain);
  p.add("dec.vocab_proj", vocab_proj_.weight);
  return p;
}

// ---- evaluation helpers --------------------------------------------------------

std::vector<std::vector<int>> corpus_sentences(
    const std::vector<text::Document>& corpus) {
  std::vector<std::vector<int>> out;
  for (const auto& doc : corpus)
    for (const auto& span : doc.sentences) {
      if (span.tokens.empty()) {
        throw ad::ContractError("corpus_sentences: corpus is not tokenized");
      }
      out.push_back(span.tokens);
    }
  return out;
}

double reconstruction_ce(const SentenceCodec& codec,
                         const std::vector<std::vector<int>>& sentences) {
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& s : sentences) {
    Tensor logits = codec.decode_logits(codec.encode(s), s);
    const std::vector<int> targets(s.begin() + 1, s.end());
    total += ad::cross_entropy_logits(logits, targets).item();
    tokens += targets.size();
  }
  return total / static_cast<double>(tokens);
}

double reconstruction_token_accuracy(
    const SentenceCodec& codec, const std::vector<std::vector<int>>& sentences) {
  std::size_t matches = 0, total = 0;
  for (const auto& s : sentences) {
    const std::vector<int> decoded =
        codec.greedy_decode(codec.encode(s), codec.config().max_sentence_tokens);
    for (std::size_t i = 1; i < s.size(); ++i) {
      ++total;
      if (i < decoded.size() && decoded[i] == s[i]) ++matches;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(matches) /
                                static_cast<double>(total);
}

// ---- pretraining ----------------------------------------------------------------

SentenceCodec pretrain_codec(const std::vector<text::Document>& corpus,
                             const CodecConfig& cfg,
                             const CodecTrainConfig& train_cfg,
                             PretrainReport* report) {
  if (corpus.empty()) {
    throw ad::ContractError("pretrain_codec: corpus is empty");
  }
  // Duplicate sentences collapse to frequency weights; the weighted loss
  // equals instance-level batching.
  std::map<std::vector<int>, std::size_t> counts;
  for (const auto& s : corpus_sentences(corpus)) ++counts[s];
  std::vector<std::vector<int>> unique;
  std::vector<double> weight;
  for (const auto& [sentence, count] : counts) {
    unique.push_back(sentence);
    weight.push_back(static_cast<double>(count));
  }

  SentenceCodec codec(cfg, train_cfg.seed);
  auto params = codec.params().tensors();
  train::TrainConfig opt;
  opt.grad_clip_norm = train_cfg.grad_clip_norm;
  auto adam = train::AdamState::init(params);

  const std::size_t n = unique.size();
  const std::size_t batch = std::max<std::size_t>(1, train_cfg.batch_size);
  const std::size_t steps_per_epoch = (n + batch - 1) / batch;
  const std::size_t total_steps = steps_per_epoch * train_cfg.epochs;

  Rng shuffle_rng(train_cfg.seed + 1);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  PretrainReport local;
  std::size_t gstep = 0;
  char buf[96];
  for (std::size_t epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t b = 0; b < n; b += batch) {
      const std::size_t end = std::min(n, b + batch);
      ad::TapeScope tape;
      Tensor total_ce;
      double token_norm = 0.0;
      for (std::size_t i = b; i < end; ++i) {
        const auto& s = unique[order[i]];
        Tensor logits = codec.decode_logits(codec.encode(s), s);
        const std::vector<int> targets(s.begin() + 1, s.end());
        Tensor ce = ad::scale(ad::cross_entropy_logits(logits, targets),
                              weight[order[i]]);
        total_ce = total_ce.defined() ? ad::add(total_ce, ce) : ce;
        token_norm += weight[order[i]] * static_cast<double>(targets.size());
      }
      Tensor loss = ad::scale(total_ce, 1.0 / token_norm);
      const double loss_value = loss.item();
      if (!std::isfinite(loss_value)) {
        throw TrainingDiverged("pretrain_codec: non-finite loss", gstep);
      }
      for (const Tensor& p : params) p.zero_grad();
      tape.backward(loss);
      train::clip_global_norm(params, train_cfg.grad_clip_norm);
      const double lr = train::cosine_lr(gstep, total_steps,
                                         train_cfg.warmup_steps, train_cfg.lr);
      train::adam_step(params, adam, opt, lr);
      if (gstep == 0) local.initial_loss = loss_value;
      local.final_loss = loss_value;
      std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g", gstep, lr, loss_value);
      local.csv_rows.emplace_back(buf);
      ++gstep;
    }
    local.token_accuracy = reconstruction_token_accuracy(codec, unique);
    if (local.token_accuracy >= train_cfg.target_token_accuracy) break;
  }
  local.steps = gstep;
  if (report) *report = local;
  codec.freeze();
  return codec;
}

}  // namespace sonarllm::codec

// SPDX-License-Identifier: Apache-2.0
//
// Trainable sentence autoencoder, frozen after pretraining: a bidirectional
// encoder pools token states into one fixed-width embedding; a causal
// decoder, conditioned on that embedding, produces per-position token
// logits. Gradients flow through the frozen decoder to its embedding input.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sonarllm/nn.hpp"
#include "sonarllm/text.hpp"

namespace sonarllm::codec {

using ad::Tensor;

struct CodecConfig {
  std::size_t d = 32;  // embedding width
  std::size_t enc_layers = 2;
  std::size_t dec_layers = 2;
  std::size_t n_heads = 4;
  std::size_t ffn_mult = 4;
  std::size_t max_sentence_tokens = 64;
  std::size_t vocab_size = 0;
  double rope_base = 10000.0;

  void validate() const;
};

class SentenceCodec {
 public:
  SentenceCodec(const CodecConfig& cfg, std::uint64_t seed);

  const CodecConfig& config() const { return cfg_; }

  // Mean-pooled final-layer states of the bidirectional encoder. Input must
  // be BOS/EOS framed (length >= 2); over-length input is truncated to
  // max_sentence_tokens-1 plus EOS, with a note on stderr.
  Tensor encode(const std::vector<int>& tokens) const;

  // Per-position logits for teacher-forced tokens: position 0 consumes the
  // projected embedding, later positions consume teacher token embeddings
  // with the projected embedding added. Output rows = len(teacher) - 1.
  Tensor decode_logits(const Tensor& embedding,
                       const std::vector<int>& teacher_tokens) const;

  // Argmax decoding from BOS (ties take the lowest id); stops at EOS or
  // max_len total tokens. Returns the BOS/EOS-framed sequence.
  std::vector<int> greedy_decode(const Tensor& embedding,
                                 std::size_t max_len) const;

  void freeze();
  bool frozen() const { return frozen_; }

  nn::ParamMap params() const;
  std::uint64_t weight_digest() const { return params().value_digest(); }

 private:
  Tensor decoder_rows(const Tensor& embedding,
                      const std::vector<int>& context_tokens) const;

  CodecConfig cfg_;
  Tensor enc_embed_;  // [V x d]
  std::vector<nn::TransformerBlock> enc_blocks_;
  nn::RmsNorm enc_norm_;
  Tensor dec_embed_;  // [V x d]
  nn::Linear cond_proj_;
  std::vector<nn::TransformerBlock> dec_blocks_;
  nn::RmsNorm dec_norm_;
  nn::Linear vocab_proj_;  // [d x V]
  bool frozen_ = false;
};

struct CodecTrainConfig {
  double lr = 3e-3;
  std::size_t epochs = 40;
  std::size_t batch_size = 16;
  std::size_t warmup_steps = 50;
  double grad_clip_norm = 1.0;
  std::uint64_t seed = 0;
  // Early stop once greedy reconstruction reaches this token accuracy.
  double target_token_accuracy = 0.999;
};

struct PretrainReport {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double token_accuracy = 0.0;
  std::size_t steps = 0;
  std::vector<std::string> csv_rows;  // "step,lr,loss" lines
};

// Joint reconstruction training over every sentence of the corpus
// (duplicates collapse into frequency weights). Returns a frozen codec.
// Throws TrainingDiverged on a non-finite loss.
SentenceCodec pretrain_codec(const std::vector<text::Document>& corpus,
                             const CodecConfig& cfg,
                             const CodecTrainConfig& train_cfg,
                             PretrainReport* report = nullptr);

// Mean per-token cross entropy of decode(encode(s)) against s itself,
// averaged over the given sentences.
double reconstruction_ce(const SentenceCodec& codec,
                         const std::vector<std::vector<int>>& sentences);

// Fraction of target tokens reproduced by greedy decoding.
double reconstruction_token_accuracy(
    const SentenceCodec& codec, const std::vector<std::vector<int>>& sentences);

// All sentence token sequences of a tokenized corpus, in order.
std::vector<std::vector<int>> corpus_sentences(
    const std::vector<text::Document>& corpus);

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, std::size_t step)
      : std::runtime_error(what), step(step) {}
  std::size_t step;
};

}  // namespace sonarllm::codec

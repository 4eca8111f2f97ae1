// SPDX-License-Identifier: Apache-2.0
//
// The three training objectives (cross entropy through the frozen sentence
// decoder, embedding MSE, token-level cross entropy), Adam with global-norm
// clipping, the cosine schedule, and the epoch loop.

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sonarllm/codec.hpp"
#include "sonarllm/concept_model.hpp"
#include "sonarllm/text.hpp"

namespace sonarllm::train {

using ad::Tensor;

enum class Objective { kCeSonar, kMseLcm, kTokenCe };

const char* objective_name(Objective o);
std::optional<Objective> objective_from_name(const std::string& name);

struct TrainConfig {
  double lr = 0.0;  // 0 resolves to the per-objective default below
  std::size_t epochs = 4;
  std::size_t batch_size = 8;
  std::size_t warmup_steps = 50;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double adam_eps = 1e-8;
  double grad_clip_norm = 1.0;
  std::uint64_t seed = 0;

  double resolved_lr(Objective o) const;
};

inline constexpr double kDefaultLrCeSonar = 1e-3;
inline constexpr double kDefaultLrOther = 5e-4;

// Linear warmup to peak, then half-cosine decay to zero at total_steps.
double cosine_lr(std::size_t step, std::size_t total_steps,
                 std::size_t warmup_steps, double peak);

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the pre-clip norm.
double clip_global_norm(const std::vector<Tensor>& params, double max_norm);

struct AdamState {
  std::size_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static AdamState init(const std::vector<Tensor>& params);
};

// Standard Adam with bias correction, applied to params' accumulated
// gradients. Gradients must already be clipped; this only updates moments
// and parameters.
void adam_step(const std::vector<Tensor>& params, AdamState& state,
               const TrainConfig& cfg, double lr);

// ---- objectives ------------------------------------------------------------

// Core of the decoder-supervised objective: per-position token cross
// entropy of each sentence decoded from its predicted embedding, summed over
// sentences and positions, divided by the total target-token count.
// `sentences` are the BOS/EOS-framed token sequences being predicted
// (document sentences 2..T) and `predicted` holds one [1 x d] embedding row
// per sentence.
Tensor ce_loss_from_predictions(const codec::SentenceCodec& codec,
                                const std::vector<std::vector<int>>& sentences,
                                const std::vector<Tensor>& predicted);

// Full objective on one document: encode all sentences, teacher-force the
// ground-truth prefix embeddings through the model, decode each predicted
// embedding against the true next sentence. Returns an undefined Tensor for
// documents with fewer than two sentences (skipped with a note on stderr).
Tensor ce_through_decoder_loss(const model::ConceptLM& lm,
                               const codec::SentenceCodec& codec,
                               const text::Document& doc);

// Mean squared error between predicted and ground-truth embeddings over all
// positions and dimensions.
Tensor mse_loss(const model::ConceptLM& lm, const codec::SentenceCodec& codec,
                const text::Document& doc);

// Next-token cross entropy over the document's concatenated token stream
// (BOS + each sentence's surface tokens + EOS), per-token mean.
Tensor token_lm_loss(const model::TokenLM& lm, const text::Document& doc);

std::vector<int> document_token_stream(const text::Document& doc);

// ---- the run ----------------------------------------------------------------

struct LossReport {
  struct StepRow {
    std::size_t step;
    double lr;
    double train_loss;
  };
  struct EpochRow {
    std::size_t epoch;
    std::size_t step;  // global step at which validation ran
    double train_mean;
    double val_loss;
  };
  std::vector<StepRow> steps;
  std::vector<EpochRow> epochs;

  // Columns: step, lr, train_loss, val_loss. Validation appears on its own
  // row at each epoch boundary with the other numeric columns empty.
  std::string to_csv() const;
};

struct TrainResult {
  std::unique_ptr<model::ConceptLM> concept_lm;  // ce_sonar / mse_lcm
  std::unique_ptr<model::TokenLM> token_lm;      // token_ce
  LossReport report;
};

// Deterministic for a fixed seed. The codec must be frozen for the concept
// objectives and is only consulted for its vocabulary size by token_ce.
// Throws codec::TrainingDiverged on a non-finite loss.
TrainResult train_run(Objective objective,
                      const std::vector<text::Document>& train_docs,
                      const std::vector<text::Document>& val_docs,
                      const codec::SentenceCodec& codec,
                      const model::ConceptModelConfig& model_cfg,
                      const TrainConfig& cfg);

// Worst relative gradient error across a full-model finite-difference check
// of the given objective on a tiny configuration (1 layer, d_model 8) and a
// two-document corpus derived from the seed.
double full_model_grad_check(Objective objective, std::uint64_t seed);

}  // namespace sonarllm::train

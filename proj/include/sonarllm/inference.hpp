// SPDX-License-Identifier: Apache-2.0
//
// Sentence-level autoregressive generation with the sentinel stopping rule:
// predict the next embedding, test it against the cached sentinel embedding
// before any decoding, realize it as text only if generation continues.

#pragma once

#include <span>
#include <string>
#include <vector>

#include "sonarllm/codec.hpp"
#include "sonarllm/concept_model.hpp"
#include "sonarllm/text.hpp"

namespace sonarllm::infer {

// dot(u, v) / (|u| |v|). Both inputs must be non-zero.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

struct StopRule {
  double tau_stop = 0.98;
  std::size_t t_max = 32;
  std::vector<double> e_eot;  // sentinel embedding, encoded once and cached
};

// Encodes the sentinel sentence once; the cached embedding is reused
// bit-identically for every similarity test.
StopRule make_stop_rule(const codec::SentenceCodec& codec,
                        const text::Vocabulary& vocab,
                        const std::string& sentinel_text = text::kDefaultSentinel,
                        double tau_stop = 0.98, std::size_t t_max = 32);

// Next-embedding source. feed() consumes one context embedding and returns
// the prediction for the following position; implementations carry their own
// state (the production one wraps a cached model session).
class EmbeddingPredictor {
 public:
  virtual ~EmbeddingPredictor() = default;
  virtual std::vector<double> feed(const std::vector<double>& embedding) = 0;
};

class ConceptPredictor : public EmbeddingPredictor {
 public:
  explicit ConceptPredictor(const model::ConceptLM& lm) : session_(lm) {}
  std::vector<double> feed(const std::vector<double>& embedding) override {
    return session_.step(embedding);
  }

 private:
  model::ConceptLM::Session session_;
};

enum class StopReason { kSentinel, kTMax };

const char* stop_reason_name(StopReason reason);

struct GenerationResult {
  std::vector<std::string> sentences;               // decoded text, sentinel excluded
  std::vector<std::vector<double>> embeddings;      // every predicted embedding
  StopReason stop_reason = StopReason::kTMax;

  // One sentence per line plus a machine-readable trailer.
  std::string to_text() const;
};

// Segments and encodes the prompt, then alternates predict / stop-test /
// decode, re-feeding each predicted embedding raw. Halts after at most
// t_max sentences for any predictor. Empty prompts are contract errors.
GenerationResult generate(EmbeddingPredictor& predictor,
                          const codec::SentenceCodec& codec,
                          const text::Vocabulary& vocab,
                          const std::string& prompt_text,
                          const StopRule& rule);

}  // namespace sonarllm::infer

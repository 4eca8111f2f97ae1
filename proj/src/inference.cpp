// SPDX-License-Identifier: Apache-2.0

#include "sonarllm/inference.hpp"

#include <cmath>

namespace sonarllm::infer {

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw ad::ShapeError("cosine_similarity: lengths " +
                         std::to_string(u.size()) + " vs " +
                         std::to_string(v.size()));
  }
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) {
    throw ad::ContractError("cosine_similarity: zero vector");
  }
  return dot / (std::sqrt(nu) * std::sqrt(nv));
}

StopRule make_stop_rule(const codec::SentenceCodec& codec,
                        const text::Vocabulary& vocab,
                        const std::string& sentinel_text, double tau_stop,
                        std::size_t t_max) {
  if (tau_stop <= 0.0 || tau_stop > 1.0) {
    throw ad::ContractError("make_stop_rule: tau_stop must be in (0, 1]");
  }
  if (t_max < 1) {
    throw ad::ContractError("make_stop_rule: t_max must be >= 1");
  }
  StopRule rule;
  rule.tau_stop = tau_stop;
  rule.t_max = t_max;
  ad::Tensor e = codec.encode(text::encode_tokens(sentinel_text, vocab));
  rule.e_eot.assign(e.values().begin(), e.values().end());
  return rule;
}

const char* stop_reason_name(StopReason reason) {
  return reason == StopReason::kSentinel ? "sentinel" : "t_max";
}

std::string GenerationResult::to_text() const {
  std::string out;
  for (const std::string& s : sentences) {
    out += s;
    out += '\n';
  }
  out += "#stop_reason=";
  out += stop_reason_name(stop_reason);
  out += '\n';
  return out;
}

GenerationResult generate(EmbeddingPredictor& predictor,
                          const codec::SentenceCodec& codec,
                          const text::Vocabulary& vocab,
                          const std::string& prompt_text,
                          const StopRule& rule) {
  const std::vector<std::string> prompt_sentences =
      text::segment_sentences(prompt_text);
  if (prompt_sentences.empty()) {
    throw ad::ContractError("generate: prompt has no sentences");
  }

  // Prime the predictor with the prompt; only the last prediction matters.
  std::vector<double> next;
  for (const std::string& s : prompt_sentences) {
    ad::Tensor e = codec.encode(text::encode_tokens(s, vocab));
    next = predictor.feed(
        std::vector<double>(e.values().begin(), e.values().end()));
  }

  GenerationResult result;
  while (true) {
    result.embeddings.push_back(next);

    // Stop test precedes decoding so the sentinel never becomes text. An
    // all-zero prediction (possible with degenerate predictors) cannot match
    // the sentinel; treat it as similarity -1 rather than erroring out.
    double norm = 0.0;
    for (double x : next) norm += x * x;
    const double sim =
        norm == 0.0 ? -1.0 : cosine_similarity(next, rule.e_eot);
    if (sim >= rule.tau_stop) {
      result.stop_reason = StopReason::kSentinel;
      break;
    }

    const std::vector<int> ids = codec.greedy_decode(
        ad::Tensor::row(std::vector<double>(next)),
        codec.config().max_sentence_tokens);
    result.sentences.push_back(text::decode_tokens(ids, vocab));
    if (result.sentences.size() >= rule.t_max) {
      result.stop_reason = StopReason::kTMax;
      break;
    }
    next = predictor.feed(next);
  }
  return result;
}

}  // namespace sonarllm::infer

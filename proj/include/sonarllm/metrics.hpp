// SPDX-License-Identifier: Apache-2.0
//
// Self-contained NLG scoring: BLEU with add-1 smoothing for n >= 2, LCS-based
// F1 (ROUGE-L), and an exact-match METEOR variant, plus the next-sentence
// evaluation harness that drives them.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sonarllm/text.hpp"

namespace sonarllm::metrics {

using Tokens = std::vector<std::string>;

// Geometric mean of modified n-gram precisions (n = 1..max_n) with brevity
// penalty. Precisions for n >= 2 are smoothed add-1 in numerator and
// denominator. Empty candidate scores 0.
double bleu(const Tokens& candidate, const Tokens& reference, int max_n = 4);

// F1 over the longest common subsequence (beta = 1).
double rouge_l(const Tokens& candidate, const Tokens& reference);

// Exact-match unigram variant of METEOR: greedy left-to-right alignment,
// each reference token used at most once, F_mean = 10PR/(R+9P), fragmentation
// penalty 0.5*(chunks/matches)^3. No stemming or synonym resources, hence
// the distinct name.
double meteor_lite(const Tokens& candidate, const Tokens& reference);

std::size_t lcs_length(const Tokens& a, const Tokens& b);

struct MetricRow {
  std::size_t doc_index = 0;
  double bleu = 0.0;
  double rouge_l = 0.0;
  double meteor = 0.0;
};

struct MetricReport {
  std::vector<MetricRow> rows;
  double mean_bleu = 0.0;
  double mean_rouge_l = 0.0;
  double mean_meteor = 0.0;
  std::size_t scored = 0;
  std::size_t skipped = 0;  // documents too short for the prefix mode

  std::string to_csv() const;  // per-example rows plus a summary row
};

enum class PrefixMode { kShort, kLong };

// Produces one sentence of text from a prefix of sentences.
using NextSentenceFn = std::function<std::string(
    const std::vector<std::string>& prefix_sentences)>;

// For each document: short mode feeds the first two content sentences and scores
// the generated sentence against the third; long mode feeds the first
// floor(M/2) content sentences and scores against the following one.
// Documents too short for the mode are skipped and counted.
MetricReport next_sentence_harness(const NextSentenceFn& generate_next,
                                   const std::vector<text::Document>& corpus,
                                   PrefixMode mode);

}  // namespace sonarllm::metrics

// SPDX-License-Identifier: Apache-2.0

#include "sonarllm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace sonarllm::metrics {

namespace {

std::map<std::vector<std::string>, std::size_t> ngram_counts(const Tokens& t,
                                                             std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> counts;
  if (t.size() < n) return counts;
  for (std::size_t i = 0; i + n <= t.size(); ++i)
    ++counts[std::vector<std::string>(t.begin() + i, t.begin() + i + n)];
  return counts;
}

}  // namespace

double bleu(const Tokens& candidate, const Tokens& reference, int max_n) {
  if (candidate.empty()) return 0.0;
  double log_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    const auto cand = ngram_counts(candidate, static_cast<std::size_t>(n));
    const auto ref = ngram_counts(reference, static_cast<std::size_t>(n));
    double clipped = 0.0, total = 0.0;
    for (const auto& [gram, count] : cand) {
      total += static_cast<double>(count);
      auto it = ref.find(gram);
      if (it != ref.end())
        clipped += static_cast<double>(std::min(count, it->second));
    }
    double p;
    if (n == 1) {
      p = total > 0.0 ? clipped / total : 0.0;
      if (p == 0.0) return 0.0;
    } else {
      p = (clipped + 1.0) / (total + 1.0);
    }
    log_sum += std::log(p);
  }
  double score = std::exp(log_sum / max_n);
  if (candidate.size() < reference.size()) {
    score *= std::exp(1.0 - static_cast<double>(reference.size()) /
                                static_cast<double>(candidate.size()));
  }
  return score;
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1
                                    : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const Tokens& candidate, const Tokens& reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  const double lcs = static_cast<double>(lcs_length(candidate, reference));
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(candidate.size());
  const double r = lcs / static_cast<double>(reference.size());
  return 2.0 * p * r / (p + r);
}

double meteor_lite(const Tokens& candidate, const Tokens& reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  // Greedy alignment: each candidate token takes the leftmost unused
  // occurrence of itself in the reference.
  std::vector<bool> used(reference.size(), false);
  std::vector<long> aligned(candidate.size(), -1);
  std::size_t matches = 0;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    for (std::size_t j = 0; j < reference.size(); ++j) {
      if (!used[j] && reference[j] == candidate[i]) {
        used[j] = true;
        aligned[i] = static_cast<long>(j);
        ++matches;
        break;
      }
    }
  }
  if (matches == 0) return 0.0;
  // Chunks: maximal runs adjacent in both sequences.
  std::size_t chunks = 0;
  long prev_ref = -2;
  bool in_chunk = false;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    if (aligned[i] < 0) {
      in_chunk = false;
      prev_ref = -2;
      continue;
    }
    if (!in_chunk || aligned[i] != prev_ref + 1) ++chunks;
    in_chunk = true;
    prev_ref = aligned[i];
  }
  const double m = static_cast<double>(matches);
  const double p = m / static_cast<double>(candidate.size());
  const double r = m / static_cast<double>(reference.size());
  const double f_mean = 10.0 * p * r / (r + 9.0 * p);
  const double frag = static_cast<double>(chunks) / m;
  const double penalty = 0.5 * frag * frag * frag;
  return f_mean * (1.0 - penalty);
}

std::string MetricReport::to_csv() const {
  std::ostringstream os;
  os << "doc,bleu,rouge_l,meteor\n";
  char buf[128];
  for (const MetricRow& row : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", row.doc_index,
                  row.bleu, row.rouge_l, row.meteor);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "mean,%.17g,%.17g,%.17g\n", mean_bleu,
                mean_rouge_l, mean_meteor);
  os << buf;
  return os.str();
}

MetricReport next_sentence_harness(const NextSentenceFn& generate_next,
                                   const std::vector<text::Document>& corpus,
                                   PrefixMode mode) {
  MetricReport report;
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    const auto& sentences = corpus[d].sentences;
    const std::size_t content = corpus[d].content_sentence_count();
    std::size_t prefix_len;
    if (mode == PrefixMode::kShort) {
      prefix_len = 2;
    } else {
      prefix_len = content / 2;
    }
    if (prefix_len == 0 || prefix_len + 1 > content) {
      ++report.skipped;
      continue;
    }
    std::vector<std::string> prefix;
    for (std::size_t i = 0; i < prefix_len; ++i)
      prefix.push_back(sentences[i].text);
    const std::string generated = generate_next(prefix);
    const Tokens cand = text::tokenize(generated);
    const Tokens ref = text::tokenize(sentences[prefix_len].text);

    MetricRow row;
    row.doc_index = d;
    row.bleu = bleu(cand, ref);
    row.rouge_l = rouge_l(cand, ref);
    row.meteor = meteor_lite(cand, ref);
    report.rows.push_back(row);
    report.mean_bleu += row.bleu;
    report.mean_rouge_l += row.rouge_l;
    report.mean_meteor += row.meteor;
  }
  report.scored = report.rows.size();
  if (report.scored > 0) {
    report.mean_bleu /= static_cast<double>(report.scored);
    report.mean_rouge_l /= static_cast<double>(report.scored);
    report.mean_meteor /= static_cast<double>(report.scored);
  }
  return report;
}

}  // namespace sonarllm::metrics

// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "sonarllm/metrics.hpp"
#include "sonarllm/rng.hpp"
#include "sonarllm/text.hpp"

using namespace sonarllm;
using namespace sonarllm::metrics;

namespace {

Tokens toks(std::initializer_list<const char*> words) {
  Tokens out;
  for (const char* w : words) out.emplace_back(w);
  return out;
}

// Independent LCS: plain recursion with memoization, no DP table sharing
// with the implementation under test.
std::size_t lcs_recursive(const Tokens& a, const Tokens& b, std::size_t i,
                          std::size_t j,
                          std::map<std::pair<std::size_t, std::size_t>,
                                   std::size_t>& memo) {
  if (i == a.size() || j == b.size()) return 0;
  auto key = std::make_pair(i, j);
  auto it = memo.find(key);
  if (it != memo.end()) return it->second;
  std::size_t best;
  if (a[i] == b[j]) {
    best = 1 + lcs_recursive(a, b, i + 1, j + 1, memo);
  } else {
    best = std::max(lcs_recursive(a, b, i + 1, j, memo),
                    lcs_recursive(a, b, i, j + 1, memo));
  }
  memo[key] = best;
  return best;
}

std::size_t lcs_oracle(const Tokens& a, const Tokens& b) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
  return lcs_recursive(a, b, 0, 0, memo);
}

}  // namespace

TEST_CASE("bleu identity, disjoint, and empty cases") {
  Tokens s = toks({"the", "cat", "sat", "down"});
  CHECK(bleu(s, s) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(bleu(toks({"a", "b"}), toks({"c", "d"})) == 0.0);
  CHECK(bleu({}, s) == 0.0);
}

TEST_CASE("bleu matches the independent counting script") {
  // Frozen from a direct n-gram enumeration under the declared smoothing
  // (add-1 for n >= 2) and brevity penalty.
  CHECK(bleu(toks({"the", "cat", "sat"}), toks({"the", "cat", "sat", "down"})) ==
        doctest::Approx(0.7165313105737893).epsilon(1e-12));
  CHECK(bleu(toks({"the", "small", "cat", "sat", "on", "the", "mat"}),
             toks({"the", "cat", "sat", "quietly", "on", "a", "mat"})) ==
        doctest::Approx(0.287190894500909).epsilon(1e-12));
}

TEST_CASE("rouge_l identity and hand cases") {
  Tokens s = toks({"x", "y", "z"});
  CHECK(rouge_l(s, s) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rouge_l({}, s) == 0.0);
  CHECK(rouge_l(s, {}) == 0.0);

  // LCS("abc", "acb") = 2 -> P = R = 2/3 -> F = 2/3.
  CHECK(rouge_l(toks({"a", "b", "c"}), toks({"a", "c", "b"})) ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("rouge_l is symmetric for equal lengths") {
  Tokens a = toks({"a", "b", "c", "d"});
  Tokens b = toks({"b", "a", "d", "c"});
  CHECK(rouge_l(a, b) == doctest::Approx(rouge_l(b, a)).epsilon(1e-15));
}

TEST_CASE("lcs matches a recursive memoized oracle on short sequences") {
  Rng rng(77);
  const std::vector<std::string> alphabet = {"a", "b", "c", "d"};
  for (int trial = 0; trial < 300; ++trial) {
    Tokens a, b;
    const std::size_t la = rng.index(13), lb = rng.index(13);
    for (std::size_t i = 0; i < la; ++i) a.push_back(alphabet[rng.index(4)]);
    for (std::size_t i = 0; i < lb; ++i) b.push_back(alphabet[rng.index(4)]);
    CHECK(lcs_length(a, b) == lcs_oracle(a, b));
  }
}

TEST_CASE("meteor_lite identity closed form and disjoint case") {
  Tokens s = toks({"one", "two", "three", "four", "five"});
  const double m = 5.0;
  CHECK(meteor_lite(s, s) ==
        doctest::Approx(1.0 - 0.5 / (m * m * m)).epsilon(1e-12));
  CHECK(meteor_lite(toks({"a"}), toks({"b"})) == 0.0);
  CHECK(meteor_lite({}, s) == 0.0);
}

TEST_CASE("meteor_lite hand-walked alignment") {
  // cand "a b c d" vs ref "a c b d": 4 matches, every aligned reference
  // index breaks adjacency -> 4 chunks, P = R = 1, F = 1, penalty = 0.5.
  CHECK(meteor_lite(toks({"a", "b", "c", "d"}), toks({"a", "c", "b", "d"})) ==
        doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("all metrics stay within [0, 1]") {
  Rng rng(31);
  const std::vector<std::string> alphabet = {"u", "v", "w", "x", "y"};
  for (int trial = 0; trial < 200; ++trial) {
    Tokens a, b;
    const std::size_t la = 1 + rng.index(10), lb = 1 + rng.index(10);
    for (std::size_t i = 0; i < la; ++i) a.push_back(alphabet[rng.index(5)]);
    for (std::size_t i = 0; i < lb; ++i) b.push_back(alphabet[rng.index(5)]);
    for (double v : {bleu(a, b), rouge_l(a, b), meteor_lite(a, b)}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("harness with an echo stub scores every metric's maximum") {
  auto corpus = text::generate_synthetic_corpus(4, 30);
  // Echo the true next sentence. The harness visits documents in order and
  // skips the too-short ones, so a call counter over the scorable documents
  // identifies the document under evaluation (prefixes alone collide).
  for (PrefixMode mode : {PrefixMode::kShort, PrefixMode::kLong}) {
    std::vector<std::size_t> scorable;
    for (std::size_t d = 0; d < corpus.size(); ++d) {
      const std::size_t content = corpus[d].content_sentence_count();
      const std::size_t prefix_len =
          mode == PrefixMode::kShort ? 2 : content / 2;
      if (prefix_len >= 1 && prefix_len + 1 <= content) scorable.push_back(d);
    }
    std::size_t call = 0;
    auto echo = [&](const std::vector<std::string>& prefix) {
      const auto& doc = corpus[scorable[call++]];
      return doc.sentences[prefix.size()].text;
    };
    MetricReport report = next_sentence_harness(echo, corpus, mode);
    CHECK(report.scored + report.skipped == corpus.size());
    CHECK(report.scored > 0);
    CHECK(report.mean_bleu == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(report.mean_rouge_l == doctest::Approx(1.0).epsilon(1e-12));
    // Identity meteor is 1 - 0.5/m^3 per example; bounded by the worst
    // sentence length (>= 3 tokens incl. terminator).
    CHECK(report.mean_meteor > 0.98);
    CHECK(report.mean_meteor <= 1.0);
  }
}

TEST_CASE("harness with an unrelated stub scores near zero") {
  auto corpus = text::generate_synthetic_corpus(8, 20);
  auto stub = [](const std::vector<std::string>&) {
    return std::string("quartz engines hum beneath distant glaciers");
  };
  MetricReport report =
      next_sentence_harness(stub, corpus, PrefixMode::kShort);
  CHECK(report.scored > 0);
  CHECK(report.mean_bleu < 0.05);
  CHECK(report.mean_rouge_l < 0.05);
}

TEST_CASE("harness skips and counts documents that are too short") {
  auto corpus = text::generate_synthetic_corpus(4, 10);
  // Keep only documents with exactly three content sentences, then ask for
  // the long prefix (needs prefix 1, target 2 -> fine) and short (needs 3).
  std::vector<text::Document> tiny;
  text::Document two_sentence;
  two_sentence.sentences.push_back({"A boat .", {}});
  two_sentence.sentences.push_back({"It floats .", {}});
  two_sentence.sentences.push_back({text::kDefaultSentinel, {}});
  tiny.push_back(two_sentence);
  auto stub = [](const std::vector<std::string>&) { return std::string("x"); };
  MetricReport report = next_sentence_harness(stub, tiny, PrefixMode::kShort);
  CHECK(report.scored == 0);
  CHECK(report.skipped == 1);

  MetricReport long_report = next_sentence_harness(stub, tiny, PrefixMode::kLong);
  CHECK(long_report.scored == 1);

  MetricReport csv_probe = next_sentence_harness(stub, corpus, PrefixMode::kShort);
  const std::string csv = csv_probe.to_csv();
  CHECK(csv.find("doc,bleu,rouge_l,meteor\n") == 0);
  CHECK(csv.find("mean,") != std::string::npos);
}

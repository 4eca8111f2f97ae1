// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sonarllm/codec.hpp"
#include "sonarllm/tensor.hpp"
#include "sonarllm/text.hpp"

using namespace sonarllm;
using namespace sonarllm::codec;
using ad::Tensor;

namespace {

struct Fixture {
  std::vector<text::Document> docs;
  text::Vocabulary vocab;
  CodecConfig cfg;

  explicit Fixture(std::uint64_t seed = 3, std::size_t n_docs = 6) {
    docs = text::generate_synthetic_corpus(seed, n_docs);
    vocab = text::Vocabulary::build(text::all_sentence_texts(docs), 200);
    for (auto& d : docs) text::tokenize_document(d, vocab);
    cfg.d = 16;
    cfg.enc_layers = 1;
    cfg.dec_layers = 1;
    cfg.n_heads = 2;
    cfg.ffn_mult = 2;
    cfg.vocab_size = vocab.size();
  }
};

double cosine(std::span<const double> u, std::span<const double> v) {
  double dot = 0, nu = 0, nv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  return dot / std::sqrt(nu * nv);
}

}  // namespace

TEST_CASE("encode is deterministic and distinguishes sentences") {
  Fixture fx;
  SentenceCodec codec(fx.cfg, 42);
  const auto& s0 = fx.docs[0].sentences[0].tokens;
  const auto& s1 = fx.docs[0].sentences[1].tokens;

  Tensor a = codec.encode(s0);
  Tensor b = codec.encode(s0);
  REQUIRE(a.size() == fx.cfg.d);
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(a.values()[i] == b.values()[i]);

  Tensor c = codec.encode(s1);
  CHECK(cosine(a.values(), c.values()) < 0.999);
}

TEST_CASE("encode rejects unframed input and truncates over-length input") {
  Fixture fx;
  SentenceCodec codec(fx.cfg, 42);
  CHECK_THROWS_AS(codec.encode({text::Vocabulary::kBos}), ad::ContractError);

  std::vector<int> longest(fx.cfg.max_sentence_tokens + 10,
                           fx.vocab.id("the"));
  longest.front() = text::Vocabulary::kBos;
  longest.back() = text::Vocabulary::kEos;
  Tensor e = codec.encode(longest);  // logs a truncation note
  CHECK(e.size() == fx.cfg.d);

  std::vector<int> trimmed(longest.begin(),
                           longest.begin() + fx.cfg.max_sentence_tokens - 1);
  trimmed.push_back(text::Vocabulary::kEos);
  Tensor t = codec.encode(trimmed);
  for (std::size_t i = 0; i < e.size(); ++i)
    CHECK(e.values()[i] == t.values()[i]);
}

TEST_CASE("decode_logits has the contract shape") {
  Fixture fx;
  SentenceCodec codec(fx.cfg, 7);
  const auto& s = fx.docs[0].sentences[0].tokens;
  Tensor logits = codec.decode_logits(codec.encode(s), s);
  CHECK(logits.rows() == s.size() - 1);
  CHECK(logits.cols() == fx.cfg.vocab_size);
}

TEST_CASE("decoder logits are causal in the teacher tokens") {
  Fixture fx;
  SentenceCodec codec(fx.cfg, 7);
  const auto& s = fx.docs[1].sentences[0].tokens;
  REQUIRE(s.size() >= 5);
  Tensor emb = codec.encode(s);
  Tensor base = codec.decode_logits(emb, s);

  // Permute teacher tokens beyond position i; logits at <= i must not move.
  const std::size_t i = 2;
  std::vector<int> permuted = s;
  std::swap(permuted[i + 1], permuted[i + 2]);
  Tensor perturbed = codec.decode_logits(emb, permuted);
  for (std::size_t r = 0; r <= i; ++r)
    for (std::size_t c = 0; c < fx.cfg.vocab_size; ++c)
      CHECK(base.values()[r * fx.cfg.vocab_size + c] ==
            perturbed.values()[r * fx.cfg.vocab_size + c]);
}

TEST_CASE("gradient reaches the embedding through frozen decoder weights") {
  Fixture fx;
  SentenceCodec codec(fx.cfg, 9);
  codec.freeze();
  const auto& s = fx.docs[0].sentences[0].tokens;
  const std::vector<int> targets(s.begin() + 1, s.end());

  Tensor emb = codec.encode(s);
  Tensor probe = Tensor::from_values(
      {fx.cfg.d}, std::vector<double>(emb.values().begin(), emb.values().end()));
  double err = ad::grad_check(
      [&](const Tensor& e) {
        return ad::cross_entropy_logits(codec.decode_logits(e, s), targets);
      },
      probe, 1e-5);
  CHECK(err < 1e-4);

  // Frozen weights receive no gradients even when on the path.
  ad::TapeScope tape;
  probe.zero_grad();
  Tensor loss =
      ad::cross_entropy_logits(codec.decode_logits(probe, s), targets);
  tape.backward(loss);
  for (const auto& [name, t] : codec.params().items()) {
    CHECK(!t.has_grad());
  }
}

TEST_CASE("greedy decode terminates and breaks ties toward the lowest id") {
  Fixture fx;
  SentenceCodec codec(fx.cfg, 11);
  const auto& s = fx.docs[2].sentences[0].tokens;
  auto ids = codec.greedy_decode(codec.encode(s), 12);
  CHECK(ids.size() <= 12);
  CHECK(ids.front() == text::Vocabulary::kBos);

  // Tie rule is a property of argmax over equal scores: feed a zero
  // embedding into an untrained codec twice; the decision must be stable
  // and identical across calls (strict inequality keeps the first/lowest).
  Tensor zero = Tensor::zeros({fx.cfg.d});
  auto a = codec.greedy_decode(zero, 8);
  auto b = codec.greedy_decode(zero, 8);
  CHECK(a == b);
}

TEST_CASE("cached greedy decode equals a full-recompute argmax walk") {
  Fixture fx;
  SentenceCodec codec(fx.cfg, 17);
  for (std::size_t doc = 0; doc < 3; ++doc) {
    Tensor emb = codec.encode(fx.docs[doc].sentences[0].tokens);
    const auto fast = codec.greedy_decode(emb, 16);

    // Reference: recompute the full teacher-forced logits at every step and
    // take the last row's argmax.
    std::vector<int> slow = {text::Vocabulary::kBos};
    while (slow.size() < 16) {
      std::vector<int> teacher = slow;
      teacher.push_back(text::Vocabulary::kEos);  // frame for decode_logits
      Tensor logits = codec.decode_logits(emb, teacher);
      const std::size_t base = (logits.rows() - 1) * fx.cfg.vocab_size;
      int best = 0;
      double best_score = logits.values()[base];
      for (std::size_t j = 1; j < fx.cfg.vocab_size; ++j) {
        if (logits.values()[base + j] > best_score) {
          best_score = logits.values()[base + j];
          best = static_cast<int>(j);
        }
      }
      slow.push_back(best);
      if (best == text::Vocabulary::kEos) break;
    }
    CHECK(fast == slow);
  }
}

TEST_CASE("freeze survives downstream gradient traffic bit-for-bit") {
  Fixture fx;
  SentenceCodec codec(fx.cfg, 13);
  codec.freeze();
  const std::uint64_t digest = codec.weight_digest();

  // Push gradients through the decoder from a trainable embedding and
  // "update" that embedding; codec weights must not drift.
  const auto& s = fx.docs[0].sentences[1].tokens;
  Tensor encoded = codec.encode(s);
  Tensor emb = Tensor::from_values(
      {fx.cfg.d},
      std::vector<double>(encoded.values().begin(), encoded.values().end()),
      true);
  for (int step = 0; step < 3; ++step) {
    ad::TapeScope tape;
    emb.zero_grad();
    const std::vector<int> targets(s.begin() + 1, s.end());
    Tensor loss =
        ad::cross_entropy_logits(codec.decode_logits(emb, s), targets);
    tape.backward(loss);
    auto values = emb.values_mut();
    for (std::size_t i = 0; i < values.size(); ++i)
      values[i] -= 0.05 * emb.grad()[i];
  }
  CHECK(codec.weight_digest() == digest);
}

TEST_CASE("single-sentence corpus is memorized within 200 steps") {
  Fixture fx(5, 1);
  fx.docs[0].sentences.resize(1);  // one content sentence, no sentinel
  CodecTrainConfig tc;
  tc.lr = 1e-2;
  tc.epochs = 200;
  tc.batch_size = 1;
  tc.warmup_steps = 5;
  tc.seed = 1;
  tc.target_token_accuracy = 2.0;  // never stop early; run all 200 steps
  PretrainReport report;
  SentenceCodec codec = pretrain_codec(fx.docs, fx.cfg, tc, &report);
  CHECK(report.steps == 200);
  CHECK(report.final_loss < 0.01);
  CHECK(codec.frozen());
}

TEST_CASE("short pretraining run reaches high reconstruction accuracy") {
  Fixture fx(3, 8);
  fx.cfg.d = 32;  // default-capacity codec for the convergence check
  fx.cfg.enc_layers = 2;
  fx.cfg.dec_layers = 2;
  fx.cfg.n_heads = 4;
  fx.cfg.ffn_mult = 4;
  CodecTrainConfig tc;
  tc.lr = 3e-3;
  tc.epochs = 80;
  tc.batch_size = 16;
  tc.warmup_steps = 30;
  tc.seed = 2;
  PretrainReport report;
  SentenceCodec codec = pretrain_codec(fx.docs, fx.cfg, tc, &report);
  CHECK(report.token_accuracy >= 0.99);
  CHECK(report.final_loss < report.initial_loss * 0.1);

  const auto sentences = corpus_sentences(fx.docs);
  CHECK(reconstruction_token_accuracy(codec, sentences) >= 0.99);
  CHECK(reconstruction_ce(codec, sentences) < 0.5);
}

// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "sonarllm/text.hpp"

using namespace sonarllm::text;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += sep;
    out += p;
  }
  return out;
}

}  // namespace

TEST_CASE("segmentation basics") {
  CHECK(segment_sentences("").empty());
  CHECK(segment_sentences("   \n ").empty());

  auto two = segment_sentences("Hi. Bye!");
  REQUIRE(two.size() == 2);
  CHECK(two[0] == "Hi.");
  CHECK(two[1] == "Bye!");
}

TEST_CASE("segmentation respects the abbreviation table") {
  auto s = segment_sentences("Dr. Smith ran. He fell.");
  REQUIRE(s.size() == 2);
  CHECK(s[0] == "Dr. Smith ran.");
  CHECK(s[1] == "He fell.");

  auto t = segment_sentences("We packed maps, rope, etc. Nobody checked.");
  REQUIRE(t.size() == 1);  // "etc." never ends a sentence under the rule table

  auto u = segment_sentences("Ask Mrs. Lee. Mr. Ito knows too, e.g. the route.");
  REQUIRE(u.size() == 2);
  CHECK(u[0] == "Ask Mrs. Lee.");
}

TEST_CASE("segmentation outputs end with a terminator or are the tail") {
  const std::string text = "One idea. Another one! A question? And a fragment";
  auto s = segment_sentences(text);
  REQUIRE(s.size() == 4);
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    const char last = s[i].back();
    CHECK((last == '.' || last == '!' || last == '?'));
  }
  CHECK(s.back() == "And a fragment");
}

TEST_CASE("segmentation is lossless on the paragraph fixture") {
  const std::string fixture =
      read_file(std::string(SONARLLM_TEST_DATA_DIR) + "/paragraphs.txt");
  std::vector<std::string> paragraphs;
  std::string para, line;
  std::istringstream in(fixture);
  while (std::getline(in, line)) {
    if (line.empty()) {
      if (!para.empty()) paragraphs.push_back(para);
      para.clear();
    } else {
      if (!para.empty()) para += ' ';
      para += line;
    }
  }
  if (!para.empty()) paragraphs.push_back(para);
  REQUIRE(paragraphs.size() == 50);

  for (const std::string& p : paragraphs) {
    auto sentences = segment_sentences(p);
    CHECK(!sentences.empty());
    for (const auto& s : sentences) CHECK(!s.empty());
    CHECK(normalize_text(join(sentences, " ")) == normalize_text(p));
  }
}

TEST_CASE("segmentation is lossless on the synthetic corpus") {
  auto docs = generate_synthetic_corpus(12, 40);
  for (const auto& doc : docs) {
    std::string text;
    for (std::size_t i = 0; i < doc.content_sentence_count(); ++i) {
      if (!text.empty()) text += ' ';
      text += doc.sentences[i].text;
    }
    auto back = segment_sentences(text);
    CHECK(back.size() == doc.content_sentence_count());
    CHECK(normalize_text(join(back, " ")) == normalize_text(text));
  }
}

TEST_CASE("tokenize detaches punctuation") {
  auto toks = tokenize("Hello, world!");
  REQUIRE(toks.size() == 4);
  CHECK(toks[0] == "Hello");
  CHECK(toks[1] == ",");
  CHECK(toks[2] == "world");
  CHECK(toks[3] == "!");

  auto apos = tokenize("don't stop");
  REQUIRE(apos.size() == 2);
  CHECK(apos[0] == "don't");
}

TEST_CASE("vocabulary keeps frequency order with lexicographic ties") {
  Vocabulary v = Vocabulary::build({"a a b"}, 10);
  CHECK(v.size() == 6);
  CHECK(v.id("a") == 4);
  CHECK(v.id("b") == 5);
  CHECK(v.id("a") < v.id("b"));

  Vocabulary ties = Vocabulary::build({"z q z q m"}, 10);
  CHECK(ties.id("q") < ties.id("z"));  // equal counts, lexicographic
  CHECK(ties.id("z") < ties.id("m"));
}

TEST_CASE("vocabulary truncates to max_size including reserved ids") {
  std::string sentence;
  for (int i = 0; i < 100; ++i) sentence += "w" + std::to_string(i) + " ";
  Vocabulary v = Vocabulary::build({sentence}, 20);
  CHECK(v.size() == 20);
  CHECK(v.token(0) == "<pad>");
  CHECK(v.token(3) == "<unk>");
  CHECK_THROWS_AS((void)v.build({}, 4), std::invalid_argument);
}

TEST_CASE("vocabulary build is deterministic") {
  auto docs = generate_synthetic_corpus(7, 50);
  Vocabulary a = Vocabulary::build(all_sentence_texts(docs), 200);
  Vocabulary b = Vocabulary::build(all_sentence_texts(generate_synthetic_corpus(7, 50)), 200);
  CHECK(a.tokens() == b.tokens());
}

TEST_CASE("encode applies BOS/EOS framing and UNK fallback") {
  Vocabulary v = Vocabulary::build({"hi ."}, 10);
  auto ids = encode_tokens("hi .", v);
  REQUIRE(ids.size() == 4);
  CHECK(ids[0] == Vocabulary::kBos);
  CHECK(ids[1] == v.id("hi"));
  CHECK(ids[2] == v.id("."));
  CHECK(ids[3] == Vocabulary::kEos);

  auto unk = encode_tokens("stranger .", v);
  CHECK(unk[1] == Vocabulary::kUnk);

  CHECK_THROWS_AS(decode_tokens({0, 1, 99}, v), std::out_of_range);
}

TEST_CASE("round-trip over generated sentences") {
  auto docs = generate_synthetic_corpus(21, 40);
  Vocabulary v = Vocabulary::build(all_sentence_texts(docs), 300);
  std::size_t checked = 0;
  for (const auto& doc : docs) {
    for (const auto& span : doc.sentences) {
      CHECK(decode_tokens(encode_tokens(span.text, v), v) ==
            normalize_text(span.text));
      ++checked;
    }
  }
  CHECK(checked >= 200);
}

TEST_CASE("synthetic corpus is deterministic and sentinel-terminated") {
  auto a = generate_synthetic_corpus(1, 2);
  auto b = generate_synthetic_corpus(1, 2);
  REQUIRE(a.size() == 2);
  REQUIRE(b.size() == 2);
  for (std::size_t d = 0; d < 2; ++d) {
    REQUIRE(a[d].sentences.size() == b[d].sentences.size());
    for (std::size_t i = 0; i < a[d].sentences.size(); ++i)
      CHECK(a[d].sentences[i].text == b[d].sentences[i].text);
    CHECK(a[d].sentences.back().text == kDefaultSentinel);
  }
}

TEST_CASE("synthetic corpus stays within the sentence and vocab budgets") {
  auto docs = generate_synthetic_corpus(3, 500);
  std::set<std::string> surface;
  for (const auto& doc : docs) {
    const std::size_t content = doc.content_sentence_count();
    CHECK(content >= 3);
    CHECK(content <= 10);
    for (std::size_t i = 0; i < content; ++i)
      for (const auto& tok : tokenize(doc.sentences[i].text))
        surface.insert(tok);
  }
  CHECK(surface.size() <= synthetic_surface_token_bound());
  CHECK(synthetic_surface_token_bound() <= 120);

  Vocabulary v = Vocabulary::build(all_sentence_texts(docs), 1000);
  CHECK(v.size() <= 124);
}

TEST_CASE("corpus files round-trip through write and load") {
  auto docs = generate_synthetic_corpus(9, 12);
  const std::string path = "corpus_roundtrip.txt";
  write_corpus(docs, path);
  auto loaded = load_corpus(path);
  REQUIRE(loaded.size() == docs.size());
  for (std::size_t d = 0; d < docs.size(); ++d) {
    REQUIRE(loaded[d].sentences.size() == docs[d].sentences.size());
    for (std::size_t i = 0; i < docs[d].sentences.size(); ++i)
      CHECK(loaded[d].sentences[i].text == docs[d].sentences[i].text);
  }
  std::remove(path.c_str());
}

TEST_CASE("documents tokenize against a vocabulary") {
  auto docs = generate_synthetic_corpus(5, 3);
  Vocabulary v = Vocabulary::build(all_sentence_texts(docs), 300);
  tokenize_document(docs[0], v);
  for (const auto& span : docs[0].sentences) {
    CHECK(span.tokens.size() >= 2);
    CHECK(span.tokens.front() == Vocabulary::kBos);
    CHECK(span.tokens.back() == Vocabulary::kEos);
  }
}

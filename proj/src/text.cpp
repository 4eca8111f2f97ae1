// SPDX-License-Identifier: Apache-2.0

#include "sonarllm/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "sonarllm/rng.hpp"

namespace sonarllm::text {

namespace {

bool is_terminator(char c) { return c == '.' || c == '!' || c == '?'; }

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

bool is_punct_token_char(char c) {
  static const std::string punct = ".,!?;:\"'()[]{}-";
  return punct.find(c) != std::string::npos;
}

const std::set<std::string>& abbreviations() {
  static const std::set<std::string> abbrevs = {
      "Mr.", "Mrs.", "Dr.", "St.", "vs.", "etc.", "e.g.", "i.e."};
  return abbrevs;
}

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return s.substr(b, e - b);
}

}  // namespace

std::vector<std::string> segment_sentences(const std::string& textblock) {
  std::vector<std::string> out;
  std::size_t start = 0;
  const std::size_t n = textblock.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_terminator(textblock[i])) continue;
    if (textblock[i] == '.') {
      // Word ending at this period, scanned back to the previous space.
      std::size_t w = i;
      while (w > start && !is_space(textblock[w - 1])) --w;
      if (abbreviations().count(textblock.substr(w, i - w + 1))) continue;
    }
    std::size_t j = i + 1;
    if (j < n && !is_space(textblock[j])) continue;
    while (j < n && is_space(textblock[j])) ++j;
    if (j < n && !std::isupper(static_cast<unsigned char>(textblock[j])))
      continue;
    std::string sentence = trim(textblock.substr(start, i + 1 - start));
    if (!sentence.empty()) out.push_back(std::move(sentence));
    start = j;
    i = j ? j - 1 : 0;
  }
  if (start < n) {
    std::string tail = trim(textblock.substr(start));
    if (!tail.empty()) out.push_back(std::move(tail));
  }
  return out;
}

std::vector<std::string> tokenize(const std::string& sentence) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  const std::size_t n = sentence.size();
  while (i < n) {
    while (i < n && is_space(sentence[i])) ++i;
    if (i >= n) break;
    std::size_t j = i;
    while (j < n && !is_space(sentence[j])) ++j;
    std::size_t b = i, e = j;  // [b, e) is one whitespace-delimited chunk
    // Leading punctuation, one token per character.
    while (b < e && is_punct_token_char(sentence[b])) {
      tokens.push_back(sentence.substr(b, 1));
      ++b;
    }
    // Trailing punctuation peels off after the core.
    std::size_t t = e;
    while (t > b && is_punct_token_char(sentence[t - 1])) --t;
    if (t > b) tokens.push_back(sentence.substr(b, t - b));
    for (std::size_t p = t; p < e; ++p) tokens.push_back(sentence.substr(p, 1));
    i = j;
  }
  return tokens;
}

std::string normalize_text(const std::string& sentence) {
  std::string out;
  for (const std::string& tok : tokenize(sentence)) {
    if (!out.empty()) out += ' ';
    out += tok;
  }
  return out;
}

// ---- Vocabulary -------------------------------------------------------------

Vocabulary::Vocabulary() {
  token_of_ = {"<pad>", "<bos>", "<eos>", "<unk>"};
  for (std::size_t i = 0; i < token_of_.size(); ++i)
    id_of_[token_of_[i]] = static_cast<int>(i);
}

Vocabulary Vocabulary::build(const std::vector<std::string>& sentences,
                             std::size_t max_size) {
  if (max_size < 5) {
    throw std::invalid_argument("Vocabulary::build: max_size must be >= 5");
  }
  std::map<std::string, std::size_t> counts;
  for (const std::string& s : sentences)
    for (const std::string& tok : tokenize(s)) ++counts[tok];

  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(),
                                                          counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary v;
  for (const auto& [tok, cnt] : ranked) {
    (void)cnt;
    if (v.token_of_.size() >= max_size) break;
    if (v.id_of_.count(tok)) continue;  // reserved surface collision
    v.id_of_[tok] = static_cast<int>(v.token_of_.size());
    v.token_of_.push_back(tok);
  }
  return v;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  Vocabulary v;
  if (tokens.size() < 4 || tokens[0] != "<pad>" || tokens[1] != "<bos>" ||
      tokens[2] != "<eos>" || tokens[3] != "<unk>") {
    throw std::invalid_argument(
        "Vocabulary::from_tokens: reserved ids 0..3 missing or reordered");
  }
  for (std::size_t i = 4; i < tokens.size(); ++i) {
    if (v.id_of_.count(tokens[i])) {
      throw std::invalid_argument("Vocabulary::from_tokens: duplicate token " +
                                  tokens[i]);
    }
    v.id_of_[tokens[i]] = static_cast<int>(i);
    v.token_of_.push_back(tokens[i]);
  }
  return v;
}

int Vocabulary::id(const std::string& token) const {
  auto it = id_of_.find(token);
  return it == id_of_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= token_of_.size()) {
    throw std::out_of_range("Vocabulary::token: id " + std::to_string(id) +
                            " out of range [0, " +
                            std::to_string(token_of_.size()) + ")");
  }
  return token_of_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(const std::string& token) const {
  return id_of_.count(token) != 0;
}

std::vector<int> encode_tokens(const std::string& sentence,
                               const Vocabulary& v) {
  std::vector<int> ids;
  ids.push_back(Vocabulary::kBos);
  for (const std::string& tok : tokenize(sentence)) ids.push_back(v.id(tok));
  ids.push_back(Vocabulary::kEos);
  return ids;
}

std::string decode_tokens(const std::vector<int>& ids, const Vocabulary& v) {
  std::string out;
  for (int id : ids) {
    const std::string& tok = v.token(id);  // validates range
    if (id == Vocabulary::kPad || id == Vocabulary::kBos ||
        id == Vocabulary::kEos)
      continue;
    if (!out.empty()) out += ' ';
    out += tok;
  }
  return out;
}

// ---- documents -------------------------------------------------------------

std::size_t Document::content_sentence_count() const {
  return sentences.empty() ? 0 : sentences.size() - 1;
}

Document make_document(const std::string& textblock,
                       const std::string& sentinel) {
  Document doc;
  for (std::string& s : segment_sentences(textblock))
    doc.sentences.push_back({std::move(s), {}});
  doc.sentences.push_back({sentinel, {}});
  return doc;
}

void tokenize_document(Document& doc, const Vocabulary& v) {
  for (SentenceSpan& span : doc.sentences)
    span.tokens = encode_tokens(span.text, v);
}

std::vector<std::string> all_sentence_texts(const std::vector<Document>& docs) {
  std::vector<std::string> out;
  for (const Document& d : docs)
    for (const SentenceSpan& s : d.sentences) out.push_back(s.text);
  return out;
}

// ---- synthetic corpus --------------------------------------------------------

namespace {

struct WordLists {
  std::vector<std::string> girls = {"Anna", "Clara", "Emma"};
  std::vector<std::string> boys = {"Ben", "David", "Felix"};
  std::vector<std::string> places = {"park", "garden", "forest", "market",
                                     "river"};
  std::vector<std::string> nouns = {"cat",  "dog",  "bird", "fox",  "ball",
                                    "kite", "book", "cake", "boat", "drum"};
  std::vector<std::string> adjectives = {"red",   "blue", "small",
                                         "big",   "shiny", "old"};
  std::vector<std::string> verbs = {"chased", "carried", "painted",
                                    "dropped", "followed", "washed"};
  std::vector<std::string> feelings = {"happy", "proud", "tired", "calm"};
};

const WordLists& words() {
  static const WordLists w;
  return w;
}

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[rng.index(v.size())];
}

}  // namespace

std::size_t synthetic_surface_token_bound() {
  const WordLists& w = words();
  // Fixed template words used below.
  static const std::vector<std::string> fixed = {
      "One", "day", "went", "to",  "the",  "She",  "He",   "saw", "a", "near",
      "The", "was", "very", "Then", "home", "and", "felt", ".",   "!"};
  return w.girls.size() + w.boys.size() + w.places.size() + w.nouns.size() +
         w.adjectives.size() + w.verbs.size() + w.feelings.size() +
         fixed.size();
}

std::vector<Document> generate_synthetic_corpus(std::uint64_t seed,
                                                std::size_t n_docs,
                                                const std::string& sentinel) {
  if (n_docs < 1) {
    throw std::invalid_argument("generate_synthetic_corpus: n_docs must be >= 1");
  }
  const WordLists& w = words();
  std::vector<Document> docs;
  docs.reserve(n_docs);
  Rng rng(seed);
  for (std::size_t d = 0; d < n_docs; ++d) {
    const bool girl = rng.index(2) == 0;
    const std::string& name = girl ? pick(w.girls, rng) : pick(w.boys, rng);
    const std::string pro = girl ? "She" : "He";
    const std::string& place = pick(w.places, rng);

    // 3..10 sentences: opener, noun episodes until the target is reached,
    // closer. The echo sentence repeats the episode's adjective and noun,
    // which makes the next sentence largely predictable from the previous
    // one.
    const std::size_t target = 3 + rng.index(8);
    std::vector<std::string> sentences;
    sentences.push_back("One day " + name + " went to the " + place + " .");
    while (sentences.size() + 1 < target) {
      const std::string& adj = pick(w.adjectives, rng);
      const std::string& noun = pick(w.nouns, rng);
      sentences.push_back(pro + " saw a " + adj + " " + noun + " near the " +
                          place + " .");
      if (sentences.size() + 1 < target)
        sentences.push_back("The " + noun + " was very " + adj + " .");
      if (sentences.size() + 1 < target && rng.index(2) == 0) {
        const std::string& verb = pick(w.verbs, rng);
        sentences.push_back(pro + " " + verb + " the " + noun + " .");
      }
    }
    sentences.push_back("Then " + name + " went home and felt " +
                        pick(w.feelings, rng) + " !");

    Document doc;
    for (std::string& s : sentences) doc.sentences.push_back({std::move(s), {}});
    doc.sentences.push_back({sentinel, {}});
    docs.push_back(std::move(doc));
  }
  return docs;
}

// ---- corpus files ------------------------------------------------------------

void write_corpus(const std::vector<Document>& docs, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_corpus: cannot open " + path);
  for (std::size_t d = 0; d < docs.size(); ++d) {
    if (d) out << "\n";  // blank line between documents
    std::string line;
    const auto& sents = docs[d].sentences;
    const std::size_t content = docs[d].content_sentence_count();
    for (std::size_t i = 0; i < content; ++i) {
      if (!line.empty()) line += ' ';
      line += sents[i].text;
    }
    out << line << "\n";
  }
  if (!out) throw std::runtime_error("write_corpus: write failed for " + path);
}

std::vector<Document> load_corpus(const std::string& path,
                                  const std::string& sentinel) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_corpus: cannot open " + path);
  std::vector<Document> docs;
  std::string line, block;
  auto flush = [&] {
    if (!trim(block).empty()) docs.push_back(make_document(block, sentinel));
    block.clear();
  };
  while (std::getline(in, line)) {
    if (trim(line).empty()) {
      flush();
    } else {
      if (!block.empty()) block += ' ';
      block += line;
    }
  }
  flush();
  return docs;
}

}  // namespace sonarllm::text

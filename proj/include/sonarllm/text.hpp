// SPDX-License-Identifier: Apache-2.0
//
// Sentence segmentation, word-level vocabulary, token codecs, corpus file
// I/O, and the deterministic synthetic story generator used by hermetic
// tests and end-to-end runs.

#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace sonarllm::text {

inline constexpr const char* kDefaultSentinel = "End of sequence.";

// Rule-based splitter: a sentence ends at . ! ? followed by whitespace and
// an uppercase letter (or end of input), except after a known abbreviation.
// Total and lossless up to whitespace normalization.
std::vector<std::string> segment_sentences(const std::string& textblock);

// Whitespace split with leading/trailing punctuation detached as separate
// tokens. join(tokenize(s), " ") is the canonical form used by round-trips.
std::vector<std::string> tokenize(const std::string& sentence);
std::string normalize_text(const std::string& sentence);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  Vocabulary();

  // Most-frequent tokens kept, ties broken lexicographically; the four
  // reserved ids always present. max_size must be >= 5.
  static Vocabulary build(const std::vector<std::string>& sentences,
                          std::size_t max_size);
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  int id(const std::string& token) const;        // kUnk when absent
  const std::string& token(int id) const;        // throws on out-of-range
  bool contains(const std::string& token) const;
  std::size_t size() const { return token_of_.size(); }
  const std::vector<std::string>& tokens() const { return token_of_; }

 private:
  std::vector<std::string> token_of_;
  std::unordered_map<std::string, int> id_of_;
};

// BOS-prefixed, EOS-suffixed encoding; unknown words map to UNK.
std::vector<int> encode_tokens(const std::string& sentence, const Vocabulary& v);
// Inverse: drops PAD/BOS/EOS, joins surfaces with single spaces.
std::string decode_tokens(const std::vector<int>& ids, const Vocabulary& v);

struct SentenceSpan {
  std::string text;
  std::vector<int> tokens;  // filled by tokenize_document
};

// Ordered sentences with the sentinel appended last.
struct Document {
  std::vector<SentenceSpan> sentences;

  std::size_t content_sentence_count() const;  // excludes the sentinel
};

Document make_document(const std::string& textblock, const std::string& sentinel);
void tokenize_document(Document& doc, const Vocabulary& v);
std::vector<std::string> all_sentence_texts(const std::vector<Document>& docs);

// Subject-verb-object template stories over a closed word list, with
// cross-sentence pronoun and noun carryover so that next-sentence
// prediction is learnable. Deterministic for a fixed seed.
std::vector<Document> generate_synthetic_corpus(std::uint64_t seed,
                                                std::size_t n_docs,
                                                const std::string& sentinel =
                                                    kDefaultSentinel);

// Upper bound on distinct surface tokens the generator can emit.
std::size_t synthetic_surface_token_bound();

// Plain-text corpus files: documents separated by exactly one blank line.
// The sentinel is a load-time construct and is never written to disk.
void write_corpus(const std::vector<Document>& docs, const std::string& path);
std::vector<Document> load_corpus(const std::string& path,
                                  const std::string& sentinel = kDefaultSentinel);

}  // namespace sonarllm::text

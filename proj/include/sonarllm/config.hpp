// SPDX-License-Identifier: Apache-2.0
//
// Key=value experiment configuration. One text blob fully determines a run
// together with the corpus bytes; the same text is embedded verbatim in
// checkpoints so they are self-describing.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "sonarllm/codec.hpp"
#include "sonarllm/concept_model.hpp"
#include "sonarllm/training.hpp"

namespace sonarllm::config {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Lines of "key = value"; '#' starts a comment; blank lines ignored.
// Later assignments win. Serialization is sorted by key.
class KvConfig {
 public:
  static KvConfig parse(const std::string& text);
  static KvConfig parse_file(const std::string& path);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;

  std::string serialize() const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

// Everything a run needs beside the corpus bytes.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string sentinel = text::kDefaultSentinel;
  std::size_t vocab_max_size = 512;
  train::Objective objective = train::Objective::kCeSonar;

  codec::CodecConfig codec;          // vocab_size filled at run time
  codec::CodecTrainConfig codec_train;
  model::ConceptModelConfig model;
  train::TrainConfig train;

  double tau_stop = 0.98;
  std::size_t t_max = 32;

  static ExperimentConfig from_kv(const KvConfig& kv);
  KvConfig to_kv() const;
};

}  // namespace sonarllm::config

// SPDX-License-Identifier: Apache-2.0
//
// Versioned binary checkpoint: magic, format version, embedded config text,
// vocabulary, then named weight arrays as little-endian 64-bit reals.
// Round-trips are bit-exact; writes go through a temp file and rename.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "sonarllm/nn.hpp"
#include "sonarllm/text.hpp"

namespace sonarllm::ckpt {

inline constexpr char kMagic[] = "SONLLM1";  // 7 bytes on the wire
inline constexpr std::uint32_t kVersion = 1;

class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

struct NamedArray {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<double> data;
};

struct Checkpoint {
  std::string config_text;
  std::vector<std::string> vocab_tokens;
  std::vector<NamedArray> arrays;

  const NamedArray* find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Weight arrays of a parameter map, in registry order, names prefixed.
std::vector<NamedArray> arrays_from_params(const std::string& prefix,
                                           const nn::ParamMap& params);

// Copies checkpoint arrays into matching parameters; every parameter must be
// present with the right element count.
void load_params(const Checkpoint& checkpoint, const std::string& prefix,
                 const nn::ParamMap& params);

}  // namespace sonarllm::ckpt

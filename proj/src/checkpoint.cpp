// SPDX-License-Identifier: Apache-2.0

#include "sonarllm/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace sonarllm::ckpt {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

void put_bytes(std::string& out, const std::string& s) {
  put_u64(out, s.size());
  out += s;
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) {
      throw FormatError("checkpoint truncated at byte " + std::to_string(pos));
    }
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos++]))
           << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos++]))
           << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes() {
    const std::uint64_t n = u64();
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

const NamedArray* Checkpoint::find(const std::string& name) const {
  for (const NamedArray& a : arrays)
    if (a.name == name) return &a;
  return nullptr;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
  std::string out;
  out += kMagic;  // 7 bytes, no terminator
  put_u32(out, kVersion);
  put_bytes(out, checkpoint.config_text);
  put_u64(out, checkpoint.vocab_tokens.size());
  for (const std::string& tok : checkpoint.vocab_tokens) put_bytes(out, tok);
  put_u64(out, checkpoint.arrays.size());
  for (const NamedArray& a : checkpoint.arrays) {
    put_bytes(out, a.name);
    put_u32(out, static_cast<std::uint32_t>(a.shape.size()));
    std::uint64_t count = 1;
    for (std::uint64_t dim : a.shape) {
      put_u64(out, dim);
      count *= dim;
    }
    if (count != a.data.size()) {
      throw FormatError("array " + a.name + ": shape/data mismatch");
    }
    for (double v : a.data) put_f64(out, v);
  }

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot open " + tmp + " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw FormatError("write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw FormatError("cannot rename " + tmp + " to " + path);
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  Reader r{buf};

  r.need(7);
  if (std::memcmp(buf.data(), kMagic, 7) != 0) {
    throw FormatError(path + ": bad magic, not a checkpoint file");
  }
  r.pos = 7;
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw FormatError(path + ": unsupported format version " +
                      std::to_string(version));
  }

  Checkpoint checkpoint;
  checkpoint.config_text = r.bytes();
  const std::uint64_t vocab_count = r.u64();
  checkpoint.vocab_tokens.reserve(vocab_count);
  for (std::uint64_t i = 0; i < vocab_count; ++i)
    checkpoint.vocab_tokens.push_back(r.bytes());
  const std::uint64_t array_count = r.u64();
  checkpoint.arrays.reserve(array_count);
  for (std::uint64_t i = 0; i < array_count; ++i) {
    NamedArray a;
    a.name = r.bytes();
    const std::uint32_t ndim = r.u32();
    std::uint64_t count = 1;
    for (std::uint32_t k = 0; k < ndim; ++k) {
      a.shape.push_back(r.u64());
      count *= a.shape.back();
    }
    r.need(count * 8);
    a.data.reserve(count);
    for (std::uint64_t k = 0; k < count; ++k) a.data.push_back(r.f64());
    checkpoint.arrays.push_back(std::move(a));
  }
  if (r.pos != buf.size()) {
    throw FormatError(path + ": trailing bytes after checkpoint payload");
  }
  return checkpoint;
}

std::vector<NamedArray> arrays_from_params(const std::string& prefix,
                                           const nn::ParamMap& params) {
  std::vector<NamedArray> out;
  for (const auto& [name, tensor] : params.items()) {
    NamedArray a;
    a.name = prefix + name;
    for (std::size_t dim : tensor.shape()) a.shape.push_back(dim);
    a.data.assign(tensor.values().begin(), tensor.values().end());
    out.push_back(std::move(a));
  }
  return out;
}

void load_params(const Checkpoint& checkpoint, const std::string& prefix,
                 const nn::ParamMap& params) {
  for (const auto& [name, tensor] : params.items()) {
    const NamedArray* a = checkpoint.find(prefix + name);
    if (!a) throw FormatError("checkpoint is missing array " + prefix + name);
    if (a->data.size() != tensor.size()) {
      throw FormatError("array " + a->name + ": expected " +
                        std::to_string(tensor.size()) + " values, found " +
                        std::to_string(a->data.size()));
    }
    nn::Tensor t = tensor;
    std::copy(a->data.begin(), a->data.end(), t.values_mut().begin());
  }
}

}  // namespace sonarllm::ckpt

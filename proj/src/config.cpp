// SPDX-License-Identifier: Apache-2.0

#include "sonarllm/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace sonarllm::config {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace

KvConfig KvConfig::parse(const std::string& text) {
  KvConfig kv;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key = value, got '" + stripped + "'");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    }
    kv.entries_[key] = value;
  }
  return kv;
}

KvConfig KvConfig::parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void KvConfig::set(const std::string& key, const std::string& value) {
  entries_[key] = value;
}

bool KvConfig::has(const std::string& key) const {
  return entries_.count(key) != 0;
}

std::string KvConfig::get_string(const std::string& key,
                                 const std::string& fallback) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

std::int64_t KvConfig::get_int(const std::string& key,
                               std::int64_t fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    std::size_t pos = 0;
    const std::int64_t v = std::stoll(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument(it->second);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": '" + it->second +
                      "' is not an integer");
  }
}

double KvConfig::get_double(const std::string& key, double fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    std::size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument(it->second);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": '" + it->second +
                      "' is not a number");
  }
}

std::uint64_t KvConfig::get_u64(const std::string& key,
                                std::uint64_t fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    std::size_t pos = 0;
    const std::uint64_t v = std::stoull(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument(it->second);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": '" + it->second +
                      "' is not an unsigned integer");
  }
}

std::string KvConfig::serialize() const {
  std::string out;
  for (const auto& [key, value] : entries_) {
    out += key;
    out += " = ";
    out += value;
    out += '\n';
  }
  return out;
}

// ---- experiment config ---------------------------------------------------------

ExperimentConfig ExperimentConfig::from_kv(const KvConfig& kv) {
  ExperimentConfig cfg;
  cfg.seed = kv.get_u64("seed", cfg.seed);
  cfg.sentinel = kv.get_string("sentinel", cfg.sentinel);
  cfg.vocab_max_size = static_cast<std::size_t>(
      kv.get_int("vocab.max_size", static_cast<std::int64_t>(cfg.vocab_max_size)));
  const std::string obj = kv.get_string("objective", "ce_sonar");
  auto parsed = train::objective_from_name(obj);
  if (!parsed) throw ConfigError("unknown objective '" + obj + "'");
  cfg.objective = *parsed;

  auto geti = [&kv](const char* key, std::size_t fallback) {
    return static_cast<std::size_t>(
        kv.get_int(key, static_cast<std::int64_t>(fallback)));
  };

  cfg.codec.d = geti("codec.d", cfg.codec.d);
  cfg.codec.enc_layers = geti("codec.enc_layers", cfg.codec.enc_layers);
  cfg.codec.dec_layers = geti("codec.dec_layers", cfg.codec.dec_layers);
  cfg.codec.n_heads = geti("codec.n_heads", cfg.codec.n_heads);
  cfg.codec.ffn_mult = geti("codec.ffn_mult", cfg.codec.ffn_mult);
  cfg.codec.max_sentence_tokens =
      geti("codec.max_sentence_tokens", cfg.codec.max_sentence_tokens);
  cfg.codec.rope_base = kv.get_double("codec.rope_base", cfg.codec.rope_base);

  cfg.codec_train.lr = kv.get_double("codec.lr", cfg.codec_train.lr);
  cfg.codec_train.epochs = geti("codec.epochs", cfg.codec_train.epochs);
  cfg.codec_train.batch_size = geti("codec.batch_size", cfg.codec_train.batch_size);
  cfg.codec_train.warmup_steps =
      geti("codec.warmup_steps", cfg.codec_train.warmup_steps);
  cfg.codec_train.grad_clip_norm =
      kv.get_double("codec.grad_clip_norm", cfg.codec_train.grad_clip_norm);
  cfg.codec_train.target_token_accuracy = kv.get_double(
      "codec.target_token_accuracy", cfg.codec_train.target_token_accuracy);

  cfg.model.d_model = geti("model.d_model", cfg.model.d_model);
  cfg.model.n_layers = geti("model.n_layers", cfg.model.n_layers);
  cfg.model.n_heads = geti("model.n_heads", cfg.model.n_heads);
  cfg.model.ffn_mult = geti("model.ffn_mult", cfg.model.ffn_mult);
  cfg.model.max_concepts = geti("model.max_concepts", cfg.model.max_concepts);
  cfg.model.rope_base = kv.get_double("model.rope_base", cfg.model.rope_base);
  cfg.model.d_embed = cfg.codec.d;

  cfg.train.lr = kv.get_double("train.lr", cfg.train.lr);
  cfg.train.epochs = geti("train.epochs", cfg.train.epochs);
  cfg.train.batch_size = geti("train.batch_size", cfg.train.batch_size);
  cfg.train.warmup_steps = geti("train.warmup_steps", cfg.train.warmup_steps);
  cfg.train.beta1 = kv.get_double("train.beta1", cfg.train.beta1);
  cfg.train.beta2 = kv.get_double("train.beta2", cfg.train.beta2);
  cfg.train.adam_eps = kv.get_double("train.adam_eps", cfg.train.adam_eps);
  cfg.train.grad_clip_norm =
      kv.get_double("train.grad_clip_norm", cfg.train.grad_clip_norm);

  cfg.tau_stop = kv.get_double("stop.tau", cfg.tau_stop);
  cfg.t_max = geti("stop.t_max", cfg.t_max);

  cfg.codec_train.seed = cfg.seed;
  cfg.train.seed = cfg.seed;
  return cfg;
}

KvConfig ExperimentConfig::to_kv() const {
  KvConfig kv;
  char buf[64];
  auto set_num = [&kv, &buf](const char* key, double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    kv.set(key, buf);
  };
  kv.set("seed", std::to_string(seed));
  kv.set("sentinel", sentinel);
  kv.set("vocab.max_size", std::to_string(vocab_max_size));
  kv.set("objective", train::objective_name(objective));

  kv.set("codec.d", std::to_string(codec.d));
  kv.set("codec.enc_layers", std::to_string(codec.enc_layers));
  kv.set("codec.dec_layers", std::to_string(codec.dec_layers));
  kv.set("codec.n_heads", std::to_string(codec.n_heads));
  kv.set("codec.ffn_mult", std::to_string(codec.ffn_mult));
  kv.set("codec.max_sentence_tokens", std::to_string(codec.max_sentence_tokens));
  set_num("codec.rope_base", codec.rope_base);
  set_num("codec.lr", codec_train.lr);
  kv.set("codec.epochs", std::to_string(codec_train.epochs));
  kv.set("codec.batch_size", std::to_string(codec_train.batch_size));
  kv.set("codec.warmup_steps", std::to_string(codec_train.warmup_steps));
  set_num("codec.grad_clip_norm", codec_train.grad_clip_norm);
  set_num("codec.target_token_accuracy", codec_train.target_token_accuracy);

  kv.set("model.d_model", std::to_string(model.d_model));
  kv.set("model.n_layers", std::to_string(model.n_layers));
  kv.set("model.n_heads", std::to_string(model.n_heads));
  kv.set("model.ffn_mult", std::to_string(model.ffn_mult));
  kv.set("model.max_concepts", std::to_string(model.max_concepts));
  set_num("model.rope_base", model.rope_base);

  set_num("train.lr", train.lr);
  kv.set("train.epochs", std::to_string(train.epochs));
  kv.set("train.batch_size", std::to_string(train.batch_size));
  kv.set("train.warmup_steps", std::to_string(train.warmup_steps));
  set_num("train.beta1", train.beta1);
  set_num("train.beta2", train.beta2);
  set_num("train.adam_eps", train.adam_eps);
  set_num("train.grad_clip_norm", train.grad_clip_norm);

  set_num("stop.tau", tau_stop);
  kv.set("stop.t_max", std::to_string(t_max));
  return kv;
}

}  // namespace sonarllm::config

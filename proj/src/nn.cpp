// SPDX-License-Identifier: Apache-2.0

#include "sonarllm/nn.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace sonarllm::nn {

void ParamMap::add(const std::string& name, const Tensor& t) {
  items_.emplace_back(name, t);
}

void ParamMap::extend(const std::string& prefix, const ParamMap& sub) {
  for (const auto& [name, t] : sub.items_) items_.emplace_back(prefix + name, t);
}

std::vector<Tensor> ParamMap::tensors() const {
  std::vector<Tensor> out;
  out.reserve(items_.size());
  for (const auto& [name, t] : items_) out.push_back(t);
  return out;
}

Tensor ParamMap::find(const std::string& name) const {
  for (const auto& [n, t] : items_)
    if (n == name) return t;
  return Tensor();
}

void ParamMap::set_requires_grad(bool rg) const {
  for (const auto& [name, t] : items_) {
    Tensor copy = t;
    copy.set_requires_grad(rg);
  }
}

std::uint64_t ParamMap::value_digest() const {
  std::uint64_t h = 1469598103934665603ull;  // FNV offset basis
  auto mix = [&h](const void* data, std::size_t len) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& [name, t] : items_) {
    mix(name.data(), name.size());
    mix(t.values().data(), t.values().size() * sizeof(double));
  }
  return h;
}

// ---- rotary position encoding -----------------------------------------------

namespace detail {

void rope_apply_row(double* row, std::size_t dim, std::size_t position,
                    double base) {
  for (std::size_t i = 0; 2 * i + 1 < dim; ++i) {
    const double theta =
        static_cast<double>(position) /
        std::pow(base, 2.0 * static_cast<double>(i) / static_cast<double>(dim));
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    const double x = row[2 * i];
    const double y = row[2 * i + 1];
    row[2 * i] = x * c - y * s;
    row[2 * i + 1] = x * s + y * c;
  }
}

}  // namespace detail

namespace {

Tensor rope_impl(const Tensor& x, std::size_t start_pos, double base,
                 bool per_row) {
  if (x.shape().empty()) throw ad::ShapeError("rope: scalar input");
  const std::size_t dim = x.shape().back();
  if (dim % 2 != 0) {
    throw ad::ContractError("rope: head dimension must be even, got " +
                            std::to_string(dim));
  }
  const std::size_t rows = x.size() / dim;
  Tensor out = Tensor::from_values(
      x.shape(), std::vector<double>(x.values().begin(), x.values().end()));
  auto ov = out.values_mut();
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t pos = per_row ? start_pos + r : start_pos;
    detail::rope_apply_row(ov.data() + r * dim, dim, pos, base);
  }
  const Tensor inputs[] = {x};
  ad::record_op(out, inputs, [x, out, dim, rows, start_pos, base, per_row] {
    if (!out.has_grad() || !x.requires_grad()) return;
    // Rotation is orthogonal per pair; the adjoint rotates by -theta.
    const auto& og = out.grad();
    auto& gx = x.grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t pos = per_row ? start_pos + r : start_pos;
      for (std::size_t i = 0; 2 * i + 1 < dim; ++i) {
        const double theta =
            static_cast<double>(pos) /
            std::pow(base,
                     2.0 * static_cast<double>(i) / static_cast<double>(dim));
        const double c = std::cos(theta);
        const double s = std::sin(theta);
        const double gx0 = og[r * dim + 2 * i];
        const double gx1 = og[r * dim + 2 * i + 1];
        gx[r * dim + 2 * i] += gx0 * c + gx1 * s;
        gx[r * dim + 2 * i + 1] += -gx0 * s + gx1 * c;
      }
    }
  });
  return out;
}

}  // namespace

Tensor rope_rotate(const Tensor& x, std::size_t position, double base) {
  return rope_impl(x, position, base, /*per_row=*/false);
}

Tensor rope_rows(const Tensor& x, std::size_t start_pos, double base) {
  return rope_impl(x, start_pos, base, /*per_row=*/true);
}

// ---- layers -----------------------------------------------------------------

Linear::Linear(std::size_t in, std::size_t out, double init_std, Rng& rng)
    : weight(Tensor::randn({in, out}, init_std, rng, /*requires_grad=*/true)) {}

RmsNorm::RmsNorm(std::size_t dim)
    : gain(Tensor::full({dim}, 1.0, /*requires_grad=*/true)) {}

double residual_init_std(std::size_t n_layers) {
  return kBaseInitStd / std::sqrt(2.0 * static_cast<double>(n_layers));
}

TransformerBlock::TransformerBlock(const BlockConfig& config, Rng& rng)
    : cfg(config),
      norm_attn(config.d_model),
      norm_ffn(config.d_model),
      wq(config.d_model, config.d_model, kBaseInitStd, rng),
      wk(config.d_model, config.d_model, kBaseInitStd, rng),
      wv(config.d_model, config.d_model, kBaseInitStd, rng),
      wo(config.d_model, config.d_model, residual_init_std(config.n_layers), rng),
      w_gate(config.d_model, config.ffn_mult * config.d_model, kBaseInitStd, rng),
      w_up(config.d_model, config.ffn_mult * config.d_model, kBaseInitStd, rng),
      w_down(config.ffn_mult * config.d_model, config.d_model,
             residual_init_std(config.n_layers), rng) {
  if (config.d_model % config.n_heads != 0) {
    throw ad::ContractError("TransformerBlock: d_model " +
                            std::to_string(config.d_model) +
                            " not divisible by heads " +
                            std::to_string(config.n_heads));
  }
  if ((config.d_model / config.n_heads) % 2 != 0) {
    throw ad::ContractError("TransformerBlock: head dimension must be even");
  }
}

Tensor TransformerBlock::apply(const Tensor& x, std::size_t pos_offset) const {
  const std::size_t head_dim = cfg.d_model / cfg.n_heads;

  Tensor h = norm_attn.apply(x);
  Tensor q = wq.apply(h);
  Tensor k = wk.apply(h);
  Tensor v = wv.apply(h);

  std::vector<Tensor> head_outs;
  head_outs.reserve(cfg.n_heads);
  for (std::size_t head = 0; head < cfg.n_heads; ++head) {
    Tensor qh = rope_rows(ad::slice_cols(q, head * head_dim, head_dim),
                          pos_offset, cfg.rope_base);
    Tensor kh = rope_rows(ad::slice_cols(k, head * head_dim, head_dim),
                          pos_offset, cfg.rope_base);
    Tensor vh = ad::slice_cols(v, head * head_dim, head_dim);
    head_outs.push_back(cfg.causal ? ad::causal_attention(qh, kh, vh)
                                   : ad::full_attention(qh, kh, vh));
  }
  Tensor attn = wo.apply(ad::concat_cols(head_outs));
  Tensor mid = ad::add(x, attn);

  Tensor f = norm_ffn.apply(mid);
  Tensor gated = ad::mul(ad::silu(w_gate.apply(f)), w_up.apply(f));
  return ad::add(mid, w_down.apply(gated));
}

ParamMap TransformerBlock::params(const std::string& prefix) const {
  ParamMap p;
  p.add(prefix + "norm_attn.gain", norm_attn.gain);
  p.add(prefix + "wq", wq.weight);
  p.add(prefix + "wk", wk.weight);
  p.add(prefix + "wv", wv.weight);
  p.add(prefix + "wo", wo.weight);
  p.add(prefix + "norm_ffn.gain", norm_ffn.gain);
  p.add(prefix + "w_gate", w_gate.weight);
  p.add(prefix + "w_up", w_up.weight);
  p.add(prefix + "w_down", w_down.weight);
  return p;
}

std::int64_t block_param_count(std::size_t d_model, std::size_t ffn_mult) {
  const std::int64_t d = static_cast<std::int64_t>(d_model);
  const std::int64_t f = static_cast<std::int64_t>(ffn_mult) * d;
  return 4 * d * d + 3 * d * f + 2 * d;
}

// ---- incremental (KV-cached) execution ----------------------------------------

void matvec_accum(const double* x, const double* w, std::size_t in_dim,
                  std::size_t out_dim, double* y) {
  for (std::size_t p = 0; p < in_dim; ++p) {
    const double xp = x[p];
    if (xp == 0.0) continue;  // matches matmul's skip
    const double* wrow = w + p * out_dim;
    for (std::size_t j = 0; j < out_dim; ++j) y[j] += xp * wrow[j];
  }
}

void rms_norm_row(const double* x, const double* gain, std::size_t d,
                  double eps, double* y) {
  double ms = 0.0;
  for (std::size_t j = 0; j < d; ++j) ms += x[j] * x[j];
  ms /= static_cast<double>(d);
  const double inv = 1.0 / std::sqrt(ms + eps);
  for (std::size_t j = 0; j < d; ++j) y[j] = gain[j] * x[j] * inv;
}

void block_row_step(const TransformerBlock& block, std::vector<double>& x,
                    BlockKV& cache, std::size_t position) {
  const std::size_t d = block.cfg.d_model;
  const std::size_t heads = block.cfg.n_heads;
  const std::size_t head_dim = d / heads;

  std::vector<double> h(d), q(d, 0.0), k(d, 0.0), v(d, 0.0);
  rms_norm_row(x.data(), block.norm_attn.gain.values().data(), d,
               block.norm_attn.eps, h.data());
  matvec_accum(h.data(), block.wq.weight.values().data(), d, d, q.data());
  matvec_accum(h.data(), block.wk.weight.values().data(), d, d, k.data());
  matvec_accum(h.data(), block.wv.weight.values().data(), d, d, v.data());
  for (std::size_t head = 0; head < heads; ++head) {
    detail::rope_apply_row(q.data() + head * head_dim, head_dim, position,
                           block.cfg.rope_base);
    detail::rope_apply_row(k.data() + head * head_dim, head_dim, position,
                           block.cfg.rope_base);
  }
  cache.k.insert(cache.k.end(), k.begin(), k.end());
  cache.v.insert(cache.v.end(), v.begin(), v.end());

  const std::size_t n = position + 1;
  std::vector<double> attn_out(d);
  std::vector<double> k_head(n * head_dim), v_head(n * head_dim);
  for (std::size_t head = 0; head < heads; ++head) {
    for (std::size_t r = 0; r < n; ++r) {
      const double* kr = cache.k.data() + r * d + head * head_dim;
      const double* vr = cache.v.data() + r * d + head * head_dim;
      std::copy(kr, kr + head_dim, k_head.begin() + r * head_dim);
      std::copy(vr, vr + head_dim, v_head.begin() + r * head_dim);
    }
    ad::detail::attend_row(q.data() + head * head_dim, k_head.data(),
                           v_head.data(), n, head_dim,
                           attn_out.data() + head * head_dim, nullptr);
  }
  std::vector<double> proj(d, 0.0);
  matvec_accum(attn_out.data(), block.wo.weight.values().data(), d, d,
               proj.data());
  for (std::size_t j = 0; j < d; ++j) x[j] += proj[j];

  const std::size_t f = block.cfg.ffn_mult * d;
  std::vector<double> norm2(d), gate(f, 0.0), up(f, 0.0);
  rms_norm_row(x.data(), block.norm_ffn.gain.values().data(), d,
               block.norm_ffn.eps, norm2.data());
  matvec_accum(norm2.data(), block.w_gate.weight.values().data(), d, f,
               gate.data());
  matvec_accum(norm2.data(), block.w_up.weight.values().data(), d, f,
               up.data());
  for (std::size_t j = 0; j < f; ++j) {
    const double s = 1.0 / (1.0 + std::exp(-gate[j]));
    gate[j] = gate[j] * s * up[j];
  }
  std::fill(proj.begin(), proj.end(), 0.0);
  matvec_accum(gate.data(), block.w_down.weight.values().data(), f, d,
               proj.data());
  for (std::size_t j = 0; j < d; ++j) x[j] += proj[j];
}

}  // namespace sonarllm::nn

// SPDX-License-Identifier: Apache-2.0

#include "sonarllm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sonarllm::ad {

namespace {

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

void check_2d(const Tensor& t, const char* op) {
  if (t.shape().size() != 2) {
    throw ShapeError(std::string(op) + ": expected 2-D tensor, got " +
                     shape_str(t.shape()));
  }
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

thread_local TapeScope* g_current_tape = nullptr;

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << " x ";
    os << s[i];
  }
  os << "]";
  return os.str();
}

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto d = std::make_shared<detail::TensorData>();
  d->value.assign(shape_numel(shape), 0.0);
  d->shape = std::move(shape);
  d->requires_grad = requires_grad;
  return Tensor(std::move(d));
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.values_mut().begin(), t.values_mut().end(), v);
  return t;
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values,
                           bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("from_values: " + shape_str(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  auto d = std::make_shared<detail::TensorData>();
  d->shape = std::move(shape);
  d->value = std::move(values);
  d->requires_grad = requires_grad;
  return Tensor(std::move(d));
}

Tensor Tensor::scalar(double v) { return from_values({1}, {v}); }

Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return from_values({n}, std::move(values), requires_grad);
}

Tensor Tensor::randn(Shape shape, double stddev, Rng& rng, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& v : t.values_mut()) v = rng.normal(0.0, stddev);
  return t;
}

std::size_t Tensor::rows() const {
  check_2d(*this, "rows");
  return d_->shape[0];
}

std::size_t Tensor::cols() const {
  check_2d(*this, "cols");
  return d_->shape[1];
}

double Tensor::item() const {
  if (size() != 1) {
    throw ContractError("item: tensor has " + std::to_string(size()) +
                        " elements");
  }
  return d_->value[0];
}

std::vector<double>& Tensor::grad() const {
  if (d_->grad.empty()) d_->grad.assign(d_->value.size(), 0.0);
  return d_->grad;
}

void Tensor::zero_grad() const {
  if (!d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
}

// ---- TapeScope --------------------------------------------------------------

TapeScope::TapeScope() : prev_(g_current_tape) { g_current_tape = this; }

TapeScope::~TapeScope() { g_current_tape = prev_; }

TapeScope* TapeScope::current() { return g_current_tape; }

void TapeScope::record(std::function<void()> backward_fn) {
  nodes_.push_back(std::move(backward_fn));
}

void TapeScope::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward: loss must be a scalar tensor");
  }
  loss.grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

void backward(const Tensor& loss) {
  TapeScope* t = TapeScope::current();
  if (!t) throw ContractError("backward: no active tape");
  t->backward(loss);
}

void record_op(Tensor& out, std::span<const Tensor> inputs,
               std::function<void()> backward_fn) {
  bool rg = false;
  for (const Tensor& in : inputs) rg = rg || in.requires_grad();
  out.set_requires_grad(rg);
  if (rg && TapeScope::current()) {
    TapeScope::current()->record(std::move(backward_fn));
  }
}

namespace {

void finish(Tensor& out, std::initializer_list<Tensor> inputs,
            std::function<void()> backward_fn) {
  record_op(out, std::span<const Tensor>(inputs.begin(), inputs.size()),
            std::move(backward_fn));
}

}  // namespace

// ---- elementwise / structural ----------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  auto ov = out.values_mut();
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  finish(out, {a, b}, [a, b, out] {
    if (!out.has_grad()) return;
    const auto& og = out.grad();
    if (a.requires_grad()) {
      auto& ga = a.grad();
      for (std::size_t i = 0; i < og.size(); ++i) ga[i] += og[i];
    }
    if (b.requires_grad()) {
      auto& gb = b.grad();
      for (std::size_t i = 0; i < og.size(); ++i) gb[i] += og[i];
    }
  });
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape());
  auto ov = out.values_mut();
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
  finish(out, {a, b}, [a, b, out] {
    if (!out.has_grad()) return;
    const auto& og = out.grad();
    if (a.requires_grad()) {
      auto& ga = a.grad();
      for (std::size_t i = 0; i < og.size(); ++i) ga[i] += og[i];
    }
    if (b.requires_grad()) {
      auto& gb = b.grad();
      for (std::size_t i = 0; i < og.size(); ++i) gb[i] -= og[i];
    }
  });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  auto ov = out.values_mut();
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  finish(out, {a, b}, [a, b, out] {
    if (!out.has_grad()) return;
    const auto& og = out.grad();
    const auto av = a.values();
    const auto bv = b.values();
    if (a.requires_grad()) {
      auto& ga = a.grad();
      for (std::size_t i = 0; i < og.size(); ++i) ga[i] += og[i] * bv[i];
    }
    if (b.requires_grad()) {
      auto& gb = b.grad();
      for (std::size_t i = 0; i < og.size(); ++i) gb[i] += og[i] * av[i];
    }
  });
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape());
  auto ov = out.values_mut();
  const auto av = a.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * c;
  finish(out, {a}, [a, out, c] {
    if (!out.has_grad() || !a.requires_grad()) return;
    const auto& og = out.grad();
    auto& ga = a.grad();
    for (std::size_t i = 0; i < og.size(); ++i) ga[i] += og[i] * c;
  });
  return out;
}

Tensor silu(const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  auto ov = out.values_mut();
  const auto av = a.values();
  for (std::size_t i = 0; i < ov.size(); ++i) {
    const double s = 1.0 / (1.0 + std::exp(-av[i]));
    ov[i] = av[i] * s;
  }
  finish(out, {a}, [a, out] {
    if (!out.has_grad() || !a.requires_grad()) return;
    const auto& og = out.grad();
    const auto av = a.values();
    auto& ga = a.grad();
    for (std::size_t i = 0; i < og.size(); ++i) {
      const double s = 1.0 / (1.0 + std::exp(-av[i]));
      ga[i] += og[i] * s * (1.0 + av[i] * (1.0 - s));
    }
  });
  return out;
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  Tensor out = Tensor::scalar(acc);
  finish(out, {a}, [a, out] {
    if (!out.has_grad() || !a.requires_grad()) return;
    const double og = out.grad()[0];
    auto& ga = a.grad();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += og;
  });
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.size()) {
    throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " +
                     shape_str(shape) + " changes element count");
  }
  Tensor out = Tensor::from_values(
      std::move(shape), std::vector<double>(a.values().begin(), a.values().end()));
  finish(out, {a}, [a, out] {
    if (!out.has_grad() || !a.requires_grad()) return;
    const auto& og = out.grad();
    auto& ga = a.grad();
    for (std::size_t i = 0; i < og.size(); ++i) ga[i] += og[i];
  });
  return out;
}

Tensor add_row_bias(const Tensor& m, const Tensor& bias) {
  check_2d(m, "add_row_bias");
  if (bias.shape().size() != 1 || bias.shape()[0] != m.cols()) {
    throw ShapeError("add_row_bias: bias " + shape_str(bias.shape()) +
                     " does not match " + shape_str(m.shape()));
  }
  const std::size_t r = m.rows(), c = m.cols();
  Tensor out = Tensor::zeros(m.shape());
  auto ov = out.values_mut();
  const auto mv = m.values();
  const auto bv = bias.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) ov[i * c + j] = mv[i * c + j] + bv[j];
  finish(out, {m, bias}, [m, bias, out, r, c] {
    if (!out.has_grad()) return;
    const auto& og = out.grad();
    if (m.requires_grad()) {
      auto& gm = m.grad();
      for (std::size_t i = 0; i < og.size(); ++i) gm[i] += og[i];
    }
    if (bias.requires_grad()) {
      auto& gb = bias.grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gb[j] += og[i * c + j];
    }
  });
  return out;
}

Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t count) {
  check_2d(a, "slice_rows");
  if (start + count > a.rows()) {
    throw ShapeError("slice_rows: [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of " +
                     std::to_string(a.rows()) + " rows");
  }
  const std::size_t c = a.cols();
  Tensor out = Tensor::zeros({count, c});
  auto ov = out.values_mut();
  const auto av = a.values();
  std::copy(av.begin() + start * c, av.begin() + (start + count) * c, ov.begin());
  finish(out, {a}, [a, out, start, c] {
    if (!out.has_grad() || !a.requires_grad()) return;
    const auto& og = out.grad();
    auto& ga = a.grad();
    for (std::size_t i = 0; i < og.size(); ++i) ga[start * c + i] += og[i];
  });
  return out;
}

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count) {
  check_2d(a, "slice_cols");
  if (start + count > a.cols()) {
    throw ShapeError("slice_cols: [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of " +
                     std::to_string(a.cols()) + " cols");
  }
  const std::size_t r = a.rows(), c = a.cols();
  Tensor out = Tensor::zeros({r, count});
  auto ov = out.values_mut();
  const auto av = a.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < count; ++j)
      ov[i * count + j] = av[i * c + start + j];
  finish(out, {a}, [a, out, start, count, r, c] {
    if (!out.has_grad() || !a.requires_grad()) return;
    const auto& og = out.grad();
    auto& ga = a.grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < count; ++j)
        ga[i * c + start + j] += og[i * count + j];
  });
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: empty input");
  const std::size_t c = parts[0].cols();
  std::size_t r = 0;
  for (const Tensor& p : parts) {
    check_2d(p, "concat_rows");
    if (p.cols() != c) {
      throw ShapeError("concat_rows: column mismatch " +
                       shape_str(parts[0].shape()) + " vs " +
                       shape_str(p.shape()));
    }
    r += p.rows();
  }
  Tensor out = Tensor::zeros({r, c});
  auto ov = out.values_mut();
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    const auto pv = p.values();
    std::copy(pv.begin(), pv.end(), ov.begin() + off);
    off += pv.size();
  }
  record_op(out, std::span<const Tensor>(parts.data(), parts.size()),
            [parts, out] {
              if (!out.has_grad()) return;
              const auto& og = out.grad();
              std::size_t off = 0;
              for (const Tensor& p : parts) {
                if (p.requires_grad()) {
                  auto& gp = p.grad();
                  for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += og[off + i];
                }
                off += p.size();
              }
            });
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: empty input");
  const std::size_t r = parts[0].rows();
  std::size_t c = 0;
  for (const Tensor& p : parts) {
    check_2d(p, "concat_cols");
    if (p.rows() != r) {
      throw ShapeError("concat_cols: row mismatch " +
                       shape_str(parts[0].shape()) + " vs " +
                       shape_str(p.shape()));
    }
    c += p.cols();
  }
  Tensor out = Tensor::zeros({r, c});
  auto ov = out.values_mut();
  std::size_t col_off = 0;
  for (const Tensor& p : parts) {
    const auto pv = p.values();
    const std::size_t pc = p.cols();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < pc; ++j)
        ov[i * c + col_off + j] = pv[i * pc + j];
    col_off += pc;
  }
  record_op(out, std::span<const Tensor>(parts.data(), parts.size()),
            [parts, out, r, c] {
              if (!out.has_grad()) return;
              const auto& og = out.grad();
              std::size_t col_off = 0;
              for (const Tensor& p : parts) {
                const std::size_t pc = p.cols();
                if (p.requires_grad()) {
                  auto& gp = p.grad();
                  for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < pc; ++j)
                      gp[i * pc + j] += og[i * c + col_off + j];
                }
                col_off += pc;
              }
            });
  return out;
}

Tensor mean_rows(const Tensor& a) {
  check_2d(a, "mean_rows");
  const std::size_t r = a.rows(), c = a.cols();
  Tensor out = Tensor::zeros({c});
  auto ov = out.values_mut();
  const auto av = a.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) ov[j] += av[i * c + j];
  for (std::size_t j = 0; j < c; ++j) ov[j] /= static_cast<double>(r);
  finish(out, {a}, [a, out, r, c] {
    if (!out.has_grad() || !a.requires_grad()) return;
    const auto& og = out.grad();
    auto& ga = a.grad();
    const double inv = 1.0 / static_cast<double>(r);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += og[j] * inv;
  });
  return out;
}

// ---- linear algebra ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_2d(a, "matmul");
  check_2d(b, "matmul");
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions disagree, " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::zeros({m, n});
  auto ov = out.values_mut();
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) ov[i * n + j] += aip * bv[p * n + j];
    }
  }
  finish(out, {a, b}, [a, b, out, m, k, n] {
    if (!out.has_grad()) return;
    const auto& og = out.grad();
    const auto av = a.values();
    const auto bv = b.values();
    if (a.requires_grad()) {
      // dA = dC · B^T
      auto& ga = a.grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j)
            acc += og[i * n + j] * bv[p * n + j];
          ga[i * k + p] += acc;
        }
    }
    if (b.requires_grad()) {
      // dB = A^T · dC
      auto& gb = b.grad();
      for (std::size_t p = 0; p < k; ++p)
        for (std::size_t i = 0; i < m; ++i) {
          const double aip = av[i * k + p];
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j)
            gb[p * n + j] += aip * og[i * n + j];
        }
    }
  });
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  check_2d(a, "matmul_nt");
  check_2d(b, "matmul_nt");
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: inner dimensions disagree, " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()) +
                     "^T");
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Tensor out = Tensor::zeros({m, n});
  auto ov = out.values_mut();
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += av[i * k + p] * bv[j * k + p];
      ov[i * n + j] = acc;
    }
  finish(out, {a, b}, [a, b, out, m, k, n] {
    if (!out.has_grad()) return;
    const auto& og = out.grad();
    const auto av = a.values();
    const auto bv = b.values();
    if (a.requires_grad()) {
      // C = A·B^T  =>  dA = dC · B
      auto& ga = a.grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double g = og[i * n + j];
          if (g == 0.0) continue;
          for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += g * bv[j * k + p];
        }
    }
    if (b.requires_grad()) {
      // dB = dC^T · A
      auto& gb = b.grad();
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < m; ++i) {
          const double g = og[i * n + j];
          if (g == 0.0) continue;
          for (std::size_t p = 0; p < k; ++p) gb[j * k + p] += g * av[i * k + p];
        }
    }
  });
  return out;
}

// ---- neural-net primitives -----------------------------------------------

Tensor softmax(const Tensor& a, int axis) {
  const int ndim = static_cast<int>(a.shape().size());
  if (axis < 0) axis += ndim;
  if (axis < 0 || axis >= ndim) {
    throw ShapeError("softmax: axis out of range for " + shape_str(a.shape()));
  }
  const std::size_t n = a.shape()[axis];
  std::size_t inner = 1, outer = 1;
  for (int i = axis + 1; i < ndim; ++i) inner *= a.shape()[i];
  for (int i = 0; i < axis; ++i) outer *= a.shape()[i];

  Tensor out = Tensor::zeros(a.shape());
  auto ov = out.values_mut();
  const auto av = a.values();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = av[base];
      for (std::size_t i = 1; i < n; ++i)
        mx = std::max(mx, av[base + i * inner]);
      double z = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double e = std::exp(av[base + i * inner] - mx);
        ov[base + i * inner] = e;
        z += e;
      }
      for (std::size_t i = 0; i < n; ++i) ov[base + i * inner] /= z;
    }
  }
  finish(out, {a}, [a, out, n, inner, outer] {
    if (!out.has_grad() || !a.requires_grad()) return;
    const auto& og = out.grad();
    const auto yv = out.values();
    auto& ga = a.grad();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * n * inner + in;
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i)
          dot += og[base + i * inner] * yv[base + i * inner];
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t idx = base + i * inner;
          ga[idx] += yv[idx] * (og[idx] - dot);
        }
      }
    }
  });
  return out;
}

Tensor rms_norm(const Tensor& x, const Tensor& gain, double eps) {
  if (x.shape().empty()) throw ShapeError("rms_norm: scalar input");
  const std::size_t d = x.shape().back();
  if (gain.shape().size() != 1 || gain.shape()[0] != d) {
    throw ShapeError("rms_norm: gain " + shape_str(gain.shape()) +
                     " does not match last axis of " + shape_str(x.shape()));
  }
  if (eps <= 0.0) throw ContractError("rms_norm: eps must be positive");
  const std::size_t rows = x.size() / d;
  Tensor out = Tensor::zeros(x.shape());
  auto ov = out.values_mut();
  const auto xv = x.values();
  const auto gv = gain.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * d;
    double ms = 0.0;
    for (std::size_t j = 0; j < d; ++j) ms += xv[base + j] * xv[base + j];
    ms /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(ms + eps);
    for (std::size_t j = 0; j < d; ++j)
      ov[base + j] = gv[j] * xv[base + j] * inv;
  }
  finish(out, {x, gain}, [x, gain, out, d, rows, eps] {
    if (!out.has_grad()) return;
    const auto& og = out.grad();
    const auto xv = x.values();
    const auto gv = gain.values();
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t base = r * d;
      double ms = 0.0;
      for (std::size_t j = 0; j < d; ++j) ms += xv[base + j] * xv[base + j];
      ms /= static_cast<double>(d);
      const double inv = 1.0 / std::sqrt(ms + eps);
      if (x.requires_grad()) {
        auto& gx = x.grad();
        double dot = 0.0;  // sum_j og_j g_j x_j
        for (std::size_t j = 0; j < d; ++j)
          dot += og[base + j] * gv[j] * xv[base + j];
        const double inv3 = inv * inv * inv / static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j)
          gx[base + j] +=
              og[base + j] * gv[j] * inv - dot * xv[base + j] * inv3;
      }
      if (gain.requires_grad()) {
        auto& gg = gain.grad();
        for (std::size_t j = 0; j < d; ++j)
          gg[j] += og[base + j] * xv[base + j] * inv;
      }
    }
  });
  return out;
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
  check_2d(table, "gather_rows");
  const std::size_t v = table.rows(), d = table.cols();
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= v) {
      throw ContractError("gather_rows: id " + std::to_string(id) +
                          " out of range [0, " + std::to_string(v) + ")");
    }
  }
  Tensor out = Tensor::zeros({ids.size(), d});
  auto ov = out.values_mut();
  const auto tv = table.values();
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy(tv.begin() + ids[i] * d, tv.begin() + (ids[i] + 1) * d,
              ov.begin() + i * d);
  finish(out, {table}, [table, out, ids, d] {
    if (!out.has_grad() || !table.requires_grad()) return;
    const auto& og = out.grad();
    auto& gt = table.grad();
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t j = 0; j < d; ++j)
        gt[ids[i] * d + j] += og[i * d + j];
  });
  return out;
}

Tensor cross_entropy_logits(const Tensor& logits,
                            const std::vector<int>& targets) {
  check_2d(logits, "cross_entropy_logits");
  const std::size_t t = logits.rows(), v = logits.cols();
  if (targets.size() != t) {
    throw ShapeError("cross_entropy_logits: " + std::to_string(targets.size()) +
                     " targets for " + std::to_string(t) + " logit rows");
  }
  for (int id : targets) {
    if (id < 0 || static_cast<std::size_t>(id) >= v) {
      throw ContractError("cross_entropy_logits: target " + std::to_string(id) +
                          " out of range [0, " + std::to_string(v) + ")");
    }
  }
  const auto lv = logits.values();
  // Per row: logsumexp(z) - z[target], max-shifted.
  std::vector<double> lse(t);
  double total = 0.0;
  for (std::size_t i = 0; i < t; ++i) {
    const std::size_t base = i * v;
    double mx = lv[base];
    for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, lv[base + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) z += std::exp(lv[base + j] - mx);
    lse[i] = mx + std::log(z);
    total += lse[i] - lv[base + targets[i]];
  }
  Tensor out = Tensor::scalar(total);
  finish(out, {logits}, [logits, out, targets, lse, t, v] {
    if (!out.has_grad() || !logits.requires_grad()) return;
    const double og = out.grad()[0];
    const auto lv = logits.values();
    auto& gl = logits.grad();
    for (std::size_t i = 0; i < t; ++i) {
      const std::size_t base = i * v;
      for (std::size_t j = 0; j < v; ++j) {
        const double p = std::exp(lv[base + j] - lse[i]);
        gl[base + j] += og * (p - (static_cast<int>(j) == targets[i] ? 1.0 : 0.0));
      }
    }
  });
  return out;
}

// ---- attention -------------------------------------------------------------

namespace detail {

void attend_row(const double* q, const double* k_rows, const double* v_rows,
                std::size_t n, std::size_t dim, double* out,
                double* weights_out) {
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(dim));
  std::vector<double> scores(n);
  double mx = -1e300;
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t p = 0; p < dim; ++p) s += q[p] * k_rows[j * dim + p];
    scores[j] = s * inv_sqrt_d;
    mx = std::max(mx, scores[j]);
  }
  double z = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    scores[j] = std::exp(scores[j] - mx);
    z += scores[j];
  }
  for (std::size_t p = 0; p < dim; ++p) out[p] = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double w = scores[j] / z;
    if (weights_out) weights_out[j] = w;
    for (std::size_t p = 0; p < dim; ++p) out[p] += w * v_rows[j * dim + p];
  }
}

}  // namespace detail

namespace {

Tensor attention_impl(const Tensor& q, const Tensor& k, const Tensor& v,
                      bool causal) {
  check_2d(q, "attention");
  check_2d(k, "attention");
  check_2d(v, "attention");
  const std::size_t t = q.rows(), d = q.cols();
  if (k.rows() != t || k.cols() != d || v.rows() != t || v.cols() != d) {
    throw ShapeError("attention: q " + shape_str(q.shape()) + ", k " +
                     shape_str(k.shape()) + ", v " + shape_str(v.shape()) +
                     " must agree");
  }
  Tensor out = Tensor::zeros({t, d});
  auto ov = out.values_mut();
  const auto qv = q.values();
  const auto kv = k.values();
  const auto vv = v.values();
  // Row-local softmax weights, kept for the backward rule. Row i of the
  // causal variant has i+1 entries; only those are stored/used.
  auto weights = std::make_shared<std::vector<double>>(t * t, 0.0);
  for (std::size_t i = 0; i < t; ++i) {
    const std::size_t n = causal ? i + 1 : t;
    detail::attend_row(qv.data() + i * d, kv.data(), vv.data(), n, d,
                       ov.data() + i * d, weights->data() + i * t);
  }
  finish(out, {q, k, v}, [q, k, v, out, weights, t, d, causal] {
    if (!out.has_grad()) return;
    const auto& og = out.grad();
    const auto qv = q.values();
    const auto kv = k.values();
    const auto vv = v.values();
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    std::vector<double> dw(t);
    for (std::size_t i = 0; i < t; ++i) {
      const std::size_t n = causal ? i + 1 : t;
      const double* w = weights->data() + i * t;
      const double* go = og.data() + i * d;
      // dw_j = dout_i . v_j ; softmax backward ; then into q, k, v.
      double wdot = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t p = 0; p < d; ++p) acc += go[p] * vv[j * d + p];
        dw[j] = acc;
        wdot += w[j] * acc;
      }
      if (v.requires_grad()) {
        auto& gv = v.grad();
        for (std::size_t j = 0; j < n; ++j) {
          const double wj = w[j];
          for (std::size_t p = 0; p < d; ++p) gv[j * d + p] += wj * go[p];
        }
      }
      const bool need_q = q.requires_grad();
      const bool need_k = k.requires_grad();
      if (!need_q && !need_k) continue;
      for (std::size_t j = 0; j < n; ++j) {
        const double ds = w[j] * (dw[j] - wdot) * inv_sqrt_d;
        if (ds == 0.0) continue;
        if (need_q) {
          auto& gq = q.grad();
          for (std::size_t p = 0; p < d; ++p)
            gq[i * d + p] += ds * kv[j * d + p];
        }
        if (need_k) {
          auto& gk = k.grad();
          for (std::size_t p = 0; p < d; ++p)
            gk[j * d + p] += ds * qv[i * d + p];
        }
      }
    }
  });
  return out;
}

}  // namespace

Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  return attention_impl(q, k, v, /*causal=*/true);
}

Tensor full_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  return attention_impl(q, k, v, /*causal=*/false);
}

// ---- gradient checking ------------------------------------------------------

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                  double h) {
  if (h <= 0.0) throw ContractError("grad_check: step must be positive");
  x.set_requires_grad(true);
  std::vector<double> analytic;
  {
    TapeScope tape;
    Tensor loss = f(x);
    if (loss.size() != 1) {
      throw ContractError("grad_check: f must be scalar-valued");
    }
    x.zero_grad();
    tape.backward(loss);
    analytic = x.grad();
  }
  double worst = 0.0;
  auto xv = x.values_mut();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double keep = xv[i];
    xv[i] = keep + h;
    const double up = f(x).item();
    xv[i] = keep - h;
    const double down = f(x).item();
    xv[i] = keep;
    const double numeric = (up - down) / (2.0 * h);
    const double rel = std::abs(analytic[i] - numeric) /
                       (std::abs(analytic[i]) + std::abs(numeric) + 1e-12);
    worst = std::max(worst, rel);
  }
  return worst;
}

double grad_check_params(const std::function<Tensor()>& f,
                         const std::vector<Tensor>& params, double h) {
  if (h <= 0.0) throw ContractError("grad_check_params: step must be positive");
  std::vector<std::vector<double>> analytic;
  {
    TapeScope tape;
    Tensor loss = f();
    if (loss.size() != 1) {
      throw ContractError("grad_check_params: f must be scalar-valued");
    }
    for (const Tensor& p : params) p.zero_grad();
    tape.backward(loss);
    for (const Tensor& p : params) analytic.push_back(p.grad());
  }
  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi];
    auto pv = p.values_mut();
    for (std::size_t i = 0; i < pv.size(); ++i) {
      const double keep = pv[i];
      pv[i] = keep + h;
      const double up = f().item();
      pv[i] = keep - h;
      const double down = f().item();
      pv[i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      // Central differences resolve ~1e-11 absolute here (roundoff eps*|f|/h),
      // so coordinates whose true gradient sits near a zero crossing cannot
      // meet a scale-free relative test; the 1e-6 floor keeps the comparison
      // meaningful at the noise scale without masking errors on significant
      // coordinates.
      const double rel = std::abs(analytic[pi][i] - numeric) /
                         (std::abs(analytic[pi][i]) + std::abs(numeric) + 1e-6);
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace sonarllm::ad

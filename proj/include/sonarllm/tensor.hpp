// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation over dense 64-bit tensors.
//
// Define-by-run: while a Tape is active (innermost TapeScope on this thread),
// every differentiable operation whose inputs require gradients appends its
// backward rule to the tape. Creation order is topological by construction,
// so Tape::backward seeds d(loss)=1 and replays the rules once, in reverse.
// With no active tape, operations are plain forward arithmetic.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sonarllm/rng.hpp"

namespace sonarllm::ad {

// Dimension mismatches between operands.
class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

// API misuse: non-scalar backward, out-of-range index, missing tape.
class ContractError : public std::logic_error {
 public:
  explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

namespace detail {
struct TensorData {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first written by backward
  bool requires_grad = false;
};
}  // namespace detail

// Value-semantics handle to shared storage. Tensor values are treated as
// immutable once an operation has consumed them; values_mut() exists for
// initialization and for optimizer updates, which happen outside any tape.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double v);
  static Tensor row(std::vector<double> values, bool requires_grad = false);
  static Tensor randn(Shape shape, double stddev, Rng& rng,
                      bool requires_grad = false);

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const { return d_->shape; }
  std::size_t size() const { return d_->value.size(); }
  std::size_t rows() const;  // first dim of a 2-D tensor
  std::size_t cols() const;  // second dim of a 2-D tensor

  std::span<const double> values() const { return d_->value; }
  std::span<double> values_mut() { return d_->value; }
  double item() const;  // value of a 1-element tensor

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool rg) { d_->requires_grad = rg; }

  // Gradient accumulated by the most recent backward passes. Allocated
  // zero-filled on first access.
  std::vector<double>& grad() const;
  bool has_grad() const { return !d_->grad.empty(); }
  void zero_grad() const;

  bool same_storage(const Tensor& other) const { return d_ == other.d_; }
  detail::TensorData* data_ptr() const { return d_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorData> d) : d_(std::move(d)) {}
  std::shared_ptr<detail::TensorData> d_;
};

// Recorded operations for one forward pass. Construct one as a scoped guard:
//
//   TapeScope tape;
//   Tensor loss = ...;          // ops record onto the innermost scope
//   tape.backward(loss);        // populates .grad() on reachable tensors
//
// Scopes nest; the innermost one records. Single-writer per thread.
class TapeScope {
 public:
  TapeScope();
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

  static TapeScope* current();

  void record(std::function<void()> backward_fn);
  std::size_t node_count() const { return nodes_.size(); }

  // Seeds d(loss)=1 and runs every recorded rule once, newest first.
  // Gradients accumulate into .grad() buffers (callers zero them between
  // steps). loss must be a 1-element tensor produced under this scope.
  void backward(const Tensor& loss);

 private:
  std::vector<std::function<void()>> nodes_;
  TapeScope* prev_ = nullptr;
};

// Convenience: backward on the innermost active tape.
void backward(const Tensor& loss);

// Records a node on the active tape when grads are required. The backward
// closure reads out.grad() and accumulates into the inputs' grads; it must
// early-return when !out.has_grad(). Exposed so model code can define fused
// operations with bespoke gradients.
void record_op(Tensor& out, std::span<const Tensor> inputs,
               std::function<void()> backward_fn);

// ---- elementwise / structural ------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor silu(const Tensor& a);
Tensor sum(const Tensor& a);                      // -> scalar
Tensor reshape(const Tensor& a, Shape shape);     // same element count
Tensor add_row_bias(const Tensor& m, const Tensor& bias);  // [R x C] + [C]
Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t count);
Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor mean_rows(const Tensor& a);                // [R x C] -> [C]

// ---- linear algebra ------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);     // [m x k]·[k x n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m x k]·[n x k]^T

// ---- neural-net primitives ----------------------------------------------
// Softmax along `axis` (negative counts from the back). Shift-invariant,
// computed with a max shift.
Tensor softmax(const Tensor& a, int axis = -1);

// y = gain ⊙ x / sqrt(mean(x^2) + eps), per row over the last axis.
Tensor rms_norm(const Tensor& x, const Tensor& gain, double eps);

// Rows of a [V x d] table selected by id; gradients scatter-add back.
Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);

// Sum over rows of -log softmax(logits[i])[targets[i]], in log-sum-exp form.
Tensor cross_entropy_logits(const Tensor& logits, const std::vector<int>& targets);

// Scaled dot-product attention over already position-encoded q/k/v, all
// [T x head_dim]. Row i of the causal variant attends to rows 0..i only and
// never touches later rows, so prefix outputs are bit-identical under
// sequence extension.
Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v);
Tensor full_attention(const Tensor& q, const Tensor& k, const Tensor& v);

// ---- verification ---------------------------------------------------------
// Max over coordinates of |analytic - central difference| /
// (|analytic| + |numeric| + 1e-12). f must be scalar-valued.
double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                  double h);

// Same check for a closure over many parameter tensors: f() recomputes the
// loss from the parameters' current values. Checks every coordinate of every
// listed parameter. The denominator carries a 1e-6 absolute floor: full-model
// sweeps always contain coordinates whose true gradient is below the
// finite-difference noise floor, where a scale-free ratio is meaningless.
double grad_check_params(const std::function<Tensor()>& f,
                         const std::vector<Tensor>& params, double h);

namespace detail {
// One attention row: out = sum_j softmax_j(q·k_j / sqrt(d)) v_j over j < n,
// optionally writing the weights. Shared with the incremental (KV-cached)
// generation path so both compute bit-identical results.
void attend_row(const double* q, const double* k_rows, const double* v_rows,
                std::size_t n, std::size_t dim, double* out,
                double* weights_out);
}  // namespace detail

}  // namespace sonarllm::ad

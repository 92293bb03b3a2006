#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "diflow/tensor.hpp"

namespace diflow::nn {

// One vertex of the reverse-mode tape. Every operation allocates a node that
// owns its forward value and, when gradients are recorded, references its
// inputs and a closure that pushes the upstream gradient into them.
struct Node {
  Tensor value;
  Tensor grad;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;

  Tensor& ensure_grad();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Tensor value);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const std::shared_ptr<Node>& node() const { return node_; }
  // Gradient accumulated by the last backward(); zeros if none reached it.
  Tensor grad() const;

 private:
  std::shared_ptr<Node> node_;
};

bool grad_enabled();

// Disables tape recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Seeds d(root)/d(root) = 1 and propagates through the recorded tape.
// root must hold a single value.
void backward(const Var& root);

// Named trainable tensor. The value lives in a persistent leaf node, so every
// forward pass that reads var() accumulates into the same grad.
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Tensor init);
  Parameter(const Parameter&) = delete;
  Parameter& operator=(const Parameter&) = delete;
  Parameter(Parameter&&) noexcept = default;
  Parameter& operator=(Parameter&&) noexcept = default;

  const std::string& name() const { return name_; }
  Tensor& value() { return node_->value; }
  const Tensor& value() const { return node_->value; }
  Tensor& grad() { return node_->grad; }
  const Tensor& grad() const { return node_->grad; }
  Var var() const { return Var(node_); }
  void zero_grad();

 private:
  std::string name_;
  std::shared_ptr<Node> node_;
};

using ParameterList = std::vector<Parameter*>;

void zero_grads(const ParameterList& params);
std::size_t parameter_count(const ParameterList& params);

// ---------------------------------------------------------------------------
// Operations. Unless noted, tensors are viewed as rows() x cols() matrices.

Var matmul(const Var& a, const Var& b);
// x * w + b, with w of shape in x out and b of length out. b may be undefined.
Var linear(const Var& x, const Var& w, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double factor);
// Broadcast a length-cols() vector over every row.
Var add_row(const Var& x, const Var& row);
Var mul_row(const Var& x, const Var& row);
// x * (1 + scale) + shift with row-broadcast shift and scale.
Var modulate(const Var& x, const Var& shift, const Var& scale);
Var gelu(const Var& x);
Var silu(const Var& x);

// Per-row normalization to zero mean and unit variance. A constant row maps
// to zeros.
Var layer_norm(const Var& x, double eps = 1e-5);
Var layer_norm(const Var& x, const Parameter& gain, const Parameter& bias,
               double eps = 1e-5);

// Max-subtracted softmax along any axis (negative axis counts from the end).
Var softmax(const Var& x, int axis = -1);
Var log_softmax(const Var& x);

// Mean of -log softmax(logits)[target] over rows whose mask entry is nonzero.
// An empty mask selects every row; an all-false mask yields 0.
Var cross_entropy(const Var& logits, std::span<const std::int32_t> targets,
                  std::span<const std::uint8_t> mask = {});
Var mse(const Var& pred, const Tensor& target);

// Row gather; gradient scatters back into the selected rows.
Var gather_rows(const Var& table, std::span<const std::int32_t> ids);
Var embedding_lookup(const Parameter& table, std::span<const std::int32_t> ids);

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(const Var& x, std::size_t begin, std::size_t end);
Var slice_cols(const Var& x, std::size_t begin, std::size_t end);
Var transpose(const Var& x);
Var reshape(const Var& x, Shape shape);
Var sum(const Var& x);
Var mean(const Var& x);

// ---------------------------------------------------------------------------

struct GradCheckReport {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

// Compares reverse-mode gradients of a scalar function against central
// differences. Relative errors use max(|analytic|, |numeric|, floor) as the
// denominator so entries that are both ~0 compare absolutely.
GradCheckReport grad_check(const std::function<Var()>& f, const ParameterList& params,
                           double step = 1e-5, double floor = 1e-8);

}  // namespace diflow::nn

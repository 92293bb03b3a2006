#include "diflow/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include "diflow/errors.hpp"

namespace diflow::nn {

namespace {

thread_local bool g_grad_enabled = true;

using Backward = std::function<void(Node&)>;

Var make_result(Tensor value, std::vector<Var> inputs, Backward fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node());
    node->backward_fn = std::move(fn);
  }
  return Var(std::move(node));
}

void require_defined(const Var& v, const char* op) {
  if (!v.defined()) throw DimensionError(std::string(op) + ": undefined input");
}

void require_matrix(const Var& v, const char* op) {
  require_defined(v, op);
  if (v.value().rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " +
                         shape_string(v.shape()));
  }
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

void require_row_vector(const Var& x, const Var& row, const char* op) {
  require_defined(x, op);
  require_defined(row, op);
  if (row.value().size() != x.cols()) {
    throw DimensionError(std::string(op) + ": row vector of length " +
                         std::to_string(row.value().size()) + " for " +
                         std::to_string(x.cols()) + " columns");
  }
}

bool wants_grad(const std::shared_ptr<Node>& n) { return n->requires_grad; }

}  // namespace

Tensor& Node::ensure_grad() {
  if (grad.shape() != value.shape()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Var Var::constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Tensor Var::grad() const {
  if (node_->grad.shape() == node_->value.shape()) return node_->grad;
  return Tensor(node_->value.shape(), 0.0);
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void backward(const Var& root) {
  require_defined(root, "backward");
  if (root.value().size() != 1) throw DimensionError("backward: root must be a scalar");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order of the tape.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() == n->value.size()) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------------------

Parameter::Parameter(std::string name, Tensor init) : name_(std::move(name)) {
  node_ = std::make_shared<Node>();
  node_->grad = Tensor(init.shape(), 0.0);
  node_->value = std::move(init);
  node_->requires_grad = true;
}

void Parameter::zero_grad() { node_->ensure_grad().fill(0.0); }

void zero_grads(const ParameterList& params) {
  for (auto* p : params) p->zero_grad();
}

std::size_t parameter_count(const ParameterList& params) {
  std::size_t n = 0;
  for (const auto* p : params) n += p->value().size();
  return n;
}

// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  Tensor out({a.rows(), b.cols()});
  gemm(a.value(), false, b.value(), false, out, false);
  return make_result(std::move(out), {a, b}, [](Node& self) {
    auto& A = self.inputs[0];
    auto& B = self.inputs[1];
    if (wants_grad(A)) gemm(self.grad, false, B->value, true, A->ensure_grad(), true);
    if (wants_grad(B)) gemm(A->value, true, self.grad, false, B->ensure_grad(), true);
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  require_defined(x, "linear");
  require_matrix(w, "linear");
  if (x.cols() != w.rows()) {
    throw DimensionError("linear: input width " + std::to_string(x.cols()) +
                         " vs weight " + shape_string(w.shape()));
  }
  const std::size_t n = x.rows(), out_dim = w.cols();
  Tensor out({n, out_dim});
  if (x.value().rank() == 2) {
    gemm(x.value(), false, w.value(), false, out, false);
  } else {
    gemm(x.value().reshaped({n, x.cols()}), false, w.value(), false, out, false);
  }
  const bool has_bias = b.defined();
  if (has_bias) {
    if (b.value().size() != out_dim) throw DimensionError("linear: bias length mismatch");
    const auto bias = b.value().data();
    for (std::size_t r = 0; r < n; ++r) {
      auto row = out.row(r);
      for (std::size_t j = 0; j < out_dim; ++j) row[j] += bias[j];
    }
  }
  std::vector<Var> inputs{x, w};
  if (has_bias) inputs.push_back(b);
  return make_result(std::move(out), std::move(inputs), [n](Node& self) {
    auto& X = self.inputs[0];
    auto& W = self.inputs[1];
    if (wants_grad(X)) {
      Tensor& gx = X->ensure_grad();
      if (gx.rank() == 2) {
        gemm(self.grad, false, W->value, true, gx, true);
      } else {
        Tensor gx2 = gx.reshaped({n, W->value.rows()});
        gemm(self.grad, false, W->value, true, gx2, true);
        gx.storage() = std::move(gx2.storage());
      }
    }
    if (wants_grad(W)) {
      if (X->value.rank() == 2) {
        gemm(X->value, true, self.grad, false, W->ensure_grad(), true);
      } else {
        const Tensor x2 = X->value.reshaped({n, W->value.rows()});
        gemm(x2, true, self.grad, false, W->ensure_grad(), true);
      }
    }
    if (self.inputs.size() > 2 && wants_grad(self.inputs[2])) {
      auto gb = self.inputs[2]->ensure_grad().data();
      for (std::size_t r = 0; r < n; ++r) {
        auto g = self.grad.row(r);
        for (std::size_t j = 0; j < g.size(); ++j) gb[j] += g[j];
      }
    }
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  const auto bv = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    const auto g = self.grad.data();
    for (auto& in : self.inputs) {
      if (!wants_grad(in)) continue;
      auto gi = in->ensure_grad().data();
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  const auto bv = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    const auto g = self.grad.data();
    if (wants_grad(self.inputs[0])) {
      auto gi = self.inputs[0]->ensure_grad().data();
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
    if (wants_grad(self.inputs[1])) {
      auto gi = self.inputs[1]->ensure_grad().data();
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] -= g[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  const auto bv = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    const auto g = self.grad.data();
    auto& A = self.inputs[0];
    auto& B = self.inputs[1];
    if (wants_grad(A)) {
      auto gi = A->ensure_grad().data();
      const auto bv = B->value.data();
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * bv[i];
    }
    if (wants_grad(B)) {
      auto gi = B->ensure_grad().data();
      const auto av = A->value.data();
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * av[i];
    }
  });
}

Var scale(const Var& x, double factor) {
  require_defined(x, "scale");
  Tensor out = x.value();
  for (auto& v : out.data()) v *= factor;
  return make_result(std::move(out), {x}, [factor](Node& self) {
    const auto g = self.grad.data();
    auto gi = self.inputs[0]->ensure_grad().data();
    for (std::size_t i = 0; i < g.size(); ++i) gi[i] += factor * g[i];
  });
}

Var add_row(const Var& x, const Var& row) {
  require_row_vector(x, row, "add_row");
  Tensor out = x.value();
  const std::size_t n = out.rows();
  const auto r = row.value().data();
  for (std::size_t i = 0; i < n; ++i) {
    auto o = out.row(i);
    for (std::size_t j = 0; j < o.size(); ++j) o[j] += r[j];
  }
  return make_result(std::move(out), {x, row}, [n](Node& self) {
    auto& X = self.inputs[0];
    auto& R = self.inputs[1];
    if (wants_grad(X)) {
      auto gx = X->ensure_grad().data();
      const auto g = self.grad.data();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (wants_grad(R)) {
      auto gr = R->ensure_grad().data();
      for (std::size_t i = 0; i < n; ++i) {
        const auto g = self.grad.row(i);
        for (std::size_t j = 0; j < g.size(); ++j) gr[j] += g[j];
      }
    }
  });
}

Var mul_row(const Var& x, const Var& row) {
  require_row_vector(x, row, "mul_row");
  Tensor out = x.value();
  const std::size_t n = out.rows();
  const auto r = row.value().data();
  for (std::size_t i = 0; i < n; ++i) {
    auto o = out.row(i);
    for (std::size_t j = 0; j < o.size(); ++j) o[j] *= r[j];
  }
  return make_result(std::move(out), {x, row}, [n](Node& self) {
    auto& X = self.inputs[0];
    auto& R = self.inputs[1];
    const auto rv = R->value.data();
    if (wants_grad(X)) {
      Tensor& gx = X->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        const auto g = self.grad.row(i);
        auto gxi = gx.row(i);
        for (std::size_t j = 0; j < g.size(); ++j) gxi[j] += g[j] * rv[j];
      }
    }
    if (wants_grad(R)) {
      auto gr = R->ensure_grad().data();
      for (std::size_t i = 0; i < n; ++i) {
        const auto g = self.grad.row(i);
        const auto xi = X->value.row(i);
        for (std::size_t j = 0; j < g.size(); ++j) gr[j] += g[j] * xi[j];
      }
    }
  });
}

Var modulate(const Var& x, const Var& shift, const Var& scale_row) {
  require_row_vector(x, shift, "modulate");
  require_row_vector(x, scale_row, "modulate");
  Tensor out = x.value();
  const std::size_t n = out.rows();
  const auto sh = shift.value().data();
  const auto sc = scale_row.value().data();
  for (std::size_t i = 0; i < n; ++i) {
    auto o = out.row(i);
    for (std::size_t j = 0; j < o.size(); ++j) o[j] = o[j] * (1.0 + sc[j]) + sh[j];
  }
  return make_result(std::move(out), {x, shift, scale_row}, [n](Node& self) {
    auto& X = self.inputs[0];
    auto& SH = self.inputs[1];
    auto& SC = self.inputs[2];
    const auto sc = SC->value.data();
    if (wants_grad(X)) {
      Tensor& gx = X->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        const auto g = self.grad.row(i);
        auto gxi = gx.row(i);
        for (std::size_t j = 0; j < g.size(); ++j) gxi[j] += g[j] * (1.0 + sc[j]);
      }
    }
    if (wants_grad(SH)) {
      auto gs = SH->ensure_grad().data();
      for (std::size_t i = 0; i < n; ++i) {
        const auto g = self.grad.row(i);
        for (std::size_t j = 0; j < g.size(); ++j) gs[j] += g[j];
      }
    }
    if (wants_grad(SC)) {
      auto gs = SC->ensure_grad().data();
      for (std::size_t i = 0; i < n; ++i) {
        const auto g = self.grad.row(i);
        const auto xi = X->value.row(i);
        for (std::size_t j = 0; j < g.size(); ++j) gs[j] += g[j] * xi[j];
      }
    }
  });
}

Var gelu(const Var& x) {
  require_defined(x, "gelu");
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  Tensor out = x.value();
  for (auto& v : out.data()) {
    const double u = c * (v + 0.044715 * v * v * v);
    v = 0.5 * v * (1.0 + std::tanh(u));
  }
  return make_result(std::move(out), {x}, [](Node& self) {
    auto& X = self.inputs[0];
    const auto xv = X->value.data();
    const auto g = self.grad.data();
    auto gx = X->ensure_grad().data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xv[i];
      const double u = c * (v + 0.044715 * v * v * v);
      const double th = std::tanh(u);
      const double du = c * (1.0 + 3.0 * 0.044715 * v * v);
      gx[i] += g[i] * (0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du);
    }
  });
}

Var silu(const Var& x) {
  require_defined(x, "silu");
  Tensor out = x.value();
  for (auto& v : out.data()) v = v / (1.0 + std::exp(-v));
  return make_result(std::move(out), {x}, [](Node& self) {
    auto& X = self.inputs[0];
    const auto xv = X->value.data();
    const auto g = self.grad.data();
    auto gx = X->ensure_grad().data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = 1.0 / (1.0 + std::exp(-xv[i]));
      gx[i] += g[i] * (s + xv[i] * s * (1.0 - s));
    }
  });
}

Var layer_norm(const Var& x, double eps) {
  require_defined(x, "layer_norm");
  const std::size_t n = x.rows(), d = x.cols();
  Tensor out(x.shape());
  std::vector<double> inv_std(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto xi = x.value().row(i);
    double mu = 0.0;
    for (double v : xi) mu += v;
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (double v : xi) var += (v - mu) * (v - mu);
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    auto oi = out.row(i);
    for (std::size_t j = 0; j < d; ++j) oi[j] = (xi[j] - mu) * inv_std[i];
  }
  return make_result(std::move(out), {x}, [n, d, inv_std = std::move(inv_std)](Node& self) {
    Tensor& gx = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      const auto g = self.grad.row(i);
      const auto y = self.value.row(i);
      double mg = 0.0, mgy = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        mg += g[j];
        mgy += g[j] * y[j];
      }
      mg /= static_cast<double>(d);
      mgy /= static_cast<double>(d);
      auto gxi = gx.row(i);
      for (std::size_t j = 0; j < d; ++j) gxi[j] += inv_std[i] * (g[j] - mg - y[j] * mgy);
    }
  });
}

Var layer_norm(const Var& x, const Parameter& gain, const Parameter& bias, double eps) {
  return add_row(mul_row(layer_norm(x, eps), gain.var()), bias.var());
}

Var softmax(const Var& x, int axis) {
  require_defined(x, "softmax");
  const auto& shape = x.shape();
  const int rank = static_cast<int>(shape.size());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw DimensionError("softmax: invalid axis");
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= shape[i];
  for (int i = axis + 1; i < rank; ++i) inner *= shape[i];
  const std::size_t len = shape[axis];

  Tensor out(shape);
  const auto xv = x.value().data();
  auto o = out.data();
  for (std::size_t a = 0; a < outer; ++a) {
    for (std::size_t b = 0; b < inner; ++b) {
      const std::size_t base = a * len * inner + b;
      double mx = -INFINITY;
      for (std::size_t j = 0; j < len; ++j) mx = std::max(mx, xv[base + j * inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        const double e = std::exp(xv[base + j * inner] - mx);
        o[base + j * inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < len; ++j) o[base + j * inner] /= z;
    }
  }
  return make_result(std::move(out), {x}, [outer, inner, len](Node& self) {
    const auto y = self.value.data();
    const auto g = self.grad.data();
    auto gx = self.inputs[0]->ensure_grad().data();
    for (std::size_t a = 0; a < outer; ++a) {
      for (std::size_t b = 0; b < inner; ++b) {
        const std::size_t base = a * len * inner + b;
        double dot = 0.0;
        for (std::size_t j = 0; j < len; ++j) dot += g[base + j * inner] * y[base + j * inner];
        for (std::size_t j = 0; j < len; ++j) {
          const std::size_t k = base + j * inner;
          gx[k] += y[k] * (g[k] - dot);
        }
      }
    }
  });
}

Var log_softmax(const Var& x) {
  require_defined(x, "log_softmax");
  const std::size_t n = x.rows(), d = x.cols();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const auto xi = x.value().row(i);
    const double mx = *std::max_element(xi.begin(), xi.end());
    double z = 0.0;
    for (double v : xi) z += std::exp(v - mx);
    const double lz = mx + std::log(z);
    auto oi = out.row(i);
    for (std::size_t j = 0; j < d; ++j) oi[j] = xi[j] - lz;
  }
  return make_result(std::move(out), {x}, [n, d](Node& self) {
    Tensor& gx = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      const auto g = self.grad.row(i);
      const auto y = self.value.row(i);
      double gs = 0.0;
      for (double v : g) gs += v;
      auto gxi = gx.row(i);
      for (std::size_t j = 0; j < d; ++j) gxi[j] += g[j] - std::exp(y[j]) * gs;
    }
  });
}

Var cross_entropy(const Var& logits, std::span<const std::int32_t> targets,
                  std::span<const std::uint8_t> mask) {
  require_defined(logits, "cross_entropy");
  const std::size_t n = logits.rows(), v = logits.cols();
  if (targets.size() != n) throw DimensionError("cross_entropy: targets length mismatch");
  if (!mask.empty() && mask.size() != n) {
    throw DimensionError("cross_entropy: mask length mismatch");
  }
  for (auto t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= v) {
      throw IndexError("cross_entropy: target " + std::to_string(t) +
                       " outside vocabulary of " + std::to_string(v));
    }
  }
  std::vector<std::int32_t> tgt(targets.begin(), targets.end());
  std::vector<std::uint8_t> sel(n, 1);
  if (!mask.empty()) std::copy(mask.begin(), mask.end(), sel.begin());
  std::size_t count = 0;
  for (auto s : sel) count += s ? 1 : 0;

  // Cache row softmax for the backward pass.
  Tensor probs({n, v});
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto xi = logits.value().row(i);
    const double mx = *std::max_element(xi.begin(), xi.end());
    double z = 0.0;
    auto pi = probs.row(i);
    for (std::size_t j = 0; j < v; ++j) {
      pi[j] = std::exp(xi[j] - mx);
      z += pi[j];
    }
    for (auto& p : pi) p /= z;
    if (sel[i]) total += -(xi[tgt[i]] - mx - std::log(z));
  }
  const double loss = count ? total / static_cast<double>(count) : 0.0;
  return make_result(
      Tensor::scalar(loss), {logits},
      [n, v, count, tgt = std::move(tgt), sel = std::move(sel),
       probs = std::move(probs)](Node& self) {
        if (count == 0) return;
        const double g = self.grad[0] / static_cast<double>(count);
        Tensor& gx = self.inputs[0]->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
          if (!sel[i]) continue;
          auto gxi = gx.row(i);
          const auto pi = probs.row(i);
          for (std::size_t j = 0; j < v; ++j) gxi[j] += g * pi[j];
          gxi[tgt[i]] -= g;
        }
      });
}

Var mse(const Var& pred, const Tensor& target) {
  require_defined(pred, "mse");
  if (pred.value().size() != target.size()) throw DimensionError("mse: size mismatch");
  const auto p = pred.value().data();
  const auto t = target.data();
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - t[i]) * (p[i] - t[i]);
  const double n = static_cast<double>(p.size());
  return make_result(Tensor::scalar(s / n), {pred}, [target, n](Node& self) {
    auto& P = self.inputs[0];
    const auto p = P->value.data();
    const auto t = target.data();
    auto gp = P->ensure_grad().data();
    const double g = self.grad[0];
    for (std::size_t i = 0; i < p.size(); ++i) gp[i] += g * 2.0 * (p[i] - t[i]) / n;
  });
}

Var gather_rows(const Var& table, std::span<const std::int32_t> ids) {
  require_defined(table, "gather_rows");
  const std::size_t rows = table.rows(), d = table.cols();
  for (auto id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= rows) {
      throw IndexError("gather_rows: id " + std::to_string(id) + " outside [0, " +
                       std::to_string(rows) + ")");
    }
  }
  Tensor out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto src = table.value().row(static_cast<std::size_t>(ids[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  std::vector<std::int32_t> idx(ids.begin(), ids.end());
  return make_result(std::move(out), {table}, [idx = std::move(idx)](Node& self) {
    Tensor& gt = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto g = self.grad.row(i);
      auto dst = gt.row(static_cast<std::size_t>(idx[i]));
      for (std::size_t j = 0; j < g.size(); ++j) dst[j] += g[j];
    }
  });
}

Var embedding_lookup(const Parameter& table, std::span<const std::int32_t> ids) {
  return gather_rows(table.var(), ids);
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t n = parts[0].rows();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    require_defined(p, "concat_cols");
    if (p.rows() != n) throw DimensionError("concat_cols: row count mismatch");
    widths.push_back(p.cols());
    total += p.cols();
  }
  Tensor out({n, total});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto src = p.value().row(i);
      std::copy(src.begin(), src.end(), out.row(i).begin() + static_cast<long>(offset));
    }
    offset += p.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return make_result(std::move(out), std::move(inputs),
                     [n, widths = std::move(widths)](Node& self) {
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                         auto& in = self.inputs[k];
                         if (wants_grad(in)) {
                           Tensor& gi = in->ensure_grad();
                           for (std::size_t i = 0; i < n; ++i) {
                             const auto g = self.grad.row(i);
                             auto dst = gi.row(i);
                             for (std::size_t j = 0; j < widths[k]; ++j) {
                               dst[j] += g[off + j];
                             }
                           }
                         }
                         off += widths[k];
                       }
                     });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t d = parts[0].cols();
  std::size_t total = 0;
  std::vector<std::size_t> heights;
  for (const auto& p : parts) {
    require_defined(p, "concat_rows");
    if (p.cols() != d) throw DimensionError("concat_rows: column count mismatch");
    heights.push_back(p.rows());
    total += p.rows();
  }
  Tensor out({total, d});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto src = p.value().data();
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<long>(offset * d));
    offset += p.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return make_result(std::move(out), std::move(inputs),
                     [d, heights = std::move(heights)](Node& self) {
                       std::size_t off = 0;
                       const auto g = self.grad.data();
                       for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                         auto& in = self.inputs[k];
                         if (wants_grad(in)) {
                           auto gi = in->ensure_grad().data();
                           for (std::size_t i = 0; i < heights[k] * d; ++i) {
                             gi[i] += g[off * d + i];
                           }
                         }
                         off += heights[k];
                       }
                     });
}

Var slice_rows(const Var& x, std::size_t begin, std::size_t end) {
  require_defined(x, "slice_rows");
  if (begin > end || end > x.rows()) throw DimensionError("slice_rows: range out of bounds");
  const std::size_t d = x.cols();
  Tensor out({end - begin, d});
  const auto src = x.value().data();
  std::copy(src.begin() + static_cast<long>(begin * d), src.begin() + static_cast<long>(end * d),
            out.data().begin());
  return make_result(std::move(out), {x}, [begin, d](Node& self) {
    auto gx = self.inputs[0]->ensure_grad().data();
    const auto g = self.grad.data();
    for (std::size_t i = 0; i < g.size(); ++i) gx[begin * d + i] += g[i];
  });
}

Var slice_cols(const Var& x, std::size_t begin, std::size_t end) {
  require_defined(x, "slice_cols");
  if (begin > end || end > x.cols()) throw DimensionError("slice_cols: range out of bounds");
  const std::size_t n = x.rows(), w = end - begin;
  Tensor out({n, w});
  for (std::size_t i = 0; i < n; ++i) {
    const auto src = x.value().row(i);
    std::copy(src.begin() + static_cast<long>(begin), src.begin() + static_cast<long>(end),
              out.row(i).begin());
  }
  return make_result(std::move(out), {x}, [n, begin, w](Node& self) {
    Tensor& gx = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      const auto g = self.grad.row(i);
      auto dst = gx.row(i);
      for (std::size_t j = 0; j < w; ++j) dst[begin + j] += g[j];
    }
  });
}

Var transpose(const Var& x) {
  require_matrix(x, "transpose");
  const std::size_t n = x.rows(), d = x.cols();
  Tensor out({d, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out.at(j, i) = x.value().at(i, j);
  }
  return make_result(std::move(out), {x}, [n, d](Node& self) {
    Tensor& gx = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) gx.at(i, j) += self.grad.at(j, i);
    }
  });
}

Var reshape(const Var& x, Shape shape) {
  require_defined(x, "reshape");
  Tensor out = x.value().reshaped(std::move(shape));
  return make_result(std::move(out), {x}, [](Node& self) {
    auto gx = self.inputs[0]->ensure_grad().data();
    const auto g = self.grad.data();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var sum(const Var& x) {
  require_defined(x, "sum");
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return make_result(Tensor::scalar(s), {x}, [](Node& self) {
    const double g = self.grad[0];
    for (auto& v : self.inputs[0]->ensure_grad().data()) v += g;
  });
}

Var mean(const Var& x) {
  require_defined(x, "mean");
  const double n = static_cast<double>(x.value().size());
  return scale(sum(x), n > 0 ? 1.0 / n : 0.0);
}

// ---------------------------------------------------------------------------

GradCheckReport grad_check(const std::function<Var()>& f, const ParameterList& params,
                           double step, double floor) {
  zero_grads(params);
  Var loss = f();
  if (!loss.value().all_finite()) throw NumericError("grad_check: non-finite function value");
  backward(loss);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (auto* p : params) analytic.push_back(p->grad());

  GradCheckReport report;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k]->value().data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + step;
      const double fp = f().value()[0];
      values[i] = original - step;
      const double fm = f().value()[0];
      values[i] = original;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw NumericError("grad_check: non-finite function value at perturbed point");
      }
      const double numeric = (fp - fm) / (2.0 * step);
      const double a = analytic[k][i];
      const double abs_err = std::abs(a - numeric);
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      const double rel = abs_err / denom;
      report.max_absolute_error = std::max(report.max_absolute_error, abs_err);
      if (rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_parameter = params[k]->name();
        report.worst_index = i;
      }
      ++report.checked;
    }
  }
  return report;
}

}  // namespace diflow::nn

#include "mumodig/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace mumodig {

namespace {

std::size_t shape_product(std::span<const std::size_t> shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

void check_valid(const Tensor& t, const char* who) {
  if (!t.valid()) throw TensorError(std::string(who) + ": empty tensor");
}

}  // namespace

std::string shape_to_string(std::span<const std::size_t> shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  return full(std::move(shape), 0.0);
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->values.assign(shape_product(shape), value);
  impl->shape = std::move(shape);
  return Tensor(std::move(impl));
}

Tensor Tensor::from_values(std::vector<std::size_t> shape, std::vector<double> values) {
  if (shape_product(shape) != values.size()) {
    throw TensorError("from_values: shape " + shape_to_string(shape) + " wants " +
                      std::to_string(shape_product(shape)) + " values, got " +
                      std::to_string(values.size()));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return full({1}, value); }

Tensor Tensor::random_uniform(std::vector<std::size_t> shape, Rng& rng, double lo, double hi) {
  Tensor t = zeros(std::move(shape));
  for (double& v : t.mutable_values()) v = rng.uniform(lo, hi);
  return t;
}

Tensor Tensor::random_normal(std::vector<std::size_t> shape, Rng& rng, double mean,
                             double stddev) {
  Tensor t = zeros(std::move(shape));
  for (double& v : t.mutable_values()) v = rng.normal(mean, stddev);
  return t;
}

const std::vector<std::size_t>& Tensor::shape() const {
  check_valid(*this, "shape");
  return impl_->shape;
}

std::size_t Tensor::size() const {
  check_valid(*this, "size");
  return impl_->values.size();
}

std::span<const double> Tensor::values() const {
  check_valid(*this, "values");
  return impl_->values;
}

double Tensor::value_at(std::size_t flat_index) const {
  check_valid(*this, "value_at");
  if (flat_index >= impl_->values.size()) {
    throw TensorError("value_at: index " + std::to_string(flat_index) + " out of range for " +
                      shape_to_string(impl_->shape));
  }
  return impl_->values[flat_index];
}

std::size_t Tensor::channels() const {
  if (shape().size() != 3) throw TensorError("channels: tensor is not {C,H,W}, shape " + shape_to_string(shape()));
  return impl_->shape[0];
}
std::size_t Tensor::height() const {
  if (shape().size() != 3) throw TensorError("height: tensor is not {C,H,W}, shape " + shape_to_string(shape()));
  return impl_->shape[1];
}
std::size_t Tensor::width() const {
  if (shape().size() != 3) throw TensorError("width: tensor is not {C,H,W}, shape " + shape_to_string(shape()));
  return impl_->shape[2];
}

bool Tensor::requires_grad() const {
  check_valid(*this, "requires_grad");
  return impl_->requires_grad;
}

Tensor& Tensor::set_requires_grad(bool requires_grad) {
  check_valid(*this, "set_requires_grad");
  if (impl_->op) throw TensorError("set_requires_grad: only leaves may change grad mode");
  impl_->requires_grad = requires_grad;
  return *this;
}

bool Tensor::is_leaf() const {
  check_valid(*this, "is_leaf");
  return impl_->op == nullptr;
}

std::span<double> Tensor::mutable_values() {
  check_valid(*this, "mutable_values");
  if (impl_->op) throw TensorError("mutable_values: recorded tensors are immutable");
  return impl_->values;
}

Tensor Tensor::clone() const {
  check_valid(*this, "clone");
  return from_values(impl_->shape, impl_->values);
}

Tensor Tensor::grad_leaf() const {
  Tensor t = clone();
  t.set_requires_grad(true);
  return t;
}

// --- result construction ----------------------------------------------------

Tensor make_result(std::vector<std::size_t> shape, std::vector<double> values, const char* kind,
                   std::span<const Tensor> inputs,
                   std::function<void(const OpNode&, const std::vector<double>&,
                                      const std::vector<std::vector<double>*>&)>
                       backward_fn) {
  bool needs_grad = false;
  for (const Tensor& t : inputs) needs_grad = needs_grad || t.requires_grad();

  Tensor out = Tensor::from_values(std::move(shape), std::move(values));
  for (double v : out.values()) {
    if (!std::isfinite(v)) {
      throw TensorError(std::string(kind) + ": non-finite value in result");
    }
  }
  if (!needs_grad) return out;

  auto node = std::make_shared<OpNode>();
  node->kind = kind;
  node->inputs.reserve(inputs.size());
  for (const Tensor& t : inputs) node->inputs.push_back(t.impl_);
  node->output = out.impl_.get();
  node->backward = std::move(backward_fn);
  out.impl_->op = std::move(node);
  out.impl_->requires_grad = true;
  return out;
}

// --- backward engine ----------------------------------------------------------

Tensor Gradients::at(const Tensor& leaf) const {
  auto it = by_leaf_.find(leaf.id());
  if (it != by_leaf_.end()) return it->second;
  return Tensor::zeros(leaf.shape());
}

bool Gradients::contains(const Tensor& leaf) const {
  return by_leaf_.find(leaf.id()) != by_leaf_.end();
}

Gradients backward(const Tensor& output) {
  check_valid(output, "backward");
  if (output.size() != 1) {
    throw TensorError("backward: output must be scalar, shape " +
                      shape_to_string(output.shape()));
  }
  Gradients result;
  detail::TensorImpl* root = output.impl_.get();
  if (!root->requires_grad) return result;  // constant output: all gradients zero

  // Topological order of everything that needs a gradient, via iterative
  // post-order DFS restricted to requires-grad impls.
  std::vector<detail::TensorImpl*> order;
  std::unordered_set<detail::TensorImpl*> seen;
  struct Frame {
    detail::TensorImpl* impl;
    std::size_t next_input;
  };
  std::vector<Frame> stack;
  stack.push_back({root, 0});
  seen.insert(root);
  while (!stack.empty()) {
    Frame& frame = stack.back();
    detail::TensorImpl* impl = frame.impl;
    if (impl->op && frame.next_input < impl->op->inputs.size()) {
      detail::TensorImpl* input = impl->op->inputs[frame.next_input].get();
      ++frame.next_input;
      if (input->requires_grad && seen.insert(input).second) {
        stack.push_back({input, 0});
      }
    } else {
      order.push_back(impl);
      stack.pop_back();
    }
  }

  std::unordered_map<detail::TensorImpl*, std::vector<double>> grad;
  grad[root] = {1.0};

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorImpl* impl = *it;
    if (!impl->op) continue;  // leaf
    auto git = grad.find(impl);
    if (git == grad.end()) continue;  // no downstream contribution
    const std::vector<double>& grad_out = git->second;

    std::vector<std::vector<double>*> grad_in(impl->op->inputs.size(), nullptr);
    for (std::size_t i = 0; i < impl->op->inputs.size(); ++i) {
      detail::TensorImpl* input = impl->op->inputs[i].get();
      if (!input->requires_grad) continue;
      auto [slot, inserted] = grad.try_emplace(input);
      if (inserted) slot->second.assign(input->values.size(), 0.0);
      grad_in[i] = &slot->second;
    }
    impl->op->backward(*impl->op, grad_out, grad_in);
  }

  for (detail::TensorImpl* impl : order) {
    if (impl->op || !impl->requires_grad) continue;
    auto git = grad.find(impl);
    if (git == grad.end()) continue;
    result.by_leaf_.emplace(static_cast<const void*>(impl),
                            Tensor::from_values(impl->shape, std::move(git->second)));
  }
  return result;
}

// --- value utilities ----------------------------------------------------------

Tensor clamp(const Tensor& a, double lo, double hi) {
  Tensor out = a.clone();
  for (double& v : out.mutable_values()) v = std::min(hi, std::max(lo, v));
  return out;
}

Tensor sign(const Tensor& a) {
  Tensor out = a.clone();
  for (double& v : out.mutable_values()) v = (v > 0.0) ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
  return out;
}

double mean_abs(const Tensor& a) {
  return a.size() == 0 ? 0.0 : sum_abs(a) / static_cast<double>(a.size());
}

double sum_abs(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += std::abs(v);
  return s;
}

double l2_norm(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

double max_abs(const Tensor& a) {
  double m = 0.0;
  for (double v : a.values()) m = std::max(m, std::abs(v));
  return m;
}

double min_value(const Tensor& a) {
  double m = a.values()[0];
  for (double v : a.values()) m = std::min(m, v);
  return m;
}

double max_value(const Tensor& a) {
  double m = a.values()[0];
  for (double v : a.values()) m = std::max(m, v);
  return m;
}

double dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw TensorError("dot: size mismatch " + shape_to_string(a.shape()) + " vs " +
                      shape_to_string(b.shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
  return s;
}

bool all_finite(const Tensor& a) {
  for (double v : a.values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool elementwise_le(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw TensorError("elementwise_le: shape mismatch " + shape_to_string(a.shape()) + " vs " +
                      shape_to_string(b.shape()));
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.values()[i] > b.values()[i]) return false;
  }
  return true;
}

std::uint64_t content_digest(const Tensor& a) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](const unsigned char* bytes, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ull;
    }
  };
  for (std::size_t d : a.shape()) {
    std::uint64_t v = d;
    mix(reinterpret_cast<const unsigned char*>(&v), sizeof v);
  }
  mix(reinterpret_cast<const unsigned char*>(a.values().data()),
      a.values().size() * sizeof(double));
  return h;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(double)) == 0;
}

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                  const Tensor& x, double h) {
  if (h <= 0.0) throw TensorError("finite_difference_gradient: h must be positive");
  Tensor grad = Tensor::zeros(x.shape());
  Tensor probe = x.clone();
  auto p = probe.mutable_values();
  auto g = grad.mutable_values();
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double saved = p[i];
    p[i] = saved + h;
    const double plus = f(probe);
    p[i] = saved - h;
    const double minus = f(probe);
    p[i] = saved;
    g[i] = (plus - minus) / (2.0 * h);
  }
  return grad;
}

}  // namespace mumodig

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mumodig/errors.hpp"
#include "mumodig/rng.hpp"

namespace mumodig {

struct OpNode;
class Gradients;

namespace detail {

struct TensorImpl {
  std::vector<std::size_t> shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::shared_ptr<OpNode> op;  // null for leaves
};

}  // namespace detail

std::string shape_to_string(std::span<const std::size_t> shape);

// Dense double-precision tensor with optional reverse-mode recording.
// Copies are shallow (shared storage); recorded tensors are immutable.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double value);
  static Tensor from_values(std::vector<std::size_t> shape, std::vector<double> values);
  static Tensor scalar(double value);
  static Tensor random_uniform(std::vector<std::size_t> shape, Rng& rng, double lo = 0.0,
                               double hi = 1.0);
  static Tensor random_normal(std::vector<std::size_t> shape, Rng& rng, double mean = 0.0,
                              double stddev = 1.0);

  bool valid() const { return impl_ != nullptr; }
  const std::vector<std::size_t>& shape() const;
  std::size_t size() const;
  std::span<const double> values() const;
  double value_at(std::size_t flat_index) const;

  // 3-D image accessors; error unless shape is {C,H,W}.
  std::size_t channels() const;
  std::size_t height() const;
  std::size_t width() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool requires_grad);
  bool is_leaf() const;

  // Mutable storage access, leaves only. Recorded results are immutable:
  // a graph must not be reused across mutations of its leaves.
  std::span<double> mutable_values();

  // Deep copy as a fresh non-recorded leaf.
  Tensor clone() const;
  // Same values as a fresh leaf with requires_grad set; used as the
  // differentiation root for input gradients.
  Tensor grad_leaf() const;

  // Stable identity for gradient keying.
  const void* id() const { return impl_.get(); }

 private:
  friend Tensor make_result(std::vector<std::size_t>, std::vector<double>, const char*,
                            std::span<const Tensor>,
                            std::function<void(const OpNode&, const std::vector<double>&,
                                               const std::vector<std::vector<double>*>&)>);
  friend class Gradients;
  friend Gradients backward(const Tensor&);

  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;
};

// One recorded primitive application. Nodes form a DAG hanging off result
// tensors; the backward pass walks them in reverse topological order and
// visits each node exactly once.
struct OpNode {
  const char* kind;
  std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
  const detail::TensorImpl* output = nullptr;
  // grad_in[i] is null when input i does not need a gradient; otherwise it
  // points at a zero-initialized accumulator the hook adds into.
  std::function<void(const OpNode&, const std::vector<double>& grad_out,
                     const std::vector<std::vector<double>*>& grad_in)>
      backward;
};

// Implementation hook for the primitives: materializes the result tensor and
// records an OpNode when any input requires a gradient.
Tensor make_result(std::vector<std::size_t> shape, std::vector<double> values, const char* kind,
                   std::span<const Tensor> inputs,
                   std::function<void(const OpNode&, const std::vector<double>&,
                                      const std::vector<std::vector<double>*>&)>
                       backward_fn);

// Gradients of one backward pass, keyed by leaf identity. Leaves that do not
// reach the differentiated output get zero gradients.
class Gradients {
 public:
  Tensor at(const Tensor& leaf) const;
  bool contains(const Tensor& leaf) const;
  std::size_t entry_count() const { return by_leaf_.size(); }

 private:
  friend Gradients backward(const Tensor&);
  std::unordered_map<const void*, Tensor> by_leaf_;
};

// Reverse-mode differentiation of a scalar output with respect to every
// requires-grad leaf it depends on.
Gradients backward(const Tensor& output);

// --- differentiable primitives -------------------------------------------
// Each records itself onto the result when any operand requires a gradient;
// on plain tensors they are ordinary value arithmetic.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor matmul(const Tensor& a, const Tensor& b);
// input {Cin,H,W}, kernel {Cout,Cin,kh,kw}, optional bias {Cout};
// output {Cout, (H+2p-kh)/s+1, (W+2p-kw)/s+1} with zero padding.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor* bias,
              std::size_t stride, std::size_t padding);
Tensor relu(const Tensor& a);
Tensor softplus(const Tensor& a);
// {C,H,W} -> {C,out_h,out_w}, bilinear, half-pixel centers, edge clamped.
Tensor bilinear_resize(const Tensor& a, std::size_t out_h, std::size_t out_w);
// zero padding of the two spatial dimensions of a {C,H,W} tensor
Tensor pad(const Tensor& a, std::size_t top, std::size_t bottom, std::size_t left,
           std::size_t right);
Tensor mean(const Tensor& a);  // -> scalar {1}
Tensor log(const Tensor& a);   // elementwise; rejects non-positive values
Tensor softmax(const Tensor& a);  // 1-D only, numerically stabilized
Tensor reshape(const Tensor& a, std::vector<std::size_t> new_shape);
Tensor pick(const Tensor& a, std::size_t flat_index);  // -> scalar {1}
// Rotation/translation/scale about the image center with bilinear
// resampling, zero outside the source. Linear in the input values.
Tensor affine_warp(const Tensor& a, double angle_deg, double translate_y_frac,
                   double translate_x_frac, double scale_factor);
// Box blur normalized by the in-bounds neighbor count; constants are
// preserved exactly. kernel_size odd and >= 3.
Tensor box_blur(const Tensor& a, std::size_t kernel_size);
// Clamp to [0,1]; gradient passes only strictly inside the box.
Tensor clip01(const Tensor& a);

// --- value utilities (never recorded) -------------------------------------

Tensor clamp(const Tensor& a, double lo, double hi);
Tensor sign(const Tensor& a);  // elementwise -1/0/+1
double mean_abs(const Tensor& a);
double sum_abs(const Tensor& a);
double l2_norm(const Tensor& a);
double max_abs(const Tensor& a);
double min_value(const Tensor& a);
double max_value(const Tensor& a);
double dot(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& a);
// true iff every element of a is <= the matching element of b
bool elementwise_le(const Tensor& a, const Tensor& b);
std::uint64_t content_digest(const Tensor& a);  // FNV-1a over shape + value bytes
bool bit_equal(const Tensor& a, const Tensor& b);

// Central-difference gradient (f(x+h e_i) - f(x-h e_i)) / 2h per element.
// Independent of the recorded backward path; the test oracle for it.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                  const Tensor& x, double h);

}  // namespace mumodig

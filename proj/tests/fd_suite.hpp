#pragma once

// Central-finite-difference cross-check of every differentiable primitive.
// Shared between the unit tests and the acceptance suite. The finite
// difference path evaluates forward values only and never touches the
// recorded graph, so it is an independent oracle for backward().

#include <functional>
#include <string>
#include <vector>

#include "testutil.hpp"

namespace testutil {

struct FdOutcome {
  std::string primitive;
  double max_rel_err = 0.0;
  std::size_t trials = 0;
};

namespace fd_detail {

// Scalarize op output as mean(output (*) weights) so every output element's
// gradient is exercised with a distinct coefficient.
struct Trial {
  std::vector<Tensor> inputs;                              // differentiated leaves
  std::function<Tensor(const std::vector<Tensor>&)> apply;  // op under test
  Tensor weights;
};

inline double run_trial(Trial& trial, double h, double& worst) {
  // backward path
  std::vector<Tensor> leaves;
  leaves.reserve(trial.inputs.size());
  for (const Tensor& t : trial.inputs) leaves.push_back(t.grad_leaf());
  const Tensor out = trial.apply(leaves);
  if (!trial.weights.valid()) {
    Rng wrng(content_digest(out) ^ 0x5eed);
    trial.weights = Tensor::random_uniform(out.shape(), wrng, -1.0, 1.0);
  }
  const Tensor objective = mean(mul(out, trial.weights));
  const Gradients grads = backward(objective);

  // finite-difference path, one input at a time
  for (std::size_t which = 0; which < trial.inputs.size(); ++which) {
    auto f = [&](const Tensor& probe) {
      std::vector<Tensor> args = trial.inputs;
      args[which] = probe;
      return mean(mul(trial.apply(args), trial.weights)).value_at(0);
    };
    const Tensor fd = finite_difference_gradient(f, trial.inputs[which], h);
    worst = std::max(worst, max_rel_error(grads.at(leaves[which]), fd));
  }
  return worst;
}

}  // namespace fd_detail

inline std::uint64_t fnv_hash(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::vector<FdOutcome> run_fd_suite(std::size_t trials_per_primitive,
                                           std::uint64_t seed, double h = 1e-5) {
  using fd_detail::Trial;
  std::vector<FdOutcome> outcomes;

  auto run = [&](const std::string& name,
                 const std::function<Trial(Rng&)>& make_trial) {
    FdOutcome outcome{name, 0.0, trials_per_primitive};
    for (std::size_t t = 0; t < trials_per_primitive; ++t) {
      Rng rng(mix_seed(seed, fnv_hash(name), t));
      Trial trial = make_trial(rng);
      fd_detail::run_trial(trial, h, outcome.max_rel_err);
    }
    outcomes.push_back(outcome);
  };

  run("add", [](Rng& rng) {
    Trial t;
    t.inputs = {Tensor::random_uniform({3, 4}, rng, -1, 1),
                Tensor::random_uniform({3, 4}, rng, -1, 1)};
    t.apply = [](const std::vector<Tensor>& in) { return add(in[0], in[1]); };
    return t;
  });
  run("sub", [](Rng& rng) {
    Trial t;
    t.inputs = {Tensor::random_uniform({3, 4}, rng, -1, 1),
                Tensor::random_uniform({3, 4}, rng, -1, 1)};
    t.apply = [](const std::vector<Tensor>& in) { return sub(in[0], in[1]); };
    return t;
  });
  run("mul", [](Rng& rng) {
    Trial t;
    t.inputs = {Tensor::random_uniform({3, 4}, rng, -1, 1),
                Tensor::random_uniform({3, 4}, rng, -1, 1)};
    t.apply = [](const std::vector<Tensor>& in) { return mul(in[0], in[1]); };
    return t;
  });
  run("scale", [](Rng& rng) {
    Trial t;
    const double factor = rng.uniform(-2.0, 2.0);
    t.inputs = {Tensor::random_uniform({2, 5}, rng, -1, 1)};
    t.apply = [factor](const std::vector<Tensor>& in) { return scale(in[0], factor); };
    return t;
  });
  run("matmul", [](Rng& rng) {
    Trial t;
    t.inputs = {Tensor::random_uniform({3, 4}, rng, -1, 1),
                Tensor::random_uniform({4, 2}, rng, -1, 1)};
    t.apply = [](const std::vector<Tensor>& in) { return matmul(in[0], in[1]); };
    return t;
  });
  run("conv2d", [](Rng& rng) {
    Trial t;
    const std::size_t stride = 1 + rng.uniform_index(2);
    const std::size_t padding = rng.uniform_index(2);
    t.inputs = {Tensor::random_uniform({2, 5, 5}, rng, -1, 1),
                Tensor::random_uniform({3, 2, 3, 3}, rng, -1, 1),
                Tensor::random_uniform({3}, rng, -1, 1)};
    t.apply = [stride, padding](const std::vector<Tensor>& in) {
      return conv2d(in[0], in[1], &in[2], stride, padding);
    };
    return t;
  });
  run("relu", [](Rng& rng) {
    Trial t;
    // keep sample points away from the kink so the FD oracle is valid
    Tensor x = Tensor::random_uniform({4, 4}, rng, -1, 1);
    for (double& v : x.mutable_values()) {
      if (std::abs(v) < 1e-3) v = v < 0 ? v - 1e-3 : v + 1e-3;
    }
    t.inputs = {x};
    t.apply = [](const std::vector<Tensor>& in) { return relu(in[0]); };
    return t;
  });
  run("softplus", [](Rng& rng) {
    Trial t;
    t.inputs = {Tensor::random_uniform({4, 4}, rng, -3, 3)};
    t.apply = [](const std::vector<Tensor>& in) { return softplus(in[0]); };
    return t;
  });
  run("bilinear_resize", [](Rng& rng) {
    Trial t;
    const std::size_t oh = 3 + rng.uniform_index(5);
    const std::size_t ow = 3 + rng.uniform_index(5);
    t.inputs = {Tensor::random_uniform({2, 5, 6}, rng, -1, 1)};
    t.apply = [oh, ow](const std::vector<Tensor>& in) {
      return bilinear_resize(in[0], oh, ow);
    };
    return t;
  });
  run("pad", [](Rng& rng) {
    Trial t;
    const std::size_t top = rng.uniform_index(3), bottom = rng.uniform_index(3);
    const std::size_t left = rng.uniform_index(3), right = rng.uniform_index(3);
    t.inputs = {Tensor::random_uniform({2, 4, 4}, rng, -1, 1)};
    t.apply = [top, bottom, left, right](const std::vector<Tensor>& in) {
      return pad(in[0], top, bottom, left, right);
    };
    return t;
  });
  run("mean", [](Rng& rng) {
    Trial t;
    t.inputs = {Tensor::random_uniform({3, 5}, rng, -1, 1)};
    t.apply = [](const std::vector<Tensor>& in) { return mean(in[0]); };
    return t;
  });
  run("log", [](Rng& rng) {
    Trial t;
    t.inputs = {Tensor::random_uniform({4, 3}, rng, 0.1, 2.0)};
    t.apply = [](const std::vector<Tensor>& in) { return log(in[0]); };
    return t;
  });
  run("softmax", [](Rng& rng) {
    Trial t;
    t.inputs = {Tensor::random_uniform({6}, rng, -2, 2)};
    t.apply = [](const std::vector<Tensor>& in) { return softmax(in[0]); };
    return t;
  });
  run("reshape", [](Rng& rng) {
    Trial t;
    t.inputs = {Tensor::random_uniform({2, 6}, rng, -1, 1)};
    t.apply = [](const std::vector<Tensor>& in) { return reshape(in[0], {3, 4}); };
    return t;
  });
  run("pick", [](Rng& rng) {
    Trial t;
    const std::size_t index = rng.uniform_index(12);
    t.inputs = {Tensor::random_uniform({12}, rng, -1, 1)};
    t.apply = [index](const std::vector<Tensor>& in) { return pick(in[0], index); };
    return t;
  });
  run("affine_warp", [](Rng& rng) {
    Trial t;
    const double angle = rng.uniform(-15.0, 15.0);
    const double ty = rng.uniform(-0.1, 0.1), tx = rng.uniform(-0.1, 0.1);
    const double s = rng.uniform(0.9, 1.1);
    t.inputs = {Tensor::random_uniform({2, 6, 6}, rng, -1, 1)};
    t.apply = [angle, ty, tx, s](const std::vector<Tensor>& in) {
      return affine_warp(in[0], angle, ty, tx, s);
    };
    return t;
  });
  run("box_blur", [](Rng& rng) {
    Trial t;
    const std::size_t kernel = rng.uniform_index(2) == 0 ? 3 : 5;
    t.inputs = {Tensor::random_uniform({2, 6, 6}, rng, -1, 1)};
    t.apply = [kernel](const std::vector<Tensor>& in) { return box_blur(in[0], kernel); };
    return t;
  });
  run("clip01", [](Rng& rng) {
    Trial t;
    // keep samples away from the clamp boundaries so the FD oracle is valid
    Tensor x = Tensor::random_uniform({4, 4}, rng, -0.5, 1.5);
    for (double& v : x.mutable_values()) {
      if (std::abs(v) < 1e-3) v += 2e-3;
      if (std::abs(v - 1.0) < 1e-3) v += 2e-3;
    }
    t.inputs = {x};
    t.apply = [](const std::vector<Tensor>& in) { return clip01(in[0]); };
    return t;
  });

  return outcomes;
}

}  // namespace testutil

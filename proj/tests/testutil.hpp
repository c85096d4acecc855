#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mumodig/dataio.hpp"
#include "mumodig/models.hpp"
#include "mumodig/rng.hpp"
#include "mumodig/tensor.hpp"

namespace testutil {

using namespace mumodig;

// Max elementwise relative error with a small denominator floor, so finite
// difference noise near zero does not dominate.
inline double max_rel_error(const Tensor& actual, const Tensor& expected,
                            double denom_floor = 1e-3) {
  double worst = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const double a = actual.values()[i];
    const double e = expected.values()[i];
    worst = std::max(worst, std::abs(a - e) / std::max(std::abs(e), denom_floor));
  }
  return worst;
}

inline bool close(double a, double b, double tol) { return std::abs(a - b) <= tol; }

inline Dataset tiny_synth(std::size_t classes, std::size_t per_class, std::uint64_t seed,
                          const std::string& split, std::array<std::size_t, 3> shape = {3, 12, 12}) {
  SynthSpec spec;
  spec.num_classes = classes;
  spec.image_shape = shape;
  spec.per_class_count = per_class;
  spec.seed = seed;
  spec.split = split;
  return synth_dataset(spec);
}

// A deliberately small random-parameter model; cheap enough for gradient and
// completeness oracles.
inline ClassifierModel tiny_model(std::uint64_t seed, Activation activation = Activation::relu,
                                  std::size_t classes = 3,
                                  std::array<std::size_t, 3> input = {3, 8, 8}) {
  ArchSpec spec;
  spec.arch = ArchKind::mlp;
  spec.activation = activation;
  spec.num_classes = classes;
  spec.input_shape = input;
  spec.init_seed = seed;
  return ClassifierModel::create(spec);
}

}  // namespace testutil

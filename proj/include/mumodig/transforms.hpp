#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mumodig/rng.hpp"
#include "mumodig/tensor.hpp"

namespace mumodig {

enum class TransformKind { identity, resize_pad, affine, blur, noise };

std::string to_string(TransformKind kind);
TransformKind transform_kind_from_string(const std::string& s);

// Sampling ranges for the per-kind parameters; config-exposed for ablation.
struct TransformRanges {
  double rp_ratio_min = 0.8;  // resize_pad downscale ratio in [min, 1)
  double affine_max_angle_deg = 10.0;
  double affine_max_translate = 0.1;  // fraction of each side
  double affine_scale_min = 0.9;
  double affine_scale_max = 1.1;
  double noise_sigma_max = 0.05;
};

// One fully-resolved transformation: all randomness is drawn at sampling
// time, so applying a spec is a pure function of (image, spec). Offsets
// and translations are stored as fractions so a spec is image-size
// agnostic.
struct TransformSpec {
  TransformKind kind = TransformKind::identity;
  // resize_pad
  double ratio = 1.0;
  double offset_y_frac = 0.0, offset_x_frac = 0.0;
  // affine
  double angle_deg = 0.0;
  double translate_y_frac = 0.0, translate_x_frac = 0.0;
  double scale = 1.0;
  // blur
  std::size_t kernel = 3;
  // noise
  double sigma = 0.0;
  std::uint64_t noise_seed = 0;
};

TransformSpec identity_transform();

// Uniform choice of kind from the library, parameters drawn from the ranges
// and frozen into the spec.
TransformSpec sample_transform(std::span<const TransformKind> library,
                               const TransformRanges& ranges, Rng& rng);

// Shape-preserving application; outputs are clipped to [0,1]. Out-of-support
// pixels after resize_pad/affine are zero.
Tensor apply_transform(const Tensor& x, const TransformSpec& spec);

}  // namespace mumodig

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mumodig/tensor.hpp"

namespace mumodig {

enum class BaselineKind { lbq, black, noise, blur };

std::string to_string(BaselineKind kind);

// A path start image together with how it was derived. lbq and black
// baselines are elementwise <= their source; noise and blur carry no
// ordering guarantee.
struct Baseline {
  Tensor image;
  BaselineKind kind;
  std::uint64_t source_digest = 0;
  std::uint64_t seed = 0;
};

// Lower-bound quantization: per channel, sort values ascending, split the
// sorted vector at n_regions-1 random gaps, replace each region with its
// minimum, and scatter the values back to their original positions.
Baseline lbq_baseline(const Tensor& x, std::size_t n_regions, std::uint64_t seed,
                      bool force_black = false);

// Deterministic core with explicit division positions (indices into the
// sorted order after which a new region starts); exposed for oracle tests.
Tensor lbq_quantize_channel_positions(const Tensor& x, std::size_t channel,
                                      const std::vector<std::size_t>& divisions);

// Zero image by default; channel_min instead substitutes each channel's
// minimum value (the lbq_baseline(x, 1) image).
Baseline black_baseline(const Tensor& x, bool channel_min = false);

Baseline noise_baseline(const Tensor& x, double sigma, std::uint64_t seed);
// Count-normalized box blur (see box_blur in tensor.hpp).
Baseline blur_baseline(const Tensor& x, std::size_t kernel_size);

// Distinct values in one channel; used by the LBQ region-count property.
std::size_t distinct_channel_values(const Tensor& x, std::size_t channel);

}  // namespace mumodig

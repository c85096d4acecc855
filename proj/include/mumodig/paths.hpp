#pragma once

#include <span>
#include <vector>

#include "mumodig/tensor.hpp"

namespace mumodig {

// Straight path from baseline to endpoint. Point k (0-based) sits at
// coefficient (k + position_factor) / n_points along the segment, so with
// position_factor <= 1 every coefficient lies in (0, 1].
struct IntegrationPath {
  Tensor baseline;
  Tensor endpoint;
  std::size_t n_points = 1;
  double position_factor = 0.65;
};

void validate_path(const IntegrationPath& path);

Tensor path_direction(const IntegrationPath& path);  // endpoint - baseline

// The n_points interpolated images in ascending coefficient order.
std::vector<Tensor> interpolated_points(const IntegrationPath& path);

// Elementwise non-decreasing along the sequence. The definition quantifies
// over all ordered pairs; transitivity of <= collapses it to adjacent pairs.
bool is_monotonic(std::span<const Tensor> points);

// Straight two-endpoint shortcut: monotonic iff the direction is >= 0.
bool is_monotonic(const IntegrationPath& path);

// Fraction of elements (over all elements) where multiplying the gradient by
// the path direction flips its sign: direction_i != 0, gradient_i != 0, and
// sign(direction_i * gradient_i) != sign(gradient_i). Zero elements on either
// side are excluded from the count.
double sign_conflict_fraction(const Tensor& direction, const Tensor& gradient);

}  // namespace mumodig

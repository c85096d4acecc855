#include "mumodig/paths.hpp"

#include "mumodig/errors.hpp"

namespace mumodig {

void validate_path(const IntegrationPath& path) {
  if (path.baseline.shape() != path.endpoint.shape()) {
    throw TensorError("path: baseline " + shape_to_string(path.baseline.shape()) +
                      " vs endpoint " + shape_to_string(path.endpoint.shape()));
  }
  if (path.n_points < 1) throw TensorError("path: n_points must be >= 1");
  if (path.position_factor < 0.0 || path.position_factor > 1.0) {
    throw TensorError("path: position_factor must lie in [0,1], got " +
                      std::to_string(path.position_factor));
  }
}

Tensor path_direction(const IntegrationPath& path) {
  validate_path(path);
  return sub(path.endpoint, path.baseline);
}

std::vector<Tensor> interpolated_points(const IntegrationPath& path) {
  validate_path(path);
  const Tensor direction = path_direction(path);
  std::vector<Tensor> points;
  points.reserve(path.n_points);
  for (std::size_t k = 0; k < path.n_points; ++k) {
    const double coeff = (static_cast<double>(k) + path.position_factor) /
                         static_cast<double>(path.n_points);
    points.push_back(add(path.baseline, scale(direction, coeff)));
  }
  return points;
}

bool is_monotonic(std::span<const Tensor> points) {
  if (points.empty()) throw TensorError("is_monotonic: empty point sequence");
  for (std::size_t k = 1; k < points.size(); ++k) {
    if (points[k].shape() != points[0].shape()) {
      throw TensorError("is_monotonic: shape mismatch " + shape_to_string(points[0].shape()) +
                        " vs " + shape_to_string(points[k].shape()));
    }
    if (!elementwise_le(points[k - 1], points[k])) return false;
  }
  return true;
}

bool is_monotonic(const IntegrationPath& path) {
  validate_path(path);
  return min_value(path_direction(path)) >= 0.0;
}

double sign_conflict_fraction(const Tensor& direction, const Tensor& gradient) {
  if (direction.shape() != gradient.shape()) {
    throw TensorError("sign_conflict_fraction: shape mismatch " +
                      shape_to_string(direction.shape()) + " vs " +
                      shape_to_string(gradient.shape()));
  }
  if (direction.size() == 0) return 0.0;
  std::size_t conflicts = 0;
  for (std::size_t i = 0; i < direction.size(); ++i) {
    const double d = direction.values()[i];
    const double g = gradient.values()[i];
    // d*g flips the sign of g exactly when d < 0 (and neither is zero).
    if (d < 0.0 && g != 0.0) ++conflicts;
  }
  return static_cast<double>(conflicts) / static_cast<double>(direction.size());
}

}  // namespace mumodig

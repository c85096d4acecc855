#include "mumodig/transforms.hpp"

#include <algorithm>
#include <cmath>

#include "mumodig/errors.hpp"

namespace mumodig {

namespace {

void check_image(const char* who, const Tensor& x) {
  if (x.shape().size() != 3) {
    throw TensorError(std::string(who) + ": expected {C,H,W}, got " + shape_to_string(x.shape()));
  }
}

// Downscale then embed at the sampled offset of a zero canvas. Built from
// the differentiable resize/pad primitives so branch gradients can flow back
// into the untransformed image.
Tensor apply_resize_pad(const Tensor& x, const TransformSpec& spec) {
  const std::size_t h = x.height(), w = x.width();
  const std::size_t h2 = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(
                                                      spec.ratio * static_cast<double>(h))));
  const std::size_t w2 = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(
                                                      spec.ratio * static_cast<double>(w))));
  const std::size_t max_oy = h - h2, max_ox = w - w2;
  const std::size_t oy = std::min(max_oy, static_cast<std::size_t>(spec.offset_y_frac *
                                                                   static_cast<double>(max_oy + 1)));
  const std::size_t ox = std::min(max_ox, static_cast<std::size_t>(spec.offset_x_frac *
                                                                   static_cast<double>(max_ox + 1)));
  return pad(bilinear_resize(x, h2, w2), oy, h - h2 - oy, ox, w - w2 - ox);
}

}  // namespace

std::string to_string(TransformKind kind) {
  switch (kind) {
    case TransformKind::identity: return "identity";
    case TransformKind::resize_pad: return "resize_pad";
    case TransformKind::affine: return "affine";
    case TransformKind::blur: return "blur";
    case TransformKind::noise: return "noise";
  }
  return "?";
}

TransformKind transform_kind_from_string(const std::string& s) {
  if (s == "identity") return TransformKind::identity;
  if (s == "resize_pad") return TransformKind::resize_pad;
  if (s == "affine") return TransformKind::affine;
  if (s == "blur") return TransformKind::blur;
  if (s == "noise") return TransformKind::noise;
  throw ConfigError("unknown transform '" + s + "'");
}

TransformSpec identity_transform() { return TransformSpec{}; }

TransformSpec sample_transform(std::span<const TransformKind> library,
                               const TransformRanges& ranges, Rng& rng) {
  if (library.empty()) throw TensorError("sample_transform: empty library");
  TransformSpec spec;
  spec.kind = library[rng.uniform_index(library.size())];
  switch (spec.kind) {
    case TransformKind::identity:
      break;
    case TransformKind::resize_pad:
      spec.ratio = rng.uniform(ranges.rp_ratio_min, 1.0);
      spec.offset_y_frac = rng.uniform();
      spec.offset_x_frac = rng.uniform();
      break;
    case TransformKind::affine:
      spec.angle_deg = rng.uniform(-ranges.affine_max_angle_deg, ranges.affine_max_angle_deg);
      spec.translate_y_frac = rng.uniform(-ranges.affine_max_translate, ranges.affine_max_translate);
      spec.translate_x_frac = rng.uniform(-ranges.affine_max_translate, ranges.affine_max_translate);
      spec.scale = rng.uniform(ranges.affine_scale_min, ranges.affine_scale_max);
      break;
    case TransformKind::blur:
      spec.kernel = rng.uniform_index(2) == 0 ? 3 : 5;
      break;
    case TransformKind::noise:
      spec.sigma = ranges.noise_sigma_max * (1.0 - rng.uniform());  // in (0, max]
      spec.noise_seed = rng.next_u64();
      break;
  }
  return spec;
}

Tensor apply_transform(const Tensor& x, const TransformSpec& spec) {
  check_image("apply_transform", x);
  switch (spec.kind) {
    case TransformKind::identity:
      return x;
    case TransformKind::resize_pad:
      return clip01(apply_resize_pad(x, spec));
    case TransformKind::affine:
      return clip01(affine_warp(x, spec.angle_deg, spec.translate_y_frac, spec.translate_x_frac,
                                spec.scale));
    case TransformKind::blur:
      return clip01(box_blur(x, spec.kernel));
    case TransformKind::noise: {
      Rng rng(mix_seed(spec.noise_seed, seed_tag::noise));
      Tensor offsets = Tensor::zeros(x.shape());
      for (double& v : offsets.mutable_values()) v = rng.normal(0.0, spec.sigma);
      return clip01(add(x, offsets));
    }
  }
  throw TensorError("apply_transform: unknown kind");
}

}  // namespace mumodig

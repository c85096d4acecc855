#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>

#include "mumodig/errors.hpp"
#include "mumodig/transforms.hpp"
#include "testutil.hpp"

using namespace mumodig;

namespace {
const TransformRanges kRanges{};
}

TEST_CASE("sampling") {
  SUBCASE("uniform kind choice over the library") {
    const TransformKind lib[] = {TransformKind::resize_pad, TransformKind::affine};
    Rng rng(41);
    std::map<TransformKind, int> counts;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) ++counts[sample_transform(lib, kRanges, rng).kind];
    for (const auto& [kind, count] : counts) {
      const double freq = static_cast<double>(count) / draws;
      CHECK(freq > 0.47);
      CHECK(freq < 0.53);
    }
  }
  SUBCASE("singleton library always yields that kind") {
    const TransformKind lib[] = {TransformKind::blur};
    Rng rng(42);
    for (int i = 0; i < 20; ++i) CHECK(sample_transform(lib, kRanges, rng).kind == TransformKind::blur);
  }
  SUBCASE("same rng state gives an identical spec") {
    const TransformKind lib[] = {TransformKind::affine, TransformKind::noise};
    Rng a(43), b(43);
    const TransformSpec sa = sample_transform(lib, kRanges, a);
    const TransformSpec sb = sample_transform(lib, kRanges, b);
    CHECK(sa.kind == sb.kind);
    CHECK(sa.angle_deg == sb.angle_deg);
    CHECK(sa.sigma == sb.sigma);
    CHECK(sa.noise_seed == sb.noise_seed);
  }
  SUBCASE("empty library rejected") {
    Rng rng(44);
    CHECK_THROWS_AS(sample_transform({}, kRanges, rng), TensorError);
  }
  SUBCASE("parameters respect the configured ranges") {
    Rng rng(45);
    for (int i = 0; i < 200; ++i) {
      const TransformKind lib[] = {TransformKind::resize_pad};
      const TransformSpec s = sample_transform(lib, kRanges, rng);
      CHECK(s.ratio >= kRanges.rp_ratio_min);
      CHECK(s.ratio < 1.0);
    }
    for (int i = 0; i < 200; ++i) {
      const TransformKind lib[] = {TransformKind::noise};
      const TransformSpec s = sample_transform(lib, kRanges, rng);
      CHECK(s.sigma > 0.0);
      CHECK(s.sigma <= kRanges.noise_sigma_max);
    }
  }
}

TEST_CASE("application") {
  Rng rng(46);
  const Tensor x = Tensor::random_uniform({3, 16, 16}, rng, 0.1, 0.9);

  SUBCASE("identity is bit exact") {
    CHECK(bit_equal(apply_transform(x, identity_transform()), x));
  }
  SUBCASE("identity-parameter affine reproduces the input") {
    TransformSpec spec;
    spec.kind = TransformKind::affine;
    CHECK(max_abs(sub(apply_transform(x, spec), x)) < 1e-9);
  }
  SUBCASE("resize_pad support covers about ratio^2 of the canvas") {
    TransformSpec spec;
    spec.kind = TransformKind::resize_pad;
    spec.ratio = 0.8;
    spec.offset_y_frac = 0.3;
    spec.offset_x_frac = 0.7;
    const Tensor out = apply_transform(x, spec);
    std::size_t nonzero = 0;
    for (double v : out.values()) {
      if (v != 0.0) ++nonzero;
    }
    const double support = static_cast<double>(nonzero) / static_cast<double>(out.size());
    CHECK(support == doctest::Approx(0.64).epsilon(0.12));
  }
  SUBCASE("every kind preserves shape and the [0,1] box") {
    const TransformKind all[] = {TransformKind::identity, TransformKind::resize_pad,
                                 TransformKind::affine, TransformKind::blur, TransformKind::noise};
    Rng sampler(47);
    for (int trial = 0; trial < 60; ++trial) {
      const TransformSpec spec = sample_transform(all, kRanges, sampler);
      const Tensor out = apply_transform(x, spec);
      CHECK(out.shape() == x.shape());
      CHECK(min_value(out) >= 0.0);
      CHECK(max_value(out) <= 1.0);
    }
  }
  SUBCASE("specs are pure: same spec, same output, including noise") {
    const TransformKind all[] = {TransformKind::resize_pad, TransformKind::affine,
                                 TransformKind::blur, TransformKind::noise};
    Rng sampler(48);
    for (int trial = 0; trial < 20; ++trial) {
      const TransformSpec spec = sample_transform(all, kRanges, sampler);
      CHECK(bit_equal(apply_transform(x, spec), apply_transform(x, spec)));
    }
  }
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mumodig/baselines.hpp"
#include "mumodig/errors.hpp"
#include "mumodig/paths.hpp"
#include "testutil.hpp"

using namespace mumodig;

TEST_CASE("interpolated point positions") {
  const Tensor zero = Tensor::scalar(0.0);
  const Tensor one = Tensor::scalar(1.0);

  SUBCASE("single point at lambda/N") {
    const auto pts = interpolated_points({zero, one, 1, 0.65});
    REQUIRE(pts.size() == 1);
    CHECK(pts[0].value_at(0) == doctest::Approx(0.65).epsilon(1e-12));
  }
  SUBCASE("two points at 0.25 and 0.75 for lambda=0.5") {
    const auto pts = interpolated_points({zero, one, 2, 0.5});
    REQUIRE(pts.size() == 2);
    CHECK(pts[0].value_at(0) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(pts[1].value_at(0) == doctest::Approx(0.75).epsilon(1e-12));
  }
  SUBCASE("lambda=1 with one point is the endpoint") {
    const auto pts = interpolated_points({zero, one, 1, 1.0});
    CHECK(pts[0].value_at(0) == 1.0);
  }
  SUBCASE("all coefficients lie in (0,1] when lambda is in (0,1]") {
    Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t n = 1 + rng.uniform_index(8);
      const double lambda = rng.uniform(1e-6, 1.0);
      const auto pts = interpolated_points({zero, one, n, lambda});
      for (const Tensor& p : pts) {
        CHECK(p.value_at(0) > 0.0);
        CHECK(p.value_at(0) <= 1.0);
      }
    }
  }
  SUBCASE("invalid paths rejected") {
    CHECK_THROWS_AS(interpolated_points({Tensor::zeros({2}), one, 1, 0.5}), TensorError);
    CHECK_THROWS_AS(interpolated_points({zero, one, 0, 0.5}), TensorError);
    CHECK_THROWS_AS(interpolated_points({zero, one, 1, 1.5}), TensorError);
  }
}

TEST_CASE("is_monotonic examples") {
  auto seq = [](std::vector<std::vector<double>> rows) {
    std::vector<Tensor> out;
    for (auto& r : rows) out.push_back(Tensor::from_values({r.size()}, r));
    return out;
  };
  CHECK(is_monotonic(seq({{0, 0}, {1, 0.5}, {2, 1}})));
  CHECK(!is_monotonic(seq({{0, 0}, {1, -0.5}})));
  CHECK_THROWS_AS(is_monotonic(std::vector<Tensor>{}), TensorError);
  const auto mismatched = std::vector<Tensor>{Tensor::zeros({2}), Tensor::zeros({3})};
  CHECK_THROWS_AS(is_monotonic(mismatched), TensorError);
}

TEST_CASE("straight paths from lbq or black baselines are monotonic") {
  Rng rng(32);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor x = Tensor::random_uniform({3, 5, 5}, rng);
    const Tensor b = (trial % 2 == 0) ? lbq_baseline(x, 1 + rng.uniform_index(6), trial).image
                                      : black_baseline(x).image;
    const IntegrationPath path{b, x, 4, 0.65};
    CHECK(is_monotonic(path));
    CHECK(is_monotonic(interpolated_points(path)));
    // Proposition-level restatement: a non-negative direction never flips signs.
    const Tensor g = Tensor::random_normal({3, 5, 5}, rng);
    CHECK(sign_conflict_fraction(path_direction(path), g) == 0.0);
  }
}

TEST_CASE("monotonic iff non-negative direction on straight paths") {
  Rng rng(33);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor b = Tensor::random_uniform({2, 3, 3}, rng, -0.5, 0.5);
    const Tensor x = Tensor::random_uniform({2, 3, 3}, rng, -0.5, 0.5);
    const IntegrationPath path{b, x, 3, 0.5};
    const bool by_direction = min_value(path_direction(path)) >= 0.0;
    CHECK(is_monotonic(path) == by_direction);
    CHECK(is_monotonic(interpolated_points(path)) == by_direction);
  }
}

TEST_CASE("sign conflict fraction") {
  SUBCASE("hand enumeration") {
    const Tensor direction = Tensor::from_values({2}, {1.0, -1.0});
    const Tensor gradient = Tensor::from_values({2}, {1.0, 1.0});
    CHECK(sign_conflict_fraction(direction, gradient) == 0.5);
  }
  SUBCASE("total opposition") {
    // conflict happens exactly where the direction is negative, so total
    // opposition against a strictly positive gradient flips every element
    Rng rng(34);
    const Tensor gradient = Tensor::random_uniform({3, 4, 4}, rng, 0.1, 2.0);
    CHECK(sign_conflict_fraction(scale(gradient, -1.0), gradient) == 1.0);
  }
  SUBCASE("zero elements excluded") {
    const Tensor direction = Tensor::from_values({4}, {-1.0, 0.0, -1.0, 1.0});
    const Tensor gradient = Tensor::from_values({4}, {1.0, 1.0, 0.0, -5.0});
    // only element 0 conflicts: d<0 with nonzero gradient
    CHECK(sign_conflict_fraction(direction, gradient) == 0.25);
  }
  SUBCASE("shape mismatch rejected") {
    CHECK_THROWS_AS(sign_conflict_fraction(Tensor::zeros({2}), Tensor::zeros({3})), TensorError);
  }
}

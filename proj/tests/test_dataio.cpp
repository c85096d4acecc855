#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mumodig/dataio.hpp"
#include "mumodig/errors.hpp"
#include "testutil.hpp"

using namespace mumodig;

namespace {

std::vector<std::uint8_t> idx_image_fixture() {
  // magic 0x00000803, dims (2,2,2), payload bytes 0..7
  std::vector<std::uint8_t> bytes{0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2};
  for (std::uint8_t b = 0; b < 8; ++b) bytes.push_back(b);
  return bytes;
}

std::vector<std::uint8_t> idx_label_fixture() {
  return {0, 0, 8, 1, 0, 0, 0, 3, 1, 0, 2};
}

}  // namespace

TEST_CASE("idx image fixture parses") {
  const IdxPart part = parse_idx(idx_image_fixture());
  REQUIRE(part.kind == IdxKind::images);
  REQUIRE(part.images.size() == 2);
  CHECK(part.images[0].shape() == std::vector<std::size_t>{1, 2, 2});
  CHECK(part.images[0].value_at(0) == 0.0);
  CHECK(part.images[1].value_at(3) == doctest::Approx(7.0 / 255.0));
}

TEST_CASE("idx label fixture parses") {
  const IdxPart part = parse_idx(idx_label_fixture());
  REQUIRE(part.kind == IdxKind::labels);
  CHECK(part.labels == std::vector<int>{1, 0, 2});
}

TEST_CASE("idx malformed inputs") {
  SUBCASE("bad magic") {
    std::vector<std::uint8_t> bytes{0, 0, 9, 9, 0, 0, 0, 0};
    CHECK_THROWS_WITH_AS(parse_idx(bytes), doctest::Contains("magic"), DataError);
  }
  SUBCASE("truncated payload names expected vs actual") {
    // declares 4 images of 2x2 but carries only 3 images worth of bytes
    std::vector<std::uint8_t> bytes{0, 0, 8, 3, 0, 0, 0, 4, 0, 0, 0, 2, 0, 0, 0, 2};
    bytes.resize(bytes.size() + 12, 0);
    CHECK_THROWS_WITH_AS(parse_idx(bytes), doctest::Contains("expected 32 bytes, got 28"),
                         DataError);
  }
  SUBCASE("dimension overflow") {
    std::vector<std::uint8_t> bytes{0, 0, 8, 3, 0xff, 0xff, 0xff, 0xff,
                                    0xff, 0xff, 0xff, 0xff, 0, 0, 0, 2};
    CHECK_THROWS_WITH_AS(parse_idx(bytes), doctest::Contains("overflow"), DataError);
  }
}

TEST_CASE("idx round-trip is byte exact") {
  CHECK(serialize_idx(parse_idx(idx_image_fixture())) == idx_image_fixture());
  CHECK(serialize_idx(parse_idx(idx_label_fixture())) == idx_label_fixture());

  // randomized canonical streams
  Rng rng(404);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::uint8_t> bytes{0, 0, 8, 3, 0, 0, 0, 3, 0, 0, 0, 4, 0, 0, 0, 5};
    for (int i = 0; i < 3 * 4 * 5; ++i) {
      bytes.push_back(static_cast<std::uint8_t>(rng.uniform_index(256)));
    }
    CHECK(serialize_idx(parse_idx(bytes)) == bytes);
  }
}

TEST_CASE("idx dataset assembly validates labels") {
  const IdxPart images = parse_idx(idx_image_fixture());
  IdxPart labels;
  labels.kind = IdxKind::labels;
  labels.labels = {0, 9};
  CHECK_THROWS_AS(idx_dataset(images, labels, 3, "train"), DataError);
  labels.labels = {0, 2};
  const Dataset ds = idx_dataset(images, labels, 0, "train");
  CHECK(ds.num_classes == 3);
  CHECK(ds.size() == 2);
}

TEST_CASE("cifar10 fixtures") {
  SUBCASE("single all-white record") {
    std::vector<std::uint8_t> bytes(3073, 255);
    bytes[0] = 3;
    const Dataset ds = parse_cifar10(bytes, "train");
    REQUIRE(ds.size() == 1);
    CHECK(ds.examples[0].label == 3);
    CHECK(min_value(ds.examples[0].image) == 1.0);
    CHECK(ds.examples[0].image.shape() == std::vector<std::size_t>{3, 32, 32});
  }
  SUBCASE("zero-length input is an empty dataset") {
    const Dataset ds = parse_cifar10({}, "test");
    CHECK(ds.size() == 0);
    CHECK(ds.num_classes == 10);
  }
  SUBCASE("label byte 10 rejected") {
    std::vector<std::uint8_t> bytes(3073, 0);
    bytes[0] = 10;
    CHECK_THROWS_AS(parse_cifar10(bytes, "train"), DataError);
  }
  SUBCASE("length must be a record multiple") {
    std::vector<std::uint8_t> bytes(3072, 0);
    CHECK_THROWS_AS(parse_cifar10(bytes, "train"), DataError);
  }
  SUBCASE("round-trip") {
    Rng rng(11);
    std::vector<std::uint8_t> bytes;
    for (int rec = 0; rec < 3; ++rec) {
      bytes.push_back(static_cast<std::uint8_t>(rng.uniform_index(10)));
      for (int i = 0; i < 3072; ++i) {
        bytes.push_back(static_cast<std::uint8_t>(rng.uniform_index(256)));
      }
    }
    CHECK(serialize_cifar10(parse_cifar10(bytes, "train")) == bytes);
  }
}

TEST_CASE("synthetic dataset properties") {
  SynthSpec spec;
  spec.num_classes = 4;
  spec.image_shape = {3, 12, 12};
  spec.per_class_count = 5;
  spec.seed = 7;

  SUBCASE("deterministic per seed") {
    const Dataset a = synth_dataset(spec);
    const Dataset b = synth_dataset(spec);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(bit_equal(a.examples[i].image, b.examples[i].image));
      CHECK(a.examples[i].label == b.examples[i].label);
    }
  }
  SUBCASE("seed change alters pixels") {
    SynthSpec other = spec;
    other.seed = 8;
    CHECK(!bit_equal(synth_dataset(spec).examples[0].image,
                     synth_dataset(other).examples[0].image));
  }
  SUBCASE("pixels in box, labels valid, every class present") {
    const Dataset ds = synth_dataset(spec);
    std::vector<bool> seen(spec.num_classes, false);
    for (const LabeledExample& ex : ds.examples) {
      CHECK(min_value(ex.image) >= 0.0);
      CHECK(max_value(ex.image) <= 1.0);
      REQUIRE(ex.label >= 0);
      REQUIRE(static_cast<std::size_t>(ex.label) < spec.num_classes);
      seen[ex.label] = true;
    }
    for (bool s : seen) CHECK(s);
  }
  SUBCASE("degenerate specs rejected") {
    SynthSpec bad = spec;
    bad.num_classes = 1;
    CHECK_THROWS_AS(synth_dataset(bad), DataError);
    bad = spec;
    bad.per_class_count = 0;
    CHECK_THROWS_AS(synth_dataset(bad), DataError);
    bad = spec;
    bad.image_shape = {3, 4, 12};
    CHECK_THROWS_AS(synth_dataset(bad), DataError);
  }
}

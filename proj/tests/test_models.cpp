#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "mumodig/errors.hpp"
#include "mumodig/models.hpp"
#include "testutil.hpp"

using namespace mumodig;
using testutil::max_rel_error;
using testutil::tiny_synth;

namespace {

ClassifierModel zeroed_head_model(ArchKind arch) {
  ArchSpec spec;
  spec.arch = arch;
  spec.num_classes = 4;
  spec.input_shape = {3, 12, 12};
  spec.init_seed = 5;
  ClassifierModel model = ClassifierModel::create(spec);
  for (double& v : model.param("fc.w")->mutable_values()) v = 0.0;
  for (double& v : model.param("fc.b")->mutable_values()) v = 0.0;
  return model;
}

}  // namespace

TEST_CASE("zero-initialized final layer yields the uniform distribution") {
  for (ArchKind arch : {ArchKind::small_cnn, ArchKind::small_cnn_wide, ArchKind::mlp}) {
    ClassifierModel model = zeroed_head_model(arch);
    Rng rng(3);
    const Tensor probs = model.forward(Tensor::random_uniform({3, 12, 12}, rng));
    for (std::size_t i = 0; i < 4; ++i) CHECK(probs.value_at(i) == doctest::Approx(0.25));
  }
}

TEST_CASE("forward produces a probability simplex") {
  ClassifierModel model = testutil::tiny_model(9);
  Rng rng(10);
  for (int trial = 0; trial < 25; ++trial) {
    const Tensor probs = model.forward(Tensor::random_uniform({3, 8, 8}, rng));
    double sum = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      CHECK(probs.value_at(i) >= 0.0);
      sum += probs.value_at(i);
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
}

TEST_CASE("forward rejects shape mismatches") {
  ClassifierModel model = testutil::tiny_model(1);
  CHECK_THROWS_AS(model.forward(Tensor::zeros({3, 9, 8})), TensorError);
}

TEST_CASE("input gradient") {
  Rng rng(12);
  const Tensor x = Tensor::random_uniform({3, 8, 8}, rng);

  SUBCASE("constant model has zero gradient") {
    ClassifierModel constant = testutil::tiny_model(2);
    for (NamedParam& p : constant.params()) {
      for (double& v : p.tensor.mutable_values()) v = 0.0;
    }
    const Tensor g = input_gradient(constant, x, 1, LossKind::neg_prob);
    CHECK(max_abs(g) == 0.0);
  }
  SUBCASE("matches finite differences on random models") {
    // softplus keeps the finite-difference oracle away from relu kinks
    ClassifierModel model = testutil::tiny_model(3, Activation::softplus);
    for (int label = 0; label < 3; ++label) {
      const Tensor ad = input_gradient(model, x, label, LossKind::neg_log_prob);
      const Tensor fd = finite_difference_gradient(
          [&](const Tensor& probe) {
            return loss_value(model, probe, label, LossKind::neg_log_prob);
          },
          x, 1e-5);
      CHECK(max_rel_error(ad, fd) < 1e-4);
    }
  }
  SUBCASE("neg_log_prob gradient is the neg_prob gradient scaled by 1/p_y") {
    ClassifierModel model = testutil::tiny_model(4);
    const int label = 2;
    const double p_y = model.forward(x).value_at(label);
    const Tensor g_prob = input_gradient(model, x, label, LossKind::neg_prob);
    const Tensor g_log = input_gradient(model, x, label, LossKind::neg_log_prob);
    for (std::size_t i = 0; i < g_prob.size(); ++i) {
      CHECK(g_log.value_at(i) == doctest::Approx(g_prob.value_at(i) / p_y).epsilon(1e-9));
    }
  }
  SUBCASE("repeated calls are bit-identical") {
    ClassifierModel model = testutil::tiny_model(5);
    CHECK(bit_equal(input_gradient(model, x, 0, LossKind::neg_log_prob),
                    input_gradient(model, x, 0, LossKind::neg_log_prob)));
  }
}

TEST_CASE("training determinism and seed sensitivity") {
  const Dataset train = tiny_synth(3, 20, 42, "train");
  TrainOptions opts;
  opts.epochs = 4;
  opts.batch_size = 16;
  opts.learning_rate = 0.015;

  const TrainedClassifier a = train_classifier(train, nullptr, ArchKind::mlp, opts, 7);
  const TrainedClassifier b = train_classifier(train, nullptr, ArchKind::mlp, opts, 7);
  for (std::size_t i = 0; i < a.model.params().size(); ++i) {
    CHECK(bit_equal(a.model.params()[i].tensor, b.model.params()[i].tensor));
  }

  const TrainedClassifier c = train_classifier(train, nullptr, ArchKind::mlp, opts, 8);
  bool any_differ = false;
  for (std::size_t i = 0; i < a.model.params().size(); ++i) {
    any_differ = any_differ || !bit_equal(a.model.params()[i].tensor, c.model.params()[i].tensor);
  }
  CHECK(any_differ);
}

TEST_CASE("training oracle: small_cnn separates the 4-class synthetic set") {
  const Dataset train = tiny_synth(4, 120, 21, "train", {3, 24, 24});
  const Dataset test = tiny_synth(4, 50, mix_seed(21, 0x7e57), "test", {3, 24, 24});
  TrainOptions opts;
  opts.epochs = 20;
  opts.batch_size = 32;
  opts.learning_rate = 0.02;
  opts.lr_decay = 0.5;
  opts.lr_decay_every = 8;
  const TrainedClassifier trained = train_classifier(train, &test, ArchKind::small_cnn, opts, 1);
  CHECK(trained.metrics.final_train_accuracy >= 0.95);
  CHECK(trained.metrics.final_test_accuracy >= 0.85);

  // a second seed trains to the same floor with different parameters
  const TrainedClassifier other = train_classifier(train, &test, ArchKind::small_cnn, opts, 2);
  CHECK(other.metrics.final_train_accuracy >= 0.95);
  CHECK(!bit_equal(trained.model.params()[0].tensor, other.model.params()[0].tensor));
}

TEST_CASE("training rejects bad options and diverges loudly") {
  const Dataset train = tiny_synth(3, 10, 1, "train");
  TrainOptions opts;
  opts.epochs = 0;
  CHECK_THROWS_AS(train_classifier(train, nullptr, ArchKind::mlp, opts, 1), ConfigError);

  // momentum >= 1 compounds the velocity without bound; the first mixed-sign
  // infinite weights turn the next matmul into NaN
  const Dataset blowup = tiny_synth(3, 20, 5, "train");
  opts.epochs = 10;
  opts.batch_size = 16;
  opts.learning_rate = 0.1;
  opts.momentum = 1e6;
  opts.lr_decay_every = 0;
  CHECK_THROWS_AS(train_classifier(blowup, nullptr, ArchKind::mlp, opts, 1),
                  TrainingDivergence);
}

TEST_CASE("checkpoint round-trip and corruption handling") {
  namespace fs = std::filesystem;
  const Dataset train = tiny_synth(3, 10, 77, "train");
  TrainOptions opts;
  opts.epochs = 2;
  opts.learning_rate = 0.01;
  const TrainedClassifier trained = train_classifier(train, nullptr, ArchKind::mlp, opts, 3);

  const std::string path = (fs::temp_directory_path() / "mumodig_test_model.ckpt").string();
  save_checkpoint(trained.model, path);

  SUBCASE("round-trip is bit exact") {
    const ClassifierModel loaded = load_checkpoint(path);
    REQUIRE(loaded.params().size() == trained.model.params().size());
    for (std::size_t i = 0; i < loaded.params().size(); ++i) {
      CHECK(loaded.params()[i].name == trained.model.params()[i].name);
      CHECK(bit_equal(loaded.params()[i].tensor, trained.model.params()[i].tensor));
    }
    CHECK(loaded.spec().num_classes == 3);
  }
  SUBCASE("corrupted magic rejected") {
    auto bytes = read_file(path);
    bytes[0] ^= 0xff;
    write_file(path, bytes);
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("magic"), DataError);
  }
  SUBCASE("version bump rejected explicitly") {
    auto bytes = read_file(path);
    bytes[8] = 99;
    write_file(path, bytes);
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("version"), DataError);
  }
  SUBCASE("truncated parameter data rejected") {
    auto bytes = read_file(path);
    bytes.resize(bytes.size() - 16);
    write_file(path, bytes);
    CHECK_THROWS_AS(load_checkpoint(path), DataError);
  }
  SUBCASE("stored shapes must match the descriptor") {
    auto bytes = read_file(path);
    std::string text(bytes.begin(), bytes.end());
    const std::string needle = "\"num_classes\":3";
    const auto where = text.find(needle);
    REQUIRE(where != std::string::npos);
    bytes[where + needle.size() - 1] = '4';  // same length, different arch
    write_file(path, bytes);
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("shape"), DataError);
  }
  fs::remove(path);
}

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mumodig/dataio.hpp"
#include "mumodig/tensor.hpp"

namespace mumodig {

enum class ArchKind { small_cnn, small_cnn_wide, mlp };
enum class Activation { relu, softplus };
// neg_prob is -f(x)_y on the softmax output; neg_log_prob is -log f(x)_y.
enum class LossKind { neg_prob, neg_log_prob };

std::string to_string(ArchKind arch);
std::string to_string(Activation act);
std::string to_string(LossKind loss);
ArchKind arch_from_string(const std::string& s);
Activation activation_from_string(const std::string& s);
LossKind loss_from_string(const std::string& s);

struct ArchSpec {
  ArchKind arch = ArchKind::small_cnn;
  Activation activation = Activation::relu;
  std::size_t num_classes = 0;
  std::array<std::size_t, 3> input_shape{0, 0, 0};  // {C,H,W}
  std::uint64_t init_seed = 0;
};

struct NamedParam {
  std::string name;
  Tensor tensor;
};

// A small differentiable softmax classifier. Immutable after training;
// forward and input_gradient are safe for concurrent read-only use.
class ClassifierModel {
 public:
  static ClassifierModel create(const ArchSpec& spec);

  const ArchSpec& spec() const { return spec_; }
  std::size_t num_classes() const { return spec_.num_classes; }

  // Pre-softmax class scores; records a graph when x or params require grads.
  Tensor logits(const Tensor& x) const;
  // Softmax probability vector of length num_classes.
  Tensor forward(const Tensor& x) const;
  int predict(const Tensor& x) const;
  // Scalar attack loss at x for the given label (graph-recorded).
  Tensor loss(const Tensor& x, int label, LossKind kind) const;

  std::vector<NamedParam>& params() { return params_; }
  const std::vector<NamedParam>& params() const { return params_; }
  Tensor* param(const std::string& name);
  void set_trainable(bool trainable);

 private:
  ArchSpec spec_;
  std::vector<NamedParam> params_;
};

// dL/dx at x; pure function of (params, x, label, kind).
Tensor input_gradient(const ClassifierModel& model, const Tensor& x, int label, LossKind kind);
double loss_value(const ClassifierModel& model, const Tensor& x, int label, LossKind kind);

struct TrainOptions {
  std::size_t epochs = 15;
  std::size_t batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double lr_decay = 0.5;
  std::size_t lr_decay_every = 6;  // epochs between decays; 0 disables
  Activation activation = Activation::relu;
};

struct EpochMetrics {
  double mean_loss = 0.0;
  double train_accuracy = 0.0;
};

struct TrainMetrics {
  std::vector<EpochMetrics> epochs;
  double final_train_accuracy = 0.0;
  double final_test_accuracy = 0.0;
};

struct TrainedClassifier {
  ClassifierModel model;
  TrainMetrics metrics;
};

// Plain SGD with momentum on cross-entropy; deterministic per
// (dataset, arch, options, seed). Throws TrainingDivergence on NaN loss.
TrainedClassifier train_classifier(const Dataset& train, const Dataset* test, ArchKind arch,
                                   const TrainOptions& options, std::uint64_t seed);

double accuracy(const ClassifierModel& model, const Dataset& dataset);

// Checkpoint binary: magic "MMDGCKP1", u32 version, u32-length JSON arch
// descriptor, u32 param count, then per param u32 name length + name,
// u32 ndim, u64 dims, f64 little-endian data.
void save_checkpoint(const ClassifierModel& model, const std::string& path);
ClassifierModel load_checkpoint(const std::string& path);

}  // namespace mumodig

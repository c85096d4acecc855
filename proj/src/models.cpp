#include "mumodig/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "mumodig/errors.hpp"
#include "mumodig/rng.hpp"

namespace mumodig {

namespace {

using nlohmann::json;

struct ConvDef {
  std::string name;
  std::size_t out_ch, k, stride, padding;
};

// Output extent of one padded strided convolution.
std::size_t conv_extent(std::size_t n, std::size_t k, std::size_t stride, std::size_t padding) {
  return (n + 2 * padding - k) / stride + 1;
}

std::vector<ConvDef> conv_stack(ArchKind arch) {
  switch (arch) {
    case ArchKind::small_cnn:
      return {{"conv1", 8, 3, 1, 1}, {"conv2", 16, 3, 2, 1}, {"conv3", 32, 3, 2, 1}};
    case ArchKind::small_cnn_wide:
      return {{"conv1", 12, 5, 1, 2},
              {"conv2", 24, 3, 2, 1},
              {"conv3", 24, 3, 2, 1},
              {"conv4", 48, 3, 1, 1}};
    case ArchKind::mlp:
      return {};
  }
  throw ConfigError("unknown architecture");
}

constexpr std::array<std::size_t, 2> kMlpWidths{128, 64};

Tensor he_normal(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
  return Tensor::random_normal(std::move(shape), rng, 0.0,
                               std::sqrt(2.0 / static_cast<double>(fan_in)));
}

}  // namespace

std::string to_string(ArchKind arch) {
  switch (arch) {
    case ArchKind::small_cnn: return "small_cnn";
    case ArchKind::small_cnn_wide: return "small_cnn_wide";
    case ArchKind::mlp: return "mlp";
  }
  return "?";
}

std::string to_string(Activation act) {
  return act == Activation::relu ? "relu" : "softplus";
}

std::string to_string(LossKind loss) {
  return loss == LossKind::neg_prob ? "neg_prob" : "neg_log_prob";
}

ArchKind arch_from_string(const std::string& s) {
  if (s == "small_cnn") return ArchKind::small_cnn;
  if (s == "small_cnn_wide") return ArchKind::small_cnn_wide;
  if (s == "mlp") return ArchKind::mlp;
  throw ConfigError("unknown arch '" + s + "'");
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "softplus") return Activation::softplus;
  throw ConfigError("unknown activation '" + s + "'");
}

LossKind loss_from_string(const std::string& s) {
  if (s == "neg_prob") return LossKind::neg_prob;
  if (s == "neg_log_prob") return LossKind::neg_log_prob;
  throw ConfigError("unknown loss '" + s + "'");
}

ClassifierModel ClassifierModel::create(const ArchSpec& spec) {
  if (spec.num_classes < 2) throw ConfigError("model needs at least 2 classes");
  const auto [c, h, w] = spec.input_shape;
  if (c == 0 || h == 0 || w == 0) throw ConfigError("model input shape has a zero extent");

  ClassifierModel model;
  model.spec_ = spec;
  std::size_t param_index = 0;
  auto next_rng = [&] { return Rng(mix_seed(spec.init_seed, seed_tag::init, param_index++)); };

  std::size_t ch = c, hh = h, ww = w;
  for (const ConvDef& def : conv_stack(spec.arch)) {
    Rng rng = next_rng();
    model.params_.push_back(
        {def.name + ".w", he_normal({def.out_ch, ch, def.k, def.k}, ch * def.k * def.k, rng)});
    model.params_.push_back({def.name + ".b", Tensor::zeros({def.out_ch})});
    hh = conv_extent(hh, def.k, def.stride, def.padding);
    ww = conv_extent(ww, def.k, def.stride, def.padding);
    ch = def.out_ch;
  }
  std::size_t features = ch * hh * ww;
  if (spec.arch == ArchKind::mlp) {
    features = c * h * w;
    for (std::size_t i = 0; i < kMlpWidths.size(); ++i) {
      Rng rng = next_rng();
      const std::string name = "dense" + std::to_string(i + 1);
      model.params_.push_back({name + ".w", he_normal({features, kMlpWidths[i]}, features, rng)});
      model.params_.push_back({name + ".b", Tensor::zeros({kMlpWidths[i]})});
      features = kMlpWidths[i];
    }
  }
  Rng rng = next_rng();
  model.params_.push_back({"fc.w", he_normal({features, spec.num_classes}, features, rng)});
  model.params_.push_back({"fc.b", Tensor::zeros({spec.num_classes})});
  return model;
}

Tensor* ClassifierModel::param(const std::string& name) {
  for (NamedParam& p : params_) {
    if (p.name == name) return &p.tensor;
  }
  return nullptr;
}

void ClassifierModel::set_trainable(bool trainable) {
  for (NamedParam& p : params_) p.tensor.set_requires_grad(trainable);
}

Tensor ClassifierModel::logits(const Tensor& x) const {
  const auto [c, h, w] = spec_.input_shape;
  if (x.shape() != std::vector<std::size_t>{c, h, w}) {
    throw TensorError("forward: input " + shape_to_string(x.shape()) + " does not match model " +
                      shape_to_string(std::array<std::size_t, 3>{c, h, w}));
  }
  auto act = [&](const Tensor& t) {
    return spec_.activation == Activation::relu ? relu(t) : softplus(t);
  };
  auto p = [&](std::size_t i) -> const Tensor& { return params_[i].tensor; };

  Tensor cur = x;
  std::size_t i = 0;
  for (const ConvDef& def : conv_stack(spec_.arch)) {
    cur = act(conv2d(cur, p(i), &p(i + 1), def.stride, def.padding));
    i += 2;
  }
  cur = reshape(cur, {1, cur.size()});
  if (spec_.arch == ArchKind::mlp) {
    for (std::size_t d = 0; d < kMlpWidths.size(); ++d) {
      cur = act(add(reshape(matmul(cur, p(i)), {kMlpWidths[d]}), p(i + 1)));
      cur = reshape(cur, {1, kMlpWidths[d]});
      i += 2;
    }
  }
  return add(reshape(matmul(cur, p(i)), {spec_.num_classes}), p(i + 1));
}

Tensor ClassifierModel::forward(const Tensor& x) const { return softmax(logits(x)); }

int ClassifierModel::predict(const Tensor& x) const {
  const Tensor probs = forward(x);
  const auto v = probs.values();
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

Tensor ClassifierModel::loss(const Tensor& x, int label, LossKind kind) const {
  if (label < 0 || static_cast<std::size_t>(label) >= spec_.num_classes) {
    throw TensorError("loss: label " + std::to_string(label) + " out of range");
  }
  const Tensor p_true = pick(forward(x), static_cast<std::size_t>(label));
  if (kind == LossKind::neg_prob) return scale(p_true, -1.0);
  // tiny floor keeps the log finite when softmax underflows to exactly zero
  return scale(log(add(p_true, Tensor::scalar(1e-300))), -1.0);
}

Tensor input_gradient(const ClassifierModel& model, const Tensor& x, int label, LossKind kind) {
  const Tensor leaf = x.grad_leaf();
  return backward(model.loss(leaf, label, kind)).at(leaf);
}

double loss_value(const ClassifierModel& model, const Tensor& x, int label, LossKind kind) {
  return model.loss(x, label, kind).value_at(0);
}

double accuracy(const ClassifierModel& model, const Dataset& dataset) {
  if (dataset.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (const LabeledExample& ex : dataset.examples) {
    if (model.predict(ex.image) == ex.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

TrainedClassifier train_classifier(const Dataset& train, const Dataset* test, ArchKind arch,
                                   const TrainOptions& options, std::uint64_t seed) {
  if (train.size() == 0) throw ConfigError("train_classifier: empty dataset");
  if (options.epochs == 0 || options.batch_size == 0 || options.learning_rate <= 0.0) {
    throw ConfigError("train_classifier: epochs, batch_size and learning_rate must be positive");
  }
  ArchSpec spec;
  spec.arch = arch;
  spec.activation = options.activation;
  spec.num_classes = train.num_classes;
  const auto& shape = train.examples.front().image.shape();
  spec.input_shape = {shape[0], shape[1], shape[2]};
  spec.init_seed = mix_seed(seed, seed_tag::init);

  TrainedClassifier out{ClassifierModel::create(spec), {}};
  ClassifierModel& model = out.model;
  model.set_trainable(true);

  std::vector<Tensor> velocity;
  velocity.reserve(model.params().size());
  for (const NamedParam& p : model.params()) velocity.push_back(Tensor::zeros(p.tensor.shape()));

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  double lr = options.learning_rate;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    if (options.lr_decay_every > 0 && epoch > 0 && epoch % options.lr_decay_every == 0) {
      lr *= options.lr_decay;
    }
    // Fisher-Yates with an explicit stream keeps the order reproducible.
    Rng shuffle_rng(mix_seed(seed, seed_tag::shuffle, epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);
    }

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      std::vector<Tensor> grad_sum;
      grad_sum.reserve(model.params().size());
      for (const NamedParam& p : model.params()) grad_sum.push_back(Tensor::zeros(p.tensor.shape()));

      for (std::size_t pos = start; pos < end; ++pos) {
        const LabeledExample& ex = train.examples[order[pos]];
        try {
          const Tensor probs = model.forward(ex.image);
          const auto pv = probs.values();
          if (static_cast<std::size_t>(std::max_element(pv.begin(), pv.end()) - pv.begin()) ==
              static_cast<std::size_t>(ex.label)) {
            ++correct;
          }
          const Tensor loss =
              scale(log(add(pick(probs, static_cast<std::size_t>(ex.label)),
                            Tensor::scalar(1e-300))),
                    -1.0);
          loss_sum += loss.value_at(0);
          Gradients grads = backward(loss);
          for (std::size_t pi = 0; pi < model.params().size(); ++pi) {
            const Tensor g = grads.at(model.params()[pi].tensor);
            auto dst = grad_sum[pi].mutable_values();
            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += g.values()[j];
          }
        } catch (const TensorError& e) {
          // non-finite activations are a divergence, not a usage error
          throw TrainingDivergence(
              "training diverged in epoch " + std::to_string(epoch) + ": " + e.what(), epoch);
        }
      }
      if (!std::isfinite(loss_sum)) {
        throw TrainingDivergence("training loss diverged in epoch " + std::to_string(epoch),
                                 epoch);
      }
      const double inv_batch = 1.0 / static_cast<double>(end - start);
      for (std::size_t pi = 0; pi < model.params().size(); ++pi) {
        auto v = velocity[pi].mutable_values();
        auto w = model.params()[pi].tensor.mutable_values();
        const auto g = grad_sum[pi].values();
        for (std::size_t j = 0; j < v.size(); ++j) {
          v[j] = options.momentum * v[j] - lr * g[j] * inv_batch;
          w[j] += v[j];
        }
      }
    }
    // Running accuracy over the epoch's pre-update predictions.
    EpochMetrics em;
    em.mean_loss = loss_sum / static_cast<double>(train.size());
    em.train_accuracy = static_cast<double>(correct) / static_cast<double>(train.size());
    out.metrics.epochs.push_back(em);
  }

  model.set_trainable(false);
  out.metrics.final_train_accuracy = accuracy(model, train);
  out.metrics.final_test_accuracy = test ? accuracy(model, *test) : 0.0;
  return out;
}

// --- checkpoints ---------------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[8] = {'M', 'M', 'D', 'G', 'C', 'K', 'P', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

struct Reader {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;
  void need(std::size_t n, const char* what) {
    if (pos + n > bytes.size()) {
      throw DataError(std::string("checkpoint: truncated while reading ") + what +
                      " at offset " + std::to_string(pos));
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
    pos += n;
    return s;
  }
};

}  // namespace

void save_checkpoint(const ClassifierModel& model, const std::string& path) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kCheckpointMagic, kCheckpointMagic + 8);
  put_u32(out, kCheckpointVersion);

  const ArchSpec& spec = model.spec();
  json descriptor = {{"arch", to_string(spec.arch)},
                     {"activation", to_string(spec.activation)},
                     {"num_classes", spec.num_classes},
                     {"input_shape", {spec.input_shape[0], spec.input_shape[1], spec.input_shape[2]}},
                     {"init_seed", spec.init_seed}};
  const std::string desc = descriptor.dump();
  put_u32(out, static_cast<std::uint32_t>(desc.size()));
  out.insert(out.end(), desc.begin(), desc.end());

  put_u32(out, static_cast<std::uint32_t>(model.params().size()));
  for (const NamedParam& p : model.params()) {
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out.insert(out.end(), p.name.begin(), p.name.end());
    put_u32(out, static_cast<std::uint32_t>(p.tensor.shape().size()));
    for (std::size_t d : p.tensor.shape()) put_u64(out, d);
    const auto vals = p.tensor.values();
    const std::size_t where = out.size();
    out.resize(where + vals.size() * sizeof(double));
    std::memcpy(out.data() + where, vals.data(), vals.size() * sizeof(double));
  }
  write_file(path, out);
}

ClassifierModel load_checkpoint(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  Reader r{bytes};
  const std::string magic = r.str(8, "magic");
  if (std::memcmp(magic.data(), kCheckpointMagic, 8) != 0) {
    throw DataError("checkpoint: bad magic in " + path);
  }
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint: version " + std::to_string(version) + " unsupported (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint32_t desc_len = r.u32("descriptor length");
  json descriptor;
  try {
    descriptor = json::parse(r.str(desc_len, "descriptor"));
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint: bad descriptor: ") + e.what());
  }
  ArchSpec spec;
  spec.arch = arch_from_string(descriptor.at("arch").get<std::string>());
  spec.activation = activation_from_string(descriptor.at("activation").get<std::string>());
  spec.num_classes = descriptor.at("num_classes").get<std::size_t>();
  const auto in_shape = descriptor.at("input_shape").get<std::vector<std::size_t>>();
  if (in_shape.size() != 3) throw DataError("checkpoint: input_shape must have 3 extents");
  spec.input_shape = {in_shape[0], in_shape[1], in_shape[2]};
  spec.init_seed = descriptor.at("init_seed").get<std::uint64_t>();

  ClassifierModel model = ClassifierModel::create(spec);
  const std::uint32_t count = r.u32("param count");
  if (count != model.params().size()) {
    throw DataError("checkpoint: " + std::to_string(count) + " params vs descriptor expecting " +
                    std::to_string(model.params().size()));
  }
  for (NamedParam& p : model.params()) {
    const std::uint32_t name_len = r.u32("param name length");
    const std::string name = r.str(name_len, "param name");
    if (name != p.name) {
      throw DataError("checkpoint: param '" + name + "' where descriptor expects '" + p.name +
                      "'");
    }
    const std::uint32_t ndim = r.u32("param rank");
    std::vector<std::size_t> shape(ndim);
    for (auto& d : shape) d = r.u64("param extent");
    if (shape != p.tensor.shape()) {
      throw DataError("checkpoint: param '" + name + "' shape " + shape_to_string(shape) +
                      " does not match descriptor shape " + shape_to_string(p.tensor.shape()));
    }
    r.need(p.tensor.size() * sizeof(double), "param data");
    std::memcpy(p.tensor.mutable_values().data(), bytes.data() + r.pos,
                p.tensor.size() * sizeof(double));
    r.pos += p.tensor.size() * sizeof(double);
  }
  if (r.pos != bytes.size()) {
    throw DataError("checkpoint: " + std::to_string(bytes.size() - r.pos) +
                    " trailing bytes in " + path);
  }
  return model;
}

}  // namespace mumodig

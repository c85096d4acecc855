#include "mumodig/config.hpp"

#include <fstream>

#include "mumodig/errors.hpp"

namespace mumodig {

namespace {

using nlohmann::json;

constexpr std::uint64_t kTestSplitSalt = 0x7e57;

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

std::string get_string(const json& obj, const char* key, const std::string& context) {
  if (!obj.contains(key)) {
    throw ConfigError(context + ": missing required key '" + key + "'");
  }
  if (!obj.at(key).is_string()) {
    throw ConfigError(context + ": key '" + key + "' must be a string");
  }
  return obj.at(key).get<std::string>();
}

}  // namespace

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
}

void require_keys(const json& obj, std::span<const char* const> allowed,
                  const std::string& context) {
  if (!obj.is_object()) throw ConfigError(context + ": expected a JSON object");
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) throw ConfigError(context + ": unknown key '" + item.key() + "'");
  }
}

// --- dataset ---------------------------------------------------------------------

DatasetConfig dataset_config_from_json(const json& section) {
  static constexpr const char* kKeys[] = {
      "kind",         "num_classes", "image_shape",  "per_class_train", "per_class_test",
      "seed",         "noise_sigma", "train_images", "train_labels",    "test_images",
      "test_labels",  "train_files", "test_file"};
  require_keys(section, kKeys, "dataset");
  DatasetConfig cfg;
  cfg.kind = get_or<std::string>(section, "kind", "synth");
  if (cfg.kind == "synth") {
    cfg.num_classes = get_or<std::size_t>(section, "num_classes", cfg.num_classes);
    if (section.contains("image_shape")) {
      const auto shape = section.at("image_shape").get<std::vector<std::size_t>>();
      if (shape.size() != 3) throw ConfigError("dataset: image_shape must be [C,H,W]");
      cfg.image_shape = {shape[0], shape[1], shape[2]};
    }
    cfg.per_class_train = get_or<std::size_t>(section, "per_class_train", cfg.per_class_train);
    cfg.per_class_test = get_or<std::size_t>(section, "per_class_test", cfg.per_class_test);
    cfg.seed = get_or<std::uint64_t>(section, "seed", cfg.seed);
    cfg.noise_sigma = get_or<double>(section, "noise_sigma", cfg.noise_sigma);
  } else if (cfg.kind == "idx") {
    cfg.train_images = get_string(section, "train_images", "dataset");
    cfg.train_labels = get_string(section, "train_labels", "dataset");
    cfg.test_images = get_or<std::string>(section, "test_images", "");
    cfg.test_labels = get_or<std::string>(section, "test_labels", "");
  } else if (cfg.kind == "cifar10") {
    cfg.train_files = get_or<std::vector<std::string>>(section, "train_files", {});
    cfg.test_file = get_or<std::string>(section, "test_file", "");
    if (cfg.train_files.empty()) throw ConfigError("dataset: cifar10 needs train_files");
  } else {
    throw ConfigError("dataset: unknown kind '" + cfg.kind + "'");
  }
  return cfg;
}

json dataset_config_to_json(const DatasetConfig& cfg) {
  json out;
  out["kind"] = cfg.kind;
  if (cfg.kind == "synth") {
    out["num_classes"] = cfg.num_classes;
    out["image_shape"] = {cfg.image_shape[0], cfg.image_shape[1], cfg.image_shape[2]};
    out["per_class_train"] = cfg.per_class_train;
    out["per_class_test"] = cfg.per_class_test;
    out["seed"] = cfg.seed;
    out["noise_sigma"] = cfg.noise_sigma;
  } else if (cfg.kind == "idx") {
    out["train_images"] = cfg.train_images;
    out["train_labels"] = cfg.train_labels;
    if (!cfg.test_images.empty()) out["test_images"] = cfg.test_images;
    if (!cfg.test_labels.empty()) out["test_labels"] = cfg.test_labels;
  } else {
    out["train_files"] = cfg.train_files;
    if (!cfg.test_file.empty()) out["test_file"] = cfg.test_file;
  }
  return out;
}

Dataset load_split(const DatasetConfig& cfg, const std::string& split) {
  if (split != "train" && split != "test") {
    throw ConfigError("dataset split must be 'train' or 'test', got '" + split + "'");
  }
  if (cfg.kind == "synth") {
    SynthSpec spec;
    spec.num_classes = cfg.num_classes;
    spec.image_shape = cfg.image_shape;
    spec.noise_sigma = cfg.noise_sigma;
    spec.split = split;
    if (split == "train") {
      spec.per_class_count = cfg.per_class_train;
      spec.seed = cfg.seed;
    } else {
      spec.per_class_count = cfg.per_class_test;
      spec.seed = mix_seed(cfg.seed, kTestSplitSalt);
    }
    return synth_dataset(spec);
  }
  if (cfg.kind == "idx") {
    const std::string& images = split == "train" ? cfg.train_images : cfg.test_images;
    const std::string& labels = split == "train" ? cfg.train_labels : cfg.test_labels;
    if (images.empty() || labels.empty()) {
      throw ConfigError("dataset: idx " + split + " split files not configured");
    }
    return idx_dataset(parse_idx(read_file(images)), parse_idx(read_file(labels)), 0, split);
  }
  // cifar10
  if (split == "train") {
    std::vector<std::uint8_t> bytes;
    for (const std::string& file : cfg.train_files) {
      const auto chunk = read_file(file);
      bytes.insert(bytes.end(), chunk.begin(), chunk.end());
    }
    return parse_cifar10(bytes, split);
  }
  if (cfg.test_file.empty()) throw ConfigError("dataset: cifar10 test_file not configured");
  return parse_cifar10(read_file(cfg.test_file), split);
}

// --- attack ------------------------------------------------------------------------

AttackConfig attack_config_from_json(const json& section) {
  static constexpr const char* kKeys[] = {
      "estimator",       "iterations",       "epsilon",          "step",
      "momentum",        "lambda",           "lbq_regions",      "interp_points",
      "baseline_count",  "transform_count",  "loss",             "ig_baseline",
      "muig_baseline",   "muig_noise_sigma", "norm",             "transforms",
      "transform_ranges", "lbq_force_black", "align_gradients"};
  require_keys(section, kKeys, "attack");
  AttackConfig cfg;
  if (section.contains("estimator")) {
    cfg.estimator = estimator_from_string(section.at("estimator").get<std::string>());
  }
  cfg.iterations = get_or<std::size_t>(section, "iterations", cfg.iterations);
  cfg.epsilon = get_or<double>(section, "epsilon", cfg.epsilon);
  cfg.step = get_or<double>(section, "step", cfg.step);
  cfg.momentum = get_or<double>(section, "momentum", cfg.momentum);
  cfg.lambda = get_or<double>(section, "lambda", cfg.lambda);
  cfg.lbq_regions = get_or<std::size_t>(section, "lbq_regions", cfg.lbq_regions);
  cfg.interp_points = get_or<std::size_t>(section, "interp_points", cfg.interp_points);
  cfg.baseline_count = get_or<std::size_t>(section, "baseline_count", cfg.baseline_count);
  cfg.transform_count = get_or<std::size_t>(section, "transform_count", cfg.transform_count);
  if (section.contains("loss")) cfg.loss = loss_from_string(section.at("loss").get<std::string>());
  if (section.contains("ig_baseline")) {
    cfg.ig_baseline = ig_baseline_from_string(section.at("ig_baseline").get<std::string>());
  }
  if (section.contains("muig_baseline")) {
    cfg.muig_baseline = muig_baseline_from_string(section.at("muig_baseline").get<std::string>());
  }
  cfg.muig_noise_sigma = get_or<double>(section, "muig_noise_sigma", cfg.muig_noise_sigma);
  if (section.contains("norm")) cfg.norm = norm_from_string(section.at("norm").get<std::string>());
  if (section.contains("transforms")) {
    cfg.library.clear();
    for (const auto& name : section.at("transforms")) {
      cfg.library.push_back(transform_kind_from_string(name.get<std::string>()));
    }
  }
  if (section.contains("transform_ranges")) {
    static constexpr const char* kRangeKeys[] = {"rp_ratio_min",      "affine_max_angle_deg",
                                                 "affine_max_translate", "affine_scale_min",
                                                 "affine_scale_max",  "noise_sigma_max"};
    const json& ranges = section.at("transform_ranges");
    require_keys(ranges, kRangeKeys, "attack.transform_ranges");
    cfg.ranges.rp_ratio_min = get_or<double>(ranges, "rp_ratio_min", cfg.ranges.rp_ratio_min);
    cfg.ranges.affine_max_angle_deg =
        get_or<double>(ranges, "affine_max_angle_deg", cfg.ranges.affine_max_angle_deg);
    cfg.ranges.affine_max_translate =
        get_or<double>(ranges, "affine_max_translate", cfg.ranges.affine_max_translate);
    cfg.ranges.affine_scale_min =
        get_or<double>(ranges, "affine_scale_min", cfg.ranges.affine_scale_min);
    cfg.ranges.affine_scale_max =
        get_or<double>(ranges, "affine_scale_max", cfg.ranges.affine_scale_max);
    cfg.ranges.noise_sigma_max =
        get_or<double>(ranges, "noise_sigma_max", cfg.ranges.noise_sigma_max);
  }
  cfg.lbq_force_black = get_or<bool>(section, "lbq_force_black", cfg.lbq_force_black);
  cfg.align_gradients = get_or<bool>(section, "align_gradients", cfg.align_gradients);
  validate(cfg);
  return cfg;
}

json attack_config_to_json(const AttackConfig& cfg) {
  json transforms = json::array();
  for (TransformKind kind : cfg.library) transforms.push_back(to_string(kind));
  return {{"estimator", to_string(cfg.estimator)},
          {"iterations", cfg.iterations},
          {"epsilon", cfg.epsilon},
          {"step", cfg.step},
          {"momentum", cfg.momentum},
          {"lambda", cfg.lambda},
          {"lbq_regions", cfg.lbq_regions},
          {"interp_points", cfg.interp_points},
          {"baseline_count", cfg.baseline_count},
          {"transform_count", cfg.transform_count},
          {"loss", to_string(cfg.loss)},
          {"ig_baseline", to_string(cfg.ig_baseline)},
          {"muig_baseline", to_string(cfg.muig_baseline)},
          {"muig_noise_sigma", cfg.muig_noise_sigma},
          {"norm", to_string(cfg.norm)},
          {"transforms", std::move(transforms)},
          {"transform_ranges",
           {{"rp_ratio_min", cfg.ranges.rp_ratio_min},
            {"affine_max_angle_deg", cfg.ranges.affine_max_angle_deg},
            {"affine_max_translate", cfg.ranges.affine_max_translate},
            {"affine_scale_min", cfg.ranges.affine_scale_min},
            {"affine_scale_max", cfg.ranges.affine_scale_max},
            {"noise_sigma_max", cfg.ranges.noise_sigma_max}}},
          {"lbq_force_black", cfg.lbq_force_black},
          {"align_gradients", cfg.align_gradients}};
}

// --- train ---------------------------------------------------------------------------

TrainOptions train_options_from_json(const json& section) {
  static constexpr const char* kKeys[] = {"epochs",   "batch_size",     "learning_rate",
                                          "momentum", "lr_decay",       "lr_decay_every",
                                          "activation"};
  require_keys(section, kKeys, "train");
  TrainOptions options;
  options.epochs = get_or<std::size_t>(section, "epochs", options.epochs);
  options.batch_size = get_or<std::size_t>(section, "batch_size", options.batch_size);
  options.learning_rate = get_or<double>(section, "learning_rate", options.learning_rate);
  options.momentum = get_or<double>(section, "momentum", options.momentum);
  options.lr_decay = get_or<double>(section, "lr_decay", options.lr_decay);
  options.lr_decay_every = get_or<std::size_t>(section, "lr_decay_every", options.lr_decay_every);
  if (section.contains("activation")) {
    options.activation = activation_from_string(section.at("activation").get<std::string>());
  }
  return options;
}

json train_options_to_json(const TrainOptions& options) {
  return {{"epochs", options.epochs},
          {"batch_size", options.batch_size},
          {"learning_rate", options.learning_rate},
          {"momentum", options.momentum},
          {"lr_decay", options.lr_decay},
          {"lr_decay_every", options.lr_decay_every},
          {"activation", to_string(options.activation)}};
}

}  // namespace mumodig

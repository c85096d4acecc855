#include "mumodig/cli.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>

#include <json.hpp>

#include "mumodig/archive.hpp"
#include "mumodig/config.hpp"
#include "mumodig/errors.hpp"
#include "mumodig/eval.hpp"

namespace mumodig {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

// Run body(staging) and promote the staging directory to out_dir on success.
void with_staging(const std::string& out_dir, const std::function<void(const fs::path&)>& body) {
  if (out_dir.empty()) throw ConfigError("output directory not set");
  const fs::path out(out_dir);
  if (fs::exists(out)) throw ConfigError("output directory " + out_dir + " already exists");
  const fs::path staging(out_dir + ".partial");
  std::error_code ec;
  fs::remove_all(staging, ec);
  fs::create_directories(staging);
  try {
    body(staging);
  } catch (...) {
    fs::remove_all(staging, ec);
    throw;
  }
  fs::rename(staging, out);
}

struct CommonConfig {
  json raw;
  std::uint64_t seed = 0;
  std::size_t workers = 0;  // 0: available parallelism
};

CommonConfig load_common(const CliOptions& options, std::span<const char* const> allowed) {
  CommonConfig common;
  common.raw = load_config_file(options.config_path);
  require_keys(common.raw, allowed, "config");
  if (common.raw.contains("seed")) common.seed = common.raw.at("seed").get<std::uint64_t>();
  if (common.raw.contains("workers")) {
    common.workers = common.raw.at("workers").get<std::size_t>();
  }
  if (options.seed_override) common.seed = *options.seed_override;
  if (options.workers_override) common.workers = *options.workers_override;
  return common;
}

json metrics_to_json(const TrainMetrics& metrics) {
  json epochs = json::array();
  for (const EpochMetrics& em : metrics.epochs) {
    epochs.push_back({{"mean_loss", em.mean_loss}, {"train_accuracy", em.train_accuracy}});
  }
  return {{"epochs", std::move(epochs)},
          {"final_train_accuracy", metrics.final_train_accuracy},
          {"final_test_accuracy", metrics.final_test_accuracy}};
}

}  // namespace

void cmd_train(const CliOptions& options) {
  static constexpr const char* kKeys[] = {"seed", "workers", "dataset", "model", "train"};
  const CommonConfig common = load_common(options, kKeys);
  if (!common.raw.contains("dataset")) throw ConfigError("config: missing 'dataset' section");
  const DatasetConfig dataset_cfg = dataset_config_from_json(common.raw.at("dataset"));

  ArchKind arch = ArchKind::small_cnn;
  if (common.raw.contains("model")) {
    static constexpr const char* kModelKeys[] = {"arch", "activation"};
    const json& model = common.raw.at("model");
    require_keys(model, kModelKeys, "model");
    if (model.contains("arch")) arch = arch_from_string(model.at("arch").get<std::string>());
    if (model.contains("activation")) {
      // activation is a train option; accept it here too for convenience
    }
  }
  TrainOptions train_options;
  if (common.raw.contains("train")) train_options = train_options_from_json(common.raw.at("train"));
  if (common.raw.contains("model") && common.raw.at("model").contains("activation")) {
    train_options.activation =
        activation_from_string(common.raw.at("model").at("activation").get<std::string>());
  }

  const Dataset train = load_split(dataset_cfg, "train");
  const Dataset test = load_split(dataset_cfg, "test");

  const TrainedClassifier trained =
      train_classifier(train, &test, arch, train_options, common.seed);

  json resolved;
  resolved["seed"] = common.seed;
  resolved["workers"] = common.workers;
  resolved["dataset"] = dataset_config_to_json(dataset_cfg);
  resolved["model"] = {{"arch", to_string(arch)},
                       {"activation", to_string(train_options.activation)}};
  resolved["train"] = train_options_to_json(train_options);

  with_staging(options.out_dir, [&](const fs::path& staging) {
    save_checkpoint(trained.model, (staging / "model.ckpt").string());
    write_text(staging / "metrics.json", metrics_to_json(trained.metrics).dump(2) + "\n");
    write_text(staging / "config.json", resolved.dump(2) + "\n");
  });
  std::cout << "trained " << to_string(arch) << ": train accuracy "
            << trained.metrics.final_train_accuracy << ", test accuracy "
            << trained.metrics.final_test_accuracy << "\n";
}

void cmd_attack(const CliOptions& options) {
  static constexpr const char* kKeys[] = {"seed",  "workers",      "surrogate",
                                          "dataset", "split",      "max_examples",
                                          "attack"};
  const CommonConfig common = load_common(options, kKeys);
  if (!common.raw.contains("surrogate")) {
    throw ConfigError("config: missing 'surrogate' checkpoint path");
  }
  const std::string surrogate_path = common.raw.at("surrogate").get<std::string>();
  if (!fs::exists(surrogate_path)) {
    throw ConfigError("surrogate checkpoint " + surrogate_path + " does not exist");
  }
  if (!common.raw.contains("dataset")) throw ConfigError("config: missing 'dataset' section");
  const DatasetConfig dataset_cfg = dataset_config_from_json(common.raw.at("dataset"));
  const std::string split = common.raw.value("split", std::string("test"));
  const std::size_t max_examples = common.raw.value("max_examples", std::size_t{0});
  AttackConfig attack_cfg;
  if (common.raw.contains("attack")) attack_cfg = attack_config_from_json(common.raw.at("attack"));

  const ClassifierModel surrogate = load_checkpoint(surrogate_path);
  Dataset data = load_split(dataset_cfg, split);
  if (max_examples > 0 && data.examples.size() > max_examples) {
    data.examples.resize(max_examples);
  }
  if (data.examples.empty()) throw ConfigError("attack: no examples selected");

  json resolved;
  resolved["seed"] = common.seed;
  resolved["workers"] = common.workers;
  resolved["surrogate"] = surrogate_path;
  resolved["dataset"] = dataset_config_to_json(dataset_cfg);
  resolved["split"] = split;
  resolved["max_examples"] = max_examples;
  resolved["attack"] = attack_config_to_json(attack_cfg);
  const std::uint64_t digest = fnv1a(resolved["attack"].dump());

  const std::vector<AdversarialResult> results =
      attack_batch(surrogate, data.examples, attack_cfg, common.seed, common.workers);

  AdversarialArchive archive;
  archive.estimator = to_string(attack_cfg.estimator);
  archive.config_digest = digest;
  archive.master_seed = common.seed;
  archive.records.reserve(results.size());
  json records = json::array();
  json records_doc;
  records_doc["estimator"] = to_string(attack_cfg.estimator);
  // auxiliary inputs per iteration; the fixed identity branch is not counted
  records_doc["auxiliary_budget"] =
      attack_cfg.transform_count * attack_cfg.baseline_count * attack_cfg.interp_points;
  records_doc["config_digest"] = digest;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const AdversarialResult& r = results[i];
    // Re-check the budget at write time; a violation here is an internal
    // invariant breach and maps to exit code 4.
    if (max_abs(r.delta) > attack_cfg.epsilon + 1e-9) {
      throw BudgetViolation("record " + std::to_string(i) + " exceeds the epsilon budget");
    }
    archive.records.push_back({data.examples[i].image, data.examples[i].label, r});
    records.push_back({{"index", i},
                       {"label", data.examples[i].label},
                       {"prediction_before", r.prediction_before},
                       {"prediction_after", r.prediction_after},
                       {"delta_linf", max_abs(r.delta)},
                       {"loss_trace", r.loss_trace},
                       {"mean_sign_conflict", r.mean_sign_conflict},
                       {"monotonic_branch_fraction", r.monotonic_branch_fraction},
                       {"zero_gradient_events", r.zero_gradient_events},
                       {"keep_nonmonotonic", attack_cfg.estimator == EstimatorKind::mumodig_all}});
  }

  records_doc["records"] = std::move(records);
  with_staging(options.out_dir, [&](const fs::path& staging) {
    save_archive(archive, (staging / "adversarial.bin").string());
    write_text(staging / "records.json", records_doc.dump(2) + "\n");
    write_text(staging / "config.json", resolved.dump(2) + "\n");
  });
  std::cout << "attacked " << results.size() << " examples with "
            << to_string(attack_cfg.estimator) << "\n";
}

void cmd_evaluate(const CliOptions& options) {
  static constexpr const char* kKeys[] = {"seed", "workers", "archives", "targets",
                                          "defense_bits"};
  const CommonConfig common = load_common(options, kKeys);
  if (!common.raw.contains("archives")) throw ConfigError("config: missing 'archives' list");
  if (!common.raw.contains("targets")) throw ConfigError("config: missing 'targets' list");
  const auto archive_paths = common.raw.at("archives").get<std::vector<std::string>>();
  if (archive_paths.empty()) throw ConfigError("config: 'archives' is empty");
  std::optional<std::size_t> defense_bits;
  if (common.raw.contains("defense_bits")) {
    defense_bits = common.raw.at("defense_bits").get<std::size_t>();
  }

  struct TargetSpec {
    std::string name, checkpoint;
  };
  std::vector<TargetSpec> target_specs;
  for (const json& t : common.raw.at("targets")) {
    static constexpr const char* kTargetKeys[] = {"name", "checkpoint"};
    require_keys(t, kTargetKeys, "target");
    if (!t.contains("checkpoint")) throw ConfigError("target: missing 'checkpoint'");
    target_specs.push_back(
        {t.value("name", std::string()), t.at("checkpoint").get<std::string>()});
  }
  for (const TargetSpec& t : target_specs) {
    if (!fs::exists(t.checkpoint)) {
      throw ConfigError("target checkpoint " + t.checkpoint + " does not exist");
    }
  }
  for (const std::string& p : archive_paths) {
    if (!fs::exists(p)) throw ConfigError("archive " + p + " does not exist");
  }

  std::vector<ClassifierModel> models;
  models.reserve(target_specs.size());
  std::vector<NamedTarget> targets;
  for (const TargetSpec& t : target_specs) {
    models.push_back(load_checkpoint(t.checkpoint));
    targets.push_back({t.name.empty() ? to_string(models.back().spec().arch) : t.name, nullptr});
  }
  for (std::size_t i = 0; i < models.size(); ++i) targets[i].model = &models[i];

  json resolved;
  resolved["seed"] = common.seed;
  resolved["workers"] = common.workers;
  resolved["archives"] = archive_paths;
  json target_json = json::array();
  for (std::size_t i = 0; i < target_specs.size(); ++i) {
    target_json.push_back({{"name", targets[i].name}, {"checkpoint", target_specs[i].checkpoint}});
  }
  resolved["targets"] = std::move(target_json);
  if (defense_bits) resolved["defense_bits"] = *defense_bits;

  TransferReport report;
  report.master_seed = common.seed;
  report.config_digest = fnv1a(resolved.dump());
  report.defense_bits = defense_bits;
  for (const NamedTarget& t : targets) report.targets.push_back(t.name);

  for (const std::string& path : archive_paths) {
    const AdversarialArchive archive = load_archive(path);
    if (report.surrogate_id.empty()) report.surrogate_id = "archive";
    report.example_count = std::max(report.example_count, archive.records.size());
    std::vector<EvalPair> pairs;
    pairs.reserve(archive.records.size());
    for (const AttackRecord& rec : archive.records) {
      pairs.push_back({rec.clean, rec.result.adversarial, rec.label});
    }
    report.estimators.push_back(archive.estimator);
    auto cells = evaluate_pairs(archive.estimator, targets, pairs, defense_bits);
    report.cells.insert(report.cells.end(), cells.begin(), cells.end());
  }

  with_staging(options.out_dir, [&](const fs::path& staging) {
    write_text(staging / "report.csv", transfer_report_csv(report));
    write_text(staging / "report.json", transfer_report_json(report));
    write_text(staging / "config.json", resolved.dump(2) + "\n");
  });
  std::cout << "evaluated " << archive_paths.size() << " archives on " << targets.size()
            << " targets\n";
}

void cmd_diagnose(const CliOptions& options) {
  static constexpr const char* kKeys[] = {"seed",   "workers",      "checkpoint", "dataset",
                                          "split",  "example_index", "profile",   "attribution"};
  const CommonConfig common = load_common(options, kKeys);
  if (!common.raw.contains("checkpoint")) throw ConfigError("config: missing 'checkpoint'");
  const std::string checkpoint = common.raw.at("checkpoint").get<std::string>();
  if (!fs::exists(checkpoint)) {
    throw ConfigError("checkpoint " + checkpoint + " does not exist");
  }
  if (!common.raw.contains("dataset")) throw ConfigError("config: missing 'dataset' section");
  const DatasetConfig dataset_cfg = dataset_config_from_json(common.raw.at("dataset"));
  const std::string split = common.raw.value("split", std::string("test"));
  const std::size_t example_index = common.raw.value("example_index", std::size_t{0});

  const ClassifierModel model = load_checkpoint(checkpoint);
  const Dataset data = load_split(dataset_cfg, split);
  if (example_index >= data.examples.size()) {
    throw ConfigError("example_index " + std::to_string(example_index) + " out of range for " +
                      std::to_string(data.examples.size()) + " examples");
  }
  const LabeledExample& example = data.examples[example_index];

  json resolved;
  resolved["seed"] = common.seed;
  resolved["workers"] = common.workers;
  resolved["checkpoint"] = checkpoint;
  resolved["dataset"] = dataset_config_to_json(dataset_cfg);
  resolved["split"] = split;
  resolved["example_index"] = example_index;

  std::optional<std::string> profile_csv;
  if (common.raw.contains("profile")) {
    static constexpr const char* kProfileKeys[] = {"n_points", "baseline", "lbq_regions",
                                                   "lambda",   "loss"};
    const json& p = common.raw.at("profile");
    require_keys(p, kProfileKeys, "profile");
    const std::size_t n_points = p.value("n_points", std::size_t{10});
    const std::string baseline_kind = p.value("baseline", std::string("lbq"));
    const std::size_t lbq_regions = p.value("lbq_regions", std::size_t{2});
    const double lambda = p.value("lambda", 0.65);
    const LossKind loss =
        p.contains("loss") ? loss_from_string(p.at("loss").get<std::string>())
                           : LossKind::neg_log_prob;
    Tensor baseline;
    if (baseline_kind == "lbq") {
      baseline = lbq_baseline(example.image, lbq_regions, mix_seed(common.seed, seed_tag::lbq))
                     .image;
    } else if (baseline_kind == "black") {
      baseline = black_baseline(example.image).image;
    } else {
      throw ConfigError("profile: unknown baseline '" + baseline_kind + "'");
    }
    IntegrationPath path{baseline, example.image, n_points, lambda};
    const CosineProfile profile = gradient_cosine_profile(model, example.label, path, loss);
    profile_csv = csv_matrix(profile);
    resolved["profile"] = {{"n_points", n_points},
                           {"baseline", baseline_kind},
                           {"lbq_regions", lbq_regions},
                           {"lambda", lambda},
                           {"loss", to_string(loss)}};
  }

  std::optional<std::string> attribution_csv;
  if (common.raw.contains("attribution")) {
    static constexpr const char* kAttribKeys[] = {"n_interp", "lambda", "target"};
    const json& a = common.raw.at("attribution");
    require_keys(a, kAttribKeys, "attribution");
    AttributionConfig cfg;
    cfg.n_interp = a.value("n_interp", cfg.n_interp);
    cfg.lambda = a.value("lambda", cfg.lambda);
    if (a.contains("target")) {
      cfg.target = attribution_target_from_string(a.at("target").get<std::string>());
    }
    attribution_csv = csv_grid(attribution_map(model, example.image, example.label, cfg));
    resolved["attribution"] = {{"n_interp", cfg.n_interp},
                               {"lambda", cfg.lambda},
                               {"target", to_string(cfg.target)}};
  }
  if (!profile_csv && !attribution_csv) {
    throw ConfigError("diagnose: config requests neither 'profile' nor 'attribution'");
  }

  with_staging(options.out_dir, [&](const fs::path& staging) {
    if (profile_csv) write_text(staging / "cosine_profile.csv", *profile_csv);
    if (attribution_csv) write_text(staging / "attribution.csv", *attribution_csv);
    write_text(staging / "config.json", resolved.dump(2) + "\n");
  });
  std::cout << "diagnostics written\n";
}

int exit_code_for_current_exception() {
  try {
    throw;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const TrainingDivergence& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const BudgetViolation& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace mumodig

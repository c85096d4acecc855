#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mumodig/attack.hpp"
#include "mumodig/dataio.hpp"
#include "mumodig/models.hpp"

namespace mumodig {

std::uint64_t fnv1a(std::string_view text);

nlohmann::json load_config_file(const std::string& path);

// Strict-schema helper: every present key must be in the allowed list.
void require_keys(const nlohmann::json& obj, std::span<const char* const> allowed,
                  const std::string& context);

// --- dataset section ---------------------------------------------------------

struct DatasetConfig {
  std::string kind = "synth";  // synth | idx | cifar10
  // synth
  std::size_t num_classes = 4;
  std::array<std::size_t, 3> image_shape{3, 24, 24};
  std::size_t per_class_train = 100;
  std::size_t per_class_test = 25;
  std::uint64_t seed = 0;
  double noise_sigma = 0.08;
  // idx
  std::string train_images, train_labels, test_images, test_labels;
  // cifar10
  std::vector<std::string> train_files;
  std::string test_file;
};

DatasetConfig dataset_config_from_json(const nlohmann::json& section);
nlohmann::json dataset_config_to_json(const DatasetConfig& cfg);
Dataset load_split(const DatasetConfig& cfg, const std::string& split);

// --- attack section ------------------------------------------------------------

AttackConfig attack_config_from_json(const nlohmann::json& section);
nlohmann::json attack_config_to_json(const AttackConfig& cfg);

// --- train section ---------------------------------------------------------------

TrainOptions train_options_from_json(const nlohmann::json& section);
nlohmann::json train_options_to_json(const TrainOptions& options);

}  // namespace mumodig

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mumodig/attack.hpp"
#include "mumodig/models.hpp"
#include "mumodig/paths.hpp"

namespace mumodig {

struct EvalPair {
  Tensor clean;
  Tensor adversarial;
  int label = 0;
};

// Success is counted both over the subset the target classifies correctly on
// the clean image (filtered) and over all pairs (unfiltered), so either
// denominator convention is recoverable from a report.
struct AsrResult {
  double filtered = 0.0;
  double unfiltered = 0.0;
  std::size_t eligible = 0;
  std::size_t total = 0;
  std::size_t success_eligible = 0;
  std::size_t success_total = 0;
};

// defense_bits, when set, applies bit-depth reduction to both images before
// classification. Throws ConfigError when no pair is eligible.
AsrResult attack_success_rate(const ClassifierModel& target, std::span<const EvalPair> pairs,
                              std::optional<std::size_t> defense_bits = std::nullopt);

struct TransferCell {
  std::string estimator;
  std::string target;
  AsrResult asr;
  std::optional<AsrResult> defended;
};

struct TransferReport {
  std::string surrogate_id;
  std::vector<std::string> estimators;  // row order
  std::vector<std::string> targets;     // column order
  std::vector<TransferCell> cells;      // estimator-major
  std::size_t example_count = 0;
  std::uint64_t master_seed = 0;
  std::uint64_t config_digest = 0;
  std::optional<std::size_t> defense_bits;
};

struct EstimatorRun {
  std::string name;
  AttackConfig config;
};

struct NamedTarget {
  std::string name;
  const ClassifierModel* model = nullptr;
};

// Attacks are generated once per estimator on the surrogate and evaluated on
// every target; deterministic per master_seed and worker-count independent.
TransferReport transfer_matrix(const ClassifierModel& surrogate,
                               std::span<const NamedTarget> targets,
                               std::span<const LabeledExample> sample,
                               std::span<const EstimatorRun> estimators,
                               std::uint64_t master_seed, std::size_t workers,
                               std::optional<std::size_t> defense_bits = std::nullopt);

// Evaluate an already-generated batch under every target (one report row).
std::vector<TransferCell> evaluate_pairs(const std::string& estimator,
                                         std::span<const NamedTarget> targets,
                                         std::span<const EvalPair> pairs,
                                         std::optional<std::size_t> defense_bits);

std::string transfer_report_csv(const TransferReport& report);
std::string transfer_report_json(const TransferReport& report);

// Pairwise cosine similarities between input gradients at path points.
// Entries touching a zero gradient are undefined and stored as NaN.
struct CosineProfile {
  std::size_t n = 0;
  std::vector<double> values;  // n*n row-major
  double at(std::size_t i, std::size_t j) const { return values[i * n + j]; }
  bool defined(std::size_t i, std::size_t j) const;
};

CosineProfile gradient_cosine_profile(const ClassifierModel& model, int label,
                                      const IntegrationPath& path, LossKind loss);

enum class AttributionTarget { logit, prob, loss };
std::string to_string(AttributionTarget target);
AttributionTarget attribution_target_from_string(const std::string& s);

struct AttributionConfig {
  std::size_t n_interp = 64;
  double lambda = 0.5;
  AttributionTarget target = AttributionTarget::logit;
};

// Channel-summed discrete IG attribution from a black baseline; {H,W} grid.
Tensor attribution_map(const ClassifierModel& model, const Tensor& x, int label,
                       const AttributionConfig& cfg);

// Quantize pixels to 2^bits levels (round half up); bits in [1,8].
Tensor bit_depth_reduce(const Tensor& x, std::size_t bits);

// Plot-ready numeric grids.
std::string csv_grid(const Tensor& grid);  // 2-D tensors
std::string csv_matrix(const CosineProfile& profile);

}  // namespace mumodig

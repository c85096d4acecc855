#include "mumodig/eval.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "mumodig/errors.hpp"

namespace mumodig {

namespace {

using nlohmann::json;

int predict_defended(const ClassifierModel& model, const Tensor& image,
                     std::optional<std::size_t> bits) {
  return bits ? model.predict(bit_depth_reduce(image, *bits)) : model.predict(image);
}

void append_double(std::ostringstream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  os << buf;
}

json asr_json(const AsrResult& asr) {
  return {{"asr_filtered", asr.filtered},   {"asr_unfiltered", asr.unfiltered},
          {"n_eligible", asr.eligible},     {"n_total", asr.total},
          {"n_success_eligible", asr.success_eligible},
          {"n_success_total", asr.success_total}};
}

}  // namespace

AsrResult attack_success_rate(const ClassifierModel& target, std::span<const EvalPair> pairs,
                              std::optional<std::size_t> defense_bits) {
  if (pairs.empty()) throw ConfigError("attack_success_rate: no pairs to evaluate");
  AsrResult asr;
  asr.total = pairs.size();
  for (const EvalPair& pair : pairs) {
    const bool clean_correct =
        predict_defended(target, pair.clean, defense_bits) == pair.label;
    const bool adv_wrong =
        predict_defended(target, pair.adversarial, defense_bits) != pair.label;
    if (clean_correct) {
      ++asr.eligible;
      if (adv_wrong) ++asr.success_eligible;
    }
    if (adv_wrong) ++asr.success_total;
  }
  if (asr.eligible == 0) {
    throw ConfigError("attack_success_rate: empty denominator, the target classifies no clean "
                      "image correctly");
  }
  asr.filtered = static_cast<double>(asr.success_eligible) / static_cast<double>(asr.eligible);
  asr.unfiltered = static_cast<double>(asr.success_total) / static_cast<double>(asr.total);
  return asr;
}

std::vector<TransferCell> evaluate_pairs(const std::string& estimator,
                                         std::span<const NamedTarget> targets,
                                         std::span<const EvalPair> pairs,
                                         std::optional<std::size_t> defense_bits) {
  std::vector<TransferCell> cells;
  cells.reserve(targets.size());
  for (const NamedTarget& target : targets) {
    TransferCell cell;
    cell.estimator = estimator;
    cell.target = target.name;
    cell.asr = attack_success_rate(*target.model, pairs);
    if (defense_bits) cell.defended = attack_success_rate(*target.model, pairs, defense_bits);
    cells.push_back(std::move(cell));
  }
  return cells;
}

TransferReport transfer_matrix(const ClassifierModel& surrogate,
                               std::span<const NamedTarget> targets,
                               std::span<const LabeledExample> sample,
                               std::span<const EstimatorRun> estimators,
                               std::uint64_t master_seed, std::size_t workers,
                               std::optional<std::size_t> defense_bits) {
  if (sample.empty()) throw ConfigError("transfer_matrix: empty example sample");
  if (targets.empty()) throw ConfigError("transfer_matrix: no targets");
  TransferReport report;
  report.surrogate_id = to_string(surrogate.spec().arch);
  report.example_count = sample.size();
  report.master_seed = master_seed;
  report.defense_bits = defense_bits;
  for (const NamedTarget& t : targets) report.targets.push_back(t.name);

  for (const EstimatorRun& run : estimators) {
    report.estimators.push_back(run.name);
    const std::vector<AdversarialResult> results =
        attack_batch(surrogate, sample, run.config, master_seed, workers);
    std::vector<EvalPair> pairs;
    pairs.reserve(results.size());
    for (std::size_t i = 0; i < results.size(); ++i) {
      pairs.push_back({sample[i].image, results[i].adversarial, sample[i].label});
    }
    auto cells = evaluate_pairs(run.name, targets, pairs, defense_bits);
    report.cells.insert(report.cells.end(), cells.begin(), cells.end());
  }
  return report;
}

std::string transfer_report_csv(const TransferReport& report) {
  std::ostringstream os;
  os << "estimator,target,asr_filtered,asr_unfiltered,n_eligible,n_total";
  if (report.defense_bits) {
    os << ",defended_asr_filtered,defended_asr_unfiltered,defended_n_eligible";
  }
  os << "\n";
  for (const TransferCell& cell : report.cells) {
    os << cell.estimator << "," << cell.target << ",";
    append_double(os, cell.asr.filtered);
    os << ",";
    append_double(os, cell.asr.unfiltered);
    os << "," << cell.asr.eligible << "," << cell.asr.total;
    if (report.defense_bits) {
      const AsrResult& d = cell.defended.value();
      os << ",";
      append_double(os, d.filtered);
      os << ",";
      append_double(os, d.unfiltered);
      os << "," << d.eligible;
    }
    os << "\n";
  }
  return os.str();
}

std::string transfer_report_json(const TransferReport& report) {
  json doc;
  doc["surrogate"] = report.surrogate_id;
  doc["estimators"] = report.estimators;
  doc["targets"] = report.targets;
  doc["example_count"] = report.example_count;
  doc["master_seed"] = report.master_seed;
  doc["config_digest"] = report.config_digest;
  if (report.defense_bits) doc["defense_bits"] = *report.defense_bits;
  json cells = json::array();
  for (const TransferCell& cell : report.cells) {
    json c = {{"estimator", cell.estimator}, {"target", cell.target}, {"asr", asr_json(cell.asr)}};
    if (cell.defended) c["defended"] = asr_json(*cell.defended);
    cells.push_back(std::move(c));
  }
  doc["cells"] = std::move(cells);
  return doc.dump(2) + "\n";
}

bool CosineProfile::defined(std::size_t i, std::size_t j) const {
  return !std::isnan(at(i, j));
}

CosineProfile gradient_cosine_profile(const ClassifierModel& model, int label,
                                      const IntegrationPath& path, LossKind loss) {
  if (path.n_points < 2) throw ConfigError("cosine profile needs at least 2 path points");
  const std::vector<Tensor> points = interpolated_points(path);
  std::vector<Tensor> grads;
  std::vector<double> norms;
  grads.reserve(points.size());
  for (const Tensor& point : points) {
    grads.push_back(input_gradient(model, point, label, loss));
    norms.push_back(l2_norm(grads.back()));
  }
  CosineProfile profile;
  profile.n = points.size();
  profile.values.assign(profile.n * profile.n, 0.0);
  for (std::size_t i = 0; i < profile.n; ++i) {
    for (std::size_t j = 0; j < profile.n; ++j) {
      if (norms[i] == 0.0 || norms[j] == 0.0) {
        profile.values[i * profile.n + j] = std::numeric_limits<double>::quiet_NaN();
      } else {
        profile.values[i * profile.n + j] = dot(grads[i], grads[j]) / (norms[i] * norms[j]);
      }
    }
  }
  return profile;
}

std::string to_string(AttributionTarget target) {
  switch (target) {
    case AttributionTarget::logit: return "logit";
    case AttributionTarget::prob: return "prob";
    case AttributionTarget::loss: return "loss";
  }
  return "?";
}

AttributionTarget attribution_target_from_string(const std::string& s) {
  if (s == "logit") return AttributionTarget::logit;
  if (s == "prob") return AttributionTarget::prob;
  if (s == "loss") return AttributionTarget::loss;
  throw ConfigError("unknown attribution target '" + s + "'");
}

Tensor attribution_map(const ClassifierModel& model, const Tensor& x, int label,
                       const AttributionConfig& cfg) {
  if (cfg.n_interp < 1) throw ConfigError("attribution: n_interp must be >= 1");
  const std::size_t c = x.channels(), h = x.height(), w = x.width();
  auto target_gradient = [&](const Tensor& z) {
    const Tensor leaf = z.grad_leaf();
    Tensor value;
    switch (cfg.target) {
      case AttributionTarget::logit:
        value = pick(model.logits(leaf), static_cast<std::size_t>(label));
        break;
      case AttributionTarget::prob:
        value = pick(model.forward(leaf), static_cast<std::size_t>(label));
        break;
      case AttributionTarget::loss:
        value = model.loss(leaf, label, LossKind::neg_log_prob);
        break;
    }
    return backward(value).at(leaf);
  };

  // Black-baseline path: direction is x itself.
  Tensor grad_sum = Tensor::zeros(x.shape());
  for (std::size_t k = 0; k < cfg.n_interp; ++k) {
    const double coeff =
        (static_cast<double>(k) + cfg.lambda) / static_cast<double>(cfg.n_interp);
    grad_sum = add(grad_sum, target_gradient(scale(x, coeff)));
  }
  const Tensor attribution = scale(mul(x, grad_sum), 1.0 / static_cast<double>(cfg.n_interp));

  Tensor map = Tensor::zeros({h, w});
  auto dst = map.mutable_values();
  const auto src = attribution.values();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < h * w; ++i) dst[i] += src[ch * h * w + i];
  return map;
}

Tensor bit_depth_reduce(const Tensor& x, std::size_t bits) {
  if (bits < 1 || bits > 8) {
    throw ConfigError("bit_depth_reduce: bits must lie in [1,8], got " + std::to_string(bits));
  }
  const double levels = static_cast<double>((1u << bits) - 1);
  Tensor out = x.clone();
  for (double& v : out.mutable_values()) {
    v = std::floor(v * levels + 0.5) / levels;  // round half up
  }
  return out;
}

std::string csv_grid(const Tensor& grid) {
  if (grid.shape().size() != 2) {
    throw TensorError("csv_grid: expected 2-D grid, got " + shape_to_string(grid.shape()));
  }
  const std::size_t h = grid.shape()[0], w = grid.shape()[1];
  std::ostringstream os;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (x) os << ",";
      append_double(os, grid.values()[y * w + x]);
    }
    os << "\n";
  }
  return os.str();
}

std::string csv_matrix(const CosineProfile& profile) {
  std::ostringstream os;
  for (std::size_t i = 0; i < profile.n; ++i) {
    for (std::size_t j = 0; j < profile.n; ++j) {
      if (j) os << ",";
      if (profile.defined(i, j)) {
        append_double(os, profile.at(i, j));
      } else {
        os << "nan";
      }
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace mumodig

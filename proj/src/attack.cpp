#include "mumodig/attack.hpp"

#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

#include "mumodig/errors.hpp"

namespace mumodig {

std::string to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::plain: return "plain";
    case EstimatorKind::ig_single: return "ig_single";
    case EstimatorKind::muig: return "muig";
    case EstimatorKind::mumoig: return "mumoig";
    case EstimatorKind::mumodig_all: return "mumodig_all";
    case EstimatorKind::mumodig: return "mumodig";
  }
  return "?";
}

EstimatorKind estimator_from_string(const std::string& s) {
  if (s == "plain") return EstimatorKind::plain;
  if (s == "ig_single") return EstimatorKind::ig_single;
  if (s == "muig") return EstimatorKind::muig;
  if (s == "mumoig") return EstimatorKind::mumoig;
  if (s == "mumodig_all") return EstimatorKind::mumodig_all;
  if (s == "mumodig") return EstimatorKind::mumodig;
  throw ConfigError("unknown estimator '" + s + "'");
}

std::string to_string(IgBaselineKind kind) {
  return kind == IgBaselineKind::black ? "black" : "lbq";
}

IgBaselineKind ig_baseline_from_string(const std::string& s) {
  if (s == "black") return IgBaselineKind::black;
  if (s == "lbq") return IgBaselineKind::lbq;
  throw ConfigError("unknown ig baseline '" + s + "'");
}

std::string to_string(MuigBaselineKind kind) {
  switch (kind) {
    case MuigBaselineKind::noise: return "noise";
    case MuigBaselineKind::blur: return "blur";
    case MuigBaselineKind::black_mix: return "black_mix";
  }
  return "?";
}

MuigBaselineKind muig_baseline_from_string(const std::string& s) {
  if (s == "noise") return MuigBaselineKind::noise;
  if (s == "blur") return MuigBaselineKind::blur;
  if (s == "black_mix") return MuigBaselineKind::black_mix;
  throw ConfigError("unknown muig baseline '" + s + "'");
}

std::string to_string(GradNorm norm) {
  switch (norm) {
    case GradNorm::mean_abs: return "mean_abs";
    case GradNorm::l1_sum: return "l1_sum";
    case GradNorm::l2: return "l2";
  }
  return "?";
}

GradNorm norm_from_string(const std::string& s) {
  if (s == "mean_abs") return GradNorm::mean_abs;
  if (s == "l1_sum") return GradNorm::l1_sum;
  if (s == "l2") return GradNorm::l2;
  throw ConfigError("unknown norm '" + s + "'");
}

void validate(const AttackConfig& cfg) {
  if (cfg.iterations < 1) throw ConfigError("attack: iterations must be >= 1");
  if (cfg.epsilon <= 0.0) throw ConfigError("attack: epsilon must be > 0");
  if (cfg.step <= 0.0) throw ConfigError("attack: step must be > 0");
  if (cfg.momentum < 0.0) throw ConfigError("attack: momentum must be >= 0");
  if (cfg.lambda < 0.0 || cfg.lambda > 1.0) throw ConfigError("attack: lambda must lie in [0,1]");
  if (cfg.lbq_regions < 1) throw ConfigError("attack: lbq_regions must be >= 1");
  if (cfg.interp_points < 1) throw ConfigError("attack: interp_points must be >= 1");
  if (cfg.baseline_count < 1) throw ConfigError("attack: baseline_count must be >= 1");
  if (cfg.muig_noise_sigma <= 0.0) throw ConfigError("attack: muig_noise_sigma must be > 0");
  if (cfg.library.empty() && cfg.transform_count > 0 &&
      (cfg.estimator == EstimatorKind::mumodig || cfg.estimator == EstimatorKind::mumodig_all)) {
    throw ConfigError("attack: transform library is empty but transform_count > 0");
  }
}

std::uint64_t branch_seed(std::uint64_t estimator_seed, std::size_t p, std::size_t q,
                          std::size_t n_baselines) {
  return mix_seed(estimator_seed, seed_tag::lbq, p * n_baselines + q);
}

std::uint64_t transform_branch_seed(std::uint64_t estimator_seed, std::size_t p) {
  return mix_seed(estimator_seed, seed_tag::transform, p);
}

std::uint64_t muig_baseline_seed(std::uint64_t estimator_seed, std::size_t q) {
  return mix_seed(estimator_seed, seed_tag::noise, q);
}

std::uint64_t iteration_seed(std::uint64_t attack_seed, std::size_t t) {
  return mix_seed(attack_seed, seed_tag::iteration, t);
}

std::uint64_t example_seed(std::uint64_t master_seed, std::size_t example_index) {
  return mix_seed(master_seed, seed_tag::example, example_index);
}

namespace {

// Sum of the gradient field over the interpolation points at coefficients
// (k+lambda)/n along the segment.
Tensor path_gradient_sum(const std::function<Tensor(const Tensor&)>& grad_at,
                         const Tensor& endpoint, const Tensor& baseline,
                         std::size_t n_interp, double lambda) {
  if (baseline.shape() != endpoint.shape()) {
    throw TensorError("ig: baseline " + shape_to_string(baseline.shape()) + " vs input " +
                      shape_to_string(endpoint.shape()));
  }
  if (n_interp < 1) throw TensorError("ig: n_interp must be >= 1");
  const Tensor direction = sub(endpoint, baseline);
  Tensor grad_sum = Tensor::zeros(endpoint.shape());
  for (std::size_t k = 0; k < n_interp; ++k) {
    const double coeff =
        (static_cast<double>(k) + lambda) / static_cast<double>(n_interp);
    grad_sum = add(grad_sum, grad_at(add(baseline, scale(direction, coeff))));
  }
  return grad_sum;
}

struct SegmentEstimate {
  Tensor gradient;
  double conflict = 0.0;
  bool monotonic = true;
};

// One straight segment baseline -> endpoint of the discrete IG sum.
SegmentEstimate ig_segment(const ClassifierModel& model, const Tensor& endpoint, int label,
                           const Tensor& baseline, std::size_t n_interp, double lambda,
                           LossKind loss) {
  const Tensor direction = sub(endpoint, baseline);
  const Tensor grad_sum = path_gradient_sum(
      [&](const Tensor& z) { return input_gradient(model, z, label, loss); }, endpoint,
      baseline, n_interp, lambda);
  SegmentEstimate seg;
  seg.gradient = scale(mul(direction, grad_sum), 1.0 / static_cast<double>(n_interp));
  seg.conflict = sign_conflict_fraction(direction, grad_sum);
  seg.monotonic = min_value(direction) >= 0.0;
  return seg;
}

Tensor muig_sample_baseline(const Tensor& x, const AttackConfig& cfg,
                            std::uint64_t estimator_seed, std::size_t q) {
  auto noise = [&] {
    return noise_baseline(x, cfg.muig_noise_sigma, muig_baseline_seed(estimator_seed, q)).image;
  };
  auto blurred = [&] { return blur_baseline(x, 3 + 2 * (q % 3)).image; };
  switch (cfg.muig_baseline) {
    case MuigBaselineKind::noise: return noise();
    case MuigBaselineKind::blur: return blurred();
    case MuigBaselineKind::black_mix:
      // Cycle black, noise, blur so N_B=1 degenerates to the black baseline.
      if (q % 3 == 0) return black_baseline(x).image;
      return q % 3 == 1 ? noise() : blurred();
  }
  throw ConfigError("unknown muig baseline kind");
}

}  // namespace

Tensor integrated_gradient(const std::function<Tensor(const Tensor&)>& grad_at,
                           const Tensor& endpoint, const Tensor& baseline,
                           std::size_t n_interp, double lambda) {
  const Tensor grad_sum = path_gradient_sum(grad_at, endpoint, baseline, n_interp, lambda);
  return scale(mul(sub(endpoint, baseline), grad_sum), 1.0 / static_cast<double>(n_interp));
}

GradientEstimate estimate_plain(const ClassifierModel& model, const Tensor& x, int label,
                                LossKind loss) {
  GradientEstimate est;
  est.gradient = input_gradient(model, x, label, loss);
  est.branch_count = 1;
  est.mean_sign_conflict = 0.0;
  est.monotonic_branches = 1;
  return est;
}

GradientEstimate estimate_ig(const ClassifierModel& model, const Tensor& x, int label,
                             const Tensor& baseline, std::size_t n_interp, double lambda,
                             LossKind loss) {
  const SegmentEstimate seg = ig_segment(model, x, label, baseline, n_interp, lambda, loss);
  GradientEstimate est;
  est.gradient = seg.gradient;
  est.branch_count = 1;
  est.mean_sign_conflict = seg.conflict;
  est.monotonic_branches = seg.monotonic ? 1 : 0;
  return est;
}

GradientEstimate estimate_muig(const ClassifierModel& model, const Tensor& x, int label,
                               const AttackConfig& cfg, std::uint64_t estimator_seed) {
  validate(cfg);
  Tensor total;
  double conflict_sum = 0.0;
  std::size_t monotonic = 0;
  for (std::size_t q = 0; q < cfg.baseline_count; ++q) {
    const Tensor baseline = muig_sample_baseline(x, cfg, estimator_seed, q);
    const SegmentEstimate seg =
        ig_segment(model, x, label, baseline, cfg.interp_points, cfg.lambda, cfg.loss);
    total = total.valid() ? add(total, seg.gradient) : seg.gradient;
    conflict_sum += seg.conflict;
    if (seg.monotonic) ++monotonic;
  }
  GradientEstimate est;
  est.gradient = scale(total, 1.0 / static_cast<double>(cfg.baseline_count));
  est.branch_count = cfg.baseline_count;
  est.mean_sign_conflict = conflict_sum / static_cast<double>(cfg.baseline_count);
  est.monotonic_branches = monotonic;
  return est;
}

GradientEstimate estimate_mumodig(const ClassifierModel& model, const Tensor& x, int label,
                                  const AttackConfig& cfg, bool keep_nonmonotonic,
                                  std::uint64_t estimator_seed) {
  validate(cfg);
  const std::size_t branches = (cfg.transform_count + 1) * cfg.baseline_count;
  Tensor total;
  double conflict_sum = 0.0;
  std::size_t monotonic = 0;

  for (std::size_t p = 0; p <= cfg.transform_count; ++p) {
    TransformSpec spec;
    if (p > 0) {
      Rng rng(transform_branch_seed(estimator_seed, p));
      spec = sample_transform(cfg.library, cfg.ranges, rng);
    }
    // With alignment enabled the transform is recorded so each diversified
    // branch gradient can be pulled back through its adjoint.
    const bool align = cfg.align_gradients && p > 0;
    const Tensor x_leaf = align ? x.grad_leaf() : x;
    const Tensor xp_graph = apply_transform(x_leaf, spec);
    const Tensor xp = align ? Tensor::from_values(xp_graph.shape(),
                                                  {xp_graph.values().begin(),
                                                   xp_graph.values().end()})
                            : xp_graph;
    for (std::size_t q = 0; q < cfg.baseline_count; ++q) {
      const Baseline b = lbq_baseline(xp, cfg.lbq_regions,
                                      branch_seed(estimator_seed, p, q, cfg.baseline_count),
                                      cfg.lbq_force_black);
      const SegmentEstimate a =
          ig_segment(model, xp, label, b.image, cfg.interp_points, cfg.lambda, cfg.loss);
      Tensor contribution = a.gradient;
      if (align) {
        // J_T^T * IG: backpropagate the transformed-frame estimate through
        // the recorded transform graph.
        const Tensor pseudo = mean(mul(xp_graph, contribution));
        contribution = scale(backward(pseudo).at(x_leaf), static_cast<double>(xp.size()));
      }
      double branch_conflict = a.conflict;
      bool branch_monotonic = a.monotonic;
      if (keep_nonmonotonic && p > 0) {
        // Return segment from the transformed image back to x; generally
        // non-monotonic, which is exactly what MuMoDIG drops.
        const SegmentEstimate bseg =
            ig_segment(model, x, label, xp, cfg.interp_points, cfg.lambda, cfg.loss);
        contribution = add(contribution, bseg.gradient);
        branch_conflict = 0.5 * (a.conflict + bseg.conflict);
        branch_monotonic = branch_monotonic && bseg.monotonic;
      }
      total = total.valid() ? add(total, contribution) : contribution;
      conflict_sum += branch_conflict;
      if (branch_monotonic) ++monotonic;
    }
  }

  GradientEstimate est;
  est.gradient = scale(total, 1.0 / static_cast<double>(branches));
  est.branch_count = branches;
  est.mean_sign_conflict = conflict_sum / static_cast<double>(branches);
  est.monotonic_branches = monotonic;
  return est;
}

GradientEstimate estimate_gradient(const ClassifierModel& model, const Tensor& x, int label,
                                   const AttackConfig& cfg, std::uint64_t estimator_seed) {
  switch (cfg.estimator) {
    case EstimatorKind::plain:
      return estimate_plain(model, x, label, cfg.loss);
    case EstimatorKind::ig_single: {
      const Tensor baseline =
          cfg.ig_baseline == IgBaselineKind::black
              ? black_baseline(x).image
              : lbq_baseline(x, cfg.lbq_regions, branch_seed(estimator_seed, 0, 0, 1),
                             cfg.lbq_force_black)
                    .image;
      return estimate_ig(model, x, label, baseline, cfg.interp_points, cfg.lambda, cfg.loss);
    }
    case EstimatorKind::muig:
      return estimate_muig(model, x, label, cfg, estimator_seed);
    case EstimatorKind::mumoig: {
      AttackConfig no_transforms = cfg;
      no_transforms.transform_count = 0;
      return estimate_mumodig(model, x, label, no_transforms, false, estimator_seed);
    }
    case EstimatorKind::mumodig_all:
      return estimate_mumodig(model, x, label, cfg, true, estimator_seed);
    case EstimatorKind::mumodig:
      return estimate_mumodig(model, x, label, cfg, false, estimator_seed);
  }
  throw ConfigError("unknown estimator kind");
}

AdversarialResult run_attack(const ClassifierModel& model, const LabeledExample& example,
                             const AttackConfig& cfg) {
  validate(cfg);
  const Tensor& clean = example.image;
  if (min_value(clean) < 0.0 || max_value(clean) > 1.0) {
    throw TensorError("run_attack: clean image leaves the [0,1] box");
  }

  AdversarialResult result;
  result.prediction_before = model.predict(clean);

  Tensor x = clean.clone();
  Tensor g = Tensor::zeros(clean.shape());
  double conflict_sum = 0.0;
  std::size_t branch_total = 0, monotonic_total = 0;

  for (std::size_t t = 0; t < cfg.iterations; ++t) {
    result.loss_trace.push_back(loss_value(model, x, example.label, cfg.loss));
    const GradientEstimate est =
        estimate_gradient(model, x, example.label, cfg, iteration_seed(cfg.seed, t));
    conflict_sum += est.mean_sign_conflict * static_cast<double>(est.branch_count);
    branch_total += est.branch_count;
    monotonic_total += est.monotonic_branches;

    double norm = 0.0;
    switch (cfg.norm) {
      case GradNorm::mean_abs: norm = mean_abs(est.gradient); break;
      case GradNorm::l1_sum: norm = sum_abs(est.gradient); break;
      case GradNorm::l2: norm = l2_norm(est.gradient); break;
    }
    if (norm == 0.0) {
      // Degenerate branch sum: momentum decays, the contribution is skipped.
      ++result.zero_gradient_events;
      g = scale(g, cfg.momentum);
    } else {
      g = add(scale(g, cfg.momentum), scale(est.gradient, 1.0 / norm));
    }
    const Tensor stepped = add(x, scale(sign(g), cfg.step));
    const Tensor delta = clamp(sub(stepped, clean), -cfg.epsilon, cfg.epsilon);
    x = clamp(add(clean, delta), 0.0, 1.0);
  }
  result.loss_trace.push_back(loss_value(model, x, example.label, cfg.loss));

  result.adversarial = x;
  result.delta = sub(x, clean);
  result.prediction_after = model.predict(x);
  result.mean_sign_conflict =
      branch_total > 0 ? conflict_sum / static_cast<double>(branch_total) : 0.0;
  result.monotonic_branch_fraction =
      branch_total > 0 ? static_cast<double>(monotonic_total) / static_cast<double>(branch_total)
                       : 1.0;

  if (max_abs(result.delta) > cfg.epsilon + 1e-9 || min_value(x) < 0.0 || max_value(x) > 1.0) {
    throw BudgetViolation("run_attack produced an out-of-budget perturbation");
  }
  return result;
}

std::vector<AdversarialResult> attack_batch(const ClassifierModel& model,
                                            std::span<const LabeledExample> examples,
                                            const AttackConfig& base, std::uint64_t master_seed,
                                            std::size_t workers) {
  validate(base);
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, examples.size() == 0 ? std::size_t{1} : examples.size());

  std::vector<AdversarialResult> results(examples.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto work = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= examples.size()) break;
      try {
        AttackConfig cfg = base;
        cfg.seed = example_seed(master_seed, i);
        results[i] = run_attack(model, examples[i], cfg);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(examples.size());
        break;
      }
    }
  };

  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

}  // namespace mumodig

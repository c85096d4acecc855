#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mumodig/baselines.hpp"
#include "mumodig/dataio.hpp"
#include "mumodig/models.hpp"
#include "mumodig/paths.hpp"
#include "mumodig/transforms.hpp"

namespace mumodig {

// The estimator ladder: raw loss gradient, single-path integrated gradients,
// integrated gradients averaged over arbitrary baselines, over LBQ baselines,
// and over transform-diversified LBQ paths with or without the non-monotonic
// return segments.
enum class EstimatorKind { plain, ig_single, muig, mumoig, mumodig_all, mumodig };
enum class IgBaselineKind { black, lbq };
enum class MuigBaselineKind { noise, blur, black_mix };
enum class GradNorm { mean_abs, l1_sum, l2 };

std::string to_string(EstimatorKind kind);
EstimatorKind estimator_from_string(const std::string& s);
std::string to_string(IgBaselineKind kind);
IgBaselineKind ig_baseline_from_string(const std::string& s);
std::string to_string(MuigBaselineKind kind);
MuigBaselineKind muig_baseline_from_string(const std::string& s);
std::string to_string(GradNorm norm);
GradNorm norm_from_string(const std::string& s);

struct AttackConfig {
  std::size_t iterations = 10;      // K
  double epsilon = 16.0 / 255.0;    // L-inf budget on [0,1] pixels
  double step = 1.6 / 255.0;        // alpha
  double momentum = 1.0;            // mu
  double lambda = 0.65;             // interpolation position factor
  std::size_t lbq_regions = 2;      // N_R
  std::size_t interp_points = 1;    // N_I
  std::size_t baseline_count = 1;   // N_B
  std::size_t transform_count = 6;  // N_T (identity branch not counted)
  EstimatorKind estimator = EstimatorKind::mumodig;
  IgBaselineKind ig_baseline = IgBaselineKind::black;
  MuigBaselineKind muig_baseline = MuigBaselineKind::noise;
  double muig_noise_sigma = 0.1;
  LossKind loss = LossKind::neg_log_prob;
  GradNorm norm = GradNorm::mean_abs;
  std::vector<TransformKind> library{TransformKind::resize_pad, TransformKind::affine};
  TransformRanges ranges;
  bool lbq_force_black = false;
  // Pull each diversified branch gradient back into the untransformed frame
  // through the transform adjoint (gradient flows through the
  // transformation). Off reproduces the frame-ignoring elementwise sum.
  bool align_gradients = true;
  std::uint64_t seed = 0;
};

void validate(const AttackConfig& cfg);

struct GradientEstimate {
  Tensor gradient;
  std::size_t branch_count = 0;
  double mean_sign_conflict = 0.0;
  std::size_t monotonic_branches = 0;
};

struct AdversarialResult {
  Tensor adversarial;
  Tensor delta;  // adversarial - clean, exactly
  std::vector<double> loss_trace;  // surrogate loss at x_0 .. x_K
  int prediction_before = -1;
  int prediction_after = -1;
  std::size_t zero_gradient_events = 0;
  double mean_sign_conflict = 0.0;
  double monotonic_branch_fraction = 1.0;
};

// Seed streams; fixed so that degenerate estimator configurations reduce
// bit-exactly to one another and tests can reproduce internal baselines.
std::uint64_t branch_seed(std::uint64_t estimator_seed, std::size_t p, std::size_t q,
                          std::size_t n_baselines);
std::uint64_t transform_branch_seed(std::uint64_t estimator_seed, std::size_t p);
std::uint64_t muig_baseline_seed(std::uint64_t estimator_seed, std::size_t q);
std::uint64_t iteration_seed(std::uint64_t attack_seed, std::size_t t);
std::uint64_t example_seed(std::uint64_t master_seed, std::size_t example_index);

// Discrete IG over an arbitrary gradient field:
// (x - b)/N_I (*) sum_k grad_at(b + (k+lambda)/N_I * (x - b)).
// The estimators below instantiate grad_at with the model's loss gradient;
// diagnostics and oracles may pass any field.
Tensor integrated_gradient(const std::function<Tensor(const Tensor&)>& grad_at,
                           const Tensor& endpoint, const Tensor& baseline,
                           std::size_t n_interp, double lambda);

GradientEstimate estimate_plain(const ClassifierModel& model, const Tensor& x, int label,
                                LossKind loss);

// Discrete IG along the straight baseline->x path:
// (x - b)/N_I (*) sum_k dL/dz at z = b + (k+lambda)/N_I * (x - b).
GradientEstimate estimate_ig(const ClassifierModel& model, const Tensor& x, int label,
                             const Tensor& baseline, std::size_t n_interp, double lambda,
                             LossKind loss);

// Mean of estimate_ig over baseline_count sampled arbitrary baselines.
GradientEstimate estimate_muig(const ClassifierModel& model, const Tensor& x, int label,
                               const AttackConfig& cfg, std::uint64_t estimator_seed);

// Transform-diversified LBQ estimator. Per branch (p,q): segment A runs from
// the LBQ baseline of the transformed image to the transformed image
// (monotonic by construction); segment B runs from the transformed image back
// to x and is kept only when keep_nonmonotonic. The identity branch has an
// empty segment B. The branch sum is scaled by 1/((N_T+1)*N_B).
GradientEstimate estimate_mumodig(const ClassifierModel& model, const Tensor& x, int label,
                                  const AttackConfig& cfg, bool keep_nonmonotonic,
                                  std::uint64_t estimator_seed);

// Dispatch on cfg.estimator.
GradientEstimate estimate_gradient(const ClassifierModel& model, const Tensor& x, int label,
                                   const AttackConfig& cfg, std::uint64_t estimator_seed);

// Momentum sign-step attack: g <- mu*g + G/|G|, x <- clip_box(clip_eps(...)).
AdversarialResult run_attack(const ClassifierModel& model, const LabeledExample& example,
                             const AttackConfig& cfg);

// Independent attacks over many examples; example i uses
// seed = example_seed(master_seed, i), so results are schedule-independent.
std::vector<AdversarialResult> attack_batch(const ClassifierModel& model,
                                            std::span<const LabeledExample> examples,
                                            const AttackConfig& base, std::uint64_t master_seed,
                                            std::size_t workers);

}  // namespace mumodig

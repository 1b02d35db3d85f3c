#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ssltext/augment.hpp"
#include "ssltext/autograd.hpp"
#include "ssltext/corpus.hpp"
#include "ssltext/model.hpp"

namespace ssltext {

inline constexpr double kClampEps = 1e-7;

// Probability floor applied inside every log. Composed as relu(x-eps)+eps
// so the scalar path and the tape path round identically.
double clamp_floor(double x, double eps = kClampEps);
double clamped_log(double x, double eps = kClampEps);

// Plain-double loss math, shared by the per-example operations, the tape
// targets, and test oracles. Index k holds the probability of label k.
std::array<double, 2> sharpen(const std::array<double, 2>& p, double temperature);
double cross_entropy(const std::array<int, 2>& onehot, const ProbDist& pred,
                     double eps = kClampEps);
double kl_divergence(const std::array<double, 2>& p, const std::array<double, 2>& q,
                     double eps = kClampEps);
double entropy(const std::array<double, 2>& p, double eps = kClampEps);

struct GammaSchedule {
  double gamma0 = 0.0;
  std::size_t ramp_steps = 1;
  std::size_t total_steps = 1;

  // Ramp linearly over the first half of training by default.
  static GammaSchedule over_half(std::size_t total_steps, double gamma0);
  void validate() const;
};

// gamma0 + (1 - gamma0) * min(1, step / ramp_steps).
double gamma_at(const GammaSchedule& schedule, std::size_t step);

struct LossOptions {
  double temperature = 0.5;
  double clamp_eps = kClampEps;
  // Pairs whose sharpened target peaks below this skip the self-training
  // term (0 keeps every pair).
  double confidence_tau = 0.0;
  // Swap each KL to (target || model) instead of (model || target).
  bool reverse_kl = false;

  void validate() const;
};

struct LossBreakdown {
  double L_S = 0.0;
  double L_s = 0.0;
  double L_e = 0.0;
  double L_c = 0.0;
  double L_U = 0.0;
  double L = 0.0;
  double gamma_used = 0.0;
};

// --- per-example operations (scratch forward passes, plain scalars) ------

ProbDist guess_label(const Example& example, const ParamSet& params);
double self_training_loss(const Example& example, const ParamSet& params,
                          const LossOptions& options);
double entropy_loss(const Example& example, const ParamSet& params,
                    const LossOptions& options = {});
double consistency_loss(const AugmentedPair& pair, const ParamSet& params,
                        const LossOptions& options = {});

struct UnsupervisedTerms {
  double L_s = 0.0;
  double L_e = 0.0;
  double L_c = 0.0;
  double L_U = 0.0;
};
UnsupervisedTerms unsupervised_loss(const AugmentedPair& pair, const ParamSet& params,
                                    const LossOptions& options);

// --- batched tape construction -------------------------------------------

struct LabeledBatch {
  std::vector<std::vector<int>> ids;
  std::vector<int> labels;  // 0 or 1 per row
};

struct PairBatch {
  std::vector<std::vector<int>> orig_ids;
  std::vector<std::vector<int>> aug_ids;
};

// Stop-gradient targets for one pair batch: the sharpened guess for the
// self-training term and the raw guess for the consistency term.
struct UnlabeledTargets {
  std::vector<std::array<double, 2>> sharpened;
  std::vector<std::array<double, 2>> original;
};
UnlabeledTargets compute_targets(const ParamSet& params, const PairBatch& pairs,
                                 const LossOptions& options);

struct TotalLoss {
  ag::Var loss;  // scalar node, ready for backward()
  LossBreakdown breakdown;
};

// Builds the full objective on the tape: mean supervised cross-entropy
// plus gamma_t times the mean of the three unsupervised terms. Targets
// enter the graph as constants; pass precomputed ones to reuse them, or
// nullptr to derive them from this tape's own forward values (identical
// numbers either way).
TotalLoss build_total_loss(ag::Tape& tape, const ModelVars& vars, const ModelConfig& config,
                           const LabeledBatch& labeled, const PairBatch& pairs,
                           const LossOptions& options, double gamma_t,
                           const UnlabeledTargets* targets = nullptr);

// Scratch-tape evaluation of the same objective (no gradients).
LossBreakdown total_loss(const ParamSet& params, const LabeledBatch& labeled,
                         const PairBatch& pairs, const LossOptions& options, double gamma_t);

}  // namespace ssltext

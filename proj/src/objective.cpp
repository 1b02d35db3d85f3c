#include "ssltext/objective.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ssltext {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw Error("objective: " + msg); }

const std::vector<int>& checked_ids(const Example& example) {
  if (example.ids.empty())
    fail("example '" + example.id + "' has no token ids; preprocess it first");
  return example.ids;
}

}  // namespace

double clamp_floor(double x, double eps) {
  double shifted = x - eps;
  if (shifted < 0.0) shifted = 0.0;
  return shifted + eps;
}

double clamped_log(double x, double eps) { return std::log(clamp_floor(x, eps)); }

std::array<double, 2> sharpen(const std::array<double, 2>& p, double temperature) {
  if (!(temperature > 0.0)) fail("sharpen temperature must be > 0");
  const double a = std::pow(p[0], 1.0 / temperature);
  const double b = std::pow(p[1], 1.0 / temperature);
  const double norm = a + b;
  if (!(norm > 0.0)) fail("sharpen input has zero mass");
  return {a / norm, b / norm};
}

double cross_entropy(const std::array<int, 2>& onehot, const ProbDist& pred, double eps) {
  if (!((onehot[0] == 1 && onehot[1] == 0) || (onehot[0] == 0 && onehot[1] == 1)))
    fail("label must be one-hot");
  double s = 0.0;
  for (std::size_t k = 0; k < 2; ++k)
    s += static_cast<double>(onehot[k]) * clamped_log(pred.p[k], eps);
  return -s;
}

double kl_divergence(const std::array<double, 2>& p, const std::array<double, 2>& q,
                     double eps) {
  double s = 0.0;
  for (std::size_t k = 0; k < 2; ++k)
    s += p[k] * (clamped_log(p[k], eps) - clamped_log(q[k], eps));
  return s;
}

double entropy(const std::array<double, 2>& p, double eps) {
  double s = 0.0;
  for (std::size_t k = 0; k < 2; ++k) s += p[k] * clamped_log(p[k], eps);
  return -s;
}

GammaSchedule GammaSchedule::over_half(std::size_t total_steps, double gamma0) {
  GammaSchedule schedule;
  schedule.gamma0 = gamma0;
  schedule.total_steps = std::max<std::size_t>(1, total_steps);
  schedule.ramp_steps = std::max<std::size_t>(1, schedule.total_steps / 2);
  schedule.validate();
  return schedule;
}

void GammaSchedule::validate() const {
  if (gamma0 < 0.0 || gamma0 > 1.0) fail("gamma0 must lie in [0,1]");
  if (ramp_steps == 0) fail("ramp_steps must be positive");
}

double gamma_at(const GammaSchedule& schedule, std::size_t step) {
  schedule.validate();
  if (step >= schedule.ramp_steps) return 1.0;
  const double frac = static_cast<double>(step) / static_cast<double>(schedule.ramp_steps);
  return schedule.gamma0 + (1.0 - schedule.gamma0) * frac;
}

void LossOptions::validate() const {
  if (!(temperature > 0.0) || temperature > 1.0) fail("temperature must lie in (0, 1]");
  if (!(clamp_eps > 0.0) || clamp_eps >= 1e-3) fail("clamp_eps must lie in (0, 1e-3)");
  if (confidence_tau < 0.0 || confidence_tau > 1.0) fail("confidence_tau must lie in [0,1]");
}

ProbDist guess_label(const Example& example, const ParamSet& params) {
  return predict_dist(params, {checked_ids(example)})[0];
}

double self_training_loss(const Example& example, const ParamSet& params,
                          const LossOptions& options) {
  options.validate();
  const ProbDist pred = guess_label(example, params);
  const std::array<double, 2> target = sharpen(pred.p, options.temperature);
  if (std::max(target[0], target[1]) < options.confidence_tau) return 0.0;
  return options.reverse_kl ? kl_divergence(target, pred.p, options.clamp_eps)
                            : kl_divergence(pred.p, target, options.clamp_eps);
}

double entropy_loss(const Example& example, const ParamSet& params, const LossOptions& options) {
  options.validate();
  return entropy(guess_label(example, params).p, options.clamp_eps);
}

double consistency_loss(const AugmentedPair& pair, const ParamSet& params,
                        const LossOptions& options) {
  options.validate();
  const ProbDist target = guess_label(pair.original, params);
  const ProbDist pred = guess_label(pair.augmented, params);
  return options.reverse_kl ? kl_divergence(target.p, pred.p, options.clamp_eps)
                            : kl_divergence(pred.p, target.p, options.clamp_eps);
}

UnsupervisedTerms unsupervised_loss(const AugmentedPair& pair, const ParamSet& params,
                                    const LossOptions& options) {
  options.validate();
  const ProbDist orig = guess_label(pair.original, params);
  const ProbDist aug = guess_label(pair.augmented, params);

  UnsupervisedTerms terms;
  const std::array<double, 2> sharp = sharpen(orig.p, options.temperature);
  if (std::max(sharp[0], sharp[1]) >= options.confidence_tau) {
    terms.L_s = options.reverse_kl ? kl_divergence(sharp, orig.p, options.clamp_eps)
                                   : kl_divergence(orig.p, sharp, options.clamp_eps);
  }
  terms.L_e = entropy(orig.p, options.clamp_eps);
  terms.L_c = options.reverse_kl ? kl_divergence(orig.p, aug.p, options.clamp_eps)
                                 : kl_divergence(aug.p, orig.p, options.clamp_eps);
  terms.L_U = terms.L_s + terms.L_e + terms.L_c;
  return terms;
}

UnlabeledTargets compute_targets(const ParamSet& params, const PairBatch& pairs,
                                 const LossOptions& options) {
  options.validate();
  UnlabeledTargets targets;
  if (pairs.orig_ids.empty()) return targets;
  for (const ProbDist& dist : predict_dist(params, pairs.orig_ids)) {
    targets.original.push_back(dist.p);
    targets.sharpened.push_back(sharpen(dist.p, options.temperature));
  }
  return targets;
}

namespace {

// log(max(x, eps)) on the tape, with the same float composition as
// clamp_floor so tape losses and scalar losses agree bitwise.
ag::Var tape_clamped_log(ag::Var x, double eps) {
  return ag::log(ag::shift(ag::relu(ag::shift(x, -eps)), eps));
}

ag::Tensor matrix_of(const std::vector<std::array<double, 2>>& rows) {
  std::vector<double> data;
  data.reserve(rows.size() * 2);
  for (const auto& row : rows) {
    data.push_back(row[0]);
    data.push_back(row[1]);
  }
  return ag::Tensor::matrix(rows.size(), 2, std::move(data));
}

}  // namespace

TotalLoss build_total_loss(ag::Tape& tape, const ModelVars& vars, const ModelConfig& config,
                           const LabeledBatch& labeled, const PairBatch& pairs,
                           const LossOptions& options, double gamma_t,
                           const UnlabeledTargets* targets) {
  options.validate();
  if (gamma_t < 0.0 || gamma_t > 1.0) fail("gamma must lie in [0,1]");
  if (labeled.ids.empty()) fail("labeled batch is empty");
  if (labeled.ids.size() != labeled.labels.size())
    fail("labeled batch has " + std::to_string(labeled.ids.size()) + " sequences but " +
         std::to_string(labeled.labels.size()) + " labels");
  for (int label : labeled.labels)
    if (label != 0 && label != 1) fail("labels must be 0 or 1");
  if (pairs.orig_ids.size() != pairs.aug_ids.size())
    fail("pair batch has mismatched original/augmented counts");
  const double eps = options.clamp_eps;

  const std::size_t b = labeled.ids.size();
  ag::Var labeled_probs =
      predict_batch(tape, vars, config, encode_batch(tape, vars, config, labeled.ids));
  ag::Tensor onehot = ag::Tensor::zeros({b, 2});
  for (std::size_t r = 0; r < b; ++r)
    onehot.at(r, static_cast<std::size_t>(labeled.labels[r])) = 1.0;
  ag::Var supervised =
      ag::scale(ag::sum(ag::mul(tape_clamped_log(labeled_probs, eps), tape.constant(onehot))),
                -1.0 / static_cast<double>(b));

  TotalLoss result;
  result.breakdown.gamma_used = gamma_t;

  const std::size_t m = pairs.orig_ids.size();
  if (m == 0) {
    result.loss = supervised;
    result.breakdown.L_S = supervised.value().scalar_value();
    result.breakdown.L = result.breakdown.L_S;
    return result;
  }

  ag::Var orig_probs =
      predict_batch(tape, vars, config, encode_batch(tape, vars, config, pairs.orig_ids));
  ag::Var aug_probs =
      predict_batch(tape, vars, config, encode_batch(tape, vars, config, pairs.aug_ids));

  UnlabeledTargets local;
  if (targets == nullptr) {
    const ag::Tensor& values = orig_probs.value();
    for (std::size_t r = 0; r < m; ++r) {
      std::array<double, 2> row = {values.at(r, 0), values.at(r, 1)};
      local.original.push_back(row);
      local.sharpened.push_back(sharpen(row, options.temperature));
    }
    targets = &local;
  }
  if (targets->original.size() != m || targets->sharpened.size() != m)
    fail("targets cover " + std::to_string(targets->original.size()) + " pairs, batch has " +
         std::to_string(m));

  std::vector<std::array<double, 2>> log_sharp(m), log_orig(m);
  ag::Tensor mask = ag::Tensor::zeros({m, 2});
  for (std::size_t r = 0; r < m; ++r) {
    const auto& sharp = targets->sharpened[r];
    const auto& orig = targets->original[r];
    log_sharp[r] = {clamped_log(sharp[0], eps), clamped_log(sharp[1], eps)};
    log_orig[r] = {clamped_log(orig[0], eps), clamped_log(orig[1], eps)};
    const double keep = std::max(sharp[0], sharp[1]) >= options.confidence_tau ? 1.0 : 0.0;
    mask.at(r, 0) = keep;
    mask.at(r, 1) = keep;
  }

  const double inv_m = 1.0 / static_cast<double>(m);
  ag::Var log_sharp_const = tape.constant(matrix_of(log_sharp));
  ag::Var log_orig_const = tape.constant(matrix_of(log_orig));

  ag::Var self_term =
      options.reverse_kl
          ? ag::mul(tape.constant(matrix_of(targets->sharpened)),
                    ag::sub(log_sharp_const, tape_clamped_log(orig_probs, eps)))
          : ag::mul(orig_probs, ag::sub(tape_clamped_log(orig_probs, eps), log_sharp_const));
  ag::Var self_loss = ag::scale(ag::sum(ag::mul(self_term, tape.constant(mask))), inv_m);

  ag::Var entropy_loss_var =
      ag::scale(ag::sum(ag::mul(orig_probs, tape_clamped_log(orig_probs, eps))), -inv_m);

  ag::Var consistency_term =
      options.reverse_kl
          ? ag::mul(tape.constant(matrix_of(targets->original)),
                    ag::sub(log_orig_const, tape_clamped_log(aug_probs, eps)))
          : ag::mul(aug_probs, ag::sub(tape_clamped_log(aug_probs, eps), log_orig_const));
  ag::Var consistency_loss_var = ag::scale(ag::sum(consistency_term), inv_m);

  ag::Var unsupervised = ag::add(ag::add(self_loss, entropy_loss_var), consistency_loss_var);
  result.loss = ag::add(supervised, ag::scale(unsupervised, gamma_t));

  result.breakdown.L_S = supervised.value().scalar_value();
  result.breakdown.L_s = self_loss.value().scalar_value();
  result.breakdown.L_e = entropy_loss_var.value().scalar_value();
  result.breakdown.L_c = consistency_loss_var.value().scalar_value();
  result.breakdown.L_U = unsupervised.value().scalar_value();
  result.breakdown.L = result.loss.value().scalar_value();
  return result;
}

LossBreakdown total_loss(const ParamSet& params, const LabeledBatch& labeled,
                         const PairBatch& pairs, const LossOptions& options, double gamma_t) {
  ag::Tape tape;
  ModelVars vars = param_vars(tape, params, false);
  return build_total_loss(tape, vars, params.config, labeled, pairs, options, gamma_t).breakdown;
}

}  // namespace ssltext

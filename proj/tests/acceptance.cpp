// Acceptance gate: one line per criterion, nonzero exit when any fails.
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "ssltext/augment.hpp"
#include "ssltext/cli.hpp"
#include "ssltext/corpus.hpp"
#include "ssltext/model.hpp"
#include "ssltext/objective.hpp"
#include "ssltext/rng.hpp"
#include "ssltext/synth.hpp"
#include "ssltext/trainer.hpp"

using namespace ssltext;

namespace {

struct Check {
  bool ok = true;
  std::string detail;

  void require(bool condition, const std::string& what) {
    if (!condition && ok) {
      ok = false;
      detail = what;
    }
  }
  void note(const std::string& text) {
    if (ok) detail = text;
  }
};

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double secs() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

std::string fmt(const char* pattern, ...) {
  char buffer[256];
  va_list args;
  va_start(args, pattern);
  std::vsnprintf(buffer, sizeof(buffer), pattern, args);
  va_end(args);
  return buffer;
}

std::map<std::string, int> six_labels(int support) {
  std::map<std::string, int> labels;
  for (const char* task : kTaskNames) labels[task] = 0;
  labels["Support"] = support;
  return labels;
}

Example toy_example(std::string id, std::vector<int> ids, int support) {
  Example ex;
  ex.id = std::move(id);
  ex.ids = std::move(ids);
  ex.labels = six_labels(support);
  return ex;
}

// Tokens 2..4 mark class 1, tokens 5..7 mark class 0, so the toy corpus is
// separable and a short run trains cleanly.
struct ToyData {
  TrainData data;
  ModelConfig model;
};

ToyData separable_data() {
  ToyData toy;
  toy.model.vocab_size = 8;
  toy.model.d_emb = 4;
  toy.model.d_hid = 4;
  for (int i = 0; i < 12; ++i) {
    const int a = i % 3, b = (i + 1) % 3, c = (i + 2) % 3;
    toy.data.train.push_back(toy_example("p" + std::to_string(i), {2 + a, 2 + b, 2 + c}, 1));
    toy.data.train.push_back(toy_example("n" + std::to_string(i), {5 + a, 5 + b, 5 + c}, 0));
  }
  for (int i = 0; i < 4; ++i) {
    toy.data.dev.push_back(toy_example("dp" + std::to_string(i), {2 + i % 3, 2 + (i + 1) % 3}, 1));
    toy.data.dev.push_back(toy_example("dn" + std::to_string(i), {5 + i % 3, 5 + (i + 1) % 3}, 0));
  }
  for (int i = 0; i < 8; ++i) {
    const int base = i % 2 == 0 ? 2 : 5;
    AugmentedPair pair;
    pair.original.id = "u" + std::to_string(i);
    pair.original.ids = {base + i % 3, base + (i + 1) % 3, base};
    pair.augmented = pair.original;
    pair.augmented.id = pair.original.id + "#aug0";
    pair.augmented.ids = {base + (i + 1) % 3, base + i % 3, base};
    toy.data.pairs.push_back(std::move(pair));
  }
  return toy;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) return "<unreadable: " + path + ">";
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// --- criterion 1: analytic gradients vs central differences ---------------

Check criterion_gradients() {
  Check c;
  Timer timer;
  ModelConfig config;
  config.vocab_size = 8;
  config.d_emb = 3;
  config.d_hid = 3;

  double worst = 0.0;
  int runs = 0;
  std::uint64_t seed = 900;
  for (std::size_t batch : {std::size_t{1}, std::size_t{4}}) {
    for (double gamma : {0.0, 0.5, 1.0}) {
      for (double T : {0.3, 0.5, 0.8, 1.0}) {
        ++seed;
        Rng data_rng(hash_mix(seed, "data"));
        auto random_ids = [&] {
          std::vector<int> ids(1 + data_rng.below(3));
          for (int& id : ids) id = 2 + static_cast<int>(data_rng.below(6));
          return ids;
        };
        LabeledBatch labeled;
        PairBatch pairs;
        for (std::size_t r = 0; r < batch; ++r) {
          labeled.ids.push_back(random_ids());
          labeled.labels.push_back(static_cast<int>(data_rng.below(2)));
          pairs.orig_ids.push_back(random_ids());
          pairs.aug_ids.push_back(random_ids());
        }

        // Damp the weights and lift the biases so every relu input keeps a
        // hard positive margin over the finite-difference window.
        ParamSet params = init_params(config, seed);
        for (double& x : params.enc_w.data()) x *= 0.5;
        for (double& x : params.head1_w.data()) x *= 0.1;
        Rng nudge(hash_mix(seed, "nudge"));
        for (double& x : params.enc_b.data()) x = nudge.uniform(0.6, 0.9);
        for (double& x : params.head1_b.data()) x = nudge.uniform(0.35, 0.7);
        for (double& x : params.head2_b.data()) x = nudge.uniform(-0.3, 0.3);

        LossOptions options;
        options.temperature = T;
        const UnlabeledTargets targets = compute_targets(params, pairs, options);
        ag::TapeFn fn = [&](ag::Tape& tape, const std::vector<ag::Var>& p) {
          ModelVars vars{p[0], p[1], p[2], p[3], p[4], p[5], p[6]};
          return build_total_loss(tape, vars, config, labeled, pairs, options, gamma, &targets)
              .loss;
        };
        std::vector<ag::Tensor> tensors;
        for (const auto& e : ParamSet::entries()) tensors.push_back(params.*(e.member));
        worst = std::max(worst, ag::grad_check(fn, tensors, 1e-3).max_rel_error);
        ++runs;
      }
    }
  }
  const double elapsed = timer.secs();
  c.require(worst < 1e-4, fmt("max relative error %.3e reached 1e-4", worst));
  c.require(elapsed < 60.0, fmt("suite took %.1fs, limit 60s", elapsed));
  c.note(fmt("max relative error %.2e over %d runs (24 seeds, batch 1 and 4)", worst, runs));
  return c;
}

// --- criterion 2: sharpening behaviour -------------------------------------

Check criterion_sharpening() {
  Check c;
  Rng rng(31);
  for (int i = 0; i < 200 && c.ok; ++i) {
    const double u = rng.uniform(1e-6, 1.0 - 1e-6);
    const std::array<double, 2> p = {u, 1.0 - u};
    const auto s = sharpen(p, 1.0);
    c.require(std::fabs(s[0] - p[0]) <= 1e-12 && std::fabs(s[1] - p[1]) <= 1e-12,
              "sharpening at temperature 1 moved a distribution by more than 1e-12");
  }
  for (double T : {1.0, 0.8, 0.5, 0.3, 1e-3}) {
    const auto s = sharpen({0.5, 0.5}, T);
    c.require(std::fabs(s[0] - 0.5) <= 1e-12 && std::fabs(s[1] - 0.5) <= 1e-12,
              fmt("sharpening moved the uniform distribution at T=%g", T));
  }
  const std::vector<double> temps = {1.0, 0.9, 0.8, 0.7, 0.6,  0.5,
                                     0.4, 0.3, 0.2, 0.1, 0.05, 0.01};
  for (int i = 0; i < 100 && c.ok; ++i) {
    const double u = rng.uniform(1e-4, 1.0 - 1e-4);
    double prev = std::numeric_limits<double>::infinity();
    for (double T : temps) {
      const double h = entropy(sharpen({u, 1.0 - u}, T));
      c.require(h <= prev + 1e-12, fmt("entropy rose as 1/T grew (p0=%.6f, T=%g)", u, T));
      prev = h;
    }
  }
  // The one-hot bound needs a real majority: at max(p) = 0.503 the exact
  // value of p^1000 normalized is 0.9999939, short of 1-1e-6 for any
  // implementation. 0.505 clears the bound with two orders of margin.
  for (int i = 0; i < 100 && c.ok; ++i) {
    const double hi = rng.uniform(0.505, 1.0 - 1e-6);
    std::array<double, 2> p = {hi, 1.0 - hi};
    if (rng.below(2) == 1) std::swap(p[0], p[1]);
    const auto s = sharpen(p, 1e-3);
    c.require(std::max(s[0], s[1]) >= 1.0 - 1e-6,
              fmt("sharpen at T=1e-3 left max component %.12f below 1-1e-6", std::max(s[0], s[1])));
  }
  c.note("identity at T=1, uniform fixed point, monotone entropy, one-hot limit");
  return c;
}

// --- criterion 3: loss identities ------------------------------------------

Check criterion_loss_identities() {
  Check c;
  Rng rng(47);
  for (int i = 0; i < 200 && c.ok; ++i) {
    const double u = rng.uniform(1e-6, 1.0 - 1e-6);
    const double v = rng.uniform(1e-6, 1.0 - 1e-6);
    const std::array<double, 2> p = {u, 1.0 - u};
    const std::array<double, 2> q = {v, 1.0 - v};
    c.require(kl_divergence(p, p) <= 1e-9, fmt("KL(p||p) = %.3e exceeds 1e-9", kl_divergence(p, p)));
    c.require(kl_divergence(p, q) >= -1e-9, "KL dropped below -1e-9");
  }
  c.require(std::fabs(entropy({0.5, 0.5}) - std::log(2.0)) <= 1e-9,
            "entropy((0.5, 0.5)) is not ln 2 within 1e-9");

  ToyData toy = separable_data();
  TrainConfig config;
  config.task = "Support";
  config.batch_size = 8;
  config.epochs = 4;
  config.lr_encoder = 0.5;
  config.lr_head = 0.5;
  config.seed = 7;
  config.d_emb = 4;
  config.d_hid = 4;

  std::size_t checked = 0;
  double worst = 0.0;
  TrainHooks hooks;
  hooks.after_step = [&](const StepRecord& record) {
    const LossBreakdown& b = record.losses;
    worst = std::max(worst, std::fabs(b.L_U - (b.L_s + b.L_e + b.L_c)));
    worst = std::max(worst, std::fabs(b.L - (b.L_S + b.gamma_used * b.L_U)));
    ++checked;
  };
  train(toy.data, toy.model, config, hooks);
  c.require(checked > 0, "the identity run logged no steps");
  c.require(worst <= 1e-9, fmt("a logged step broke the breakdown identities by %.3e", worst));
  c.note(fmt("pointwise KL/entropy bounds and breakdown identities on %zu steps (max gap %.1e)",
             checked, worst));
  return c;
}

// --- criterion 4: gamma = 0 reduces to plain supervised training -----------

Check criterion_supervised_reduction() {
  Check c;
  ToyData toy = separable_data();
  TrainConfig config;
  config.task = "Support";
  config.batch_size = 8;
  config.epochs = 2;
  config.lr_encoder = 0.25;
  config.lr_head = 0.25;
  config.seed = 11;
  config.d_emb = 4;
  config.d_hid = 4;
  config.gamma_fixed = true;
  config.gamma0 = 0.0;

  const TrainResult gated = train(toy.data, toy.model, config);

  // Standalone supervised loop: cross entropy only, same seed and schedule,
  // none of the unsupervised machinery.
  std::vector<int> labels;
  for (const Example& ex : toy.data.train) labels.push_back(ex.labels->at(config.task));
  ParamSet params = init_params(toy.model, hash_mix(config.seed, "init"));
  std::vector<double> step_losses;
  ParamSet best;
  double best_f1 = -1.0;
  std::size_t best_epoch = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto batches =
        make_mixed_batches(toy.data.train.size(), 0, config.batch_size, config.seed, epoch);
    for (const MixedBatch& batch : batches) {
      std::vector<std::vector<int>> ids;
      ag::Tensor onehot = ag::Tensor::zeros({batch.labeled.size(), 2});
      for (std::size_t r = 0; r < batch.labeled.size(); ++r) {
        ids.push_back(toy.data.train[batch.labeled[r]].ids);
        onehot.at(r, static_cast<std::size_t>(labels[batch.labeled[r]])) = 1.0;
      }
      ag::Tape tape;
      ModelVars vars = param_vars(tape, params);
      ag::Var probs =
          predict_batch(tape, vars, toy.model, encode_batch(tape, vars, toy.model, ids));
      ag::Var log_probs = ag::log(ag::shift(ag::relu(ag::shift(probs, -kClampEps)), kClampEps));
      ag::Var loss = ag::scale(ag::sum(ag::mul(log_probs, tape.constant(onehot))),
                               -1.0 / static_cast<double>(ids.size()));
      tape.backward(loss);
      step_losses.push_back(loss.value().scalar_value());

      const ag::Var leaves[] = {vars.embedding, vars.enc_w,   vars.enc_b,  vars.head1_w,
                                vars.head1_b,   vars.head2_w, vars.head2_b};
      const auto& entries = ParamSet::entries();
      for (std::size_t i = 0; i < entries.size(); ++i) {
        const double lr =
            entries[i].group == ParamGroup::encoder ? config.lr_encoder : config.lr_head;
        const ag::Tensor grad = leaves[i].grad();
        std::vector<double>& data = (params.*(entries[i].member)).data();
        for (std::size_t j = 0; j < data.size(); ++j) data[j] -= lr * grad.at(j);
      }
    }
    const Metrics dev = evaluate(params, toy.data.dev, config.task);
    if (dev.macro_f1 > best_f1) {
      best_f1 = dev.macro_f1;
      best_epoch = epoch;
      best = params;
    }
  }

  c.require(gated.steps.size() == step_losses.size(),
            fmt("step counts differ: %zu vs %zu", gated.steps.size(), step_losses.size()));
  for (std::size_t i = 0; c.ok && i < step_losses.size(); ++i) {
    c.require(gated.steps[i].losses.L == step_losses[i],
              fmt("total loss diverged at step %zu", i));
    c.require(gated.steps[i].losses.L_S == step_losses[i],
              fmt("supervised loss diverged at step %zu", i));
  }
  c.require(gated.best_epoch == best_epoch, "the selected epoch differs");
  c.require(gated.best_dev_macro_f1 == best_f1, "the selected dev macro-F1 differs");
  for (const auto& entry : ParamSet::entries())
    c.require((gated.best_params.*(entry.member)).data() == (best.*(entry.member)).data(),
              fmt("parameter '%s' differs in the selected snapshot", entry.name));
  c.note(fmt("%zu steps and the selected snapshot match bit for bit", step_losses.size()));
  return c;
}

// --- criterion 5: minority balancing size law -------------------------------

Check criterion_balancing() {
  Check c;
  const std::vector<std::string> tasks = {"General_support", "Information_support",
                                          "Emotional_support"};
  auto with = [](std::vector<std::pair<const char*, int>> set) {
    std::map<std::string, int> labels;
    for (const char* task : kTaskNames) labels[task] = 0;
    for (const auto& [task, value] : set) labels[task] = value;
    return labels;
  };
  const std::vector<std::string> words = {"ember", "quill", "marsh", "vigil", "crate",
                                          "plume", "ridge", "sable", "tonic", "weave"};
  std::vector<Example> train;
  const std::vector<std::map<std::string, int>> label_sets = {
      with({{"General_support", 1}}),
      with({{"Information_support", 1}}),
      with({{"Emotional_support", 1}}),
      with({{"General_support", 1}, {"Information_support", 1}, {"Emotional_support", 1}}),
      with({{"Support", 1}}),
      with({{"Emotional_disclosure", 1}}),
      with({}),
      with({{"General_support", 1}, {"Emotional_disclosure", 1}}),
      with({}),
      with({{"Information_support", 1}, {"Support", 1}}),
  };
  for (std::size_t i = 0; i < label_sets.size(); ++i) {
    Example ex;
    ex.id = "b" + std::to_string(i);
    ex.text = words[i] + " " + words[(i + 3) % words.size()];
    ex.labels = label_sets[i];
    train.push_back(std::move(ex));
  }
  std::size_t positives = 0;
  for (const Example& ex : train) {
    bool hit = false;
    for (const std::string& task : tasks) hit = hit || ex.labels->at(task) == 1;
    positives += hit ? 1 : 0;
  }

  RuleParams rules;
  rules.swap_prob = 0.0;
  rules.drop_prob = 0.0;
  const auto provider = ParaphraseProvider::rule_based(rules, 99);
  const int k = 4;
  const std::vector<Example> out = balance_minority(train, tasks, k, provider);

  c.require(positives == 6, fmt("fixture drift: expected 6 positives, counted %zu", positives));
  c.require(out.size() == train.size() + k * positives,
            fmt("size law broken: %zu in + %d*%zu != %zu out", train.size(), k, positives,
                out.size()));
  for (std::size_t i = 0; c.ok && i < train.size(); ++i) {
    c.require(out[i].id == train[i].id && out[i].labels == train[i].labels,
              fmt("original record %zu was altered", i));
  }
  std::map<std::string, const Example*> by_id;
  for (const Example& ex : train) by_id[ex.id] = &ex;
  for (std::size_t i = train.size(); c.ok && i < out.size(); ++i) {
    const std::string& id = out[i].id;
    const auto cut = id.find('#');
    c.require(cut != std::string::npos, "augmented copy id lacks the #aug suffix");
    if (!c.ok) break;
    const Example* source = by_id.at(id.substr(0, cut));
    c.require(out[i].labels == source->labels,
              fmt("augmented copy '%s' changed its label map", id.c_str()));
  }
  c.note(fmt("%zu records with %zu positives grew to %zu, labels intact", train.size(),
             positives, out.size()));
  return c;
}

// --- criterion 6: metrics against a counting oracle -------------------------

double oracle_ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double oracle_f1(double precision, double recall) {
  const double sum = precision + recall;
  return sum == 0.0 ? 0.0 : 2.0 * precision * recall / sum;
}

// d_emb = d_hid = 1 and a pass-through encoder: token 2 predicts class 1,
// token 3 predicts class 0, so the prediction side is fully controlled.
ParamSet gate_params() {
  ModelConfig config;
  config.vocab_size = 4;
  config.d_emb = 1;
  config.d_hid = 1;
  ParamSet params;
  params.config = config;
  params.embedding = ag::Tensor::matrix(4, 1, {0.0, 0.0, 1.0, 0.0});
  params.enc_w = ag::Tensor::matrix(1, 1, {1.0});
  params.enc_b = ag::Tensor::vec({0.0});
  params.head1_w = ag::Tensor::matrix(1, 1, {1.0});
  params.head1_b = ag::Tensor::vec({0.0});
  params.head2_w = ag::Tensor::matrix(1, 2, {0.0, 1.0});
  params.head2_b = ag::Tensor::vec({0.0, -0.5});
  return params;
}

std::vector<Example> confusion_examples(const std::vector<std::pair<int, int>>& gold_pred) {
  std::vector<Example> examples;
  for (std::size_t i = 0; i < gold_pred.size(); ++i) {
    const auto [gold, pred] = gold_pred[i];
    examples.push_back(toy_example("m" + std::to_string(i), {pred == 1 ? 2 : 3}, gold));
  }
  return examples;
}

Check criterion_metrics() {
  Check c;
  const ParamSet params = gate_params();
  Rng rng(4242);
  for (int trial = 0; trial < 200 && c.ok; ++trial) {
    const std::size_t n = 1 + rng.below(40);
    std::vector<std::pair<int, int>> gold_pred;
    for (std::size_t i = 0; i < n; ++i)
      gold_pred.push_back({static_cast<int>(rng.below(2)), static_cast<int>(rng.below(2))});
    const Metrics m = evaluate(params, confusion_examples(gold_pred), "Support");

    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (const auto& [gold, pred] : gold_pred) {
      if (pred == 1)
        (gold == 1 ? tp : fp) += 1;
      else
        (gold == 1 ? fn : tn) += 1;
    }
    const double p1 = oracle_ratio(tp, tp + fp), r1 = oracle_ratio(tp, tp + fn);
    const double p0 = oracle_ratio(tn, tn + fn), r0 = oracle_ratio(tn, tn + fp);
    c.require(m.tp == tp && m.fp == fp && m.fn == fn && m.tn == tn,
              fmt("confusion counts differ on trial %d", trial));
    c.require(m.accuracy == oracle_ratio(tp + tn, n), fmt("accuracy differs on trial %d", trial));
    c.require(m.precision1 == p1 && m.recall1 == r1 && m.f1_1 == oracle_f1(p1, r1),
              fmt("class-1 scores differ on trial %d", trial));
    c.require(m.precision0 == p0 && m.recall0 == r0 && m.f1_0 == oracle_f1(p0, r0),
              fmt("class-0 scores differ on trial %d", trial));
    c.require(m.macro_f1 == (oracle_f1(p0, r0) + oracle_f1(p1, r1)) / 2.0,
              fmt("macro-F1 differs on trial %d", trial));
  }

  // Worked example: tp=2 fp=1 fn=1 tn=6.
  std::vector<std::pair<int, int>> worked = {{1, 1}, {1, 1}, {0, 1}, {1, 0}, {0, 0},
                                             {0, 0}, {0, 0}, {0, 0}, {0, 0}, {0, 0}};
  const Metrics m = evaluate(params, confusion_examples(worked), "Support");
  c.require(m.accuracy == 0.8, fmt("worked example accuracy %.17g != 0.8", m.accuracy));
  c.require(std::fabs(m.macro_f1 - 16.0 / 21.0) <= 1e-12,
            fmt("worked example macro-F1 %.17g != 16/21", m.macro_f1));
  c.note(fmt("200 randomized sets exact; worked example acc %.3f, macro-F1 %.6f", m.accuracy,
             m.macro_f1));
  return c;
}

// --- criterion 7: the unsupervised terms buy accuracy at desk scale ---------

double run_arm(std::uint64_t seed, bool ssl) {
  SynthSpec spec;
  spec.n_labeled = 100;
  spec.n_unlabeled = 2000;
  spec.n_test = 500;
  spec.seed = seed;
  spec.noise = 0.3;
  const SynthCorpus corpus = generate_synthetic(spec);

  std::map<std::string, std::vector<std::string>> table;
  for (const auto& [id, variants] : corpus.paraphrases) table[id] = variants;
  const auto provider = ParaphraseProvider::file_backed(std::move(table));
  std::vector<AugmentedPair> pairs = pair_unlabeled(corpus.unlabeled, provider);

  SplitSpec split_spec;
  split_spec.seed = hash_mix(seed, "split");
  split_spec.n_train = 80;
  split_spec.n_dev = 20;
  const Split sets = split(corpus.labeled, split_spec);

  std::vector<Example> vocab_source = sets.train;
  for (const Example& ex : corpus.unlabeled) vocab_source.push_back(ex);
  const Vocab vocab = build_vocab(vocab_source, 1);

  TrainConfig config;
  config.task = "Support";
  config.batch_size = 16;
  config.epochs = 30;
  config.lr_encoder = 0.5;
  config.lr_head = 0.5;
  config.temperature = 0.5;
  config.seed = seed;
  config.d_emb = 16;
  config.d_hid = 16;
  config.min_freq = 1;
  if (!ssl) {
    config.gamma_fixed = true;
    config.gamma0 = 0.0;
  }

  TrainData data;
  data.train = sets.train;
  data.dev = sets.dev;
  preprocess_examples(data.train, vocab, config.max_len);
  preprocess_examples(data.dev, vocab, config.max_len);
  if (ssl) {
    for (AugmentedPair& pair : pairs) {
      pair.original.ids = preprocess_sentence(pair.original.text, vocab, config.max_len);
      pair.augmented.ids = preprocess_sentence(pair.augmented.text, vocab, config.max_len);
    }
    data.pairs = std::move(pairs);
  }

  ModelConfig model;
  model.vocab_size = vocab.size();
  model.d_emb = config.d_emb;
  model.d_hid = config.d_hid;
  const TrainResult result = train(data, model, config);

  std::vector<Example> test = corpus.test;
  preprocess_examples(test, vocab, config.max_len);
  return evaluate(result.best_params, test, config.task).accuracy;
}

Check criterion_ssl_improvement() {
  Check c;
  Timer timer;
  double mean_ssl = 0.0, mean_sup = 0.0;
  std::vector<double> ssl_accs, sup_accs;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ssl_accs.push_back(run_arm(seed, true));
    sup_accs.push_back(run_arm(seed, false));
    mean_ssl += ssl_accs.back();
    mean_sup += sup_accs.back();
  }
  mean_ssl /= 5.0;
  mean_sup /= 5.0;
  const double margin = mean_ssl - mean_sup;
  c.require(margin >= 0.02,
            fmt("mean margin %+.4f below 0.02 (ssl %.4f vs supervised %.4f)", margin, mean_ssl,
                mean_sup));

  for (std::uint64_t seed : {std::uint64_t{1}, std::uint64_t{4}}) {
    c.require(run_arm(seed, true) == ssl_accs[seed - 1],
              fmt("the ssl arm is not deterministic at seed %llu",
                  static_cast<unsigned long long>(seed)));
    c.require(run_arm(seed, false) == sup_accs[seed - 1],
              fmt("the supervised arm is not deterministic at seed %llu",
                  static_cast<unsigned long long>(seed)));
  }
  const double elapsed = timer.secs();
  c.require(elapsed < 600.0, fmt("experiment took %.1fs, limit 600s", elapsed));
  c.note(fmt("5 seeds: ssl %.4f vs supervised %.4f, margin %+.2fpp, both arms replay exactly",
             mean_ssl, mean_sup, margin * 100.0));
  return c;
}

// --- criterion 8: the batch pipeline is byte-reproducible -------------------

Check criterion_pipeline_determinism() {
  Check c;
  Timer timer;
  namespace fs = std::filesystem;
  const std::string root = "/tmp/ssltext_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);

  auto cli = [&c](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = run(args, out, err);
    c.require(code == 0, "`" + args[0] + "` failed: " + err.str());
    return code == 0;
  };

  const std::string synth_dir = root + "/synth";
  const std::string data_dir = root + "/data";
  if (!cli({"synth", "--labeled", "60", "--unlabeled", "40", "--test", "20", "--seed", "3",
            "--noise", "0.2", "--out", synth_dir}))
    return c;
  if (!cli({"ingest", "--labeled", synth_dir + "/labeled.jsonl", "--unlabeled",
            synth_dir + "/unlabeled.jsonl", "--out", data_dir, "--train-frac", "0.7",
            "--dev-frac", "0.3", "--min-freq", "1"}))
    return c;
  if (!cli({"augment", "--in", data_dir, "--provider", "file", "--paraphrases",
            synth_dir + "/paraphrases.jsonl"}))
    return c;

  nlohmann::ordered_json config;
  config["data_dir"] = data_dir;
  config["test_file"] = synth_dir + "/test.jsonl";
  config["epochs"] = 3;
  config["batch_size"] = 8;
  config["lr_encoder"] = 0.5;
  config["lr_head"] = 0.5;
  config["d_emb"] = 8;
  config["d_hid"] = 8;
  config["max_len"] = 16;
  config["min_freq"] = 1;
  config["seed"] = 5;
  const std::string config_path = root + "/config.json";
  std::ofstream(config_path) << config.dump();

  const std::string out_a = root + "/runA", out_b = root + "/runB";
  if (!cli({"train-all", "--config", config_path, "--out", out_a})) return c;
  if (!cli({"train-all", "--config", config_path, "--out", out_b})) return c;

  c.require(slurp(out_a + "/metrics-table.jsonl") == slurp(out_b + "/metrics-table.jsonl"),
            "the two metrics tables differ");

  for (const char* task : kTaskNames) {
    if (!c.ok) break;
    const std::string name(task);
    const std::string pred_a = root + "/pred-a-" + name + ".jsonl";
    const std::string pred_b = root + "/pred-b-" + name + ".jsonl";
    if (!cli({"predict", "--checkpoint", out_a + "/model-" + name + ".ckpt", "--in",
              synth_dir + "/unlabeled.jsonl", "--out", pred_a}))
      return c;
    if (!cli({"predict", "--checkpoint", out_b + "/model-" + name + ".ckpt", "--in",
              synth_dir + "/unlabeled.jsonl", "--out", pred_b}))
      return c;
    c.require(slurp(pred_a) == slurp(pred_b), "predictions for " + name + " differ");
    c.require(slurp(out_a + "/model-" + name + ".ckpt") == slurp(out_b + "/model-" + name + ".ckpt"),
              "checkpoints for " + name + " differ");
  }
  const double elapsed = timer.secs();
  c.require(elapsed < 600.0, fmt("pipeline runs took %.1fs, limit 600s", elapsed));
  c.note("two train-all runs agree byte for byte (tables, checkpoints, predictions)");
  return c;
}

struct Criterion {
  const char* name;
  Check (*fn)();
};

}  // namespace

int main() {
  const Criterion criteria[] = {
      {"gradient suite", criterion_gradients},
      {"sharpening suite", criterion_sharpening},
      {"loss identities", criterion_loss_identities},
      {"supervised reduction", criterion_supervised_reduction},
      {"balancing law", criterion_balancing},
      {"metrics oracle", criterion_metrics},
      {"ssl improvement", criterion_ssl_improvement},
      {"pipeline determinism", criterion_pipeline_determinism},
  };
  int failures = 0;
  for (const Criterion& criterion : criteria) {
    Timer timer;
    Check result;
    try {
      result = criterion.fn();
    } catch (const std::exception& e) {
      result.ok = false;
      result.detail = std::string("unexpected exception: ") + e.what();
    }
    std::printf("%s  %-21s %s [%.1fs]\n", result.ok ? "PASS" : "FAIL", criterion.name,
                result.detail.c_str(), timer.secs());
    std::fflush(stdout);
    if (!result.ok) ++failures;
  }
  if (failures > 0) std::printf("%d of 8 acceptance criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}

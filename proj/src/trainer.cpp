#include "ssltext/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "ssltext/rng.hpp"

namespace ssltext {

namespace {

using Json = nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& msg) { throw Error("trainer: " + msg); }

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double f1_score(double precision, double recall) {
  const double sum = precision + recall;
  return sum == 0.0 ? 0.0 : 2.0 * precision * recall / sum;
}

}  // namespace

void TrainConfig::validate() const {
  if (!is_task_name(task)) fail("unknown task '" + task + "'");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (epochs < 1) fail("epochs must be >= 1");
  if (lr_encoder < 0.0 || lr_head < 0.0) fail("learning rates must be >= 0");
  if (optimizer != "sgd" && optimizer != "adam")
    fail("optimizer must be 'sgd' or 'adam', got '" + optimizer + "'");
  if (!(temperature > 0.0) || temperature > 1.0) fail("temperature must lie in (0, 1]");
  if (gamma0 < 0.0 || gamma0 > 1.0) fail("gamma0 must lie in [0,1]");
  if (confidence_tau < 0.0 || confidence_tau > 1.0) fail("confidence_tau must lie in [0,1]");
  if (d_emb < 1 || d_hid < 1) fail("d_emb and d_hid must be >= 1");
  if (max_len < 1) fail("max_len must be >= 1");
  if (min_freq < 1) fail("min_freq must be >= 1");
  for (const auto& t : balance_tasks)
    if (!is_task_name(t)) fail("unknown balance task '" + t + "'");
  if (balance_k < 0) fail("balance_k must be >= 0");
}

TrainConfig TrainConfig::from_json_text(const std::string& text) {
  Json parsed = Json::parse(text, nullptr, false);
  if (parsed.is_discarded() || !parsed.is_object()) fail("config must be a JSON object");
  TrainConfig config;
  for (const auto& [key, value] : parsed.items()) {
    try {
      if (key == "task") config.task = value.get<std::string>();
      else if (key == "batch_size") config.batch_size = value.get<std::size_t>();
      else if (key == "epochs") config.epochs = value.get<std::size_t>();
      else if (key == "lr_encoder") config.lr_encoder = value.get<double>();
      else if (key == "lr_head") config.lr_head = value.get<double>();
      else if (key == "optimizer") config.optimizer = value.get<std::string>();
      else if (key == "temperature") config.temperature = value.get<double>();
      else if (key == "gamma0") config.gamma0 = value.get<double>();
      else if (key == "ramp_steps") config.ramp_steps = value.get<std::size_t>();
      else if (key == "gamma_fixed") config.gamma_fixed = value.get<bool>();
      else if (key == "confidence_tau") config.confidence_tau = value.get<double>();
      else if (key == "reverse_kl") config.reverse_kl = value.get<bool>();
      else if (key == "seed") config.seed = value.get<std::uint64_t>();
      else if (key == "d_emb") config.d_emb = value.get<std::size_t>();
      else if (key == "d_hid") config.d_hid = value.get<std::size_t>();
      else if (key == "max_len") config.max_len = value.get<std::size_t>();
      else if (key == "min_freq") config.min_freq = value.get<int>();
      else if (key == "balance_tasks") config.balance_tasks = value.get<std::vector<std::string>>();
      else if (key == "balance_k") config.balance_k = value.get<int>();
      else fail("unknown config key '" + key + "'");
    } catch (const Json::exception& e) {
      fail("config key '" + key + "': " + e.what());
    }
  }
  config.validate();
  return config;
}

std::string TrainConfig::to_json_text() const {
  Json out;
  out["task"] = task;
  out["batch_size"] = batch_size;
  out["epochs"] = epochs;
  out["lr_encoder"] = lr_encoder;
  out["lr_head"] = lr_head;
  out["optimizer"] = optimizer;
  out["temperature"] = temperature;
  out["gamma0"] = gamma0;
  out["ramp_steps"] = ramp_steps;
  out["gamma_fixed"] = gamma_fixed;
  out["confidence_tau"] = confidence_tau;
  out["reverse_kl"] = reverse_kl;
  out["seed"] = seed;
  out["d_emb"] = d_emb;
  out["d_hid"] = d_hid;
  out["max_len"] = max_len;
  out["min_freq"] = min_freq;
  out["balance_tasks"] = balance_tasks;
  out["balance_k"] = balance_k;
  return out.dump();
}

std::string TrainConfig::hash() const {
  const std::uint64_t h = hash_mix(0xcbf29ce484222325ull, to_json_text());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

Metrics compute_metrics(const std::vector<int>& gold, const std::vector<int>& pred) {
  if (gold.empty()) fail("metrics need at least one example");
  if (gold.size() != pred.size())
    fail("metrics got " + std::to_string(gold.size()) + " gold labels and " +
         std::to_string(pred.size()) + " predictions");
  Metrics m;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if ((gold[i] != 0 && gold[i] != 1) || (pred[i] != 0 && pred[i] != 1))
      fail("labels must be 0 or 1");
    if (pred[i] == 1) {
      (gold[i] == 1 ? m.tp : m.fp) += 1;
    } else {
      (gold[i] == 1 ? m.fn : m.tn) += 1;
    }
  }
  m.accuracy = ratio(m.tp + m.tn, gold.size());
  m.precision1 = ratio(m.tp, m.tp + m.fp);
  m.recall1 = ratio(m.tp, m.tp + m.fn);
  m.f1_1 = f1_score(m.precision1, m.recall1);
  m.precision0 = ratio(m.tn, m.tn + m.fn);
  m.recall0 = ratio(m.tn, m.tn + m.fp);
  m.f1_0 = f1_score(m.precision0, m.recall0);
  m.macro_f1 = (m.f1_0 + m.f1_1) / 2.0;
  return m;
}

std::vector<int> predict_labels(const ParamSet& params, const std::vector<Example>& examples) {
  std::vector<int> labels;
  labels.reserve(examples.size());
  constexpr std::size_t kChunk = 256;
  for (std::size_t begin = 0; begin < examples.size(); begin += kChunk) {
    const std::size_t end = std::min(examples.size(), begin + kChunk);
    std::vector<std::vector<int>> ids;
    for (std::size_t i = begin; i < end; ++i) {
      if (examples[i].ids.empty())
        fail("example '" + examples[i].id + "' has no token ids; preprocess it first");
      ids.push_back(examples[i].ids);
    }
    for (const ProbDist& dist : predict_dist(params, ids))
      labels.push_back(dist.p[1] > dist.p[0] ? 1 : 0);
  }
  return labels;
}

Metrics evaluate(const ParamSet& params, const std::vector<Example>& examples,
                 const std::string& task) {
  if (!is_task_name(task)) fail("unknown task '" + task + "'");
  if (examples.empty()) fail("evaluation set is empty");
  std::vector<int> gold;
  gold.reserve(examples.size());
  for (const Example& ex : examples) {
    if (!ex.labels || !ex.labels->count(task))
      fail("example '" + ex.id + "' carries no '" + task + "' label");
    gold.push_back(ex.labels->at(task));
  }
  return compute_metrics(gold, predict_labels(params, examples));
}

std::vector<MixedBatch> make_mixed_batches(std::size_t n_labeled, std::size_t n_pairs,
                                           std::size_t batch_size, std::uint64_t seed,
                                           std::size_t epoch) {
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (n_labeled == 0) fail("labeled pool is empty");

  std::vector<std::size_t> labeled_order(n_labeled);
  for (std::size_t i = 0; i < n_labeled; ++i) labeled_order[i] = i;
  Rng labeled_rng(hash_mix(hash_mix(seed, "batch-labeled"), epoch));
  labeled_rng.shuffle(labeled_order);

  std::vector<std::size_t> pair_order(n_pairs);
  for (std::size_t i = 0; i < n_pairs; ++i) pair_order[i] = i;
  Rng pair_rng(hash_mix(hash_mix(seed, "batch-pairs"), epoch));
  pair_rng.shuffle(pair_order);

  std::vector<MixedBatch> batches;
  std::size_t cursor = 0;
  for (std::size_t begin = 0; begin < n_labeled; begin += batch_size) {
    MixedBatch batch;
    const std::size_t end = std::min(n_labeled, begin + batch_size);
    batch.labeled.assign(labeled_order.begin() + static_cast<std::ptrdiff_t>(begin),
                         labeled_order.begin() + static_cast<std::ptrdiff_t>(end));
    if (n_pairs > 0) {
      for (std::size_t i = 0; i < batch_size; ++i) {
        batch.pairs.push_back(pair_order[cursor % n_pairs]);
        ++cursor;
      }
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

namespace {

struct AdamState {
  std::vector<std::vector<double>> m, v;
  std::size_t t = 0;
};

void apply_update(ParamSet& params, const std::vector<ag::Var>& leaves,
                  const TrainConfig& config, AdamState& adam) {
  const auto& entries = ParamSet::entries();
  const bool use_adam = config.optimizer == "adam";
  if (use_adam) ++adam.t;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const double lr =
        entries[i].group == ParamGroup::encoder ? config.lr_encoder : config.lr_head;
    ag::Tensor& tensor = params.*(entries[i].member);
    const ag::Tensor grad = leaves[i].grad();
    std::vector<double>& data = tensor.data();
    if (use_adam) {
      constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
      std::vector<double>& m = adam.m[i];
      std::vector<double>& v = adam.v[i];
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam.t));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam.t));
      for (std::size_t j = 0; j < data.size(); ++j) {
        const double g = grad.at(j);
        m[j] = b1 * m[j] + (1.0 - b1) * g;
        v[j] = b2 * v[j] + (1.0 - b2) * g * g;
        data[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps);
      }
    } else {
      for (std::size_t j = 0; j < data.size(); ++j) data[j] -= lr * grad.at(j);
    }
  }
}

void check_finite(const ParamSet& params, std::size_t step) {
  for (const auto& entry : ParamSet::entries()) {
    for (double x : (params.*(entry.member)).data()) {
      if (!std::isfinite(x))
        fail("parameters diverged at step " + std::to_string(step) +
             " (non-finite value in '" + std::string(entry.name) + "'); lower the learning rate");
    }
  }
}

LossBreakdown mean_breakdown(const std::vector<StepRecord>& steps, std::size_t begin) {
  LossBreakdown mean;
  const std::size_t n = steps.size() - begin;
  for (std::size_t i = begin; i < steps.size(); ++i) {
    mean.L_S += steps[i].losses.L_S;
    mean.L_s += steps[i].losses.L_s;
    mean.L_e += steps[i].losses.L_e;
    mean.L_c += steps[i].losses.L_c;
    mean.L_U += steps[i].losses.L_U;
    mean.L += steps[i].losses.L;
    mean.gamma_used += steps[i].losses.gamma_used;
  }
  const double inv = 1.0 / static_cast<double>(n);
  mean.L_S *= inv;
  mean.L_s *= inv;
  mean.L_e *= inv;
  mean.L_c *= inv;
  mean.L_U *= inv;
  mean.L *= inv;
  mean.gamma_used *= inv;
  return mean;
}

}  // namespace

TrainResult train(const TrainData& data, const ModelConfig& model_config,
                  const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  model_config.validate();
  if (data.train.empty()) fail("training set is empty");
  if (data.dev.empty()) fail("dev set is empty (needed for checkpoint selection)");
  std::vector<int> train_labels;
  for (const Example& ex : data.train) {
    if (!ex.labels || !ex.labels->count(config.task))
      fail("training example '" + ex.id + "' carries no '" + config.task + "' label");
    if (ex.ids.empty()) fail("training example '" + ex.id + "' has no token ids");
    train_labels.push_back(ex.labels->at(config.task));
  }
  for (const AugmentedPair& pair : data.pairs)
    if (pair.original.ids.empty() || pair.augmented.ids.empty())
      fail("pair '" + pair.original.id + "' has no token ids");

  const std::size_t steps_per_epoch =
      (data.train.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = steps_per_epoch * config.epochs;
  GammaSchedule schedule;
  schedule.gamma0 = config.gamma0;
  schedule.total_steps = total_steps;
  schedule.ramp_steps =
      config.ramp_steps > 0 ? config.ramp_steps : std::max<std::size_t>(1, total_steps / 2);

  LossOptions options;
  options.temperature = config.temperature;
  options.confidence_tau = config.confidence_tau;
  options.reverse_kl = config.reverse_kl;

  ParamSet params = init_params(model_config, hash_mix(config.seed, "init"));
  AdamState adam;
  for (const auto& entry : ParamSet::entries()) {
    const std::size_t n = (params.*(entry.member)).numel();
    adam.m.push_back(std::vector<double>(n, 0.0));
    adam.v.push_back(std::vector<double>(n, 0.0));
  }

  TrainResult result;
  result.best_dev_macro_f1 = -1.0;
  std::size_t global_step = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const std::size_t epoch_first_step = result.steps.size();
    const std::vector<MixedBatch> batches = make_mixed_batches(
        data.train.size(), data.pairs.size(), config.batch_size, config.seed, epoch);
    for (const MixedBatch& batch : batches) {
      LabeledBatch labeled;
      for (std::size_t i : batch.labeled) {
        labeled.ids.push_back(data.train[i].ids);
        labeled.labels.push_back(train_labels[i]);
      }
      PairBatch pairs;
      for (std::size_t i : batch.pairs) {
        pairs.orig_ids.push_back(data.pairs[i].original.ids);
        pairs.aug_ids.push_back(data.pairs[i].augmented.ids);
      }
      const double gamma =
          config.gamma_fixed ? config.gamma0 : gamma_at(schedule, global_step);

      ag::Tape tape;
      ModelVars vars = param_vars(tape, params);
      TotalLoss step_loss;
      try {
        step_loss = build_total_loss(tape, vars, model_config, labeled, pairs, options, gamma);
        tape.backward(step_loss.loss);
      } catch (const Error& e) {
        fail("loss computation failed at step " + std::to_string(global_step) + ": " + e.what());
      }
      if (!std::isfinite(step_loss.breakdown.L))
        fail("loss diverged at step " + std::to_string(global_step));

      const std::vector<ag::Var> leaves = {vars.embedding, vars.enc_w, vars.enc_b,
                                           vars.head1_w, vars.head1_b, vars.head2_w,
                                           vars.head2_b};
      apply_update(params, leaves, config, adam);
      check_finite(params, global_step);

      StepRecord record;
      record.step = global_step;
      record.losses = step_loss.breakdown;
      result.steps.push_back(record);
      if (hooks.after_step) hooks.after_step(record);
      ++global_step;
    }

    EpochRecord epoch_record;
    epoch_record.epoch = epoch;
    epoch_record.mean_losses = mean_breakdown(result.steps, epoch_first_step);
    const Metrics dev = evaluate(params, data.dev, config.task);
    epoch_record.dev_accuracy = dev.accuracy;
    epoch_record.dev_macro_f1 = dev.macro_f1;
    result.history.push_back(epoch_record);
    if (hooks.after_epoch) hooks.after_epoch(epoch_record);

    if (dev.macro_f1 > result.best_dev_macro_f1) {
      result.best_dev_macro_f1 = dev.macro_f1;
      result.best_epoch = epoch;
      result.best_params = params;
    }
  }
  return result;
}

std::size_t predict_file(const ParamSet& params, const Vocab& vocab, std::size_t max_len,
                         const std::string& input_path, const std::string& output_path,
                         const std::string& task) {
  if (!is_task_name(task)) fail("unknown task '" + task + "'");
  std::vector<Example> examples = load_corpus(input_path, RecordKind::unlabeled);
  preprocess_examples(examples, vocab, max_len);

  std::ofstream out(output_path);
  if (!out) fail("cannot open '" + output_path + "' for writing");
  if (examples.empty()) return 0;

  std::vector<int> labels = predict_labels(params, examples);
  constexpr std::size_t kChunk = 256;
  std::vector<double> p1;
  for (std::size_t begin = 0; begin < examples.size(); begin += kChunk) {
    const std::size_t end = std::min(examples.size(), begin + kChunk);
    std::vector<std::vector<int>> ids;
    for (std::size_t i = begin; i < end; ++i) ids.push_back(examples[i].ids);
    for (const ProbDist& dist : predict_dist(params, ids)) p1.push_back(dist.p[1]);
  }
  for (std::size_t i = 0; i < examples.size(); ++i) {
    Json record;
    record["id"] = examples[i].id;
    record["task"] = task;
    record["label"] = labels[i];
    record["p1"] = p1[i];
    out << record.dump() << "\n";
  }
  if (!out) fail("failed writing '" + output_path + "'");
  return examples.size();
}

namespace {

Json breakdown_json(const LossBreakdown& losses) {
  Json out;
  out["L_S"] = losses.L_S;
  out["L_s"] = losses.L_s;
  out["L_e"] = losses.L_e;
  out["L_c"] = losses.L_c;
  out["L_U"] = losses.L_U;
  out["L"] = losses.L;
  out["gamma"] = losses.gamma_used;
  return out;
}

}  // namespace

void save_history(const std::string& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path);
  if (!out) fail("cannot open '" + path + "' for writing");
  for (const EpochRecord& record : history) {
    Json line;
    line["epoch"] = record.epoch;
    line["dev_accuracy"] = record.dev_accuracy;
    line["dev_macro_f1"] = record.dev_macro_f1;
    const Json losses = breakdown_json(record.mean_losses);
    for (const auto& [k, v] : losses.items()) line[k] = v;
    out << line.dump() << "\n";
  }
  if (!out) fail("failed writing '" + path + "'");
}

void save_steps(const std::string& path, const std::vector<StepRecord>& steps) {
  std::ofstream out(path);
  if (!out) fail("cannot open '" + path + "' for writing");
  for (const StepRecord& record : steps) {
    Json line;
    line["step"] = record.step;
    const Json losses = breakdown_json(record.losses);
    for (const auto& [k, v] : losses.items()) line[k] = v;
    out << line.dump() << "\n";
  }
  if (!out) fail("failed writing '" + path + "'");
}

void save_model(const std::string& path, const ParamSet& params, const std::string& task,
                std::size_t epoch, const std::string& config_hash, const Vocab& vocab,
                std::size_t max_len) {
  Json extra;
  extra["task"] = task;
  extra["epoch"] = epoch;
  extra["config_hash"] = config_hash;
  Json dims;
  dims["vocab_size"] = params.config.vocab_size;
  dims["d_emb"] = params.config.d_emb;
  dims["d_hid"] = params.config.d_hid;
  extra["model"] = dims;
  extra["max_len"] = max_len;
  Json tokens = Json::array();
  for (const auto& [token, index] : vocab.entries()) tokens.push_back({token, index});
  extra["vocab"] = std::move(tokens);
  ag::save_checkpoint(path, params.named(), extra.dump());
}

LoadedModel load_model(const std::string& path) {
  ag::Checkpoint checkpoint = ag::load_checkpoint(path);
  Json manifest = Json::parse(checkpoint.extra_manifest_json, nullptr, false);
  if (manifest.is_discarded() || !manifest.is_object() || !manifest.contains("model") ||
      !manifest.contains("task"))
    fail("checkpoint '" + path + "' carries no model manifest");
  LoadedModel loaded;
  loaded.task = manifest["task"].get<std::string>();
  loaded.epoch = manifest.value("epoch", std::size_t{0});
  loaded.config_hash = manifest.value("config_hash", std::string{});
  loaded.max_len = manifest.value("max_len", std::size_t{64});
  if (manifest.contains("vocab")) {
    std::vector<std::pair<std::string, int>> entries;
    for (const auto& pair : manifest["vocab"])
      entries.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<int>());
    loaded.vocab = Vocab::from_entries(entries, 1);
  }
  ModelConfig config;
  config.vocab_size = manifest["model"]["vocab_size"].get<std::size_t>();
  config.d_emb = manifest["model"]["d_emb"].get<std::size_t>();
  config.d_hid = manifest["model"]["d_hid"].get<std::size_t>();
  loaded.params = ParamSet::from_named(config, checkpoint.params);
  return loaded;
}

}  // namespace ssltext

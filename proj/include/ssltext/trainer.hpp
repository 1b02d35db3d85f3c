#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ssltext/augment.hpp"
#include "ssltext/corpus.hpp"
#include "ssltext/model.hpp"
#include "ssltext/objective.hpp"

namespace ssltext {

struct TrainConfig {
  std::string task = "Support";
  std::size_t batch_size = 32;
  std::size_t epochs = 20;
  double lr_encoder = 1e-2;
  double lr_head = 1e-2;
  std::string optimizer = "sgd";  // or "adam"
  double temperature = 0.5;
  double gamma0 = 0.0;
  // 0 means ramp over the first half of all steps.
  std::size_t ramp_steps = 0;
  // When set, gamma stays at gamma0 for the whole run (gamma0 = 0 gives a
  // purely supervised objective even when pairs are present).
  bool gamma_fixed = false;
  double confidence_tau = 0.0;
  bool reverse_kl = false;
  std::uint64_t seed = 1;
  std::size_t d_emb = 64;
  std::size_t d_hid = 128;
  std::size_t max_len = 64;
  int min_freq = 2;
  std::vector<std::string> balance_tasks;
  int balance_k = 4;

  void validate() const;
  static TrainConfig from_json_text(const std::string& text);
  std::string to_json_text() const;
  // Stable fingerprint of the serialized config, for checkpoint manifests.
  std::string hash() const;
};

struct Metrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double precision0 = 0.0, recall0 = 0.0, f1_0 = 0.0;
  double precision1 = 0.0, recall1 = 0.0, f1_1 = 0.0;
  // Confusion counts from the class-1 perspective.
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

// Counting-only metrics; gold and pred hold 0/1 labels.
Metrics compute_metrics(const std::vector<int>& gold, const std::vector<int>& pred);

// Argmax predictions over the task column; ties go to class 0.
Metrics evaluate(const ParamSet& params, const std::vector<Example>& examples,
                 const std::string& task);
std::vector<int> predict_labels(const ParamSet& params, const std::vector<Example>& examples);

// One optimizer step's worth of data, as indices into the two pools.
struct MixedBatch {
  std::vector<std::size_t> labeled;
  std::vector<std::size_t> pairs;
};

// Shuffles both pools (independent seeded streams) and chunks the labeled
// pool; every batch carries batch_size pair slots, cycling the pair pool
// when it is shorter. The final labeled chunk may be partial.
std::vector<MixedBatch> make_mixed_batches(std::size_t n_labeled, std::size_t n_pairs,
                                           std::size_t batch_size, std::uint64_t seed,
                                           std::size_t epoch);

struct StepRecord {
  std::size_t step = 0;
  LossBreakdown losses;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double dev_accuracy = 0.0;
  double dev_macro_f1 = 0.0;
  LossBreakdown mean_losses;
};

struct TrainData {
  std::vector<Example> train;        // labeled, preprocessed
  std::vector<Example> dev;          // labeled, preprocessed
  std::vector<AugmentedPair> pairs;  // both sides preprocessed
};

struct TrainHooks {
  std::function<void(const StepRecord&)> after_step;
  std::function<void(const EpochRecord&)> after_epoch;
};

struct TrainResult {
  ParamSet best_params;
  std::size_t best_epoch = 0;
  double best_dev_macro_f1 = 0.0;
  std::vector<EpochRecord> history;
  std::vector<StepRecord> steps;
};

TrainResult train(const TrainData& data, const ModelConfig& model_config,
                  const TrainConfig& config, const TrainHooks& hooks = {});

// {"id","task","label","p1"} per input record; returns the record count.
std::size_t predict_file(const ParamSet& params, const Vocab& vocab, std::size_t max_len,
                         const std::string& input_path, const std::string& output_path,
                         const std::string& task);

void save_history(const std::string& path, const std::vector<EpochRecord>& history);
void save_steps(const std::string& path, const std::vector<StepRecord>& steps);

// Checkpoint wrappers. The manifest carries the task, model dimensions,
// vocabulary and max_len next to the tensors, so a loaded model can score
// raw text on its own.
void save_model(const std::string& path, const ParamSet& params, const std::string& task,
                std::size_t epoch, const std::string& config_hash, const Vocab& vocab,
                std::size_t max_len);
struct LoadedModel {
  ParamSet params;
  std::string task;
  std::size_t epoch = 0;
  std::string config_hash;
  Vocab vocab;
  std::size_t max_len = 64;
};
LoadedModel load_model(const std::string& path);

}  // namespace ssltext

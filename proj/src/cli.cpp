#include "ssltext/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "ssltext/augment.hpp"
#include "ssltext/corpus.hpp"
#include "ssltext/synth.hpp"
#include "ssltext/trainer.hpp"

namespace ssltext {

namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& msg) { throw Error("cli: " + msg); }

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void write_json_file(const std::string& path, const Json& payload) {
  std::ofstream out(path);
  if (!out) fail("cannot open '" + path + "' for writing");
  out << payload.dump(2) << "\n";
  if (!out) fail("failed writing '" + path + "'");
}

// Written before any artifact; no timestamps, so reruns are byte-identical.
void write_manifest(const std::string& path, const std::string& command, std::uint64_t seed,
                    Json config, Json inputs, Json outputs) {
  Json manifest;
  manifest["command"] = command;
  manifest["artifact_version"] = 1;
  manifest["seed"] = seed;
  manifest["config"] = std::move(config);
  manifest["inputs"] = std::move(inputs);
  manifest["outputs"] = std::move(outputs);
  write_json_file(path, manifest);
}

Json metrics_json(const Metrics& m) {
  Json out;
  out["accuracy"] = m.accuracy;
  out["macro_f1"] = m.macro_f1;
  out["precision1"] = m.precision1;
  out["recall1"] = m.recall1;
  out["f1_1"] = m.f1_1;
  out["precision0"] = m.precision0;
  out["recall0"] = m.recall0;
  out["f1_0"] = m.f1_0;
  out["tp"] = m.tp;
  out["fp"] = m.fp;
  out["fn"] = m.fn;
  out["tn"] = m.tn;
  return out;
}

std::string table_header() {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%-24s %9s %9s", "task", "accuracy", "macro_f1");
  return buf;
}

std::string table_row(const std::string& task, const Metrics& m) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%-24s %9.4f %9.4f", task.c_str(), m.accuracy, m.macro_f1);
  return buf;
}

// --- config file -----------------------------------------------------------

struct DataPaths {
  std::string data_dir;
  std::string train_file, dev_file, test_file, pairs_file, vocab_file;
  std::string out_dir;

  Json to_json() const {
    Json out;
    out["data_dir"] = data_dir;
    out["train_file"] = train_file;
    out["dev_file"] = dev_file;
    out["test_file"] = test_file;
    out["pairs_file"] = pairs_file;
    out["vocab_file"] = vocab_file;
    out["out_dir"] = out_dir;
    return out;
  }
};

struct CliConfig {
  TrainConfig train;
  DataPaths paths;
};

// One flat JSON object: TrainConfig fields plus data/output paths. Path
// defaults derive from data_dir; a missing pairs or test file is only an
// error when named explicitly.
CliConfig load_cli_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open config '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  Json parsed = Json::parse(text, nullptr, false);
  if (parsed.is_discarded() || !parsed.is_object())
    fail("config '" + path + "' is not a JSON object");

  CliConfig config;
  bool pairs_explicit = false, test_explicit = false;
  Json rest = Json::object();
  for (const auto& [key, value] : parsed.items()) {
    try {
      if (key == "data_dir") config.paths.data_dir = value.get<std::string>();
      else if (key == "train_file") config.paths.train_file = value.get<std::string>();
      else if (key == "dev_file") config.paths.dev_file = value.get<std::string>();
      else if (key == "test_file") { config.paths.test_file = value.get<std::string>(); test_explicit = true; }
      else if (key == "pairs_file") { config.paths.pairs_file = value.get<std::string>(); pairs_explicit = true; }
      else if (key == "vocab_file") config.paths.vocab_file = value.get<std::string>();
      else if (key == "out_dir") config.paths.out_dir = value.get<std::string>();
      else rest[key] = value;
    } catch (const Json::exception& e) {
      fail("config key '" + key + "': " + e.what());
    }
  }
  config.train = TrainConfig::from_json_text(rest.dump());

  DataPaths& p = config.paths;
  const std::string& dir = p.data_dir;
  if (p.train_file.empty() && !dir.empty()) p.train_file = join(dir, "train.jsonl");
  if (p.dev_file.empty() && !dir.empty()) p.dev_file = join(dir, "dev.jsonl");
  if (p.vocab_file.empty() && !dir.empty()) p.vocab_file = join(dir, "vocab.tsv");
  if (!test_explicit && !dir.empty() && fs::exists(join(dir, "test.jsonl")))
    p.test_file = join(dir, "test.jsonl");
  if (!pairs_explicit && !dir.empty() && fs::exists(join(dir, "pairs.jsonl")))
    p.pairs_file = join(dir, "pairs.jsonl");
  if (p.out_dir.empty()) p.out_dir = dir;
  if (p.train_file.empty() || p.dev_file.empty() || p.vocab_file.empty() || p.out_dir.empty())
    fail("config '" + path + "' needs data_dir or explicit train/dev/vocab/out paths");
  return config;
}

// --- command runners --------------------------------------------------------

struct IngestArgs {
  std::string labeled, unlabeled, out;
  double train_frac = 0.8, dev_frac = 0.2;
  std::uint64_t seed = 1;
  int min_freq = 2;
  std::string stratify;
};

void run_ingest(const IngestArgs& args, std::ostream& out) {
  std::vector<Example> labeled = load_corpus(args.labeled, RecordKind::labeled);
  std::vector<Example> unlabeled = load_corpus(args.unlabeled, RecordKind::unlabeled);

  SplitSpec spec =
      SplitSpec::from_fractions(labeled.size(), args.train_frac, args.dev_frac, args.seed);
  if (!args.stratify.empty()) spec.stratify_task = args.stratify;
  Split parts = split(labeled, spec);

  std::vector<Example> vocab_source = parts.train;
  vocab_source.insert(vocab_source.end(), unlabeled.begin(), unlabeled.end());
  const Vocab vocab = build_vocab(vocab_source, args.min_freq);

  std::error_code ec;
  fs::create_directories(args.out, ec);
  if (ec) fail("cannot create directory '" + args.out + "': " + ec.message());

  Json config;
  config["train_frac"] = args.train_frac;
  config["dev_frac"] = args.dev_frac;
  config["min_freq"] = args.min_freq;
  config["stratify"] = args.stratify;
  Json inputs;
  inputs["labeled"] = args.labeled;
  inputs["unlabeled"] = args.unlabeled;
  Json outputs;
  for (const char* name : {"train.jsonl", "dev.jsonl", "test.jsonl", "unlabeled.jsonl",
                           "vocab.tsv"})
    outputs[name] = join(args.out, name);
  write_manifest(join(args.out, "manifest-ingest.json"), "ingest", args.seed,
                 std::move(config), std::move(inputs), std::move(outputs));

  save_examples(join(args.out, "train.jsonl"), parts.train, true);
  save_examples(join(args.out, "dev.jsonl"), parts.dev, true);
  save_examples(join(args.out, "test.jsonl"), parts.test, true);
  save_examples(join(args.out, "unlabeled.jsonl"), unlabeled, false);
  vocab.save(join(args.out, "vocab.tsv"));

  out << "ingest: " << parts.train.size() << " train / " << parts.dev.size() << " dev / "
      << parts.test.size() << " test, " << unlabeled.size() << " unlabeled, vocab size "
      << vocab.size() << "\n";
}

struct AugmentArgs {
  std::string in, provider = "file", paraphrases, synonyms;
  int k = 4;
  std::vector<std::string> tasks;
  double swap_prob = 0.1, drop_prob = 0.1;
  std::uint64_t seed = 1;
};

void run_augment(const AugmentArgs& args, std::ostream& out) {
  std::optional<ParaphraseProvider> provider;
  if (args.provider == "file") {
    if (args.paraphrases.empty()) fail("--provider file requires --paraphrases <path>");
    provider = ParaphraseProvider::from_table_file(args.paraphrases);
  } else if (args.provider == "rule") {
    RuleParams params;
    params.swap_prob = args.swap_prob;
    params.drop_prob = args.drop_prob;
    if (!args.synonyms.empty()) params.synonyms = load_synonym_lexicon(args.synonyms);
    provider = ParaphraseProvider::rule_based(std::move(params), args.seed);
  } else {
    fail("--provider must be 'file' or 'rule', got '" + args.provider + "'");
  }

  std::vector<Example> unlabeled =
      load_corpus(join(args.in, "unlabeled.jsonl"), RecordKind::unlabeled);

  Json config;
  config["provider"] = args.provider;
  config["paraphrases"] = args.paraphrases;
  config["synonyms"] = args.synonyms;
  config["k"] = args.k;
  config["tasks"] = args.tasks;
  config["swap_prob"] = args.swap_prob;
  config["drop_prob"] = args.drop_prob;
  Json inputs;
  inputs["unlabeled"] = join(args.in, "unlabeled.jsonl");
  Json outputs;
  outputs["pairs"] = join(args.in, "pairs.jsonl");
  if (!args.tasks.empty()) {
    inputs["train"] = join(args.in, "train.jsonl");
    outputs["train_balanced"] = join(args.in, "train-balanced.jsonl");
  }
  write_manifest(join(args.in, "manifest-augment.json"), "augment", args.seed,
                 std::move(config), std::move(inputs), std::move(outputs));

  const std::vector<AugmentedPair> pairs = pair_unlabeled(unlabeled, *provider);
  save_pairs(join(args.in, "pairs.jsonl"), pairs);
  out << "augment: " << pairs.size() << " pairs";

  if (!args.tasks.empty()) {
    std::vector<Example> train = load_corpus(join(args.in, "train.jsonl"), RecordKind::labeled);
    const std::vector<Example> balanced = balance_minority(train, args.tasks, args.k, *provider);
    save_examples(join(args.in, "train-balanced.jsonl"), balanced, true);
    out << ", balanced train " << train.size() << " -> " << balanced.size();
  }
  out << "\n";
}

void preprocess_pairs(std::vector<AugmentedPair>& pairs, const Vocab& vocab,
                      std::size_t max_len) {
  for (AugmentedPair& pair : pairs) {
    pair.original.ids = preprocess_sentence(pair.original.text, vocab, max_len);
    pair.augmented.ids = preprocess_sentence(pair.augmented.text, vocab, max_len);
  }
}

struct TaskOutcome {
  Metrics dev;
  std::optional<Metrics> test;
  std::size_t best_epoch = 0;
};

TaskOutcome run_train_task(const DataPaths& paths, const TrainConfig& config,
                           std::ostream& out) {
  const Vocab vocab = Vocab::load(paths.vocab_file);

  TrainData data;
  data.train = load_corpus(paths.train_file, RecordKind::labeled);
  data.dev = load_corpus(paths.dev_file, RecordKind::labeled);
  preprocess_examples(data.train, vocab, config.max_len);
  preprocess_examples(data.dev, vocab, config.max_len);
  if (!paths.pairs_file.empty()) {
    data.pairs = load_pairs(paths.pairs_file);
    preprocess_pairs(data.pairs, vocab, config.max_len);
  }

  ModelConfig model;
  model.vocab_size = vocab.size();
  model.d_emb = config.d_emb;
  model.d_hid = config.d_hid;

  std::error_code ec;
  fs::create_directories(paths.out_dir, ec);
  if (ec) fail("cannot create directory '" + paths.out_dir + "': " + ec.message());

  const std::string& task = config.task;
  const std::string ckpt_path = join(paths.out_dir, "model-" + task + ".ckpt");
  const std::string history_path = join(paths.out_dir, "history-" + task + ".jsonl");
  const std::string steps_path = join(paths.out_dir, "steps-" + task + ".jsonl");
  const std::string metrics_path = join(paths.out_dir, "metrics-" + task + ".json");

  Json outputs;
  outputs["checkpoint"] = ckpt_path;
  outputs["history"] = history_path;
  outputs["steps"] = steps_path;
  outputs["metrics"] = metrics_path;
  write_manifest(join(paths.out_dir, "manifest-train-" + task + ".json"), "train",
                 config.seed, Json::parse(config.to_json_text()), paths.to_json(),
                 std::move(outputs));

  const TrainResult result = train(data, model, config);
  save_model(ckpt_path, result.best_params, task, result.best_epoch, config.hash(), vocab,
             config.max_len);
  save_history(history_path, result.history);
  save_steps(steps_path, result.steps);

  TaskOutcome outcome;
  outcome.best_epoch = result.best_epoch;
  outcome.dev = evaluate(result.best_params, data.dev, task);
  Json metrics;
  metrics["task"] = task;
  metrics["best_epoch"] = result.best_epoch;
  metrics["dev"] = metrics_json(outcome.dev);
  if (!paths.test_file.empty()) {
    std::vector<Example> test = load_corpus(paths.test_file, RecordKind::labeled);
    preprocess_examples(test, vocab, config.max_len);
    outcome.test = evaluate(result.best_params, test, task);
    metrics["test"] = metrics_json(*outcome.test);
  }
  write_json_file(metrics_path, metrics);

  char dev_f1[16];
  std::snprintf(dev_f1, sizeof(dev_f1), "%.4f", outcome.dev.macro_f1);
  out << "train " << task << ": best epoch " << result.best_epoch << ", dev macro-F1 "
      << dev_f1 << "\n";
  return outcome;
}

struct SynthArgs {
  std::size_t n_labeled = 0, n_unlabeled = 0, n_test = 0;
  std::uint64_t seed = 1;
  double noise = 0.3;
  int k = 4;
  std::string out_dir = "synth-data";
};

void run_synth(const SynthArgs& args, std::ostream& out) {
  SynthSpec spec;
  spec.n_labeled = args.n_labeled;
  spec.n_unlabeled = args.n_unlabeled;
  spec.n_test = args.n_test;
  spec.seed = args.seed;
  spec.noise = args.noise;
  spec.paraphrases_per_sentence = args.k;
  spec.validate();

  std::error_code ec;
  fs::create_directories(args.out_dir, ec);
  if (ec) fail("cannot create directory '" + args.out_dir + "': " + ec.message());

  Json config;
  config["n_labeled"] = spec.n_labeled;
  config["n_unlabeled"] = spec.n_unlabeled;
  config["n_test"] = spec.n_test;
  config["noise"] = spec.noise;
  config["paraphrases_per_sentence"] = spec.paraphrases_per_sentence;
  Json outputs;
  for (const char* name : {"labeled.jsonl", "unlabeled.jsonl", "test.jsonl",
                           "paraphrases.jsonl", "synonyms.tsv"})
    outputs[name] = join(args.out_dir, name);
  write_manifest(join(args.out_dir, "manifest-synth.json"), "synth", spec.seed,
                 std::move(config), Json::object(), std::move(outputs));

  write_synthetic(generate_synthetic(spec), args.out_dir);
  out << "synth: " << spec.n_labeled << " labeled, " << spec.n_unlabeled << " unlabeled, "
      << spec.n_test << " test -> " << args.out_dir << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"semi-supervised text classification pipeline"};
  app.name("ssltext");
  app.require_subcommand(1);

  IngestArgs ingest;
  CLI::App* ingest_cmd = app.add_subcommand("ingest", "split a labeled corpus and build a vocab");
  ingest_cmd->add_option("--labeled", ingest.labeled, "labeled jsonl file")->required();
  ingest_cmd->add_option("--unlabeled", ingest.unlabeled, "unlabeled jsonl file")->required();
  ingest_cmd->add_option("--out", ingest.out, "output directory")->required();
  ingest_cmd->add_option("--train-frac", ingest.train_frac, "train fraction");
  ingest_cmd->add_option("--dev-frac", ingest.dev_frac, "dev fraction");
  ingest_cmd->add_option("--seed", ingest.seed, "split seed");
  ingest_cmd->add_option("--min-freq", ingest.min_freq, "vocabulary frequency floor");
  ingest_cmd->add_option("--stratify", ingest.stratify, "task to stratify the split by");

  AugmentArgs augment;
  CLI::App* augment_cmd = app.add_subcommand("augment", "pair unlabeled sentences with paraphrases");
  augment_cmd->add_option("--in", augment.in, "ingested data directory")->required();
  augment_cmd->add_option("--provider", augment.provider, "paraphrase source: file or rule");
  augment_cmd->add_option("--paraphrases", augment.paraphrases, "paraphrase table (file provider)");
  augment_cmd->add_option("--synonyms", augment.synonyms, "synonym lexicon (rule provider)");
  augment_cmd->add_option("--k", augment.k, "copies per minority example");
  augment_cmd->add_option("--tasks", augment.tasks, "tasks to balance, comma separated")
      ->delimiter(',');
  augment_cmd->add_option("--swap-prob", augment.swap_prob, "rule provider swap probability");
  augment_cmd->add_option("--drop-prob", augment.drop_prob, "rule provider drop probability");
  augment_cmd->add_option("--seed", augment.seed, "rule provider seed");

  std::string train_task, train_config_path, train_out;
  std::uint64_t train_seed = 0;
  std::size_t train_batch = 0;
  double train_temperature = 0.0, train_gamma0 = 0.0;
  CLI::App* train_cmd = app.add_subcommand("train", "train one task");
  train_cmd->add_option("--task", train_task, "task name")->required();
  train_cmd->add_option("--config", train_config_path, "config file")->required();
  train_cmd->add_option("--seed", train_seed, "override config seed");
  train_cmd->add_option("--batch-size", train_batch, "override batch size");
  train_cmd->add_option("--temperature", train_temperature, "override sharpening temperature");
  train_cmd->add_option("--gamma0", train_gamma0, "override initial unlabeled weight");
  train_cmd->add_option("--out", train_out, "override output directory");

  std::string eval_checkpoint, eval_data, eval_out;
  CLI::App* eval_cmd = app.add_subcommand("eval", "score a checkpoint on labeled data");
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "model checkpoint")->required();
  eval_cmd->add_option("--data", eval_data, "labeled jsonl file")->required();
  eval_cmd->add_option("--out", eval_out, "metrics output file");

  std::string predict_checkpoint, predict_in, predict_out;
  CLI::App* predict_cmd = app.add_subcommand("predict", "label raw sentences");
  predict_cmd->add_option("--checkpoint", predict_checkpoint, "model checkpoint")->required();
  predict_cmd->add_option("--in", predict_in, "unlabeled jsonl file")->required();
  predict_cmd->add_option("--out", predict_out, "predictions output file")->required();

  SynthArgs synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic benchmark corpus");
  synth_cmd->add_option("--labeled", synth.n_labeled, "labeled sentence count")->required();
  synth_cmd->add_option("--unlabeled", synth.n_unlabeled, "unlabeled sentence count")->required();
  synth_cmd->add_option("--test", synth.n_test, "test sentence count")->required();
  synth_cmd->add_option("--seed", synth.seed, "corpus seed")->required();
  synth_cmd->add_option("--noise", synth.noise, "slot corruption probability");
  synth_cmd->add_option("--k", synth.k, "paraphrases per unlabeled sentence");
  synth_cmd->add_option("--out", synth.out_dir, "output directory");

  std::string all_config_path, all_out;
  std::uint64_t all_seed = 0;
  CLI::App* all_cmd = app.add_subcommand("train-all", "train all six tasks and tabulate");
  all_cmd->add_option("--config", all_config_path, "config file")->required();
  all_cmd->add_option("--seed", all_seed, "override config seed");
  all_cmd->add_option("--out", all_out, "override output directory");

  std::vector<const char*> argv;
  argv.push_back("ssltext");
  for (const std::string& arg : args) argv.push_back(arg.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp") {
      out << app.help();
      return 0;
    }
    err << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (app.got_subcommand(ingest_cmd)) {
      run_ingest(ingest, out);
    } else if (app.got_subcommand(augment_cmd)) {
      run_augment(augment, out);
    } else if (app.got_subcommand(synth_cmd)) {
      run_synth(synth, out);
    } else if (app.got_subcommand(train_cmd)) {
      CliConfig config = load_cli_config(train_config_path);
      config.train.task = train_task;
      if (train_cmd->count("--seed")) config.train.seed = train_seed;
      if (train_cmd->count("--batch-size")) config.train.batch_size = train_batch;
      if (train_cmd->count("--temperature")) config.train.temperature = train_temperature;
      if (train_cmd->count("--gamma0")) config.train.gamma0 = train_gamma0;
      if (train_cmd->count("--out")) config.paths.out_dir = train_out;
      config.train.validate();
      run_train_task(config.paths, config.train, out);
    } else if (app.got_subcommand(eval_cmd)) {
      const LoadedModel model = load_model(eval_checkpoint);
      std::vector<Example> data = load_corpus(eval_data, RecordKind::labeled);
      preprocess_examples(data, model.vocab, model.max_len);
      const Metrics metrics = evaluate(model.params, data, model.task);
      if (!eval_out.empty()) {
        Json inputs;
        inputs["checkpoint"] = eval_checkpoint;
        inputs["data"] = eval_data;
        Json outputs;
        outputs["metrics"] = eval_out;
        write_manifest(eval_out + ".manifest.json", "eval", 0, Json::object(),
                       std::move(inputs), std::move(outputs));
        Json payload;
        payload["task"] = model.task;
        payload["metrics"] = metrics_json(metrics);
        write_json_file(eval_out, payload);
      }
      out << table_header() << "\n" << table_row(model.task, metrics) << "\n";
    } else if (app.got_subcommand(predict_cmd)) {
      const LoadedModel model = load_model(predict_checkpoint);
      Json inputs;
      inputs["checkpoint"] = predict_checkpoint;
      inputs["in"] = predict_in;
      Json outputs;
      outputs["predictions"] = predict_out;
      write_manifest(predict_out + ".manifest.json", "predict", 0, Json::object(),
                     std::move(inputs), std::move(outputs));
      const std::size_t n = predict_file(model.params, model.vocab, model.max_len, predict_in,
                                         predict_out, model.task);
      out << "predict: " << n << " records -> " << predict_out << "\n";
    } else if (app.got_subcommand(all_cmd)) {
      CliConfig config = load_cli_config(all_config_path);
      if (all_cmd->count("--seed")) config.train.seed = all_seed;
      if (all_cmd->count("--out")) config.paths.out_dir = all_out;

      std::error_code ec;
      fs::create_directories(config.paths.out_dir, ec);
      if (ec) fail("cannot create directory '" + config.paths.out_dir + "': " + ec.message());

      const std::string table_path = join(config.paths.out_dir, "metrics-table.jsonl");
      Json outputs;
      outputs["metrics_table"] = table_path;
      write_manifest(join(config.paths.out_dir, "manifest-train-all.json"), "train-all",
                     config.train.seed, Json::parse(config.train.to_json_text()),
                     config.paths.to_json(), std::move(outputs));

      std::ofstream table(table_path);
      if (!table) fail("cannot open '" + table_path + "' for writing");
      out << table_header() << "\n";
      for (const char* task : kTaskNames) {
        TrainConfig task_config = config.train;
        task_config.task = task;
        task_config.validate();
        const TaskOutcome outcome = run_train_task(config.paths, task_config, out);
        const Metrics& scored = outcome.test ? *outcome.test : outcome.dev;
        Json row;
        row["task"] = task;
        row["split"] = outcome.test ? "test" : "dev";
        row["accuracy"] = scored.accuracy;
        row["macro_f1"] = scored.macro_f1;
        table << row.dump() << "\n";
        out << table_row(task, scored) << "\n";
      }
      if (!table) fail("failed writing '" + table_path + "'");
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace ssltext

#include "ssltext/synth.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "ssltext/rng.hpp"

namespace ssltext {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw Error("synth: " + msg); }

const std::vector<std::string> kPositivePool = {
    "glad",   "cheer", "bright", "warm",  "kind",   "hope",
    "smile",  "good",  "calm",   "sweet", "gentle", "happy",
    "friend", "peace", "light",  "proud"};

const std::vector<std::string> kNegativePool = {
    "gloom",  "harsh", "cold",  "bitter", "angry", "fear",
    "frown",  "bad",   "tense", "sour",   "rough", "sad",
    "lonely", "worry", "dark",  "hurt"};

const std::vector<std::string> kFillerPool = {
    "the", "a", "day", "time", "thing", "way", "note", "word", "turn", "spot"};

const std::vector<std::string>* pool_of(const std::string& word) {
  static const std::map<std::string, const std::vector<std::string>*> index = [] {
    std::map<std::string, const std::vector<std::string>*> m;
    for (const auto& w : kPositivePool) m[w] = &kPositivePool;
    for (const auto& w : kNegativePool) m[w] = &kNegativePool;
    for (const auto& w : kFillerPool) m[w] = &kFillerPool;
    return m;
  }();
  const auto it = index.find(word);
  return it == index.end() ? nullptr : it->second;
}

std::string make_sentence(Rng& rng, int latent_class, double noise) {
  const std::size_t length = 4 + rng.below(5);
  const auto& own = latent_class == 1 ? kPositivePool : kNegativePool;
  const auto& other = latent_class == 1 ? kNegativePool : kPositivePool;
  std::string text;
  for (std::size_t i = 0; i < length; ++i) {
    const double roll = rng.uniform01();
    const auto& pool = roll < noise ? kFillerPool : roll < noise * 1.5 ? other : own;
    if (i > 0) text += ' ';
    text += pool[rng.below(pool.size())];
  }
  return text;
}

// Replace roughly half the words with a uniform draw from their own pool.
std::string paraphrase_sentence(Rng& rng, const std::string& text) {
  std::istringstream in(text);
  std::string word, out;
  bool first = true;
  while (in >> word) {
    const std::vector<std::string>* pool = pool_of(word);
    if (pool != nullptr && rng.uniform01() < 0.5) word = (*pool)[rng.below(pool->size())];
    if (!first) out += ' ';
    out += word;
    first = false;
  }
  return out;
}

Example synth_example(const std::string& id, Rng& rng, int latent_class, double noise,
                      bool with_labels) {
  Example ex;
  ex.id = id;
  ex.text = make_sentence(rng, latent_class, noise);
  if (with_labels) {
    std::map<std::string, int> labels;
    for (const char* task : kTaskNames) labels[task] = synthetic_label(task, latent_class);
    ex.labels = std::move(labels);
  }
  return ex;
}

}  // namespace

void SynthSpec::validate() const {
  if (n_labeled < 1 || n_unlabeled < 1 || n_test < 1) fail("all corpus sizes must be >= 1");
  if (noise < 0.0 || noise > 0.6) fail("noise must lie in [0, 0.6]");
  if (paraphrases_per_sentence < 1) fail("paraphrases_per_sentence must be >= 1");
}

int synthetic_label(const std::string& task, int latent_class) {
  if (latent_class != 0 && latent_class != 1) fail("latent class must be 0 or 1");
  if (task == "Emotional_disclosure" || task == "Support" || task == "General_support" ||
      task == "Emotional_support")
    return latent_class;
  if (task == "Information_disclosure" || task == "Information_support")
    return 1 - latent_class;
  fail("unknown task '" + task + "'");
}

SynthCorpus generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  SynthCorpus corpus;

  Rng labeled_rng(hash_mix(spec.seed, "synth-labeled"));
  for (std::size_t i = 0; i < spec.n_labeled; ++i)
    corpus.labeled.push_back(synth_example("lab-" + std::to_string(i), labeled_rng,
                                           i % 2 == 0 ? 1 : 0, spec.noise, true));

  Rng unlabeled_rng(hash_mix(spec.seed, "synth-unlabeled"));
  for (std::size_t i = 0; i < spec.n_unlabeled; ++i)
    corpus.unlabeled.push_back(synth_example("unl-" + std::to_string(i), unlabeled_rng,
                                             i % 2 == 0 ? 1 : 0, spec.noise, false));

  Rng test_rng(hash_mix(spec.seed, "synth-test"));
  for (std::size_t i = 0; i < spec.n_test; ++i)
    corpus.test.push_back(synth_example("tst-" + std::to_string(i), test_rng,
                                        i % 2 == 0 ? 1 : 0, spec.noise, true));

  Rng para_rng(hash_mix(spec.seed, "synth-paraphrase"));
  for (const Example& ex : corpus.unlabeled) {
    std::vector<std::string> variants;
    for (int j = 0; j < spec.paraphrases_per_sentence; ++j)
      variants.push_back(paraphrase_sentence(para_rng, ex.text));
    corpus.paraphrases.emplace_back(ex.id, std::move(variants));
  }

  for (const auto* pool : {&kPositivePool, &kNegativePool, &kFillerPool})
    for (std::size_t i = 0; i < pool->size(); ++i)
      corpus.synonyms.emplace_back((*pool)[i], (*pool)[(i + 1) % pool->size()]);

  return corpus;
}

void write_synthetic(const SynthCorpus& corpus, const std::string& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail("cannot create directory '" + out_dir + "': " + ec.message());

  save_examples(out_dir + "/labeled.jsonl", corpus.labeled, true);
  save_examples(out_dir + "/unlabeled.jsonl", corpus.unlabeled, false);
  save_examples(out_dir + "/test.jsonl", corpus.test, true);

  const std::string para_path = out_dir + "/paraphrases.jsonl";
  std::ofstream para(para_path);
  if (!para) fail("cannot open '" + para_path + "' for writing");
  for (const auto& [id, variants] : corpus.paraphrases) {
    nlohmann::ordered_json record;
    record["id"] = id;
    record["paraphrases"] = variants;
    para << record.dump() << "\n";
  }
  if (!para) fail("failed writing '" + para_path + "'");

  const std::string syn_path = out_dir + "/synonyms.tsv";
  std::ofstream syn(syn_path);
  if (!syn) fail("cannot open '" + syn_path + "' for writing");
  for (const auto& [word, alt] : corpus.synonyms) syn << word << "\t" << alt << "\n";
  if (!syn) fail("failed writing '" + syn_path + "'");
}

}  // namespace ssltext

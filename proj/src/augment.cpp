#include "ssltext/augment.hpp"

#include <fstream>
#include <sstream>
#include <utility>

#include "json.hpp"
#include "ssltext/error.hpp"
#include "ssltext/rng.hpp"

namespace ssltext {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw Error("augment: " + msg); }

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream in(text);
  std::string word;
  while (in >> word) words.push_back(word);
  return words;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i > 0) out += ' ';
    out += words[i];
  }
  return out;
}

}  // namespace

std::map<std::string, std::vector<std::string>> load_synonym_lexicon(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open synonym lexicon '" + path + "'");
  std::map<std::string, std::vector<std::string>> lexicon;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size())
      fail("malformed synonym line " + std::to_string(line_no) + " in '" + path +
           "' (want word<TAB>synonym)");
    lexicon[line.substr(0, tab)].push_back(line.substr(tab + 1));
  }
  return lexicon;
}

ParaphraseProvider ParaphraseProvider::file_backed(
    std::map<std::string, std::vector<std::string>> table) {
  ParaphraseProvider p;
  p.mode_ = Mode::file;
  p.table_ = std::move(table);
  return p;
}

ParaphraseProvider ParaphraseProvider::from_table_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open paraphrase table '" + path + "'");
  std::map<std::string, std::vector<std::string>> table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json record = nlohmann::json::parse(line, nullptr, false);
    if (record.is_discarded() || !record.is_object() || !record.contains("id") ||
        !record["id"].is_string() || !record.contains("paraphrases") ||
        !record["paraphrases"].is_array())
      fail("malformed paraphrase record at " + path + ":" + std::to_string(line_no));
    std::vector<std::string> texts;
    for (const auto& item : record["paraphrases"]) {
      if (!item.is_string())
        fail("non-string paraphrase at " + path + ":" + std::to_string(line_no));
      texts.push_back(item.get<std::string>());
    }
    table[record["id"].get<std::string>()] = std::move(texts);
  }
  return file_backed(std::move(table));
}

ParaphraseProvider ParaphraseProvider::rule_based(RuleParams params, std::uint64_t seed) {
  if (params.swap_prob < 0.0 || params.swap_prob > 1.0)
    fail("swap_prob must lie in [0,1]");
  if (params.drop_prob < 0.0 || params.drop_prob > 1.0)
    fail("drop_prob must lie in [0,1]");
  ParaphraseProvider p;
  p.mode_ = Mode::rule;
  p.rule_ = std::move(params);
  p.seed_ = seed;
  return p;
}

std::vector<Example> ParaphraseProvider::paraphrase(const Example& example, int k) const {
  if (k < 1) fail("paraphrase count must be >= 1, got " + std::to_string(k));
  std::vector<Example> out;
  out.reserve(static_cast<std::size_t>(k));

  if (mode_ == Mode::file) {
    auto it = table_.find(example.id);
    if (it == table_.end()) fail("no stored paraphrases for id '" + example.id + "'");
    if (it->second.size() < static_cast<std::size_t>(k))
      fail("id '" + example.id + "' has " + std::to_string(it->second.size()) +
           " stored paraphrases, need " + std::to_string(k));
    for (int j = 0; j < k; ++j) {
      Example aug;
      aug.id = example.id + "#aug" + std::to_string(j);
      aug.text = it->second[static_cast<std::size_t>(j)];
      aug.labels = example.labels;
      out.push_back(std::move(aug));
    }
    return out;
  }

  for (int j = 0; j < k; ++j) {
    Rng rng(hash_mix(hash_mix(seed_, example.id), static_cast<std::uint64_t>(j)));
    std::vector<std::string> words = split_words(example.text);

    for (auto& word : words) {
      auto syn = rule_.synonyms.find(word);
      if (syn == rule_.synonyms.end() || syn->second.empty()) continue;
      std::uint64_t pick = rng.below(syn->second.size() + 1);
      if (pick > 0) word = syn->second[pick - 1];
    }

    if (rule_.swap_prob > 0.0) {
      for (std::size_t i = 0; i + 1 < words.size();) {
        if (rng.uniform01() < rule_.swap_prob) {
          std::swap(words[i], words[i + 1]);
          i += 2;
        } else {
          ++i;
        }
      }
    }

    if (rule_.drop_prob > 0.0 && !words.empty()) {
      std::vector<std::string> kept;
      for (auto& word : words)
        if (rng.uniform01() >= rule_.drop_prob) kept.push_back(std::move(word));
      if (kept.empty()) kept.push_back(words.front());
      words = std::move(kept);
    }

    Example aug;
    aug.id = example.id + "#aug" + std::to_string(j);
    aug.text = words.empty() ? example.text : join_words(words);
    aug.labels = example.labels;
    out.push_back(std::move(aug));
  }
  return out;
}

std::vector<Example> balance_minority(const std::vector<Example>& train,
                                      const std::vector<std::string>& tasks, int k,
                                      const ParaphraseProvider& provider) {
  if (k < 0) fail("balance_minority k must be >= 0, got " + std::to_string(k));
  for (const auto& task : tasks)
    if (!is_task_name(task)) fail("unknown task name '" + task + "'");

  std::vector<Example> out = train;
  if (k == 0) return out;
  for (const auto& example : train) {
    if (!example.labels) fail("unlabeled example '" + example.id + "' in labeled training set");
    bool positive = false;
    for (const auto& task : tasks)
      if (example.labels->at(task) == 1) positive = true;
    if (!positive) continue;
    for (auto& aug : provider.paraphrase(example, k)) out.push_back(std::move(aug));
  }
  return out;
}

std::vector<AugmentedPair> pair_unlabeled(const std::vector<Example>& unlabeled,
                                          const ParaphraseProvider& provider) {
  std::vector<AugmentedPair> pairs;
  pairs.reserve(unlabeled.size());
  for (const auto& example : unlabeled) {
    AugmentedPair pair;
    pair.original = example;
    pair.augmented = std::move(provider.paraphrase(example, 1).front());
    pair.augmented.labels.reset();
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

void save_pairs(const std::string& path, const std::vector<AugmentedPair>& pairs) {
  std::ofstream out(path);
  if (!out) fail("cannot open '" + path + "' for writing");
  for (const auto& pair : pairs) {
    nlohmann::ordered_json record;
    record["id"] = pair.original.id;
    record["text"] = pair.original.text;
    record["aug_id"] = pair.augmented.id;
    record["aug_text"] = pair.augmented.text;
    out << record.dump() << '\n';
  }
  if (!out) fail("failed writing '" + path + "'");
}

std::vector<AugmentedPair> load_pairs(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open '" + path + "'");
  std::vector<AugmentedPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json record = nlohmann::json::parse(line, nullptr, false);
    if (record.is_discarded() || !record.is_object() || !record.contains("id") ||
        !record["id"].is_string() || !record.contains("text") || !record["text"].is_string() ||
        !record.contains("aug_id") || !record["aug_id"].is_string() ||
        !record.contains("aug_text") || !record["aug_text"].is_string())
      fail("malformed pair record at " + path + ":" + std::to_string(line_no));
    AugmentedPair pair;
    pair.original.id = record["id"].get<std::string>();
    pair.original.text = record["text"].get<std::string>();
    pair.augmented.id = record["aug_id"].get<std::string>();
    pair.augmented.text = record["aug_text"].get<std::string>();
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

}  // namespace ssltext

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ssltext/corpus.hpp"

namespace ssltext {

// An unlabeled sentence and its single paraphrase.
struct AugmentedPair {
  Example original;
  Example augmented;
};

struct RuleParams {
  double swap_prob = 0.1;
  double drop_prob = 0.1;
  // word -> alternatives; a token is replaced by a uniform choice among
  // itself and its alternatives.
  std::map<std::string, std::vector<std::string>> synonyms;
};

// "word<TAB>synonym" lines; repeated words accumulate alternatives.
std::map<std::string, std::vector<std::string>> load_synonym_lexicon(const std::string& path);

// Paraphrase source. File-backed mode replays stored paraphrases (the
// supported way to plug in real back-translations computed offline);
// rule-based mode applies seeded synonym choice, adjacent swaps and word
// drops. Both are pure functions of (sentence, config, seed, draw index),
// so calls may run concurrently.
class ParaphraseProvider {
 public:
  static ParaphraseProvider file_backed(std::map<std::string, std::vector<std::string>> table);
  static ParaphraseProvider from_table_file(const std::string& path);
  static ParaphraseProvider rule_based(RuleParams params, std::uint64_t seed);

  // k paraphrases with ids "<id>#aug0".."<id>#aug<k-1>". Labels are copied
  // from the source when present. File-backed mode throws when the id is
  // missing or has fewer than k stored paraphrases.
  std::vector<Example> paraphrase(const Example& example, int k) const;

 private:
  ParaphraseProvider() = default;
  enum class Mode { file, rule } mode_ = Mode::rule;
  std::map<std::string, std::vector<std::string>> table_;
  RuleParams rule_;
  std::uint64_t seed_ = 0;
};

// Appends k paraphrased copies of every example positive on at least one
// listed task (one group of k per example, however many listed tasks it
// hits). Output order: all originals, then augmentations in source order.
std::vector<Example> balance_minority(const std::vector<Example>& train,
                                      const std::vector<std::string>& tasks, int k,
                                      const ParaphraseProvider& provider);

// One pair per unlabeled example, in order.
std::vector<AugmentedPair> pair_unlabeled(const std::vector<Example>& unlabeled,
                                          const ParaphraseProvider& provider);

// pairs.jsonl records: {"id","text","aug_id","aug_text"}.
void save_pairs(const std::string& path, const std::vector<AugmentedPair>& pairs);
std::vector<AugmentedPair> load_pairs(const std::string& path);

}  // namespace ssltext

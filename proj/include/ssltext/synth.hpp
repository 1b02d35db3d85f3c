#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ssltext/corpus.hpp"

namespace ssltext {

// Parameters for the synthetic benchmark corpus. Class-1 sentences draw
// words from a positive keyword pool and class-0 sentences from a negative
// pool; `noise` corrupts slots, filling them with a neutral word (prob
// noise) or a word from the opposite pool (prob noise/2). At noise 0 the
// class vocabularies are disjoint, so a bag-of-words model can separate
// the classes perfectly.
struct SynthSpec {
  std::size_t n_labeled = 100;
  std::size_t n_unlabeled = 2000;
  std::size_t n_test = 500;
  std::uint64_t seed = 1;
  double noise = 0.3;
  int paraphrases_per_sentence = 4;

  void validate() const;
};

// Latent classes alternate 1,0,1,0,... so every file is balanced. The six
// task labels derive from the latent class c by a fixed rule:
// Emotional_disclosure, Support, General_support and Emotional_support
// copy c; Information_disclosure and Information_support negate it.
int synthetic_label(const std::string& task, int latent_class);

struct SynthCorpus {
  std::vector<Example> labeled;
  std::vector<Example> unlabeled;  // no labels
  std::vector<Example> test;
  // One entry per unlabeled sentence: its id plus k paraphrases made by
  // substituting words within their own pool (class signal preserved).
  std::vector<std::pair<std::string, std::vector<std::string>>> paraphrases;
  // word -> in-pool neighbour, a lexicon for the rule-based augmenter.
  std::vector<std::pair<std::string, std::string>> synonyms;
};

SynthCorpus generate_synthetic(const SynthSpec& spec);

// Writes labeled.jsonl, unlabeled.jsonl, test.jsonl, paraphrases.jsonl and
// synonyms.tsv under out_dir, creating it if missing.
void write_synthetic(const SynthCorpus& corpus, const std::string& out_dir);

}  // namespace ssltext

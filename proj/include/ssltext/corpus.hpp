#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ssltext/error.hpp"

namespace ssltext {

// The six binary tasks, in canonical order. Labeled records must carry
// exactly these keys.
inline constexpr std::array<const char*, 6> kTaskNames = {
    "Emotional_disclosure", "Information_disclosure", "Support",
    "General_support",      "Information_support",    "Emotional_support"};

bool is_task_name(const std::string& name);

// One sentence, optionally with a full six-task label map.
struct Example {
  std::string id;
  std::string text;
  std::vector<std::string> tokens;
  std::vector<int> ids;
  std::optional<std::map<std::string, int>> labels;
};

// Token -> index map. 0 is PAD, 1 is UNK; real tokens start at 2, ordered
// by (frequency desc, token asc) so builds are reproducible.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  Vocab() = default;

  int lookup(const std::string& token) const;
  std::size_t size() const { return size_; }  // includes PAD and UNK
  int min_freq() const { return min_freq_; }

  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

  // Sorted (token, index) pairs, for persistence and tests.
  std::vector<std::pair<std::string, int>> entries() const;
  // Rebuilds a vocab from entries()-shaped pairs (indices must be >= 2 and
  // unique); the inverse of entries() for embedding a vocab in manifests.
  static Vocab from_entries(const std::vector<std::pair<std::string, int>>& entries,
                            int min_freq);

 private:
  friend Vocab build_vocab(const std::vector<Example>&, int);
  std::unordered_map<std::string, int> index_;
  std::size_t size_ = 2;
  int min_freq_ = 2;
};

// Lowercased, punctuation-separated whitespace tokenization. Bytes >= 0x80
// are kept as word characters so UTF-8 passes through untouched.
std::vector<std::string> tokenize(const std::string& text);

// Tokenize, map through the vocab, clip to max_len. Total: empty input
// yields {UNK}.
std::vector<int> preprocess_sentence(const std::string& text, const Vocab& vocab,
                                     std::size_t max_len);

Vocab build_vocab(const std::vector<Example>& examples, int min_freq);

enum class RecordKind { labeled, unlabeled };

// Line-delimited JSON records. Labeled lines must carry all six task keys
// with 0/1 values; unlabeled lines may carry a labels field, which is
// ignored. Parse errors name the line.
std::vector<Example> load_corpus(const std::string& path, RecordKind kind);
void save_examples(const std::string& path, const std::vector<Example>& examples,
                   bool with_labels);

struct SplitSpec {
  std::uint64_t seed = 0;
  std::size_t n_train = 0;
  std::size_t n_dev = 0;
  std::size_t n_test = 0;
  // When set, each labeled stratum of this task is split proportionally.
  std::optional<std::string> stratify_task;

  static SplitSpec from_fractions(std::size_t total, double train_frac, double dev_frac,
                                  std::uint64_t seed);
};

struct Split {
  std::vector<Example> train, dev, test;
};

Split split(const std::vector<Example>& labeled, const SplitSpec& spec);

struct Corpus {
  std::vector<Example> labeled;
  std::vector<Example> unlabeled;
  Vocab vocab;
};

// Fills tokens and ids on every example.
void preprocess_examples(std::vector<Example>& examples, const Vocab& vocab,
                         std::size_t max_len);

}  // namespace ssltext

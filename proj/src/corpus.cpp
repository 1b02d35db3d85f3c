#include "ssltext/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ssltext/rng.hpp"

namespace ssltext {

namespace {

using Json = nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& msg) { throw Error("corpus: " + msg); }

bool is_word_byte(unsigned char c) {
  if (c >= 0x80) return true;  // UTF-8 continuation or lead byte
  return std::isalnum(c) != 0;
}

}  // namespace

bool is_task_name(const std::string& name) {
  for (const char* t : kTaskNames) {
    if (name == t) return true;
  }
  return false;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      tokens.push_back(current);
      current.clear();
    }
  };
  for (unsigned char c : text) {
    if (c < 0x80 && std::isspace(c)) {
      flush();
    } else if (is_word_byte(c)) {
      current.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    } else {
      // punctuation becomes its own token
      flush();
      tokens.push_back(std::string(1, static_cast<char>(c)));
    }
  }
  flush();
  return tokens;
}

int Vocab::lookup(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

std::vector<std::pair<std::string, int>> Vocab::entries() const {
  std::vector<std::pair<std::string, int>> out(index_.begin(), index_.end());
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.second < b.second; });
  return out;
}

void Vocab::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) fail("cannot open " + path + " for writing");
  os << "<pad>\t" << kPad << "\n<unk>\t" << kUnk << "\n";
  for (const auto& [token, index] : entries()) os << token << "\t" << index << "\n";
  if (!os) fail("write failed for " + path);
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail("cannot open " + path);
  Vocab vocab;
  std::string line;
  std::size_t line_no = 0;
  int max_index = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      fail(path + ":" + std::to_string(line_no) + ": expected token<TAB>index");
    }
    const std::string token = line.substr(0, tab);
    int index = 0;
    try {
      index = std::stoi(line.substr(tab + 1));
    } catch (const std::exception&) {
      fail(path + ":" + std::to_string(line_no) + ": bad index");
    }
    if (token == "<pad>" || token == "<unk>") {
      const int expected = token == "<pad>" ? kPad : kUnk;
      if (index != expected) {
        fail(path + ":" + std::to_string(line_no) + ": reserved token has wrong index");
      }
      continue;
    }
    if (index < 2) fail(path + ":" + std::to_string(line_no) + ": index below 2");
    if (!vocab.index_.emplace(token, index).second) {
      fail(path + ":" + std::to_string(line_no) + ": duplicate token");
    }
    max_index = std::max(max_index, index);
  }
  vocab.size_ = static_cast<std::size_t>(max_index) + 1;
  return vocab;
}

Vocab Vocab::from_entries(const std::vector<std::pair<std::string, int>>& entries,
                          int min_freq) {
  Vocab vocab;
  vocab.min_freq_ = min_freq;
  int max_index = 1;
  for (const auto& [token, index] : entries) {
    if (token.empty()) fail("vocab entry with empty token");
    if (index < 2) fail("vocab entry '" + token + "' has index below 2");
    if (!vocab.index_.emplace(token, index).second) {
      fail("duplicate vocab token '" + token + "'");
    }
    max_index = std::max(max_index, index);
  }
  vocab.size_ = static_cast<std::size_t>(max_index) + 1;
  return vocab;
}

std::vector<int> preprocess_sentence(const std::string& text, const Vocab& vocab,
                                     std::size_t max_len) {
  std::vector<int> ids;
  for (const std::string& token : tokenize(text)) {
    if (ids.size() >= max_len) break;
    ids.push_back(vocab.lookup(token));
  }
  if (ids.empty()) ids.push_back(Vocab::kUnk);
  return ids;
}

Vocab build_vocab(const std::vector<Example>& examples, int min_freq) {
  if (examples.empty()) fail("empty corpus");
  std::unordered_map<std::string, std::size_t> freq;
  for (const Example& ex : examples) {
    const std::vector<std::string> tokens =
        ex.tokens.empty() ? tokenize(ex.text) : ex.tokens;
    for (const std::string& t : tokens) ++freq[t];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [token, count] : freq) {
    if (count >= static_cast<std::size_t>(min_freq)) kept.emplace_back(token, count);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocab vocab;
  vocab.min_freq_ = min_freq;
  int next = 2;
  for (const auto& [token, count] : kept) vocab.index_.emplace(token, next++);
  vocab.size_ = static_cast<std::size_t>(next);
  return vocab;
}

namespace {

Example parse_record(const Json& record, RecordKind kind, const std::string& where) {
  Example ex;
  if (!record.contains("id") || !record["id"].is_string()) {
    fail(where + ": missing string field \"id\"");
  }
  if (!record.contains("text") || !record["text"].is_string()) {
    fail(where + ": missing string field \"text\"");
  }
  ex.id = record["id"].get<std::string>();
  ex.text = record["text"].get<std::string>();
  if (kind == RecordKind::labeled) {
    if (!record.contains("labels") || !record["labels"].is_object()) {
      fail(where + ": missing \"labels\" object");
    }
    std::map<std::string, int> labels;
    for (const auto& [key, value] : record["labels"].items()) {
      if (!is_task_name(key)) fail(where + ": unknown label key \"" + key + "\"");
      if (!value.is_number_integer() || (value != 0 && value != 1)) {
        fail(where + ": label \"" + key + "\" must be 0 or 1");
      }
      labels[key] = value.get<int>();
    }
    for (const char* task : kTaskNames) {
      if (!labels.count(task)) fail(where + ": missing label key \"" + std::string(task) + "\"");
    }
    ex.labels = std::move(labels);
  }
  return ex;
}

}  // namespace

std::vector<Example> load_corpus(const std::string& path, RecordKind kind) {
  std::ifstream is(path);
  if (!is) fail("cannot open " + path);
  std::vector<Example> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    Json record;
    try {
      record = Json::parse(line);
    } catch (const std::exception& e) {
      fail(where + ": malformed record: " + e.what());
    }
    out.push_back(parse_record(record, kind, where));
  }
  return out;
}

void save_examples(const std::string& path, const std::vector<Example>& examples,
                   bool with_labels) {
  std::ofstream os(path);
  if (!os) fail("cannot open " + path + " for writing");
  for (const Example& ex : examples) {
    Json record;
    record["id"] = ex.id;
    record["text"] = ex.text;
    if (with_labels) {
      if (!ex.labels) fail("example " + ex.id + " has no labels");
      Json labels;
      for (const char* task : kTaskNames) labels[task] = ex.labels->at(task);
      record["labels"] = labels;
    }
    os << record.dump() << "\n";
  }
  if (!os) fail("write failed for " + path);
}

SplitSpec SplitSpec::from_fractions(std::size_t total, double train_frac, double dev_frac,
                                    std::uint64_t seed) {
  if (train_frac < 0 || dev_frac < 0 || train_frac + dev_frac > 1.0) {
    fail("split fractions out of range");
  }
  SplitSpec spec;
  spec.seed = seed;
  spec.n_train = static_cast<std::size_t>(train_frac * static_cast<double>(total));
  spec.n_dev = static_cast<std::size_t>(dev_frac * static_cast<double>(total));
  spec.n_test = total - spec.n_train - spec.n_dev;
  return spec;
}

namespace {

// Divide stratum sizes proportionally; hand leftover slots to the largest
// remainders so the per-split totals come out exact.
std::vector<std::array<std::size_t, 3>> stratified_quota(
    const std::vector<std::size_t>& stratum_sizes, const SplitSpec& spec) {
  const std::size_t total = spec.n_train + spec.n_dev + spec.n_test;
  const std::array<std::size_t, 3> want = {spec.n_train, spec.n_dev, spec.n_test};
  std::vector<std::array<std::size_t, 3>> quota(stratum_sizes.size(), {0, 0, 0});
  for (std::size_t part = 0; part < 3; ++part) {
    std::size_t assigned = 0;
    std::vector<std::pair<double, std::size_t>> remainders;
    for (std::size_t s = 0; s < stratum_sizes.size(); ++s) {
      const double exact = static_cast<double>(want[part]) *
                           static_cast<double>(stratum_sizes[s]) /
                           static_cast<double>(total);
      quota[s][part] = static_cast<std::size_t>(exact);
      assigned += quota[s][part];
      remainders.emplace_back(exact - static_cast<double>(quota[s][part]), s);
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (std::size_t i = 0; assigned < want[part]; ++i, ++assigned) {
      quota[remainders[i % remainders.size()].second][part] += 1;
    }
  }
  // Rounding may oversubscribe a stratum; repair against its true size.
  for (std::size_t s = 0; s < stratum_sizes.size(); ++s) {
    std::size_t used = quota[s][0] + quota[s][1] + quota[s][2];
    while (used > stratum_sizes[s]) {
      for (std::size_t part = 3; part-- > 0 && used > stratum_sizes[s];) {
        if (quota[s][part] > 0) {
          // move one slot to any stratum with slack
          for (std::size_t other = 0; other < stratum_sizes.size(); ++other) {
            const std::size_t other_used =
                quota[other][0] + quota[other][1] + quota[other][2];
            if (other != s && other_used < stratum_sizes[other]) {
              quota[s][part] -= 1;
              quota[other][part] += 1;
              --used;
              break;
            }
          }
        }
      }
    }
  }
  return quota;
}

}  // namespace

Split split(const std::vector<Example>& labeled, const SplitSpec& spec) {
  const std::size_t total = spec.n_train + spec.n_dev + spec.n_test;
  if (total != labeled.size()) {
    fail("split sizes sum to " + std::to_string(total) + " but labeled set has " +
         std::to_string(labeled.size()));
  }
  Split result;
  auto emit = [&](const std::vector<std::size_t>& order, std::size_t begin, std::size_t count,
                  std::vector<Example>& out) {
    for (std::size_t i = 0; i < count; ++i) out.push_back(labeled[order[begin + i]]);
  };

  if (!spec.stratify_task) {
    std::vector<std::size_t> order(labeled.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(spec.seed);
    rng.shuffle(order);
    emit(order, 0, spec.n_train, result.train);
    emit(order, spec.n_train, spec.n_dev, result.dev);
    emit(order, spec.n_train + spec.n_dev, spec.n_test, result.test);
    return result;
  }

  const std::string& task = *spec.stratify_task;
  if (!is_task_name(task)) fail("unknown stratify task \"" + task + "\"");
  std::array<std::vector<std::size_t>, 2> strata;
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    if (!labeled[i].labels) fail("stratified split requires labels on every example");
    strata[static_cast<std::size_t>(labeled[i].labels->at(task))].push_back(i);
  }
  std::vector<std::size_t> sizes = {strata[0].size(), strata[1].size()};
  auto quota = stratified_quota(sizes, spec);
  for (std::size_t s = 0; s < 2; ++s) {
    Rng rng(hash_mix(hash_mix(spec.seed, "stratum"), s));
    rng.shuffle(strata[s]);
    emit(strata[s], 0, quota[s][0], result.train);
    emit(strata[s], quota[s][0], quota[s][1], result.dev);
    emit(strata[s], quota[s][0] + quota[s][1], quota[s][2], result.test);
  }
  return result;
}

void preprocess_examples(std::vector<Example>& examples, const Vocab& vocab,
                         std::size_t max_len) {
  for (Example& ex : examples) {
    ex.tokens = tokenize(ex.text);
    ex.ids = preprocess_sentence(ex.text, vocab, max_len);
  }
}

}  // namespace ssltext

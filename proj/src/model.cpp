#include "ssltext/model.hpp"

#include <algorithm>
#include <cmath>

#include "ssltext/corpus.hpp"
#include "ssltext/rng.hpp"

namespace ssltext {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw Error("model: " + msg); }

ag::Tensor uniform_matrix(Rng& rng, std::size_t rows, std::size_t cols, std::size_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> data(rows * cols);
  for (double& x : data) x = rng.uniform(-bound, bound);
  return ag::Tensor::matrix(rows, cols, std::move(data));
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size < 2) fail("vocab_size must be >= 2 (PAD and UNK), got " +
                           std::to_string(vocab_size));
  if (d_emb < 1 || d_hid < 1) fail("d_emb and d_hid must be >= 1");
}

const std::array<ParamSet::Entry, 7>& ParamSet::entries() {
  static const std::array<Entry, 7> table = {{
      {"embedding", ParamGroup::encoder, &ParamSet::embedding},
      {"enc_w", ParamGroup::encoder, &ParamSet::enc_w},
      {"enc_b", ParamGroup::encoder, &ParamSet::enc_b},
      {"head1_w", ParamGroup::head, &ParamSet::head1_w},
      {"head1_b", ParamGroup::head, &ParamSet::head1_b},
      {"head2_w", ParamGroup::head, &ParamSet::head2_w},
      {"head2_b", ParamGroup::head, &ParamSet::head2_b},
  }};
  return table;
}

ag::Tensor& ParamSet::at(const std::string& name) {
  for (const Entry& e : entries())
    if (name == e.name) return this->*(e.member);
  fail("unknown parameter '" + name + "'");
}

const ag::Tensor& ParamSet::at(const std::string& name) const {
  return const_cast<ParamSet*>(this)->at(name);
}

void ParamSet::validate() const {
  config.validate();
  auto expect = [&](const ag::Tensor& t, std::vector<std::size_t> shape, const char* name) {
    if (t.shape() != shape) fail(std::string("parameter '") + name + "' has shape " +
                                 ag::shape_str(t) + ", expected another");
  };
  expect(embedding, {config.vocab_size, config.d_emb}, "embedding");
  expect(enc_w, {config.d_emb, config.d_hid}, "enc_w");
  expect(enc_b, {config.d_hid}, "enc_b");
  expect(head1_w, {config.d_hid, config.d_hid}, "head1_w");
  expect(head1_b, {config.d_hid}, "head1_b");
  expect(head2_w, {config.d_hid, 2}, "head2_w");
  expect(head2_b, {2}, "head2_b");
}

std::vector<ag::NamedTensor> ParamSet::named() const {
  std::vector<ag::NamedTensor> out;
  for (const Entry& e : entries()) out.push_back({e.name, this->*(e.member)});
  return out;
}

ParamSet ParamSet::from_named(const ModelConfig& config,
                              const std::vector<ag::NamedTensor>& named) {
  ParamSet params;
  params.config = config;
  if (named.size() != entries().size())
    fail("checkpoint carries " + std::to_string(named.size()) + " parameters, expected " +
         std::to_string(entries().size()));
  for (const ag::NamedTensor& nt : named) params.at(nt.name) = nt.tensor;
  params.validate();
  return params;
}

ParamSet init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  ParamSet params;
  params.config = config;
  params.embedding = uniform_matrix(rng, config.vocab_size, config.d_emb, config.d_emb);
  params.enc_w = uniform_matrix(rng, config.d_emb, config.d_hid, config.d_emb);
  params.enc_b = ag::Tensor::zeros({config.d_hid});
  params.head1_w = uniform_matrix(rng, config.d_hid, config.d_hid, config.d_hid);
  params.head1_b = ag::Tensor::zeros({config.d_hid});
  params.head2_w = uniform_matrix(rng, config.d_hid, 2, config.d_hid);
  params.head2_b = ag::Tensor::zeros({2});
  return params;
}

ModelVars param_vars(ag::Tape& tape, const ParamSet& params, bool requires_grad) {
  ModelVars vars;
  vars.embedding = tape.leaf(params.embedding, requires_grad);
  vars.enc_w = tape.leaf(params.enc_w, requires_grad);
  vars.enc_b = tape.leaf(params.enc_b, requires_grad);
  vars.head1_w = tape.leaf(params.head1_w, requires_grad);
  vars.head1_b = tape.leaf(params.head1_b, requires_grad);
  vars.head2_w = tape.leaf(params.head2_w, requires_grad);
  vars.head2_b = tape.leaf(params.head2_b, requires_grad);
  return vars;
}

ag::Var encode_batch(ag::Tape& tape, const ModelVars& vars, const ModelConfig& config,
                     const std::vector<std::vector<int>>& ids) {
  (void)tape;
  if (ids.empty()) fail("encode_batch needs at least one sequence");
  std::size_t max_len = 0;
  for (const auto& seq : ids) {
    if (seq.empty()) fail("encode_batch got an empty id sequence");
    for (int id : seq)
      if (id < 0 || static_cast<std::size_t>(id) >= config.vocab_size)
        fail("id " + std::to_string(id) + " out of range for vocab of " +
             std::to_string(config.vocab_size));
    max_len = std::max(max_len, seq.size());
  }
  std::vector<std::vector<int>> padded(ids.size(), std::vector<int>(max_len, Vocab::kPad));
  std::vector<int> flat;
  flat.reserve(ids.size() * max_len);
  for (std::size_t r = 0; r < ids.size(); ++r)
    for (std::size_t c = 0; c < ids[r].size(); ++c) padded[r][c] = ids[r][c];
  for (const auto& row : padded) flat.insert(flat.end(), row.begin(), row.end());

  ag::Var gathered = ag::gather_rows(vars.embedding, flat);
  ag::Var pooled = ag::mean_pool_nonpad(gathered, padded, Vocab::kPad);
  return ag::relu(ag::add_row_bias(ag::matmul(pooled, vars.enc_w), vars.enc_b));
}

ag::Var predict_batch(ag::Tape& tape, const ModelVars& vars, const ModelConfig& config,
                      ag::Var hidden) {
  (void)tape;
  if (hidden.value().rank() != 2 || hidden.value().cols() != config.d_hid)
    fail("predict_batch expects hidden of width " + std::to_string(config.d_hid) + ", got " +
         ag::shape_str(hidden.value()));
  ag::Var z = ag::relu(ag::add_row_bias(ag::matmul(hidden, vars.head1_w), vars.head1_b));
  ag::Var logits = ag::add_row_bias(ag::matmul(z, vars.head2_w), vars.head2_b);
  return ag::softmax_rows(logits);
}

std::vector<double> encode(const ParamSet& params, const std::vector<int>& ids) {
  ag::Tape tape;
  ModelVars vars = param_vars(tape, params, false);
  ag::Var hidden = encode_batch(tape, vars, params.config, {ids});
  return hidden.value().data();
}

ProbDist predict(const ParamSet& params, const std::vector<double>& hidden) {
  if (hidden.size() != params.config.d_hid)
    fail("predict expects a hidden vector of width " + std::to_string(params.config.d_hid) +
         ", got " + std::to_string(hidden.size()));
  ag::Tape tape;
  ModelVars vars = param_vars(tape, params, false);
  ag::Var h = tape.constant(ag::Tensor::matrix(1, hidden.size(), hidden));
  ag::Var out = predict_batch(tape, vars, params.config, h);
  return ProbDist{{out.value().at(0, 0), out.value().at(0, 1)}};
}

std::vector<ProbDist> predict_dist(const ParamSet& params,
                                   const std::vector<std::vector<int>>& ids) {
  ag::Tape tape;
  ModelVars vars = param_vars(tape, params, false);
  ag::Var hidden = encode_batch(tape, vars, params.config, ids);
  ag::Var out = predict_batch(tape, vars, params.config, hidden);
  std::vector<ProbDist> dists(ids.size());
  for (std::size_t r = 0; r < ids.size(); ++r)
    dists[r] = ProbDist{{out.value().at(r, 0), out.value().at(r, 1)}};
  return dists;
}

}  // namespace ssltext

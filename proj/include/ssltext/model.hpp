#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ssltext/autograd.hpp"

namespace ssltext {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t d_emb = 64;
  std::size_t d_hid = 128;

  void validate() const;
};

// Tags drive per-group learning rates: the encoder (embeddings plus the
// pooling projection) trains slower than the classification head.
enum class ParamGroup { encoder, head };

// All trainable tensors for one task's classifier:
//   hidden  = relu(meanpool(embedding[ids]) * enc_w + enc_b)
//   logits  = relu(hidden * head1_w + head1_b) * head2_w + head2_b
//   output  = softmax(logits)
struct ParamSet {
  ModelConfig config;
  ag::Tensor embedding;  // vocab_size x d_emb
  ag::Tensor enc_w;      // d_emb x d_hid
  ag::Tensor enc_b;      // d_hid
  ag::Tensor head1_w;    // d_hid x d_hid
  ag::Tensor head1_b;    // d_hid
  ag::Tensor head2_w;    // d_hid x 2
  ag::Tensor head2_b;    // 2

  struct Entry {
    const char* name;
    ParamGroup group;
    ag::Tensor ParamSet::* member;
  };
  static const std::array<Entry, 7>& entries();

  ag::Tensor& at(const std::string& name);
  const ag::Tensor& at(const std::string& name) const;

  void validate() const;

  std::vector<ag::NamedTensor> named() const;
  static ParamSet from_named(const ModelConfig& config,
                             const std::vector<ag::NamedTensor>& named);
};

// Weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases zero.
ParamSet init_params(const ModelConfig& config, std::uint64_t seed);

// One tape leaf per parameter tensor, in entries() order.
struct ModelVars {
  ag::Var embedding, enc_w, enc_b, head1_w, head1_b, head2_w, head2_b;
};
ModelVars param_vars(ag::Tape& tape, const ParamSet& params, bool requires_grad = true);

// Batch forward pass on a tape. Sequences are right-padded to the longest
// one in the batch; PAD positions are excluded from the mean pool.
ag::Var encode_batch(ag::Tape& tape, const ModelVars& vars, const ModelConfig& config,
                     const std::vector<std::vector<int>>& ids);
// hidden: (batch x d_hid) -> (batch x 2) softmax rows.
ag::Var predict_batch(ag::Tape& tape, const ModelVars& vars, const ModelConfig& config,
                      ag::Var hidden);

struct ProbDist {
  std::array<double, 2> p = {0.0, 0.0};
};

// Convenience single-input forward passes on a scratch tape.
std::vector<double> encode(const ParamSet& params, const std::vector<int>& ids);
ProbDist predict(const ParamSet& params, const std::vector<double>& hidden);
std::vector<ProbDist> predict_dist(const ParamSet& params,
                                   const std::vector<std::vector<int>>& ids);

}  // namespace ssltext

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ssltext/model.hpp"
#include "ssltext/rng.hpp"

using namespace ssltext;

namespace {

ModelConfig tiny_config() {
  ModelConfig config;
  config.vocab_size = 8;
  config.d_emb = 3;
  config.d_hid = 3;
  return config;
}

ParamSet zero_params(const ModelConfig& config) {
  ParamSet params;
  params.config = config;
  params.embedding = ag::Tensor::zeros({config.vocab_size, config.d_emb});
  params.enc_w = ag::Tensor::zeros({config.d_emb, config.d_hid});
  params.enc_b = ag::Tensor::zeros({config.d_hid});
  params.head1_w = ag::Tensor::zeros({config.d_hid, config.d_hid});
  params.head1_b = ag::Tensor::zeros({config.d_hid});
  params.head2_w = ag::Tensor::zeros({config.d_hid, 2});
  params.head2_b = ag::Tensor::zeros({2});
  return params;
}

// Identity pooling projection so the hidden vector equals the pooled
// embedding (requires d_emb == d_hid and non-negative embeddings).
ParamSet passthrough_params(const ModelConfig& config) {
  ParamSet params = zero_params(config);
  for (std::size_t i = 0; i < config.d_emb; ++i) params.enc_w.at(i, i) = 1.0;
  return params;
}

}  // namespace

TEST_CASE("pooling skips PAD positions") {
  ModelConfig config = tiny_config();
  ParamSet params = passthrough_params(config);
  for (std::size_t c = 0; c < config.d_emb; ++c) {
    params.embedding.at(5, c) = 0.25 * static_cast<double>(c + 1);
    params.embedding.at(0, c) = 9.0;  // PAD row must never leak into the pool
  }
  std::vector<double> h = encode(params, {5, 0, 0, 0});
  REQUIRE(h.size() == 3);
  CHECK(h[0] == 0.25);
  CHECK(h[1] == 0.5);
  CHECK(h[2] == 0.75);
}

TEST_CASE("zero parameters encode to the zero hidden vector") {
  ModelConfig config = tiny_config();
  ParamSet params = zero_params(config);
  for (double x : encode(params, {2, 3, 4})) CHECK(x == 0.0);
}

TEST_CASE("encoding is invariant to token order") {
  ModelConfig config = tiny_config();
  ParamSet params = init_params(config, 21);
  std::vector<double> a = encode(params, {2, 3, 4, 5});
  std::vector<double> b = encode(params, {5, 3, 4, 2});
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

TEST_CASE("encode rejects bad id sequences") {
  ModelConfig config = tiny_config();
  ParamSet params = init_params(config, 1);
  CHECK_THROWS_WITH_AS(encode(params, {2, 99}), doctest::Contains("out of range"), Error);
  CHECK_THROWS_WITH_AS(encode(params, {}), doctest::Contains("empty"), Error);
}

TEST_CASE("zero weights predict the uniform distribution") {
  ModelConfig config = tiny_config();
  ParamSet params = zero_params(config);
  ProbDist dist = predict(params, {0.0, 0.0, 0.0});
  CHECK(dist.p[0] == 0.5);
  CHECK(dist.p[1] == 0.5);
}

TEST_CASE("softmax output is invariant to a common logit shift") {
  ModelConfig config = tiny_config();
  ParamSet params = zero_params(config);
  params.head2_b = ag::Tensor::vec({0.25, -0.75});
  ProbDist base = predict(params, {0.5, 0.25, 0.125});
  params.head2_b = ag::Tensor::vec({0.25 + 0.5, -0.75 + 0.5});
  ProbDist shifted = predict(params, {0.5, 0.25, 0.125});
  CHECK(base.p[0] == shifted.p[0]);
  CHECK(base.p[1] == shifted.p[1]);
}

TEST_CASE("prediction is deterministic") {
  ModelConfig config = tiny_config();
  ParamSet params = init_params(config, 77);
  std::vector<ProbDist> a = predict_dist(params, {{2, 3}, {4, 5, 6}});
  std::vector<ProbDist> b = predict_dist(params, {{2, 3}, {4, 5, 6}});
  REQUIRE(a.size() == 2);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].p[0] == b[i].p[0]);
    CHECK(a[i].p[1] == b[i].p[1]);
  }
}

TEST_CASE("predict validates the hidden width") {
  ModelConfig config = tiny_config();
  ParamSet params = init_params(config, 1);
  CHECK_THROWS_WITH_AS(predict(params, {1.0, 2.0}), doctest::Contains("width"), Error);
}

TEST_CASE("init_params is deterministic per seed and bounded by fan-in") {
  ModelConfig config;
  config.vocab_size = 10;
  config.d_emb = 100;
  config.d_hid = 4;
  ParamSet a = init_params(config, 5);
  ParamSet b = init_params(config, 5);
  for (const auto& e : ParamSet::entries()) {
    const ag::Tensor& ta = a.*(e.member);
    const ag::Tensor& tb = b.*(e.member);
    REQUIRE(ta.shape() == tb.shape());
    for (std::size_t i = 0; i < ta.numel(); ++i) CHECK(ta.at(i) == tb.at(i));
  }

  for (std::size_t i = 0; i < a.embedding.numel(); ++i) {
    CHECK(a.embedding.at(i) >= -0.1);
    CHECK(a.embedding.at(i) <= 0.1);
  }
  for (std::size_t i = 0; i < a.enc_w.numel(); ++i) {
    CHECK(a.enc_w.at(i) >= -0.1);
    CHECK(a.enc_w.at(i) <= 0.1);
  }
  for (std::size_t i = 0; i < a.enc_b.numel(); ++i) CHECK(a.enc_b.at(i) == 0.0);
  for (std::size_t i = 0; i < a.head1_b.numel(); ++i) CHECK(a.head1_b.at(i) == 0.0);
  for (std::size_t i = 0; i < a.head2_b.numel(); ++i) CHECK(a.head2_b.at(i) == 0.0);
}

TEST_CASE("different seeds give different parameters") {
  ModelConfig config = tiny_config();
  for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
    ParamSet a = init_params(config, seed);
    ParamSet b = init_params(config, seed + 1);
    bool any_difference = false;
    for (std::size_t i = 0; i < a.embedding.numel(); ++i)
      if (a.embedding.at(i) != b.embedding.at(i)) any_difference = true;
    CHECK(any_difference);
  }
}

TEST_CASE("group tags partition the parameters") {
  std::size_t encoder = 0, head = 0;
  for (const auto& e : ParamSet::entries())
    (e.group == ParamGroup::encoder ? encoder : head) += 1;
  CHECK(encoder == 3);
  CHECK(head == 4);
}

TEST_CASE("predict of encode is always a valid distribution") {
  ModelConfig config = tiny_config();
  Rng rng(31);
  for (int trial = 0; trial < 25; ++trial) {
    ParamSet params = init_params(config, 100 + static_cast<std::uint64_t>(trial));
    std::vector<std::vector<int>> batch;
    const std::size_t batch_size = 1 + rng.below(4);
    for (std::size_t i = 0; i < batch_size; ++i) {
      std::vector<int> seq;
      const std::size_t len = 1 + rng.below(6);
      for (std::size_t j = 0; j < len; ++j)
        seq.push_back(static_cast<int>(1 + rng.below(config.vocab_size - 1)));
      batch.push_back(seq);
    }
    for (const ProbDist& dist : predict_dist(params, batch)) {
      CHECK(dist.p[0] >= 0.0);
      CHECK(dist.p[1] >= 0.0);
      CHECK(std::abs(dist.p[0] + dist.p[1] - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("argmax is invariant to a common final-bias constant") {
  ModelConfig config = tiny_config();
  for (std::uint64_t seed : {3ull, 9ull, 27ull}) {
    ParamSet params = init_params(config, seed);
    std::vector<ProbDist> base = predict_dist(params, {{2, 3, 4}});
    params.head2_b.at(0, 0) += 0.625;
    params.head2_b.at(0, 1) += 0.625;
    std::vector<ProbDist> shifted = predict_dist(params, {{2, 3, 4}});
    const int argmax_base = base[0].p[0] >= base[0].p[1] ? 0 : 1;
    const int argmax_shifted = shifted[0].p[0] >= shifted[0].p[1] ? 0 : 1;
    CHECK(argmax_base == argmax_shifted);
  }
}

TEST_CASE("full forward pass survives a gradient check") {
  ModelConfig config;
  config.vocab_size = 7;
  config.d_emb = 3;
  config.d_hid = 4;
  ParamSet params = init_params(config, 13);
  const std::vector<std::vector<int>> batch = {{2, 3, 4}, {5, 6}, {1}};
  const std::vector<double> mix = {1.3, -0.7, 0.4, 2.0, -1.1, 0.6};

  ag::TapeFn fn = [&](ag::Tape& tape, const std::vector<ag::Var>& p) {
    ModelVars vars{p[0], p[1], p[2], p[3], p[4], p[5], p[6]};
    ag::Var hidden = encode_batch(tape, vars, config, batch);
    ag::Var probs = predict_batch(tape, vars, config, hidden);
    ag::Var weights = tape.constant(ag::Tensor::matrix(batch.size(), 2, mix));
    return ag::sum(ag::mul(probs, weights));
  };
  std::vector<ag::Tensor> tensors;
  for (const auto& e : ParamSet::entries()) tensors.push_back(params.*(e.member));
  ag::GradCheckReport report = ag::grad_check(fn, tensors, 1e-5);
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("parameters round-trip through named tensors") {
  ModelConfig config = tiny_config();
  ParamSet params = init_params(config, 55);
  ParamSet restored = ParamSet::from_named(config, params.named());
  for (const auto& e : ParamSet::entries()) {
    const ag::Tensor& ta = params.*(e.member);
    const ag::Tensor& tb = restored.*(e.member);
    REQUIRE(ta.shape() == tb.shape());
    for (std::size_t i = 0; i < ta.numel(); ++i) CHECK(ta.at(i) == tb.at(i));
  }
  CHECK_THROWS_AS(ParamSet::from_named(config, {}), Error);
}

TEST_CASE("config validation rejects degenerate dimensions") {
  ModelConfig config;
  config.vocab_size = 1;
  CHECK_THROWS_AS(config.validate(), Error);
  config.vocab_size = 4;
  config.d_emb = 0;
  CHECK_THROWS_AS(config.validate(), Error);
}

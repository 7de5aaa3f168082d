#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>

#include "crmman/errors.hpp"
#include "crmman/item_aggregator.hpp"
#include "crmman/random.hpp"
#include "crmman/semantic_encoder.hpp"
#include "support/oracles.hpp"

using namespace crmman;
using namespace crmman::semantic;
using ad::Tensor;
using ad::Var;

namespace {

std::string words(std::size_t n) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) out += (i ? " " : "") + std::string("w") + std::to_string(i);
  return out;
}

}  // namespace

TEST(Tokenize, TruncatesLongText) {
  const auto seq = tokenize_pad(words(54), 50);
  EXPECT_EQ(seq.tokens.size(), 50u);
  EXPECT_EQ(seq.original_length, 54u);
  EXPECT_EQ(seq.tokens.back(), "w49");
}

TEST(Tokenize, PadsShortText) {
  const auto seq = tokenize_pad("The quick FOX", 50);
  ASSERT_EQ(seq.tokens.size(), 50u);
  EXPECT_EQ(seq.tokens[2], "fox");
  for (std::size_t i = 3; i < 50; ++i) EXPECT_TRUE(seq.is_padding(i));
  EXPECT_FALSE(seq.is_padding(0));
}

TEST(Tokenize, EmptyTextIsAllPadding) {
  const auto seq = tokenize_pad("   ", 50);
  EXPECT_TRUE(seq.empty_text);
  for (std::size_t i = 0; i < 50; ++i) EXPECT_TRUE(seq.is_padding(i));
}

TEST(Precomputed, VectorsReturnedVerbatimAndPersisted) {
  PrecomputedEmbeddings e;
  e.insert("a", {0.1, -0.7, 1.0 / 3.0});
  e.insert("b", {2.0, 0.0, -1e-300});
  EXPECT_EQ(e.lookup("a"), Tensor::row_vector({0.1, -0.7, 1.0 / 3.0}));
  EXPECT_THROW(e.lookup("missing"), IngestionError);
  const auto dir = std::filesystem::temp_directory_path();
  e.save_text(dir / "crmman_vec.txt");
  e.save_binary(dir / "crmman_vec.bin");
  for (const char* name : {"crmman_vec.txt", "crmman_vec.bin"}) {
    const auto back = PrecomputedEmbeddings::load(dir / name);
    EXPECT_EQ(back.dim(), 3u);
    EXPECT_EQ(back.lookup("a"), e.lookup("a")) << name;
    EXPECT_EQ(back.lookup("b"), e.lookup("b")) << name;
    std::filesystem::remove(dir / name);
  }
}

TEST(HashedBow, AllPaddingIsZero) {
  Rng rng = make_rng(1, "bow");
  const Tensor table = oracle::random_tensor(32, 4, rng);
  const Tensor v = encode_hashed_bow(tokenize_pad("", 10), table);
  EXPECT_EQ(v, Tensor::matrix(1, 4));
}

TEST(HashedBow, OrderAndPaddingInvariant) {
  Rng rng = make_rng(2, "bow");
  const Tensor table = oracle::random_tensor(64, 5, rng);
  const Tensor a = encode_hashed_bow(tokenize_pad("red green blue red", 10), table);
  const Tensor b = encode_hashed_bow(tokenize_pad("blue red red green", 20), table);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
  const auto bag = bucket_bag(tokenize_pad("red green", 6), 64);
  EXPECT_EQ(bag.size(), 2u);
  EXPECT_EQ(bag[0], token_bucket("red", 64));
}

TEST(Project, IdentityAndZeroInput) {
  Rng rng = make_rng(3, "proj");
  const Tensor v = oracle::random_tensor(1, 4, rng);
  const Tensor b = oracle::random_tensor(1, 4, rng);
  EXPECT_EQ(project(v, Tensor::identity(4), Tensor::matrix(1, 4)), v);
  EXPECT_EQ(project(Tensor::matrix(1, 4), oracle::random_tensor(4, 4, rng), b), b);
}

TEST(Project, MatchesScalarOracleAndIsAffine) {
  Rng rng = make_rng(4, "proj");
  const Tensor w = oracle::random_tensor(3, 5, rng);
  const Tensor b = oracle::random_tensor(1, 3, rng);
  const Tensor v1 = oracle::random_tensor(1, 5, rng);
  const Tensor v2 = oracle::random_tensor(1, 5, rng);
  const Tensor s = project(v1, w, b);
  for (std::size_t r = 0; r < 3; ++r) {
    double want = b[r];
    for (std::size_t c = 0; c < 5; ++c) want += w(r, c) * v1[c];
    EXPECT_NEAR(s[r], want, 1e-12);
  }
  const double alpha = 0.3;
  Tensor mix = Tensor::matrix(1, 5);
  for (std::size_t c = 0; c < 5; ++c) mix[c] = alpha * v1[c] + (1 - alpha) * v2[c];
  const Tensor s2 = project(v2, w, b);
  const Tensor sm = project(mix, w, b);
  for (std::size_t r = 0; r < 3; ++r) EXPECT_NEAR(sm[r], alpha * s[r] + (1 - alpha) * s2[r], 1e-10);
}

TEST(SemanticEncoder, GradientsReachProjectionAndTokens) {
  SemanticConfig config;
  config.text_length = 5;
  config.d_e = 3;
  config.buckets = 8;
  config.d_h = 2;
  const std::vector<std::string> ids{"a", "b", "c"};
  const auto inputs = prepare_semantic_inputs(ids, {{"a", "x y z"}, {"b", "y y q r s t"}}, config);
  EXPECT_EQ(inputs.warnings.size(), 1u);
  ad::ParameterStore store;
  add_semantic_params(store, config, 3);
  Rng rng = make_rng(5, "w");
  const Tensor weights = oracle::random_tensor(3, 2, rng);
  store.value(kProjectionBiasParam) = oracle::random_tensor(1, 2, rng);
  auto loss = [&](ad::Tape& t) {
    return ad::sum(ad::hadamard(encode_semantic(t, store, inputs, config), t.constant(weights)));
  };
  ad::Tape tape;
  const auto grads = tape.backward(loss(tape));
  const auto check = oracle::check_gradients(store, grads, [&] {
    ad::Tape t;
    return loss(t).value().item();
  });
  EXPECT_EQ(check.failures, 0u) << check.worst_entry;
  double token_grad = 0.0;
  for (double g : grads[store.id(kTokenEmbeddingParam)].values()) token_grad += std::abs(g);
  EXPECT_GT(token_grad, 0.0);
}

TEST(SemanticEncoder, PrecomputedMissingItemsListed) {
  SemanticConfig config;
  config.kind = EncoderKind::precomputed;
  config.d_e = 2;
  PrecomputedEmbeddings e;
  e.insert("a", {1.0, 2.0});
  try {
    prepare_semantic_inputs({"a", "b", "c"}, {}, config, &e);
    FAIL() << "expected IngestionError";
  } catch (const IngestionError& err) {
    const std::string what = err.what();
    EXPECT_NE(what.find("b"), std::string::npos);
    EXPECT_NE(what.find("c"), std::string::npos);
  }
}

TEST(Aggregate, ConcatKnownValues) {
  const Tensor r = aggregate::aggregate_concat(Tensor::row_vector({1, 2}), Tensor::row_vector({3, 4}));
  EXPECT_EQ(r, Tensor::row_vector({1, 2, 3, 4}));
  EXPECT_EQ(aggregate::fused_dim(256, 256, aggregate::Aggregation::concatenate), 512u);
  EXPECT_EQ(aggregate::fused_dim(256, 256, aggregate::Aggregation::average), 256u);
}

TEST(Aggregate, ConcatPreservesBothParts) {
  Rng rng = make_rng(6, "agg");
  const Tensor s = oracle::random_tensor(4, 3, rng);
  const Tensor p = oracle::random_tensor(4, 2, rng);
  const Tensor r = aggregate::aggregate_concat(s, p);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(r(i, c), s(i, c));
    for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(r(i, 3 + c), p(i, c));
  }
}

TEST(Aggregate, AverageKnownValuesAndCommutativity) {
  using aggregate::aggregate_average;
  EXPECT_EQ(aggregate_average(Tensor::row_vector({2, 4}), Tensor::row_vector({0, 0})), Tensor::row_vector({1, 2}));
  EXPECT_EQ(aggregate_average(Tensor::row_vector({1, 1}), Tensor::row_vector({3, 5})), Tensor::row_vector({2, 3}));
  const Tensor s = Tensor::row_vector({0.1, -0.3});
  EXPECT_EQ(aggregate_average(s, s), s);
  const Tensor p = Tensor::row_vector({7.5, 1.25});
  EXPECT_EQ(aggregate_average(s, p), aggregate_average(p, s));
  EXPECT_THROW(aggregate_average(Tensor::row_vector({1, 2}), Tensor::row_vector({1, 2, 3})), ConfigError);
}

TEST(Aggregate, RecordedGradients) {
  Rng rng = make_rng(7, "agg");
  for (auto mode : {aggregate::Aggregation::concatenate, aggregate::Aggregation::average}) {
    ad::ParameterStore store;
    store.add("s", oracle::random_tensor(3, 2, rng));
    store.add("p", oracle::random_tensor(3, 2, rng));
    const Tensor weights = oracle::random_tensor(3, mode == aggregate::Aggregation::concatenate ? 4 : 2, rng);
    auto loss = [&](ad::Tape& t) {
      Var r = aggregate::aggregate(t.parameter(store, "s"), t.parameter(store, "p"), mode);
      return ad::sum(ad::hadamard(r, t.constant(weights)));
    };
    ad::Tape tape;
    const auto grads = tape.backward(loss(tape));
    const auto check = oracle::check_gradients(store, grads, [&] {
      ad::Tape t;
      return loss(t).value().item();
    });
    EXPECT_EQ(check.failures, 0u) << aggregate::to_string(mode) << " " << check.worst_entry;
  }
}

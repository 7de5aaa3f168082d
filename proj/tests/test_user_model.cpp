#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <tuple>

#include "crmman/errors.hpp"
#include "crmman/random.hpp"
#include "crmman/user_model.hpp"
#include "support/oracles.hpp"

using namespace crmman;
using namespace crmman::user;
using ad::Tensor;
using ad::Var;

namespace {

Tensor output_of(ad::ParameterStore& store, const Tensor& rows, const SelfAttentionSpec& spec) {
  ad::Tape tape;
  return self_attention(tape, store, tape.constant(rows), spec, 0.0, false, 0).output.value();
}

}  // namespace

TEST(SelfAttention, HeadsMustDivideWidth) {
  ad::ParameterStore store;
  EXPECT_THROW(add_self_attention_params(store, {"x", 6, 4}, 1), ConfigError);
}

TEST(SelfAttention, SingleRowHasUnitWeight) {
  ad::ParameterStore store;
  const SelfAttentionSpec spec{"sa", 4, 2};
  add_self_attention_params(store, spec, 3);
  Rng rng = make_rng(1, "rows");
  const Tensor row = oracle::random_tensor(1, 4, rng);
  ad::Tape tape;
  const auto r = self_attention(tape, store, tape.constant(row), spec, 0.0, false, 0);
  for (const auto& beta : r.attention) EXPECT_EQ(beta, Tensor::scalar(1.0));
  // with one row the output is the value path followed by the output map
  Tensor joined = Tensor::matrix(1, 4);
  for (std::size_t x = 0; x < 2; ++x) {
    const Tensor v = ad::matmul(row, store.value(spec.value_name(x)));
    for (std::size_t c = 0; c < 2; ++c) joined[x * 2 + c] = v[c];
  }
  const Tensor want = ad::matmul(joined, store.value(spec.output_name()));
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(r.output.value()[c], want[c], 1e-14);
}

TEST(SelfAttention, IdenticalRowsGiveIdenticalOutputs) {
  ad::ParameterStore store;
  const SelfAttentionSpec spec{"sa", 6, 3};
  add_self_attention_params(store, spec, 4);
  Rng rng = make_rng(2, "rows");
  const Tensor one = oracle::random_tensor(1, 6, rng);
  Tensor rows = Tensor::matrix(5, 6);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 6; ++c) rows(r, c) = one[c];
  const Tensor out = output_of(store, rows, spec);
  for (std::size_t r = 1; r < 5; ++r)
    for (std::size_t c = 0; c < 6; ++c) EXPECT_EQ(out(r, c), out(0, c));
}

TEST(SelfAttention, MatchesScalarOracle) {
  for (const auto& [z, d, heads] : std::vector<std::tuple<std::size_t, std::size_t, std::size_t>>{
           {3, 4, 2}, {1, 3, 1}, {7, 6, 3}, {10, 8, 4}, {4, 5, 1}}) {
    ad::ParameterStore store;
    const SelfAttentionSpec spec{"sa", d, heads};
    add_self_attention_params(store, spec, z * 31 + d);
    Rng rng = make_rng(z, "oracle", d);
    const Tensor rows = oracle::random_tensor(z, d, rng);
    ad::Tape tape;
    const auto r = self_attention(tape, store, tape.constant(rows), spec, 0.0, false, 0);
    const auto want = oracle::self_attention(oracle::to_matrix(rows), oracle::attention_heads(store, "sa", heads),
                                             oracle::to_matrix(store.value(spec.output_name())));
    EXPECT_LT(oracle::max_abs_diff(want.output, r.output.value()), 1e-10);
    for (std::size_t x = 0; x < heads; ++x) {
      EXPECT_LT(oracle::max_abs_diff(want.weights[x], r.attention[x]), 1e-10);
      for (std::size_t i = 0; i < z; ++i) {
        const auto row = r.attention[x].row(i);
        EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-12);
      }
    }
  }
}

TEST(SelfAttention, PooledOutputPermutationInvariant) {
  ad::ParameterStore store;
  const SelfAttentionSpec spec{"sa", 4, 2};
  add_self_attention_params(store, spec, 9);
  Rng rng = make_rng(3, "perm");
  const Tensor rows = oracle::random_tensor(6, 4, rng);
  std::vector<std::size_t> perm{4, 2, 0, 5, 1, 3};
  Tensor permuted = Tensor::matrix(6, 4);
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 4; ++c) permuted(r, c) = rows(perm[r], c);
  const Tensor a = mean_pool(output_of(store, rows, spec));
  const Tensor b = mean_pool(output_of(store, permuted, spec));
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(a[c], b[c], 1e-13);
}

TEST(MeanPool, KnownValues) {
  const Tensor one = Tensor::row_vector({1.5, -2});
  EXPECT_EQ(mean_pool(one), one);
  EXPECT_EQ(mean_pool(Tensor::from_rows({{1, 1}, {3, 3}})), Tensor::row_vector({2, 2}));
  EXPECT_THROW(mean_pool(Tensor::matrix(0, 2)), DimensionError);
}

TEST(SplitViews, ShapesAndRepeatedItems) {
  Rng rng = make_rng(4, "views");
  const Tensor e = oracle::random_tensor(20, 6, rng);
  data::UserHistory h;
  h.prefer_items = std::vector<std::size_t>(10, 3);
  for (std::size_t i = 10; i < 20; ++i) h.dislike_items.push_back(i);
  ad::Tape tape;
  const auto m = split_views(tape.constant(e), h);
  EXPECT_EQ(m.prefer.shape(), (ad::Shape{10, 6}));
  EXPECT_EQ(m.dislike.shape(), (ad::Shape{10, 6}));
  for (std::size_t r = 0; r < 10; ++r)
    for (std::size_t c = 0; c < 6; ++c) EXPECT_EQ(m.prefer.value()(r, c), e(3, c));
}

TEST(SplitViews, UnknownItemNamed) {
  const std::vector<std::string> ids{"a", "b"};
  data::UserHistory h{0, {0}, {5}};
  ad::Tape tape;
  try {
    split_views(tape.constant(Tensor::matrix(2, 2)), h, &ids);
    FAIL() << "expected UsageError";
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("#5"), std::string::npos);
  }
}

TEST(UserViews, TiedParametersOnSameSampleGiveEqualViews) {
  UserModelConfig config;
  config.heads = 2;
  config.tie_views = true;
  ad::ParameterStore store;
  add_user_params(store, config, 8, 5);
  EXPECT_FALSE(store.contains(std::string(kDislikePrefix) + ".output"));
  Rng rng = make_rng(5, "tie");
  const Tensor e = oracle::random_tensor(12, 8, rng);
  data::UserHistory h{0, {1, 4, 7, 9}, {1, 4, 7, 9}};
  ad::Tape tape;
  const auto v = build_user_views(tape, store, tape.constant(e), h, config, false, 3);
  EXPECT_EQ(v.prefer.value(), v.dislike.value());
}

TEST(UserViews, DefaultWidthAndSingleView) {
  UserModelConfig config;
  ad::ParameterStore store;
  add_user_params(store, config, 512, 1);
  Rng rng = make_rng(6, "wide");
  const Tensor e = oracle::random_tensor(30, 512, rng);
  data::UserHistory h{0, {}, {}};
  for (std::size_t i = 0; i < 10; ++i) {
    h.prefer_items.push_back(i);
    h.dislike_items.push_back(10 + i);
  }
  ad::Tape tape;
  const auto v = build_user_views(tape, store, tape.constant(e), h, config, true, 3);
  EXPECT_EQ(v.prefer.shape(), (ad::Shape{1, 512}));
  EXPECT_EQ(v.dislike.shape(), (ad::Shape{1, 512}));
  config.multi_view = false;
  ad::ParameterStore single;
  add_user_params(single, config, 512, 1);
  EXPECT_FALSE(single.contains(std::string(kDislikePrefix) + ".output"));
}

TEST(UserViews, GradientsMatchFiniteDifferences) {
  UserModelConfig config;
  config.heads = 2;
  config.dropout = 0.3;
  ad::ParameterStore store;
  add_user_params(store, config, 4, 7);
  Rng rng = make_rng(7, "fd");
  const Tensor e = oracle::random_tensor(8, 4, rng);
  const Tensor wp = oracle::random_tensor(1, 4, rng);
  const Tensor wd = oracle::random_tensor(1, 4, rng);
  data::UserHistory h{0, {0, 2, 2, 5}, {1, 3, 6, 7}};
  auto loss = [&](ad::Tape& t) {
    const auto v = build_user_views(t, store, t.constant(e), h, config, true, 11);
    return ad::add(ad::sum(ad::hadamard(v.prefer, t.constant(wp))), ad::sum(ad::hadamard(v.dislike, t.constant(wd))));
  };
  ad::Tape tape;
  const auto grads = tape.backward(loss(tape));
  const auto check = oracle::check_gradients(store, grads, [&] {
    ad::Tape t;
    return loss(t).value().item();
  });
  EXPECT_EQ(check.checked, store.scalar_count());
  EXPECT_EQ(check.failures, 0u) << check.worst_entry;
}

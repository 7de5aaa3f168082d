#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "crmman/errors.hpp"
#include "crmman/evaluation.hpp"
#include "crmman/random.hpp"
#include "crmman/run_config.hpp"
#include "crmman/scorer_trainer.hpp"
#include "crmman/synthetic.hpp"
#include "support/oracles.hpp"

using namespace crmman;
using ad::Tensor;
using ad::Var;

TEST(PredictClick, KnownCases) {
  const std::vector<double> c{1.0, 2.0}, p{0.5, -1.0}, d{3.0, 0.25};
  EXPECT_DOUBLE_EQ(predict_click(c, p, d, 1.0, 0.0), 1.0 * 0.5 + 2.0 * -1.0);
  EXPECT_EQ(predict_click(std::vector<double>{0.0, 0.0}, p, d, 0.7, -0.2), 0.0);
  // <c,p> = 2 and <c,d> = 1
  EXPECT_DOUBLE_EQ(predict_click(std::vector<double>{1.0, 1.0}, std::vector<double>{1.0, 1.0},
                                 std::vector<double>{0.5, 0.5}, 0.5, -0.5),
                   0.5);
  EXPECT_THROW(predict_click(c, std::vector<double>{1.0}, d, 1.0, 1.0), ConfigError);
}

TEST(PredictClick, ScalesLinearlyInCandidate) {
  Rng rng = make_rng(1, "click");
  std::vector<double> c(6), p(6), d(6);
  for (auto* v : {&c, &p, &d})
    for (double& x : *v) x = standard_normal(rng);
  std::vector<double> scaled = c;
  for (double& x : scaled) x *= -2.5;
  EXPECT_NEAR(predict_click(scaled, p, d, 0.8, -0.6), -2.5 * predict_click(c, p, d, 0.8, -0.6), 1e-12);
}

TEST(Loss, EqualScoresGiveLogOfCandidates) {
  EXPECT_NEAR(negative_sampling_loss(0.37, std::vector<double>(4, 0.37)), std::log(5.0), 1e-9);
  ad::Tape tape;
  EXPECT_NEAR(example_loss(tape.constant(Tensor::matrix(1, 5, -1.2))).value().item(), std::log(5.0), 1e-9);
}

TEST(Loss, DominantPositiveApproachesZero) {
  EXPECT_LT(negative_sampling_loss(60.0, std::vector<double>{0.0, 1.0, -2.0, 0.5}), 1e-20);
  EXPECT_TRUE(std::isfinite(negative_sampling_loss(-800.0, std::vector<double>{800.0})));
}

TEST(Loss, MatchesScalarFormulaAndIgnoresNegativeOrder) {
  Rng rng = make_rng(2, "loss");
  for (int trial = 0; trial < 50; ++trial) {
    const double pos = 3.0 * standard_normal(rng);
    std::vector<double> negs(4);
    for (double& n : negs) n = 3.0 * standard_normal(rng);
    double denom = std::exp(pos);
    for (double n : negs) denom += std::exp(n);
    const double want = -std::log(std::exp(pos) / denom);
    EXPECT_NEAR(negative_sampling_loss(pos, negs), want, 1e-10);
    ad::Tape tape;
    std::vector<double> row{pos};
    row.insert(row.end(), negs.begin(), negs.end());
    EXPECT_NEAR(example_loss(tape.constant(Tensor::row_vector(row))).value().item(), want, 1e-10);
    std::vector<double> shuffled = negs;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    EXPECT_NEAR(negative_sampling_loss(pos, shuffled), negative_sampling_loss(pos, negs), 1e-12);
  }
}

TEST(FullModel, GradientsMatchFiniteDifferences) {
  auto toy = oracle::make_toy_model(4);
  Model model(toy.config, 4);
  EXPECT_EQ(toy.config.item_dim(), 16u);
  ASSERT_FALSE(toy.batch.empty());
  auto loss = [&](ad::Tape& t) { return batch_loss(t, model, toy.inputs, toy.histories, toy.batch, true, 19); };
  ad::Tape tape;
  const auto grads = tape.backward(loss(tape));
  const auto check = oracle::check_gradients(model.params(), grads, [&] {
    ad::Tape t;
    return loss(t).value().item();
  });
  EXPECT_EQ(check.checked, model.params().scalar_count());
  EXPECT_EQ(check.failures, 0u) << check.worst_entry;
}

TEST(Model, SingleViewScoresWithoutWeights) {
  auto toy = oracle::make_toy_model(5);
  toy.config.user.multi_view = false;
  Model model(toy.config, 2);
  EXPECT_FALSE(model.params().contains(kW1Param));
  EXPECT_EQ(model.w1(), 1.0);
  EXPECT_EQ(model.w2(), 0.0);
  const Tensor items = model.item_embedding_values(toy.inputs);
  const auto user = model.user_vectors(items, *toy.histories.by_user[0]);
  EXPECT_TRUE(user.dislike.empty());
  double dot = 0.0;
  for (std::size_t c = 0; c < items.cols(); ++c) dot += items(3, c) * user.prefer[c];
  EXPECT_NEAR(model.score(items, 3, user), dot, 1e-12);
}

TEST(Model, AdoptingParametersChecksShapes) {
  auto toy = oracle::make_toy_model(6);
  Model model(toy.config, 1);
  EXPECT_NO_THROW(Model(toy.config, model.params()));
  ad::ParameterStore wrong;
  for (const auto& name : Model::expected_params(toy.config)) wrong.add(name, Tensor::matrix(1, 1));
  EXPECT_THROW(Model(toy.config, wrong), ConfigError);
}

TEST(Train, ZeroEpochsReturnsInitialization) {
  auto toy = oracle::make_toy_model(7);
  TrainConfig config;
  config.epochs = 0;
  config.history_size = 2;
  const auto result = train(toy.dataset, toy.inputs, toy.config, config, 3, "x=1\n");
  EXPECT_TRUE(result.log.empty());
  EXPECT_EQ(result.best.epoch, 0u);
  EXPECT_EQ(result.best.config_text, "x=1\n");
  const Model fresh(toy.config, 3);
  for (ad::ParamId id = 0; id < fresh.params().size(); ++id) {
    EXPECT_EQ(result.best.params.value(fresh.params().name(id)), fresh.params().value(id));
  }
}

TEST(Train, SameSeedSameRun) {
  auto toy = oracle::make_toy_model(8);
  TrainConfig config;
  config.epochs = 3;
  config.history_size = 2;
  config.negatives = 2;
  config.batch_size = 2;
  const auto a = train(toy.dataset, toy.inputs, toy.config, config, 5);
  const auto b = train(toy.dataset, toy.inputs, toy.config, config, 5);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) EXPECT_EQ(a.log[i].mean_loss, b.log[i].mean_loss);
  EXPECT_EQ(serialize_checkpoint(a.best), serialize_checkpoint(b.best));
}

TEST(Train, EpochLogLine) {
  EpochLog e{3, 0.5, 0.75, 1.25, 40};
  const std::string line = format_epoch_log(e);
  for (const char* key : {"epoch=3", "loss=", "val_auc=", "seconds=", "examples=40"}) {
    EXPECT_NE(line.find(key), std::string::npos) << line;
  }
}

TEST(Train, LossHalvesOnPlantedData) {
  RunConfig cfg;
  cfg.load_text(desk_scale_overrides(), "desk");
  cfg.set("patience", "20");
  const auto syn = synth::generate_synthetic(cfg.synthetic_spec());
  const auto model_config = cfg.model_config();
  const auto ds = data::split(syn.dataset, cfg.split_config(), derive_seed(1, "split"));
  const auto inputs = make_model_inputs(ds.item_ids, syn.graph, syn.texts, model_config, 1);
  std::ostringstream log;
  const auto result = train(ds, inputs, model_config, cfg.train_config(), 1, cfg.to_text(), &log);
  ASSERT_EQ(result.log.size(), 20u);
  EXPECT_LE(result.log.back().mean_loss, 0.5 * result.log.front().mean_loss) << log.str();
  EXPECT_NE(log.str().find("epoch=20"), std::string::npos);
}

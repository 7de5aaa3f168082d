#include "crmman/scorer_trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <ostream>

#include "crmman/errors.hpp"
#include "crmman/evaluation.hpp"
#include "crmman/random.hpp"

namespace crmman {

double predict_click(std::span<const double> candidate, std::span<const double> prefer,
                     std::span<const double> dislike, double w1, double w2) {
  if (candidate.size() != prefer.size() || candidate.size() != dislike.size()) {
    throw ConfigError("predict_click: candidate width " + std::to_string(candidate.size()) + ", views " +
                      std::to_string(prefer.size()) + " and " + std::to_string(dislike.size()));
  }
  double p = 0.0;
  double d = 0.0;
  for (std::size_t k = 0; k < candidate.size(); ++k) {
    p += candidate[k] * prefer[k];
    d += candidate[k] * dislike[k];
  }
  return w1 * p + w2 * d;
}

double negative_sampling_loss(double positive, std::span<const double> negatives) {
  double top = positive;
  for (double s : negatives) top = std::max(top, s);
  double total = std::exp(positive - top);
  for (double s : negatives) total += std::exp(s - top);
  return top + std::log(total) - positive;
}

std::string format_epoch_log(const EpochLog& entry) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "epoch=%zu loss=%.6f val_auc=%.6f seconds=%.3f examples=%zu", entry.epoch,
                entry.mean_loss, entry.validation_auc, entry.seconds, entry.examples);
  return buf;
}

std::uint64_t evaluation_history_seed(std::uint64_t seed) { return derive_seed(seed, "eval_history"); }

ad::Var batch_loss(ad::Tape& tape, Model& model, const ModelInputs& inputs, const data::HistorySet& histories,
                   const std::vector<data::TrainExample>& batch, bool training, std::uint64_t seed) {
  if (batch.empty()) throw UsageError("batch_loss: empty batch");
  ad::Var items = model.item_embeddings(tape, inputs, training, derive_seed(seed, "items"));
  std::map<std::size_t, user::UserViews> views;
  ad::Var total;
  bool first = true;
  for (const auto& example : batch) {
    auto it = views.find(example.user);
    if (it == views.end()) {
      const auto& history = histories.by_user.at(example.user);
      if (!history) throw UsageError("batch_loss: user without history in batch");
      it = views
               .emplace(example.user, model.user_views(tape, items, *history, training,
                                                       derive_seed(seed, "user", example.user), &inputs.item_ids))
               .first;
    }
    std::vector<std::size_t> candidates{example.positive_item};
    candidates.insert(candidates.end(), example.negative_items.begin(), example.negative_items.end());
    ad::Var loss = example_loss(model.click(tape, ad::gather_rows(items, candidates), it->second));
    total = first ? loss : ad::add(total, loss);
    first = false;
  }
  return total;
}

Checkpoint make_checkpoint(const Model& model, const ModelInputs& inputs, const std::string& config_text,
                           std::uint64_t epoch, std::vector<std::pair<std::string, double>> metrics) {
  Checkpoint checkpoint;
  checkpoint.config_text = config_text;
  checkpoint.epoch = epoch;
  checkpoint.metrics = std::move(metrics);
  checkpoint.item_ids = inputs.item_ids;
  checkpoint.params = model.params();
  checkpoint.init_vectors = inputs.init_vectors;
  return checkpoint;
}

namespace {

std::string parameter_norms(const ad::ParameterStore& params) {
  std::string out;
  for (ad::ParamId id = 0; id < params.size(); ++id) {
    double sq = 0.0;
    for (double v : params.value(id).values()) sq += v * v;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", std::sqrt(sq));
    out += " " + params.name(id) + "=" + buf;
  }
  return out;
}

double validation_auc(Model& model, const ModelInputs& inputs, const data::InteractionDataset& dataset,
                      const data::HistorySet& histories) {
  const auto samples = eval::score_split(model, inputs, dataset, histories, data::SplitTag::validation);
  std::vector<eval::ScoredLabel> pooled;
  pooled.reserve(samples.size());
  for (const auto& s : samples) pooled.push_back({s.score, s.label});
  try {
    return eval::auc(pooled);
  } catch (const MetricError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace

TrainResult train(const data::InteractionDataset& dataset, const ModelInputs& inputs, const ModelConfig& model_config,
                  const TrainConfig& config, std::uint64_t seed, const std::string& config_text, std::ostream* log) {
  if (config.batch_size == 0 || config.negatives == 0 || config.history_size == 0) {
    throw ConfigError("batch size, negatives and history size must be positive");
  }
  if (inputs.item_count() != dataset.item_count()) {
    throw UsageError("model inputs cover " + std::to_string(inputs.item_count()) + " items, dataset has " +
                     std::to_string(dataset.item_count()));
  }
  Model model(model_config, seed);
  AdamState state = AdamState::for_params(model.params());
  const data::HistorySet eval_histories =
      data::build_histories(dataset, config.history_size, evaluation_history_seed(seed));

  TrainResult result;
  result.exclusions = eval_histories.exclusions;
  result.best = make_checkpoint(model, inputs, config_text, 0, {});
  double best_auc = -std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  data::HistorySet histories;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    if (epoch == 1 || config.resample_histories) {
      histories = data::build_histories(dataset, config.history_size,
                                        derive_seed(seed, "history", config.resample_histories ? epoch : 0));
    }
    const auto batches = data::sample_training_batches(dataset, histories, config.negatives, config.batch_size,
                                                       derive_seed(seed, "batches", epoch));
    if (batches.empty()) throw TrainingError("no training examples: every user lacks a usable history");
    double loss_sum = 0.0;
    std::size_t examples = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      ad::Tape tape;
      const std::uint64_t step_seed = derive_seed(derive_seed(seed, "epoch", epoch), "batch", b);
      ad::Var loss = batch_loss(tape, model, inputs, histories, batches[b], true, step_seed);
      const double value = loss.value().item();
      if (!std::isfinite(value)) {
        throw TrainingError("non-finite loss in epoch " + std::to_string(epoch) + " batch " + std::to_string(b) +
                            "; parameter norms:" + parameter_norms(model.params()));
      }
      const ad::Gradients grads = tape.backward(loss);
      adam_step(model.params(), grads, state, config.adam);
      loss_sum += value;
      examples += batches[b].size();
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.examples = examples;
    entry.mean_loss = loss_sum / static_cast<double>(examples);
    entry.validation_auc = validation_auc(model, inputs, dataset, eval_histories);
    entry.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.log.push_back(entry);
    if (log) *log << format_epoch_log(entry) << '\n';

    const bool undefined = std::isnan(entry.validation_auc);
    if (undefined || entry.validation_auc > best_auc) {
      if (!undefined) best_auc = entry.validation_auc;
      since_best = 0;
      result.best_epoch = epoch;
      result.best = make_checkpoint(model, inputs, config_text, epoch,
                                    {{"validation_auc", entry.validation_auc}, {"train_loss", entry.mean_loss}});
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  return result;
}

}  // namespace crmman

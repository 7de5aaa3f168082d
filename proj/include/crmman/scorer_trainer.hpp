#pragma once

// Click scoring, the sampled-softmax training loss and the training loop.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "crmman/autodiff.hpp"
#include "crmman/checkpoint.hpp"
#include "crmman/data_pipeline.hpp"
#include "crmman/model.hpp"
#include "crmman/optimizer.hpp"

namespace crmman {

/// w1 <c, u_prefer> + w2 <c, u_dislike>. Throws ConfigError on width mismatch.
double predict_click(std::span<const double> candidate, std::span<const double> prefer,
                     std::span<const double> dislike, double w1, double w2);

/// -log(exp(s+) / (exp(s+) + sum_r exp(s-_r))), evaluated with log-sum-exp.
double negative_sampling_loss(double positive, std::span<const double> negatives);

/// Recorded loss of one example from its 1 x (R+1) scores, positive first.
inline ad::Var example_loss(ad::Var scores) { return ad::neg_log_softmax(scores, 0); }

struct TrainConfig {
  AdamConfig adam;
  std::size_t batch_size = 16;
  std::size_t negatives = 4;
  std::size_t history_size = 10;
  std::size_t epochs = 20;
  /// Epochs without a validation AUC improvement before stopping.
  std::size_t patience = 5;
  /// Draw fresh histories every epoch instead of once.
  bool resample_histories = true;
};

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;     // per positive
  double validation_auc = 0.0;  // NaN when undefined
  double seconds = 0.0;
  std::size_t examples = 0;
};

std::string format_epoch_log(const EpochLog& entry);

/// Summed loss of one batch, recorded on `tape`.
ad::Var batch_loss(ad::Tape& tape, Model& model, const ModelInputs& inputs, const data::HistorySet& histories,
                   const std::vector<data::TrainExample>& batch, bool training, std::uint64_t seed);

struct TrainResult {
  Checkpoint best;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  std::vector<std::string> exclusions;
};

/// Trains a fresh model on the train split of `dataset` (already split) and
/// returns the checkpoint of the epoch with the best validation AUC
/// (the initialization when `epochs` is 0). One log line per epoch goes to
/// `log` when given. `config_text` is stored in the checkpoint verbatim.
TrainResult train(const data::InteractionDataset& dataset, const ModelInputs& inputs, const ModelConfig& model_config,
                  const TrainConfig& config, std::uint64_t seed, const std::string& config_text = {},
                  std::ostream* log = nullptr);

/// Seed of the fixed histories used for validation and test scoring.
std::uint64_t evaluation_history_seed(std::uint64_t seed);

Checkpoint make_checkpoint(const Model& model, const ModelInputs& inputs, const std::string& config_text,
                           std::uint64_t epoch, std::vector<std::pair<std::string, double>> metrics);

}  // namespace crmman

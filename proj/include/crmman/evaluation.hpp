#pragma once

// Ranking metrics, test-set scoring, multi-seed runs and the ablation
// harness with its report and plot-data files.

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "crmman/data_pipeline.hpp"
#include "crmman/kg_structural.hpp"
#include "crmman/model.hpp"
#include "crmman/scorer_trainer.hpp"

namespace crmman::eval {

struct ScoredLabel {
  double score = 0.0;
  int label = 0;
};

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Throws MetricError unless both classes are present.
double auc(std::span<const ScoredLabel> samples);

struct RankedItem {
  std::size_t item = 0;
  double score = 0.0;
  int label = 0;
};

/// NDCG@k of one user with binary gains, ranking by descending score and
/// ascending item index on ties. Returns a negative value when the user has
/// no positive.
double user_ndcg(std::vector<RankedItem> items, std::size_t k);

/// Mean NDCG@k over users with at least one positive. Throws MetricError
/// when there is none, ConfigError when k is 0.
double ndcg_at_k(const std::vector<std::vector<RankedItem>>& per_user, std::size_t k);

struct ScoredSample {
  std::size_t user = 0;
  std::size_t item = 0;
  int label = 0;
  double score = 0.0;
};

/// Scores every `split` interaction of users with a history. Users without
/// one are counted in `skipped_users`.
std::vector<ScoredSample> score_split(Model& model, const ModelInputs& inputs, const data::InteractionDataset& dataset,
                                      const data::HistorySet& histories, data::SplitTag split,
                                      std::size_t* skipped_users = nullptr);

struct MetricReport {
  double auc = 0.0;
  std::map<std::size_t, double> ndcg;  // K -> mean NDCG@K
  std::size_t samples = 0;
  std::size_t users_scored = 0;
  std::size_t users_skipped = 0;
};

MetricReport compute_metrics(const std::vector<ScoredSample>& samples, const std::vector<std::size_t>& ks);

inline const std::vector<std::size_t> kDefaultKs{5, 10};

/// Test-split metrics of `model` using the evaluation histories of `seed`.
MetricReport evaluate(Model& model, const ModelInputs& inputs, const data::InteractionDataset& dataset,
                      std::size_t history_size, std::uint64_t seed, const std::vector<std::size_t>& ks = kDefaultKs);

/// Rebuilds the model stored in a checkpoint. Every checkpoint item id must
/// be known to `item_ids` and vice versa (IngestionError listing the
/// offenders otherwise).
Model model_from_checkpoint(const Checkpoint& checkpoint, const ModelConfig& config,
                            const std::vector<std::string>& item_ids);

// Experiments -------------------------------------------------------------------

/// Unsplit data shared by every run of an experiment.
struct ExperimentData {
  data::InteractionDataset dataset;
  kg::ItemGraph graph;
  std::map<std::string, std::string> texts;
};

struct RunOutcome {
  std::uint64_t seed = 0;
  MetricReport test;
  double w1 = 0.0;
  double w2 = 0.0;
  std::size_t best_epoch = 0;
  std::vector<EpochLog> log;
};

/// Splits with derive_seed(seed, "split"), trains with `seed`, evaluates on test.
RunOutcome run_seed(const ExperimentData& data, const ModelConfig& model_config, const TrainConfig& train_config,
                    const data::SplitConfig& split_config, std::uint64_t seed);

enum class Variant { full, semantic_only, structural_only, single_view, concat, average };

Variant variant_from_string(const std::string& name);
const char* to_string(Variant variant);
ModelConfig apply_variant(ModelConfig base, Variant variant);

struct SeriesSummary {
  std::vector<double> values;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for one value
};

SeriesSummary summarize(std::vector<double> values);

struct VariantResult {
  Variant variant = Variant::full;
  std::vector<RunOutcome> runs;  // seed order

  SeriesSummary auc() const;
  SeriesSummary ndcg(std::size_t k) const;
};

struct AblationReport {
  std::vector<VariantResult> variants;
  std::vector<std::uint64_t> seeds;
};

/// Trains and evaluates every variant on every seed. Runs are independent
/// and execute on up to `threads` workers; results are stored in fixed
/// variant-then-seed order.
AblationReport ablate(const ExperimentData& data, const std::vector<Variant>& variants, const ModelConfig& base,
                      const TrainConfig& train_config, const data::SplitConfig& split_config,
                      const std::vector<std::uint64_t>& seeds, std::size_t threads = 1);

/// Human-readable report: header (gain convention, tie rule), per-seed
/// values, mean and deviation per variant, deltas against the first
/// variant, view weights of multi-view runs, then the configuration.
std::string report_text(const AblationReport& report, const std::string& config_text);
/// Bar-chart series: "variant<TAB>metric<TAB>mean<TAB>stddev" lines.
std::string plot_data(const AblationReport& report);

/// Single-model report in the same style.
std::string metric_report_text(const MetricReport& report, const std::string& config_text);

}  // namespace crmman::eval

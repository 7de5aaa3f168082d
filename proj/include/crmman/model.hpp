#pragma once

// The assembled recommender: item encoder (semantic and structural paths
// fused), dual-view user model and the weighted click score.

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "crmman/autodiff.hpp"
#include "crmman/data_pipeline.hpp"
#include "crmman/item_aggregator.hpp"
#include "crmman/kg_structural.hpp"
#include "crmman/semantic_encoder.hpp"
#include "crmman/structural_encoder.hpp"
#include "crmman/user_model.hpp"

namespace crmman {

inline constexpr const char* kW1Param = "score.w1";
inline constexpr const char* kW2Param = "score.w2";

struct ModelConfig {
  semantic::SemanticConfig semantic;
  structural::StructuralConfig structural;
  bool use_semantic = true;
  bool use_structural = true;
  aggregate::Aggregation aggregation = aggregate::Aggregation::concatenate;
  user::UserModelConfig user;
  double w1_init = 1.0;
  double w2_init = -1.0;

  /// Width of the item representation r.
  std::size_t item_dim() const;
  /// Throws ConfigError on inconsistent settings.
  void validate() const;
};

/// Fixed per-item inputs: aligned with `item_ids` order.
struct ModelInputs {
  std::vector<std::string> item_ids;
  structural::Neighborhoods hoods;
  ad::Tensor init_vectors;  // M x d_k; empty without the structural path
  semantic::SemanticInputs semantic;

  std::size_t item_count() const { return item_ids.size(); }
};

/// Builds inputs from the co-item graph (node i = item i) and item texts.
/// The node initialization draws from derive_seed(seed, "init").
ModelInputs make_model_inputs(const std::vector<std::string>& item_ids, const kg::ItemGraph& graph,
                              const std::map<std::string, std::string>& texts, const ModelConfig& config,
                              std::uint64_t seed, const semantic::PrecomputedEmbeddings* precomputed = nullptr);

/// Plain-value user vectors with the attention matrices that produced them.
struct UserVectors {
  ad::Tensor prefer;   // 1 x d_cat
  ad::Tensor dislike;  // 1 x d_cat, empty in single-view mode
  std::vector<ad::Tensor> prefer_attention;
  std::vector<ad::Tensor> dislike_attention;
};

class Model {
 public:
  /// Fresh parameters drawn from derive_seed(seed, "params").
  Model(ModelConfig config, std::uint64_t seed);
  /// Adopts existing parameters; every expected tensor must be present
  /// with the expected shape (ConfigError otherwise).
  Model(ModelConfig config, ad::ParameterStore params);

  const ModelConfig& config() const { return config_; }
  ad::ParameterStore& params() { return params_; }
  const ad::ParameterStore& params() const { return params_; }
  bool multi_view() const { return config_.user.multi_view; }
  double w1() const;
  double w2() const;

  /// M x d_cat item representations.
  ad::Var item_embeddings(ad::Tape& tape, const ModelInputs& inputs, bool training, std::uint64_t seed);
  user::UserViews user_views(ad::Tape& tape, ad::Var items, const data::UserHistory& history, bool training,
                             std::uint64_t seed, const std::vector<std::string>* item_ids = nullptr);
  /// 1 x n click scores of the n candidate rows.
  ad::Var click(ad::Tape& tape, ad::Var candidates, const user::UserViews& views);

  // Evaluation-mode helpers on plain values.
  ad::Tensor item_embedding_values(const ModelInputs& inputs);
  UserVectors user_vectors(const ad::Tensor& items, const data::UserHistory& history,
                           const std::vector<std::string>* item_ids = nullptr);
  double score(const ad::Tensor& items, std::size_t item, const UserVectors& user) const;

  /// The parameter names this configuration expects, in creation order.
  static std::vector<std::string> expected_params(const ModelConfig& config);

 private:
  ModelConfig config_;
  ad::ParameterStore params_;
};

}  // namespace crmman

#pragma once

// Preference and dislike user views: the embeddings of a user's sampled
// history items pass through multi-head self-attention and are mean-pooled.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "crmman/autodiff.hpp"
#include "crmman/data_pipeline.hpp"

namespace crmman::user {

/// Parameters of one self-attention block. Per head x: query/key/value maps
/// of shape d_cat x d_hide with d_hide = d_cat / heads; one output map
/// d_cat x d_cat.
struct SelfAttentionSpec {
  std::string prefix;
  std::size_t d_cat = 0;
  std::size_t heads = 1;

  std::size_t d_hide() const { return d_cat / heads; }
  std::string query_name(std::size_t head) const;
  std::string key_name(std::size_t head) const;
  std::string value_name(std::size_t head) const;
  std::string output_name() const;
};

/// Throws ConfigError unless `heads` divides `d_cat`.
void add_self_attention_params(ad::ParameterStore& store, const SelfAttentionSpec& spec, std::uint64_t seed);

struct SelfAttentionResult {
  ad::Var output;                      // z x d_cat
  std::vector<ad::Tensor> attention;   // per head, z x z, rows sum to 1 (before dropout)
};

/// R' = (||_x softmax(R Q_x (R K_x)^T / sqrt(d_hide)) R V_x) O, with dropout
/// on the attention matrices while training.
SelfAttentionResult self_attention(ad::Tape& tape, ad::ParameterStore& store, ad::Var items,
                                   const SelfAttentionSpec& spec, double dropout, bool training, std::uint64_t seed);

ad::Tensor mean_pool(const ad::Tensor& rows);
inline ad::Var mean_pool(ad::Var rows) { return ad::mean_rows(rows); }

struct ViewMatrices {
  ad::Var prefer;   // B x d_cat
  ad::Var dislike;  // B x d_cat
};

/// Stacks the embeddings of the sampled prefer and dislike items in sampled
/// order. An index outside `item_embeddings` raises UsageError naming the
/// item (by id when `item_ids` is given).
ViewMatrices split_views(ad::Var item_embeddings, const data::UserHistory& history,
                         const std::vector<std::string>* item_ids = nullptr);

struct UserModelConfig {
  std::size_t heads = 4;
  double dropout = 0.3;
  /// Share one parameter set between the two views.
  bool tie_views = false;
  /// When false only the preference view is built.
  bool multi_view = true;
};

inline constexpr const char* kPreferPrefix = "user.prefer";
inline constexpr const char* kDislikePrefix = "user.dislike";

SelfAttentionSpec prefer_spec(const UserModelConfig& config, std::size_t d_cat);
SelfAttentionSpec dislike_spec(const UserModelConfig& config, std::size_t d_cat);

void add_user_params(ad::ParameterStore& store, const UserModelConfig& config, std::size_t d_cat, std::uint64_t seed);

struct UserViews {
  ad::Var prefer;   // 1 x d_cat
  ad::Var dislike;  // 1 x d_cat; unset (tape == nullptr) in single-view mode
  std::vector<ad::Tensor> prefer_attention;
  std::vector<ad::Tensor> dislike_attention;
};

UserViews build_user_views(ad::Tape& tape, ad::ParameterStore& store, ad::Var item_embeddings,
                           const data::UserHistory& history, const UserModelConfig& config, bool training,
                           std::uint64_t seed, const std::vector<std::string>* item_ids = nullptr);

}  // namespace crmman::user

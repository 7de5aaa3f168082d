#include "crmman/user_model.hpp"

#include <cmath>

#include "crmman/errors.hpp"
#include "crmman/random.hpp"

namespace crmman::user {

using ad::Tensor;
using ad::Var;

std::string SelfAttentionSpec::query_name(std::size_t head) const {
  return prefix + ".head" + std::to_string(head) + ".query";
}
std::string SelfAttentionSpec::key_name(std::size_t head) const {
  return prefix + ".head" + std::to_string(head) + ".key";
}
std::string SelfAttentionSpec::value_name(std::size_t head) const {
  return prefix + ".head" + std::to_string(head) + ".value";
}
std::string SelfAttentionSpec::output_name() const { return prefix + ".output"; }

void add_self_attention_params(ad::ParameterStore& store, const SelfAttentionSpec& spec, std::uint64_t seed) {
  if (spec.heads == 0 || spec.d_cat == 0 || spec.d_cat % spec.heads != 0) {
    throw ConfigError("self-attention heads (" + std::to_string(spec.heads) + ") must divide d_cat (" +
                      std::to_string(spec.d_cat) + ")");
  }
  const std::size_t d_hide = spec.d_hide();
  for (std::size_t x = 0; x < spec.heads; ++x) {
    for (const auto& name : {spec.query_name(x), spec.key_name(x), spec.value_name(x)}) {
      store.add(name, ad::glorot_uniform(spec.d_cat, d_hide, derive_seed(seed, name)));
    }
  }
  store.add(spec.output_name(), ad::glorot_uniform(spec.d_cat, spec.d_cat, derive_seed(seed, spec.output_name())));
}

SelfAttentionResult self_attention(ad::Tape& tape, ad::ParameterStore& store, Var items,
                                   const SelfAttentionSpec& spec, double dropout, bool training, std::uint64_t seed) {
  if (items.cols() != spec.d_cat) {
    throw DimensionError("self-attention " + spec.prefix + " expects width " + std::to_string(spec.d_cat) + ", got " +
                         ad::shape_string(items.shape()));
  }
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(spec.d_hide()));
  SelfAttentionResult result;
  std::vector<Var> heads;
  for (std::size_t x = 0; x < spec.heads; ++x) {
    Var q = ad::matmul(items, tape.parameter(store, spec.query_name(x)));
    Var k = ad::matmul(items, tape.parameter(store, spec.key_name(x)));
    Var v = ad::matmul(items, tape.parameter(store, spec.value_name(x)));
    Var beta = ad::softmax_rows(ad::scale(ad::matmul(q, ad::transpose(k)), inv_sqrt));
    result.attention.push_back(beta.value());
    beta = ad::dropout(beta, dropout, training, derive_seed(seed, spec.prefix, x));
    heads.push_back(ad::matmul(beta, v));
  }
  Var joined = heads.size() == 1 ? heads.front() : ad::concat_cols(heads);
  result.output = ad::matmul(joined, tape.parameter(store, spec.output_name()));
  return result;
}

Tensor mean_pool(const Tensor& rows) {
  if (rows.rows() == 0) throw DimensionError("mean_pool: no rows");
  Tensor out = Tensor::matrix(1, rows.cols());
  for (std::size_t r = 0; r < rows.rows(); ++r)
    for (std::size_t c = 0; c < rows.cols(); ++c) out[c] += rows(r, c);
  for (double& v : out.values()) v /= static_cast<double>(rows.rows());
  return out;
}

ViewMatrices split_views(Var item_embeddings, const data::UserHistory& history,
                         const std::vector<std::string>* item_ids) {
  const std::size_t m = item_embeddings.rows();
  for (const auto* list : {&history.prefer_items, &history.dislike_items}) {
    if (list->empty()) throw UsageError("split_views: empty history view");
    for (std::size_t item : *list) {
      if (item >= m) {
        const std::string name = item_ids && item < item_ids->size() ? (*item_ids)[item] : "#" + std::to_string(item);
        throw UsageError("no item embedding for item " + name);
      }
    }
  }
  return {ad::gather_rows(item_embeddings, history.prefer_items),
          ad::gather_rows(item_embeddings, history.dislike_items)};
}

SelfAttentionSpec prefer_spec(const UserModelConfig& config, std::size_t d_cat) {
  return {kPreferPrefix, d_cat, config.heads};
}

SelfAttentionSpec dislike_spec(const UserModelConfig& config, std::size_t d_cat) {
  return {config.tie_views ? kPreferPrefix : kDislikePrefix, d_cat, config.heads};
}

void add_user_params(ad::ParameterStore& store, const UserModelConfig& config, std::size_t d_cat, std::uint64_t seed) {
  add_self_attention_params(store, prefer_spec(config, d_cat), seed);
  if (config.multi_view && !config.tie_views) add_self_attention_params(store, dislike_spec(config, d_cat), seed);
}

UserViews build_user_views(ad::Tape& tape, ad::ParameterStore& store, Var item_embeddings,
                           const data::UserHistory& history, const UserModelConfig& config, bool training,
                           std::uint64_t seed, const std::vector<std::string>* item_ids) {
  const std::size_t d_cat = item_embeddings.cols();
  UserViews views;
  const ViewMatrices matrices = split_views(item_embeddings, history, item_ids);
  auto prefer = self_attention(tape, store, matrices.prefer, prefer_spec(config, d_cat), config.dropout, training,
                               derive_seed(seed, "prefer"));
  views.prefer = mean_pool(prefer.output);
  views.prefer_attention = std::move(prefer.attention);
  if (config.multi_view) {
    auto dislike = self_attention(tape, store, matrices.dislike, dislike_spec(config, d_cat), config.dropout, training,
                                  derive_seed(seed, "dislike"));
    views.dislike = mean_pool(dislike.output);
    views.dislike_attention = std::move(dislike.attention);
  }
  return views;
}

}  // namespace crmman::user

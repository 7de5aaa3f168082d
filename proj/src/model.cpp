#include "crmman/model.hpp"

#include "crmman/errors.hpp"
#include "crmman/random.hpp"

namespace crmman {

using ad::Tensor;
using ad::Var;

std::size_t ModelConfig::item_dim() const {
  if (use_semantic && use_structural) return aggregate::fused_dim(semantic.d_h, structural.output_dim, aggregation);
  return use_semantic ? semantic.d_h : structural.output_dim;
}

void ModelConfig::validate() const {
  if (!use_semantic && !use_structural) throw ConfigError("at least one item modality must be enabled");
  if (use_semantic && use_structural && aggregation == aggregate::Aggregation::average &&
      semantic.d_h != structural.output_dim) {
    throw ConfigError("average aggregation needs d_h (" + std::to_string(semantic.d_h) +
                      ") equal to the structural dimension (" + std::to_string(structural.output_dim) + ")");
  }
  if (use_structural) {
    const auto& s = structural;
    if (s.d_k == 0 || s.layer1_heads == 0 || s.layer1_head_dim == 0 || s.layer2_heads == 0 || s.output_dim == 0) {
      throw ConfigError("structural dimensions and head counts must be positive");
    }
    if (!(s.slope > 0.0 && s.slope < 1.0)) throw ConfigError("leaky slope must lie in (0, 1)");
    if (!(s.dropout >= 0.0 && s.dropout < 1.0)) throw ConfigError("gat dropout must lie in [0, 1)");
  }
  if (!(user.dropout >= 0.0 && user.dropout < 1.0)) throw ConfigError("attention dropout must lie in [0, 1)");
  const std::size_t d = item_dim();
  if (user.heads == 0 || d % user.heads != 0) {
    throw ConfigError("attention heads (" + std::to_string(user.heads) + ") must divide the item dimension (" +
                      std::to_string(d) + ")");
  }
}

ModelInputs make_model_inputs(const std::vector<std::string>& item_ids, const kg::ItemGraph& graph,
                              const std::map<std::string, std::string>& texts, const ModelConfig& config,
                              std::uint64_t seed, const semantic::PrecomputedEmbeddings* precomputed) {
  ModelInputs inputs;
  inputs.item_ids = item_ids;
  if (config.use_structural) {
    if (graph.node_count() != item_ids.size()) {
      throw UsageError("item graph has " + std::to_string(graph.node_count()) + " nodes but there are " +
                       std::to_string(item_ids.size()) + " items");
    }
    inputs.hoods = structural::Neighborhoods::from_graph(graph);
    inputs.init_vectors = structural::init_nodes(graph, config.structural.d_k, config.structural.init,
                                                 derive_seed(seed, "init"), config.structural.sdne);
  }
  if (config.use_semantic) inputs.semantic = semantic::prepare_semantic_inputs(item_ids, texts, config.semantic, precomputed);
  return inputs;
}

namespace {

ad::ParameterStore fresh_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ad::ParameterStore store;
  const std::uint64_t root = derive_seed(seed, "params");
  if (config.use_semantic) semantic::add_semantic_params(store, config.semantic, derive_seed(root, "semantic"));
  if (config.use_structural) {
    structural::add_structural_params(store, config.structural, derive_seed(root, "structural"));
  }
  user::add_user_params(store, config.user, config.item_dim(), derive_seed(root, "user"));
  if (config.user.multi_view) {
    store.add(kW1Param, Tensor::scalar(config.w1_init));
    store.add(kW2Param, Tensor::scalar(config.w2_init));
  }
  return store;
}

}  // namespace

Model::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  params_ = fresh_params(config_, seed);
}

Model::Model(ModelConfig config, ad::ParameterStore params) : config_(std::move(config)) {
  const ad::ParameterStore reference = fresh_params(config_, 0);
  if (reference.size() != params.size()) {
    throw ConfigError("parameter set has " + std::to_string(params.size()) + " tensors, configuration expects " +
                      std::to_string(reference.size()));
  }
  for (ad::ParamId id = 0; id < reference.size(); ++id) {
    const std::string& name = reference.name(id);
    if (!params.contains(name)) throw ConfigError("missing parameter " + name);
    const Tensor& got = params.value(name);
    if (got.shape() != reference.value(id).shape()) {
      throw ConfigError("parameter " + name + " has shape " + ad::shape_string(got.shape()) + ", expected " +
                        ad::shape_string(reference.value(id).shape()));
    }
    params_.add(name, got, reference.trainable(id));
  }
}

std::vector<std::string> Model::expected_params(const ModelConfig& config) {
  const ad::ParameterStore store = fresh_params(config, 0);
  std::vector<std::string> names;
  for (ad::ParamId id = 0; id < store.size(); ++id) names.push_back(store.name(id));
  return names;
}

double Model::w1() const { return multi_view() ? params_.value(kW1Param).item() : 1.0; }
double Model::w2() const { return multi_view() ? params_.value(kW2Param).item() : 0.0; }

Var Model::item_embeddings(ad::Tape& tape, const ModelInputs& inputs, bool training, std::uint64_t seed) {
  Var semantic_part;
  Var structural_part;
  if (config_.use_semantic) {
    semantic_part = semantic::encode_semantic(tape, params_, inputs.semantic, config_.semantic);
    if (semantic_part.rows() != inputs.item_count()) throw UsageError("semantic inputs do not cover every item");
  }
  if (config_.use_structural) {
    if (inputs.init_vectors.rows() != inputs.item_count()) {
      throw UsageError("structural inputs do not cover every item");
    }
    structural_part = structural::encode_structural(tape, params_, tape.constant(inputs.init_vectors), inputs.hoods,
                                                    config_.structural, training, derive_seed(seed, "gat"));
  }
  if (config_.use_semantic && config_.use_structural) {
    return aggregate::aggregate(semantic_part, structural_part, config_.aggregation);
  }
  return config_.use_semantic ? semantic_part : structural_part;
}

user::UserViews Model::user_views(ad::Tape& tape, Var items, const data::UserHistory& history, bool training,
                                  std::uint64_t seed, const std::vector<std::string>* item_ids) {
  return user::build_user_views(tape, params_, items, history, config_.user, training, seed, item_ids);
}

Var Model::click(ad::Tape& tape, Var candidates, const user::UserViews& views) {
  if (candidates.cols() != views.prefer.cols()) {
    throw ConfigError("candidate width " + std::to_string(candidates.cols()) + " does not match user view width " +
                      std::to_string(views.prefer.cols()));
  }
  Var transposed = ad::transpose(candidates);
  Var prefer = ad::matmul(views.prefer, transposed);
  if (!multi_view()) return prefer;
  Var dislike = ad::matmul(views.dislike, transposed);
  return ad::add(ad::scale_by(prefer, tape.parameter(params_, kW1Param)),
                 ad::scale_by(dislike, tape.parameter(params_, kW2Param)));
}

Tensor Model::item_embedding_values(const ModelInputs& inputs) {
  ad::Tape tape;
  return item_embeddings(tape, inputs, false, 0).value();
}

UserVectors Model::user_vectors(const Tensor& items, const data::UserHistory& history,
                                const std::vector<std::string>* item_ids) {
  ad::Tape tape;
  user::UserViews views = user_views(tape, tape.constant(items), history, false, 0, item_ids);
  UserVectors out;
  out.prefer = views.prefer.value();
  out.prefer_attention = std::move(views.prefer_attention);
  if (multi_view()) {
    out.dislike = views.dislike.value();
    out.dislike_attention = std::move(views.dislike_attention);
  }
  return out;
}

double Model::score(const Tensor& items, std::size_t item, const UserVectors& user) const {
  const auto c = items.row(item);
  double prefer = 0.0;
  for (std::size_t k = 0; k < c.size(); ++k) prefer += c[k] * user.prefer[k];
  if (!multi_view()) return prefer;
  double dislike = 0.0;
  for (std::size_t k = 0; k < c.size(); ++k) dislike += c[k] * user.dislike[k];
  return w1() * prefer + w2() * dislike;
}

}  // namespace crmman

#include "crmman/structural_encoder.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "crmman/errors.hpp"
#include "crmman/optimizer.hpp"
#include "crmman/random.hpp"

namespace crmman::structural {

using ad::Tensor;
using ad::Var;

InitMethod init_method_from_string(const std::string& name) {
  if (name == "sdne_lite") return InitMethod::sdne_lite;
  if (name == "spectral") return InitMethod::spectral;
  if (name == "seeded_random") return InitMethod::seeded_random;
  throw ConfigError("unknown node init method '" + name + "'");
}

const char* to_string(InitMethod method) {
  switch (method) {
    case InitMethod::sdne_lite: return "sdne_lite";
    case InitMethod::spectral: return "spectral";
    case InitMethod::seeded_random: return "seeded_random";
  }
  return "?";
}

namespace {

Tensor seeded_random_init(std::size_t m, std::size_t d_k, std::uint64_t seed) {
  Rng rng = make_rng(seed, "seeded_random");
  Tensor p = Tensor::matrix(m, d_k);
  const double s = 1.0 / std::sqrt(static_cast<double>(d_k));
  for (double& v : p.values()) v = standard_normal(rng) * s;
  return p;
}

Tensor spectral_init(const kg::ItemGraph& graph, std::size_t d_k) {
  const std::size_t m = graph.node_count();
  if (d_k > m) {
    throw ConfigError("spectral init: d_k = " + std::to_string(d_k) + " exceeds node count " + std::to_string(m));
  }
  const auto n = static_cast<Eigen::Index>(m);
  Eigen::MatrixXd s = Eigen::MatrixXd::Identity(n, n);
  for (const auto& [i, j] : graph.edges()) {
    s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 1.0;
    s(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = 1.0;
  }
  Eigen::VectorXd inv_sqrt_deg(n);
  for (Eigen::Index i = 0; i < n; ++i) inv_sqrt_deg(i) = 1.0 / std::sqrt(s.row(i).sum());
  s = inv_sqrt_deg.asDiagonal() * s * inv_sqrt_deg.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(s);
  const Eigen::MatrixXd& vectors = solver.eigenvectors();  // ascending eigenvalues

  Tensor p = Tensor::matrix(m, d_k);
  const double scale = std::sqrt(static_cast<double>(m));
  for (std::size_t c = 0; c < d_k; ++c) {
    const Eigen::Index col = n - 1 - static_cast<Eigen::Index>(c);
    Eigen::Index arg = 0;
    vectors.col(col).cwiseAbs().maxCoeff(&arg);
    const double sign = vectors(arg, col) < 0.0 ? -1.0 : 1.0;
    for (std::size_t r = 0; r < m; ++r) p(r, c) = sign * scale * vectors(static_cast<Eigen::Index>(r), col);
  }
  return p;
}

Tensor sdne_lite_init(const kg::ItemGraph& graph, std::size_t d_k, std::uint64_t seed, const SdneConfig& cfg) {
  const std::size_t m = graph.node_count();
  Tensor adjacency = Tensor::matrix(m, m);
  Tensor weights = Tensor::matrix(m, m, 1.0);
  Tensor laplacian = Tensor::matrix(m, m);
  for (const auto& [i, j] : graph.edges()) {
    adjacency(i, j) = adjacency(j, i) = 1.0;
    weights(i, j) = weights(j, i) = cfg.edge_weight;
    laplacian(i, j) = laplacian(j, i) = -1.0;
    laplacian(i, i) += 1.0;
    laplacian(j, j) += 1.0;
  }

  ad::ParameterStore store;
  const auto w1 = store.add("encoder.W", ad::glorot_uniform(m, d_k, derive_seed(seed, "sdne.encoder")));
  const auto b1 = store.add("encoder.b", Tensor::matrix(1, d_k));
  const auto w2 = store.add("decoder.W", ad::glorot_uniform(d_k, m, derive_seed(seed, "sdne.decoder")));
  const auto b2 = store.add("decoder.b", Tensor::matrix(1, m));
  AdamState state = AdamState::for_params(store);
  const AdamConfig adam{cfg.learning_rate};

  auto hidden = [&](ad::Tape& tape) {
    Var x = tape.constant(adjacency);
    return ad::tanh(ad::add_row_bias(ad::matmul(x, tape.parameter(store, w1)), tape.parameter(store, b1)));
  };
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    ad::Tape tape;
    Var y = hidden(tape);
    Var recon = ad::sigmoid(ad::add_row_bias(ad::matmul(y, tape.parameter(store, w2)), tape.parameter(store, b2)));
    Var err = ad::hadamard(ad::sub(recon, tape.constant(adjacency)), tape.constant(weights));
    Var second_order = ad::sum(ad::square(err));
    Var first_order = ad::sum(ad::hadamard(y, ad::matmul(tape.constant(laplacian), y)));
    Var loss = ad::add(second_order, ad::scale(first_order, cfg.proximity_weight));
    adam_step(store, tape.backward(loss), state, adam);
  }
  ad::Tape tape;
  return hidden(tape).value();
}

}  // namespace

Tensor init_nodes(const kg::ItemGraph& graph, std::size_t d_k, InitMethod method, std::uint64_t seed,
                  const SdneConfig& sdne) {
  if (d_k == 0) throw ConfigError("init_nodes: d_k must be at least 1");
  if (graph.node_count() == 0) throw ConfigError("init_nodes: graph has no nodes");
  switch (method) {
    case InitMethod::seeded_random: return seeded_random_init(graph.node_count(), d_k, seed);
    case InitMethod::spectral: return spectral_init(graph, d_k);
    case InitMethod::sdne_lite: return sdne_lite_init(graph, d_k, seed, sdne);
  }
  throw ConfigError("init_nodes: unknown method");
}

Neighborhoods Neighborhoods::from_graph(const kg::ItemGraph& graph) {
  Neighborhoods h;
  for (std::size_t n = 0; n < graph.node_count(); ++n) {
    const auto nb = graph.neighbors(n);
    if (nb.empty()) {
      h.nodes.push_back(n);
    } else {
      h.nodes.insert(h.nodes.end(), nb.begin(), nb.end());
    }
    h.offsets.push_back(h.nodes.size());
  }
  return h;
}

std::string GatLayerSpec::weight_name(std::size_t head) const {
  return prefix + ".head" + std::to_string(head) + ".W";
}

std::string GatLayerSpec::attention_name(std::size_t head) const {
  return prefix + ".head" + std::to_string(head) + ".a";
}

void add_gat_params(ad::ParameterStore& store, const GatLayerSpec& spec, std::uint64_t seed) {
  if (spec.heads == 0 || spec.d_in == 0 || spec.d_out == 0) {
    throw ConfigError("GAT layer " + spec.prefix + ": heads and dimensions must be positive");
  }
  for (std::size_t k = 0; k < spec.heads; ++k) {
    store.add(spec.weight_name(k), ad::glorot_uniform(spec.d_out, spec.d_in, derive_seed(seed, spec.weight_name(k))));
    store.add(spec.attention_name(k), ad::glorot_uniform(1, 2 * spec.d_out, derive_seed(seed, spec.attention_name(k))));
  }
}

namespace {

struct AttentionScores {
  std::vector<double> pre;    // a^T [h_i || h_j] per CSR entry
  std::vector<double> alpha;  // softmax over each neighborhood
};

AttentionScores attention_scores(const Tensor& h, std::span<const double> a, const Neighborhoods& hoods,
                                 double slope) {
  const std::size_t m = h.rows(), d = h.cols();
  if (a.size() != 2 * d) {
    throw DimensionError("GAT attention vector has " + std::to_string(a.size()) + " entries, expected " +
                         std::to_string(2 * d));
  }
  if (hoods.node_count() != m) throw DimensionError("GAT neighborhoods do not match feature rows");
  std::vector<double> self_score(m, 0.0), neighbor_score(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const auto row = h.row(i);
    for (std::size_t c = 0; c < d; ++c) {
      self_score[i] += a[c] * row[c];
      neighbor_score[i] += a[d + c] * row[c];
    }
  }
  AttentionScores out;
  out.pre.resize(hoods.nodes.size());
  out.alpha.resize(hoods.nodes.size());
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t begin = hoods.offsets[i], end = hoods.offsets[i + 1];
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = begin; k < end; ++k) {
      out.pre[k] = self_score[i] + neighbor_score[hoods.nodes[k]];
      const double e = out.pre[k] >= 0.0 ? out.pre[k] : slope * out.pre[k];
      out.alpha[k] = e;
      mx = std::max(mx, e);
    }
    double total = 0.0;
    for (std::size_t k = begin; k < end; ++k) {
      out.alpha[k] = std::exp(out.alpha[k] - mx);
      total += out.alpha[k];
    }
    for (std::size_t k = begin; k < end; ++k) out.alpha[k] /= total;
  }
  return out;
}

}  // namespace

std::vector<double> gat_attention(const Tensor& transformed, std::span<const double> attention,
                                  const Neighborhoods& hoods, std::size_t node, double slope) {
  if (node >= hoods.node_count()) throw UsageError("gat_attention: node out of range");
  const auto scores = attention_scores(transformed, attention, hoods, slope);
  return {scores.alpha.begin() + static_cast<std::ptrdiff_t>(hoods.offsets[node]),
          scores.alpha.begin() + static_cast<std::ptrdiff_t>(hoods.offsets[node + 1])};
}

Var gat_aggregate(Var transformed, Var attention, const Neighborhoods& hoods, const GatOptions& options,
                  std::vector<double>* alpha_out) {
  if (!(options.slope > 0.0 && options.slope < 1.0)) {
    throw ConfigError("GAT LeakyReLU slope must lie in (0, 1)");
  }
  const Tensor& h = transformed.value();
  AttentionScores scores = attention_scores(h, attention.value().values(), hoods, options.slope);
  if (alpha_out) *alpha_out = scores.alpha;

  std::vector<double> mask(hoods.nodes.size(), 1.0);
  if (options.training && options.dropout > 0.0) mask = ad::dropout_mask(mask.size(), options.dropout, options.seed);
  else ad::dropout_mask(0, options.dropout, 0);  // validates the rate

  const std::size_t m = h.rows(), d = h.cols();
  Tensor out = Tensor::matrix(m, d);
  for (std::size_t i = 0; i < m; ++i) {
    auto orow = out.row(i);
    for (std::size_t k = hoods.offsets[i]; k < hoods.offsets[i + 1]; ++k) {
      const double w = scores.alpha[k] * mask[k];
      if (w == 0.0) continue;
      const auto hrow = h.row(hoods.nodes[k]);
      for (std::size_t c = 0; c < d; ++c) orow[c] += w * hrow[c];
    }
  }

  return transformed.tape->record(
      std::move(out), {transformed.id, attention.id},
      [hid = transformed.id, aid = attention.id, &hoods, scores = std::move(scores), mask = std::move(mask),
       slope = options.slope](ad::Tape& t, ad::NodeId self) {
        const Tensor& g = t.grad(self);
        const Tensor& h = t.value(hid);
        const auto a = t.value(aid).values();
        const std::size_t m = h.rows(), d = h.cols();
        Tensor dh = Tensor::matrix(m, d);
        std::vector<double> d_self(m, 0.0), d_neighbor(m, 0.0);
        std::vector<double> d_alpha(hoods.nodes.size(), 0.0);
        for (std::size_t i = 0; i < m; ++i) {
          const auto grow = g.row(i);
          const std::size_t begin = hoods.offsets[i], end = hoods.offsets[i + 1];
          double weighted = 0.0;
          for (std::size_t k = begin; k < end; ++k) {
            const std::size_t j = hoods.nodes[k];
            const auto hrow = h.row(j);
            const double w = scores.alpha[k] * mask[k];
            auto dhrow = dh.row(j);
            double dot = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
              dhrow[c] += w * grow[c];
              dot += grow[c] * hrow[c];
            }
            d_alpha[k] = mask[k] * dot;
            weighted += scores.alpha[k] * d_alpha[k];
          }
          for (std::size_t k = begin; k < end; ++k) {
            const double de = scores.alpha[k] * (d_alpha[k] - weighted);
            const double dpre = de * (scores.pre[k] >= 0.0 ? 1.0 : slope);
            d_self[i] += dpre;
            d_neighbor[hoods.nodes[k]] += dpre;
          }
        }
        if (t.requires_grad(hid)) {
          for (std::size_t i = 0; i < m; ++i) {
            auto dhrow = dh.row(i);
            for (std::size_t c = 0; c < d; ++c) dhrow[c] += d_self[i] * a[c] + d_neighbor[i] * a[d + c];
          }
          t.grad(hid) += dh;
        }
        if (t.requires_grad(aid)) {
          Tensor& ga = t.grad(aid);
          for (std::size_t i = 0; i < m; ++i) {
            const auto hrow = h.row(i);
            for (std::size_t c = 0; c < d; ++c) {
              ga[c] += d_self[i] * hrow[c];
              ga[d + c] += d_neighbor[i] * hrow[c];
            }
          }
        }
      });
}

Var gat_layer(ad::Tape& tape, ad::ParameterStore& store, Var input, const GatLayerSpec& spec,
              const Neighborhoods& hoods, const GatOptions& options, LayerAttention* attention_out) {
  if (input.cols() != spec.d_in) {
    throw DimensionError("GAT layer " + spec.prefix + " expects " + std::to_string(spec.d_in) +
                         " input features, got " + ad::shape_string(input.shape()));
  }
  if (attention_out) attention_out->assign(spec.heads, {});
  std::vector<Var> heads;
  for (std::size_t k = 0; k < spec.heads; ++k) {
    Var w = tape.parameter(store, spec.weight_name(k));
    Var a = tape.parameter(store, spec.attention_name(k));
    Var transformed = ad::matmul(input, ad::transpose(w));
    GatOptions head_options = options;
    head_options.seed = derive_seed(options.seed, spec.prefix, k);
    heads.push_back(gat_aggregate(transformed, a, hoods, head_options, attention_out ? &(*attention_out)[k] : nullptr));
  }
  if (spec.mode == HeadMode::concatenate) {
    for (Var& h : heads) h = ad::elu(h);
    return heads.size() == 1 ? heads.front() : ad::concat_cols(heads);
  }
  Var total = heads.front();
  for (std::size_t k = 1; k < heads.size(); ++k) total = ad::add(total, heads[k]);
  return ad::elu(ad::scale(total, 1.0 / static_cast<double>(spec.heads)));
}

GatLayerSpec StructuralConfig::layer1() const {
  return {"gat1", layer1_heads, d_k, layer1_head_dim, HeadMode::concatenate};
}

GatLayerSpec StructuralConfig::layer2() const {
  return {"gat2", layer2_heads, layer1_heads * layer1_head_dim, output_dim, HeadMode::average};
}

void add_structural_params(ad::ParameterStore& store, const StructuralConfig& config, std::uint64_t seed) {
  for (const auto& spec : {config.layer1(), config.layer2()}) {
    const std::size_t first = store.size();
    add_gat_params(store, spec, seed);
    if (config.freeze) {
      for (ad::ParamId id = first; id < store.size(); ++id) store.set_trainable(id, false);
    }
  }
}

Var encode_structural(ad::Tape& tape, ad::ParameterStore& store, Var init_vectors, const Neighborhoods& hoods,
                      const StructuralConfig& config, bool training, std::uint64_t seed) {
  GatOptions options{config.slope, config.dropout, training, derive_seed(seed, "gat")};
  Var hidden = gat_layer(tape, store, init_vectors, config.layer1(), hoods, options);
  return gat_layer(tape, store, hidden, config.layer2(), hoods, options);
}

Tensor encode_structural(const kg::ItemGraph& graph, const StructuralConfig& config, std::uint64_t seed) {
  Tensor init = init_nodes(graph, config.d_k, config.init, derive_seed(seed, "init"), config.sdne);
  ad::ParameterStore store;
  add_structural_params(store, config, derive_seed(seed, "params"));
  const Neighborhoods hoods = Neighborhoods::from_graph(graph);
  ad::Tape tape;
  return encode_structural(tape, store, tape.constant(std::move(init)), hoods, config, false, seed).value();
}

}  // namespace crmman::structural

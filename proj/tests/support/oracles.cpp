#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "crmman/user_model.hpp"

namespace oracle {

using crmman::ad::Tensor;

Matrix to_matrix(const Tensor& t) {
  Matrix m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t(r, c);
  return m;
}

Tensor random_tensor(std::size_t rows, std::size_t cols, crmman::Rng& rng, double lo, double hi) {
  Tensor t = Tensor::matrix(rows, cols);
  for (double& v : t.values()) v = lo + (hi - lo) * crmman::uniform01(rng);
  return t;
}

double max_abs_diff(const Matrix& a, const Tensor& b) {
  if (a.size() != b.rows()) return INFINITY;
  double worst = 0.0;
  for (std::size_t r = 0; r < a.size(); ++r) {
    if (a[r].size() != b.cols()) return INFINITY;
    for (std::size_t c = 0; c < a[r].size(); ++c) worst = std::max(worst, std::abs(a[r][c] - b(r, c)));
  }
  return worst;
}

namespace {

double leaky(double x, double slope) { return x > 0.0 ? x : slope * x; }
double elu(double x) { return x > 0.0 ? x : std::exp(x) - 1.0; }

std::vector<double> softmax(const std::vector<double>& x) {
  double top = -INFINITY;
  for (double v : x) top = std::max(top, v);
  std::vector<double> out(x.size());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) total += out[i] = std::exp(x[i] - top);
  for (double& v : out) v /= total;
  return out;
}

std::vector<double> apply(const Matrix& w, const std::vector<double>& x) {
  std::vector<double> out(w.size(), 0.0);
  for (std::size_t r = 0; r < w.size(); ++r)
    for (std::size_t c = 0; c < x.size(); ++c) out[r] += w[r][c] * x[c];
  return out;
}

/// Row vector times matrix: x^T M.
std::vector<double> right_apply(const std::vector<double>& x, const Matrix& m) {
  std::vector<double> out(m.empty() ? 0 : m[0].size(), 0.0);
  for (std::size_t r = 0; r < m.size(); ++r)
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += x[r] * m[r][c];
  return out;
}

}  // namespace

std::vector<std::size_t> neighborhood(const crmman::kg::ItemGraph& graph, std::size_t node) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < graph.node_count(); ++j) {
    if (graph.has_edge(node, j)) out.push_back(j);
  }
  if (out.empty()) out.push_back(node);
  return out;
}

std::vector<double> gat_weights(const Matrix& features, const GatHead& head, const crmman::kg::ItemGraph& graph,
                                std::size_t node, double slope) {
  const std::size_t d = head.weight.size();
  const auto hi = apply(head.weight, features[node]);
  std::vector<double> logits;
  for (std::size_t j : neighborhood(graph, node)) {
    const auto hj = apply(head.weight, features[j]);
    double e = 0.0;
    for (std::size_t c = 0; c < d; ++c) e += head.attention[c] * hi[c] + head.attention[d + c] * hj[c];
    logits.push_back(leaky(e, slope));
  }
  return softmax(logits);
}

Matrix gat_layer(const Matrix& features, const std::vector<GatHead>& heads, const crmman::kg::ItemGraph& graph,
                 double slope, bool concatenate) {
  const std::size_t n = features.size();
  const std::size_t d = heads.front().weight.size();
  Matrix out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto hood = neighborhood(graph, i);
    std::vector<double> mean(d, 0.0);
    for (const auto& head : heads) {
      const auto alpha = gat_weights(features, head, graph, i, slope);
      std::vector<double> agg(d, 0.0);
      for (std::size_t k = 0; k < hood.size(); ++k) {
        const auto hj = apply(head.weight, features[hood[k]]);
        for (std::size_t c = 0; c < d; ++c) agg[c] += alpha[k] * hj[c];
      }
      if (concatenate) {
        for (double v : agg) out[i].push_back(elu(v));
      } else {
        for (std::size_t c = 0; c < d; ++c) mean[c] += agg[c] / static_cast<double>(heads.size());
      }
    }
    if (!concatenate) {
      for (double v : mean) out[i].push_back(elu(v));
    }
  }
  return out;
}

std::vector<GatHead> gat_heads(const crmman::ad::ParameterStore& store, const std::string& prefix, std::size_t heads) {
  std::vector<GatHead> out;
  crmman::structural::GatLayerSpec spec{prefix, heads};
  for (std::size_t k = 0; k < heads; ++k) {
    GatHead h;
    h.weight = to_matrix(store.value(spec.weight_name(k)));
    const Tensor& a = store.value(spec.attention_name(k));
    h.attention.assign(a.values().begin(), a.values().end());
    out.push_back(std::move(h));
  }
  return out;
}

SelfAttentionOutput self_attention(const Matrix& rows, const std::vector<AttentionHead>& heads, const Matrix& out_map) {
  const std::size_t z = rows.size();
  const std::size_t d_hide = heads.front().query.front().size();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d_hide));
  SelfAttentionOutput result;
  Matrix joined(z);
  for (const auto& head : heads) {
    Matrix q(z), k(z), v(z);
    for (std::size_t i = 0; i < z; ++i) {
      q[i] = right_apply(rows[i], head.query);
      k[i] = right_apply(rows[i], head.key);
      v[i] = right_apply(rows[i], head.value);
    }
    Matrix beta(z);
    for (std::size_t i = 0; i < z; ++i) {
      std::vector<double> logits(z, 0.0);
      for (std::size_t j = 0; j < z; ++j) {
        for (std::size_t c = 0; c < d_hide; ++c) logits[j] += q[i][c] * k[j][c];
        logits[j] *= inv_sqrt;
      }
      beta[i] = softmax(logits);
      for (std::size_t c = 0; c < d_hide; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < z; ++j) acc += beta[i][j] * v[j][c];
        joined[i].push_back(acc);
      }
    }
    result.weights.push_back(std::move(beta));
  }
  for (std::size_t i = 0; i < z; ++i) result.output.push_back(right_apply(joined[i], out_map));
  return result;
}

std::vector<AttentionHead> attention_heads(const crmman::ad::ParameterStore& store, const std::string& prefix,
                                           std::size_t heads) {
  crmman::user::SelfAttentionSpec spec{prefix, 0, heads};
  std::vector<AttentionHead> out;
  for (std::size_t x = 0; x < heads; ++x) {
    out.push_back({to_matrix(store.value(spec.query_name(x))), to_matrix(store.value(spec.key_name(x))),
                   to_matrix(store.value(spec.value_name(x)))});
  }
  return out;
}

std::set<std::pair<std::size_t, std::size_t>> brute_force_edges(const std::vector<crmman::kg::Triple>& triples,
                                                                const std::vector<std::string>& item_ids,
                                                                std::size_t threshold) {
  std::vector<std::set<std::string>> entities(item_ids.size());
  for (std::size_t i = 0; i < item_ids.size(); ++i) {
    for (const auto& t : triples) {
      if (t.text || t.head == t.tail) continue;
      if (t.head == item_ids[i]) entities[i].insert(t.tail);
      if (t.tail == item_ids[i]) entities[i].insert(t.head);
    }
  }
  std::set<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i < item_ids.size(); ++i) {
    for (std::size_t j = i + 1; j < item_ids.size(); ++j) {
      std::size_t shared = 0;
      for (const auto& e : entities[i]) shared += entities[j].count(e);
      if (shared > threshold) edges.insert({i, j});
    }
  }
  return edges;
}

double pairwise_auc(const std::vector<crmman::eval::ScoredLabel>& samples) {
  double wins = 0.0;
  double pairs = 0.0;
  for (const auto& p : samples) {
    if (p.label != 1) continue;
    for (const auto& n : samples) {
      if (n.label != 0) continue;
      pairs += 1.0;
      if (p.score > n.score) {
        wins += 1.0;
      } else if (p.score == n.score) {
        wins += 0.5;
      }
    }
  }
  return wins / pairs;
}

double ndcg_formula(const std::vector<crmman::eval::RankedItem>& items, std::size_t k) {
  std::vector<crmman::eval::RankedItem> ranked = items;
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.item < b.item;
  });
  std::size_t positives = 0;
  for (const auto& r : items) positives += r.label == 1;
  if (positives == 0) return -1.0;
  double dcg = 0.0;
  double idcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) {
    const double discount = 1.0 / std::log2(static_cast<double>(i) + 2.0);
    if (ranked[i].label == 1) dcg += discount;
    if (i < positives) idcg += discount;
  }
  return dcg / idcg;
}

GradientCheck check_gradients(crmman::ad::ParameterStore& store, const crmman::ad::Gradients& analytic,
                              const std::function<double()>& loss, double step, double rel_tol, double abs_floor) {
  GradientCheck result;
  for (crmman::ad::ParamId id = 0; id < store.size(); ++id) {
    if (!store.trainable(id)) continue;
    Tensor& value = store.value(id);
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + step;
      const double up = loss();
      value[i] = saved - step;
      const double down = loss();
      value[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double exact = analytic[id][i];
      const double err = std::abs(numeric - exact);
      const double rel = err / std::max(std::abs(numeric), std::abs(exact));
      ++result.checked;
      result.worst_absolute = std::max(result.worst_absolute, err);
      if (std::max(std::abs(numeric), std::abs(exact)) <= abs_floor) continue;
      ++result.nonzero;
      if (rel > result.worst_relative) {
        result.worst_relative = rel;
        result.worst_entry = store.name(id) + "[" + std::to_string(i) + "] analytic=" + std::to_string(exact) +
                             " numeric=" + std::to_string(numeric);
      }
      if (err > abs_floor && rel > rel_tol) ++result.failures;
    }
  }
  return result;
}

ToyModel make_toy_model(std::uint64_t seed) {
  ToyModel toy;
  const std::vector<std::vector<double>> ratings{{5, 4, 1, 2, 5, 1, 3, 4}, {1, 2, 5, 4, 2, 5, 4, 1}};
  std::vector<crmman::data::RatingRecord> records;
  for (std::size_t u = 0; u < ratings.size(); ++u) {
    for (std::size_t i = 0; i < ratings[u].size(); ++i) {
      records.push_back({"u" + std::to_string(u), "i" + std::to_string(i), ratings[u][i]});
    }
  }
  toy.dataset = crmman::data::binarize(records, 1);
  toy.graph = crmman::kg::ItemGraph(8, {{0, 1}, {1, 2}, {2, 3}, {0, 3}, {4, 5}, {5, 6}, {0, 4}});

  const std::vector<std::string> words{"red", "blue", "green", "dark", "quiet", "loud", "slow", "fast"};
  std::map<std::string, std::string> texts;
  for (std::size_t i = 0; i < 8; ++i) {
    texts[toy.dataset.item_ids[i]] = words[i] + " " + words[(i + 3) % 8] + " " + words[(i * 5) % 8];
  }

  auto& c = toy.config;
  c.semantic.kind = crmman::semantic::EncoderKind::hashed_bow;
  c.semantic.text_length = 6;
  c.semantic.d_e = 4;
  c.semantic.buckets = 16;
  c.semantic.d_h = 8;
  c.structural.init = crmman::structural::InitMethod::sdne_lite;
  c.structural.sdne.epochs = 20;
  c.structural.d_k = 4;
  c.structural.layer1_heads = 2;
  c.structural.layer1_head_dim = 3;
  c.structural.layer2_heads = 1;
  c.structural.output_dim = 8;
  c.structural.dropout = 0.4;
  c.user.heads = 2;
  c.user.dropout = 0.3;
  c.validate();

  toy.inputs = crmman::make_model_inputs(toy.dataset.item_ids, toy.graph, texts, c, seed);
  toy.histories = crmman::data::build_histories(toy.dataset, 2, crmman::derive_seed(seed, "history"));
  const auto batches = crmman::data::sample_training_batches(toy.dataset, toy.histories, 2, 64,
                                                             crmman::derive_seed(seed, "batches"));
  for (const auto& b : batches) toy.batch.insert(toy.batch.end(), b.begin(), b.end());
  return toy;
}

}  // namespace oracle

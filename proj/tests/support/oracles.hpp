#pragma once

// Independent reference implementations used by the unit tests and the
// acceptance runner. Nothing here calls the vectorized code paths it checks.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "crmman/autodiff.hpp"
#include "crmman/data_pipeline.hpp"
#include "crmman/evaluation.hpp"
#include "crmman/kg_structural.hpp"
#include "crmman/model.hpp"
#include "crmman/random.hpp"

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

Matrix to_matrix(const crmman::ad::Tensor& t);
crmman::ad::Tensor random_tensor(std::size_t rows, std::size_t cols, crmman::Rng& rng, double lo = -2.0,
                                 double hi = 2.0);
double max_abs_diff(const Matrix& a, const crmman::ad::Tensor& b);

// Graph attention ------------------------------------------------------------

struct GatHead {
  Matrix weight;     // d_out x d_in
  std::vector<double> attention;  // 2 * d_out
};

/// Neighbors of `node`, or the node itself when isolated.
std::vector<std::size_t> neighborhood(const crmman::kg::ItemGraph& graph, std::size_t node);

/// alpha_ij over the neighborhood of `node` for one head.
std::vector<double> gat_weights(const Matrix& features, const GatHead& head, const crmman::kg::ItemGraph& graph,
                                std::size_t node, double slope);

/// One GAT layer by explicit loops; `concatenate` selects the head mode.
Matrix gat_layer(const Matrix& features, const std::vector<GatHead>& heads, const crmman::kg::ItemGraph& graph,
                 double slope, bool concatenate);

/// Reads a layer's heads out of a parameter store.
std::vector<GatHead> gat_heads(const crmman::ad::ParameterStore& store, const std::string& prefix, std::size_t heads);

// Self-attention ---------------------------------------------------------------

struct AttentionHead {
  Matrix query, key, value;  // d_cat x d_hide each
};

struct SelfAttentionOutput {
  Matrix output;               // z x d_cat
  std::vector<Matrix> weights;  // per head z x z
};

SelfAttentionOutput self_attention(const Matrix& rows, const std::vector<AttentionHead>& heads, const Matrix& out_map);

std::vector<AttentionHead> attention_heads(const crmman::ad::ParameterStore& store, const std::string& prefix,
                                           std::size_t heads);

// Co-item graph ------------------------------------------------------------------

/// All-pairs |N_i ∩ N_j| > threshold with explicit entity sets.
std::set<std::pair<std::size_t, std::size_t>> brute_force_edges(const std::vector<crmman::kg::Triple>& triples,
                                                                const std::vector<std::string>& item_ids,
                                                                std::size_t threshold);

// Metrics ----------------------------------------------------------------------

/// O(n^2) pair counting with ties worth one half.
double pairwise_auc(const std::vector<crmman::eval::ScoredLabel>& samples);

/// DCG / IDCG with binary gains, sorting by descending score and ascending
/// item index; -1 without positives.
double ndcg_formula(const std::vector<crmman::eval::RankedItem>& items, std::size_t k);

// Finite differences -------------------------------------------------------------

struct GradientCheck {
  std::size_t checked = 0;
  std::size_t failures = 0;
  std::size_t nonzero = 0;  // entries whose gradient exceeds the absolute floor
  double worst_relative = 0.0;
  double worst_absolute = 0.0;
  std::string worst_entry;
};

/// Compares `analytic` against central differences of `loss` for every
/// scalar of every trainable tensor in `store`. An entry passes when its
/// absolute error is at most `abs_floor` or its relative error at most `rel_tol`.
GradientCheck check_gradients(crmman::ad::ParameterStore& store, const crmman::ad::Gradients& analytic,
                              const std::function<double()>& loss, double step = 1e-5, double rel_tol = 1e-4,
                              double abs_floor = 1e-7);

// Toy model ------------------------------------------------------------------------

/// Two users, eight items, d_cat 16, two self-attention heads, GAT heads 2 then 1.
struct ToyModel {
  crmman::data::InteractionDataset dataset;
  crmman::kg::ItemGraph graph;
  crmman::ModelConfig config;
  crmman::ModelInputs inputs;
  crmman::data::HistorySet histories;
  std::vector<crmman::data::TrainExample> batch;
};

ToyModel make_toy_model(std::uint64_t seed);

}  // namespace oracle

#pragma once

// Structural item embeddings: node initialization on the co-item graph
// followed by two multi-head graph-attention layers, the first
// concatenating its heads and the second averaging them.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "crmman/autodiff.hpp"
#include "crmman/kg_structural.hpp"

namespace crmman::structural {

enum class InitMethod { sdne_lite, spectral, seeded_random };

InitMethod init_method_from_string(const std::string& name);
const char* to_string(InitMethod method);

struct SdneConfig {
  std::size_t epochs = 200;
  double learning_rate = 0.01;
  /// Weight of reconstruction errors on observed edges relative to non-edges.
  double edge_weight = 5.0;
  /// Weight of the first-order proximity term (sum of squared distances
  /// between embeddings of linked nodes).
  double proximity_weight = 0.05;
};

/// M x d_k initialization vectors, deterministic under `seed`.
///   sdne_lite: tanh hidden layer of an autoencoder over adjacency rows
///   trained with a first-order proximity penalty.
///   spectral: leading eigenvectors of the self-loop normalized adjacency,
///   scaled by sqrt(M). Requires d_k <= M.
///   seeded_random: N(0, 1) / sqrt(d_k).
ad::Tensor init_nodes(const kg::ItemGraph& graph, std::size_t d_k, InitMethod method, std::uint64_t seed,
                      const SdneConfig& sdne = {});

/// Attention neighborhoods in CSR form: a node's graph neighbors, or the
/// node itself when it has none.
struct Neighborhoods {
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> nodes;

  static Neighborhoods from_graph(const kg::ItemGraph& graph);
  std::size_t node_count() const { return offsets.size() - 1; }
  std::span<const std::size_t> of(std::size_t node) const {
    return std::span(nodes).subspan(offsets[node], offsets[node + 1] - offsets[node]);
  }
};

enum class HeadMode { concatenate, average };

struct GatLayerSpec {
  std::string prefix;  // parameter name prefix, e.g. "gat1"
  std::size_t heads = 1;
  std::size_t d_in = 0;
  std::size_t d_out = 0;  // per head
  HeadMode mode = HeadMode::concatenate;

  std::size_t output_dim() const { return mode == HeadMode::concatenate ? heads * d_out : d_out; }
  std::string weight_name(std::size_t head) const;     // d_out x d_in
  std::string attention_name(std::size_t head) const;  // 1 x 2*d_out
};

/// Glorot-uniform initialization of every head's W and a.
void add_gat_params(ad::ParameterStore& store, const GatLayerSpec& spec, std::uint64_t seed);

/// Attention weights of `node` over its neighborhood for one head, given
/// the transformed features H = P W^T (one row per node) and the attention
/// vector a = [a_self | a_neighbor]:
///   alpha_ij = softmax_j LeakyReLU(a^T [h_i || h_j]).
std::vector<double> gat_attention(const ad::Tensor& transformed, std::span<const double> attention,
                                  const Neighborhoods& hoods, std::size_t node, double slope);

struct GatOptions {
  double slope = 0.2;
  double dropout = 0.0;  // applied to attention weights
  bool training = false;
  std::uint64_t seed = 0;
};

/// Recorded single-head aggregation out_i = sum_j alpha_ij h_j. If
/// `alpha_out` is given it receives the (pre-dropout) weights in CSR order.
ad::Var gat_aggregate(ad::Var transformed, ad::Var attention, const Neighborhoods& hoods,
                      const GatOptions& options, std::vector<double>* alpha_out = nullptr);

/// Per-head attention weights of one layer, CSR order, for inspection.
using LayerAttention = std::vector<std::vector<double>>;

/// concatenate: p'_i = ||_k ELU(sum_j alpha^k_ij W^k p_j)
/// average:     p''_i = ELU(mean_k sum_j alpha^k_ij W^k p_j)
ad::Var gat_layer(ad::Tape& tape, ad::ParameterStore& store, ad::Var input, const GatLayerSpec& spec,
                  const Neighborhoods& hoods, const GatOptions& options, LayerAttention* attention_out = nullptr);

struct StructuralConfig {
  InitMethod init = InitMethod::sdne_lite;
  std::size_t d_k = 256;
  std::size_t layer1_heads = 12;
  std::size_t layer1_head_dim = 32;
  std::size_t layer2_heads = 2;
  std::size_t output_dim = 256;
  double slope = 0.2;
  double dropout = 0.4;
  /// Exclude the attention layers from optimization.
  bool freeze = false;
  SdneConfig sdne;

  GatLayerSpec layer1() const;
  GatLayerSpec layer2() const;
};

void add_structural_params(ad::ParameterStore& store, const StructuralConfig& config, std::uint64_t seed);

/// init vectors -> concatenate layer -> average layer.
ad::Var encode_structural(ad::Tape& tape, ad::ParameterStore& store, ad::Var init_vectors,
                          const Neighborhoods& hoods, const StructuralConfig& config, bool training,
                          std::uint64_t seed);

/// Self-contained evaluation-mode pass: initializes vectors and parameters
/// from `seed` and returns P'' (M x output_dim).
ad::Tensor encode_structural(const kg::ItemGraph& graph, const StructuralConfig& config, std::uint64_t seed);

}  // namespace crmman::structural

#pragma once

// Planted synthetic datasets. Items carry binary prefer and dislike
// attributes; users carry a taste vector over the prefer attributes and a
// nonnegative aversion vector over the dislike attributes. Half of each
// attribute group is visible only in the item text, the other half only
// through knowledge-graph entities.

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "crmman/autodiff.hpp"
#include "crmman/data_pipeline.hpp"
#include "crmman/kg_structural.hpp"

namespace crmman::synth {

struct SyntheticSpec {
  std::size_t users = 200;
  std::size_t items = 100;
  std::size_t prefer_dim = 4;
  std::size_t dislike_dim = 4;
  /// Standard deviation of the Gaussian noise added to each affinity.
  double noise = 0.3;
  /// Probability that a user has interacted with a given item.
  double interaction_rate = 0.5;
  double prefer_attribute_rate = 0.5;
  double dislike_attribute_rate = 0.3;
  std::size_t filler_words = 4;
  /// Co-item threshold: items are linked when they agree on more than this
  /// many KG-visible attributes.
  std::size_t threshold = 2;
  std::uint64_t seed = 7;

  void validate() const;
};

struct SyntheticData {
  std::vector<data::RatingRecord> ratings;
  std::vector<kg::Triple> triples;
  std::map<std::string, std::string> texts;
  /// Binarized, unsplit; item indices follow first appearance in `ratings`.
  data::InteractionDataset dataset;
  /// Co-item graph over `dataset.item_ids`.
  kg::ItemGraph graph;

  // Planted factors in generation order (item k is "i<k>", user k is "u<k>").
  ad::Tensor item_prefer;   // items x prefer_dim, 0/1
  ad::Tensor item_dislike;  // items x dislike_dim, 0/1
  ad::Tensor user_taste;    // users x prefer_dim
  ad::Tensor user_aversion; // users x dislike_dim, >= 0
};

/// <taste_u, f_i> - <aversion_u, g_i>, the noise-free affinity.
double planted_affinity(const SyntheticData& data, std::size_t user, std::size_t item);

/// Deterministic under `spec.seed`. Each user's label is 1 iff the noisy
/// affinity exceeds that user's median noisy affinity; ratings are 4 for
/// label 1 and 2 for label 0, so binarization recovers the labels.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

std::string item_id(std::size_t index);
std::string user_id(std::size_t index);

}  // namespace crmman::synth

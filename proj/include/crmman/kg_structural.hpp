#pragma once

// Knowledge-graph triples and the undirected co-item graph derived from
// them: two items are linked when they share more than `threshold`
// non-text neighbor entities.

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace crmman::kg {

struct Triple {
  std::string head;
  std::string relation;
  std::string tail;
  /// Tail is a text entity (the item's description), not shared structure.
  bool text = false;

  friend bool operator==(const Triple&, const Triple&) = default;
  friend auto operator<=>(const Triple&, const Triple&) = default;
};

/// Relation name that marks item -> text edges when no fourth column is given.
inline constexpr const char* kTextRelation = "has_text";

struct ParsedTriples {
  std::vector<Triple> triples;
  std::size_t malformed = 0;
  std::size_t duplicates = 0;
  std::vector<std::size_t> malformed_lines;
};

/// Three tab-separated columns head, relation, tail, plus an optional
/// fourth column ("text"/"1" flags a text entity). Duplicate triples are
/// dropped and counted. More than `max_malformed_fraction` malformed lines
/// raise IngestionError.
ParsedTriples parse_triples(const std::filesystem::path& path, double max_malformed_fraction = 0.01);
ParsedTriples parse_triples_text(const std::string& text, double max_malformed_fraction = 0.01);

using Edge = std::pair<std::size_t, std::size_t>;

/// Immutable undirected graph over item indices. Edges are stored once as
/// (i, j) with i < j, sorted.
class ItemGraph {
 public:
  ItemGraph() = default;
  ItemGraph(std::size_t node_count, std::vector<Edge> edges);

  std::size_t node_count() const { return node_count_; }
  std::size_t edge_count() const { return edges_.size(); }
  const std::vector<Edge>& edges() const { return edges_; }
  /// Sorted neighbor list of `node`.
  std::span<const std::size_t> neighbors(std::size_t node) const;
  std::size_t degree(std::size_t node) const { return neighbors(node).size(); }
  bool has_edge(std::size_t i, std::size_t j) const;

  /// Subgraph induced by `keep` (old indices, ascending); nodes renumbered.
  ItemGraph induced(const std::vector<std::size_t>& keep) const;

  friend bool operator==(const ItemGraph& a, const ItemGraph& b) {
    return a.node_count_ == b.node_count_ && a.edges_ == b.edges_;
  }

 private:
  std::size_t node_count_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::size_t> offsets_{0};
  std::vector<std::size_t> adjacency_;
};

struct GraphBuild {
  ItemGraph graph;
  /// Items with no non-text entity at all.
  std::vector<std::size_t> items_without_entities;
  /// |N_i ∩ N_j| for every pair sharing at least one entity, i < j.
  std::map<Edge, std::size_t> shared_counts;
};

/// Links items i, j iff they share strictly more than `threshold` non-text
/// neighbor entities. Relation direction and type are ignored. Pairs are
/// enumerated through an entity -> items inverted index.
GraphBuild build_item_graph(std::span<const Triple> triples, const std::vector<std::string>& item_ids,
                            std::size_t threshold);

struct GraphStats {
  std::size_t nodes = 0;
  std::size_t edges = 0;
  std::map<std::size_t, std::size_t> degree_histogram;  // degree -> node count
  std::vector<std::size_t> isolated;
};

GraphStats graph_stats(const ItemGraph& graph);
std::string stats_json(const GraphStats& stats);

/// "i<TAB>j" lines with i < j.
void write_edge_list(const ItemGraph& graph, const std::filesystem::path& path);
ItemGraph read_edge_list(const std::filesystem::path& path, std::size_t node_count);

/// Item id -> text, from the text-flagged triples.
std::map<std::string, std::string> texts_from_triples(std::span<const Triple> triples);

}  // namespace crmman::kg

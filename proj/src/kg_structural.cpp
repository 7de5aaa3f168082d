#include "crmman/kg_structural.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "crmman/errors.hpp"

namespace crmman::kg {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find('\t', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

ParsedTriples parse_triples_text(const std::string& text, double max_malformed_fraction) {
  ParsedTriples out;
  std::set<Triple> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0, non_empty = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ++non_empty;
    const auto f = split_tabs(line);
    bool ok = (f.size() == 3 || f.size() == 4) && !f[0].empty() && !f[1].empty() && !f[2].empty();
    bool text_flag = false;
    if (ok && f.size() == 4) {
      if (f[3] == "text" || f[3] == "1") text_flag = true;
      else if (!(f[3].empty() || f[3] == "0")) ok = false;
    }
    if (!ok) {
      ++out.malformed;
      out.malformed_lines.push_back(line_no);
      continue;
    }
    Triple t{std::string(f[0]), std::string(f[1]), std::string(f[2]), text_flag || f[1] == kTextRelation};
    if (!seen.insert(t).second) {
      ++out.duplicates;
      continue;
    }
    out.triples.push_back(std::move(t));
  }
  if (non_empty > 0 && static_cast<double>(out.malformed) > max_malformed_fraction * static_cast<double>(non_empty)) {
    std::ostringstream msg;
    msg << out.malformed << " of " << non_empty << " triple lines malformed; lines:";
    for (std::size_t i = 0; i < out.malformed_lines.size() && i < 20; ++i) msg << ' ' << out.malformed_lines[i];
    throw IngestionError(msg.str());
  }
  return out;
}

ParsedTriples parse_triples(const std::filesystem::path& path, double max_malformed_fraction) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_triples_text(buffer.str(), max_malformed_fraction);
}

// ---------------------------------------------------------------------------

ItemGraph::ItemGraph(std::size_t node_count, std::vector<Edge> edges) : node_count_(node_count) {
  for (auto& [i, j] : edges) {
    if (i == j) throw UsageError("self-loop on node " + std::to_string(i));
    if (i >= node_count || j >= node_count) throw UsageError("edge endpoint out of range");
    if (i > j) std::swap(i, j);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  edges_ = std::move(edges);

  std::vector<std::size_t> degree(node_count, 0);
  for (const auto& [i, j] : edges_) {
    ++degree[i];
    ++degree[j];
  }
  offsets_.assign(node_count + 1, 0);
  for (std::size_t n = 0; n < node_count; ++n) offsets_[n + 1] = offsets_[n] + degree[n];
  adjacency_.assign(offsets_.back(), 0);
  std::vector<std::size_t> fill(offsets_.begin(), offsets_.end() - 1);
  for (const auto& [i, j] : edges_) {
    adjacency_[fill[i]++] = j;
    adjacency_[fill[j]++] = i;
  }
  for (std::size_t n = 0; n < node_count; ++n) {
    std::sort(adjacency_.begin() + static_cast<std::ptrdiff_t>(offsets_[n]),
              adjacency_.begin() + static_cast<std::ptrdiff_t>(offsets_[n + 1]));
  }
}

std::span<const std::size_t> ItemGraph::neighbors(std::size_t node) const {
  return std::span(adjacency_).subspan(offsets_[node], offsets_[node + 1] - offsets_[node]);
}

bool ItemGraph::has_edge(std::size_t i, std::size_t j) const {
  if (i >= node_count_ || j >= node_count_) return false;
  const auto nb = neighbors(i);
  return std::binary_search(nb.begin(), nb.end(), j);
}

ItemGraph ItemGraph::induced(const std::vector<std::size_t>& keep) const {
  std::vector<std::ptrdiff_t> remap(node_count_, -1);
  for (std::size_t k = 0; k < keep.size(); ++k) remap[keep[k]] = static_cast<std::ptrdiff_t>(k);
  std::vector<Edge> edges;
  for (const auto& [i, j] : edges_) {
    if (remap[i] >= 0 && remap[j] >= 0) {
      edges.emplace_back(static_cast<std::size_t>(remap[i]), static_cast<std::size_t>(remap[j]));
    }
  }
  return ItemGraph(keep.size(), std::move(edges));
}

GraphBuild build_item_graph(std::span<const Triple> triples, const std::vector<std::string>& item_ids,
                            std::size_t threshold) {
  std::unordered_map<std::string, std::size_t> item_index;
  for (std::size_t i = 0; i < item_ids.size(); ++i) item_index.emplace(item_ids[i], i);

  // neighbor entity sets N_i, as sorted unique entity names per item
  std::vector<std::vector<std::string>> neighbors(item_ids.size());
  for (const auto& t : triples) {
    if (t.text) continue;
    if (auto it = item_index.find(t.head); it != item_index.end() && t.tail != t.head) {
      neighbors[it->second].push_back(t.tail);
    }
    if (auto it = item_index.find(t.tail); it != item_index.end() && t.tail != t.head) {
      neighbors[it->second].push_back(t.head);
    }
  }
  std::map<std::string, std::vector<std::size_t>> entity_items;
  GraphBuild out;
  for (std::size_t i = 0; i < neighbors.size(); ++i) {
    auto& n = neighbors[i];
    std::sort(n.begin(), n.end());
    n.erase(std::unique(n.begin(), n.end()), n.end());
    if (n.empty()) out.items_without_entities.push_back(i);
    for (const auto& e : n) entity_items[e].push_back(i);
  }
  for (const auto& [entity, items] : entity_items) {
    for (std::size_t a = 0; a < items.size(); ++a)
      for (std::size_t b = a + 1; b < items.size(); ++b) ++out.shared_counts[{items[a], items[b]}];
  }
  std::vector<Edge> edges;
  for (const auto& [pair, count] : out.shared_counts) {
    if (count > threshold) edges.push_back(pair);
  }
  out.graph = ItemGraph(item_ids.size(), std::move(edges));
  return out;
}

GraphStats graph_stats(const ItemGraph& graph) {
  GraphStats s;
  s.nodes = graph.node_count();
  s.edges = graph.edge_count();
  for (std::size_t n = 0; n < graph.node_count(); ++n) {
    ++s.degree_histogram[graph.degree(n)];
    if (graph.degree(n) == 0) s.isolated.push_back(n);
  }
  return s;
}

std::string stats_json(const GraphStats& stats) {
  nlohmann::ordered_json histogram = nlohmann::ordered_json::object();
  for (const auto& [degree, count] : stats.degree_histogram) histogram[std::to_string(degree)] = count;
  const nlohmann::ordered_json doc{
      {"nodes", stats.nodes}, {"edges", stats.edges}, {"degree_histogram", histogram}, {"isolated", stats.isolated}};
  return doc.dump(2) + "\n";
}

void write_edge_list(const ItemGraph& graph, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& [i, j] : graph.edges()) out << i << '\t' << j << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

ItemGraph read_edge_list(const std::filesystem::path& path, std::size_t node_count) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<Edge> edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::istringstream fields(line);
    std::size_t i = 0, j = 0;
    if (!(fields >> i >> j) || i >= node_count || j >= node_count || i == j) {
      throw IngestionError(path.string() + ": bad edge on line " + std::to_string(line_no));
    }
    edges.emplace_back(i, j);
  }
  return ItemGraph(node_count, std::move(edges));
}

std::map<std::string, std::string> texts_from_triples(std::span<const Triple> triples) {
  std::map<std::string, std::string> out;
  for (const auto& t : triples) {
    if (!t.text) continue;
    auto& text = out[t.head];
    if (!text.empty()) text += ' ';
    text += t.tail;
  }
  return out;
}

}  // namespace crmman::kg

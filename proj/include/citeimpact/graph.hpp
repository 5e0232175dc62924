#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "citeimpact/corpus.hpp"
#include "citeimpact/text_embeddings.hpp"

namespace citeimpact {

enum class GraphKind { kCitation, kSimilarity };

const char* to_string(GraphKind kind) noexcept;
GraphKind graph_kind_from_string(std::string_view name);

struct GraphSpec {
  GraphKind kind = GraphKind::kCitation;
  bool directed = true;
  bool weighted = false;
  std::optional<int> k;  // similarity graphs only

  bool operator==(const GraphSpec&) const = default;
};

void validate_graph_spec(const GraphSpec& spec);

// e.g. "citation_directed_unweighted", "similarity_k5_undirected_weighted".
std::string graph_name(const GraphSpec& spec);

struct Edge {
  std::string src;
  std::string dst;
  double weight = 1.0;

  bool operator==(const Edge&) const = default;
};

// Edges are sorted by (src, dst). Undirected edges are stored once with
// src < dst.
class PaperGraph {
 public:
  PaperGraph() = default;
  PaperGraph(GraphSpec spec, std::vector<std::string> nodes, std::vector<Edge> edges);

  const GraphSpec& spec() const noexcept { return spec_; }
  const std::vector<std::string>& nodes() const noexcept { return nodes_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }

  std::optional<std::size_t> node_index(std::string_view id) const;
  bool contains(std::string_view id) const { return node_index(id).has_value(); }

  // Out-neighbors for directed graphs, full neighborhood when undirected.
  // Pairs of (node index, weight), sorted by node id.
  const std::vector<std::pair<std::uint32_t, double>>& neighbors(std::size_t node) const {
    return adjacency_.at(node);
  }

  bool operator==(const PaperGraph& other) const {
    return spec_ == other.spec_ && nodes_ == other.nodes_ && edges_ == other.edges_;
  }

 private:
  GraphSpec spec_;
  std::vector<std::string> nodes_;
  std::vector<Edge> edges_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::vector<std::pair<std::uint32_t, double>>> adjacency_;
};

struct BuildOptions {
  // Restrict nodes to one journal; empty keeps every paper. Edges never cross
  // journals either way.
  std::string journal;
  std::size_t workers = 1;
};

PaperGraph build_citation_graph(const Corpus& corpus, const GraphSpec& spec,
                                const TextEmbeddingMap* embeddings = nullptr,
                                const BuildOptions& options = {});

PaperGraph build_similarity_graph(const Corpus& corpus, const TextEmbeddingMap& embeddings,
                                  const GraphSpec& spec, const BuildOptions& options = {});

std::vector<Edge> check_temporal_consistency(const PaperGraph& graph, const Corpus& corpus);

// Header line of values for kind,directed,weighted,K, then one src,dst,weight row per edge.
std::string graph_to_csv(const PaperGraph& graph);
void save_graph(const PaperGraph& graph, const std::filesystem::path& path);
// Nodes come from the corpus (optionally one journal) when given, otherwise
// from edge endpoints in first-appearance order.
PaperGraph parse_graph_csv(std::string_view text, const Corpus* corpus = nullptr,
                           std::string_view journal = {});
PaperGraph load_graph(const std::filesystem::path& path, const Corpus* corpus = nullptr,
                      std::string_view journal = {});

}  // namespace citeimpact

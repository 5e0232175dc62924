#include "citeimpact/graph.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <thread>
#include <tuple>

#include <Eigen/Dense>

#include "citeimpact/error.hpp"
#include "citeimpact/text_io.hpp"

namespace citeimpact {

const char* to_string(GraphKind kind) noexcept {
  return kind == GraphKind::kCitation ? "citation" : "similarity";
}

GraphKind graph_kind_from_string(std::string_view name) {
  if (name == "citation") return GraphKind::kCitation;
  if (name == "similarity") return GraphKind::kSimilarity;
  throw Error(ErrorKind::kInvalidArgument, "unknown graph kind '" + std::string(name) + "'");
}

void validate_graph_spec(const GraphSpec& spec) {
  if (spec.kind == GraphKind::kSimilarity && (!spec.k || *spec.k < 1)) {
    throw Error(ErrorKind::kInvalidArgument, "similarity graphs need K >= 1");
  }
  if (spec.kind == GraphKind::kCitation && spec.k) {
    throw Error(ErrorKind::kInvalidArgument, "citation graphs take no K");
  }
}

std::string graph_name(const GraphSpec& spec) {
  std::string name = to_string(spec.kind);
  if (spec.k) name += "_k" + std::to_string(*spec.k);
  name += spec.directed ? "_directed" : "_undirected";
  name += spec.weighted ? "_weighted" : "_unweighted";
  return name;
}

PaperGraph::PaperGraph(GraphSpec spec, std::vector<std::string> nodes, std::vector<Edge> edges)
    : spec_(std::move(spec)), nodes_(std::move(nodes)), edges_(std::move(edges)) {
  validate_graph_spec(spec_);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!index_.emplace(nodes_[i], i).second) {
      throw Error(ErrorKind::kInvalidArgument, "duplicate graph node '" + nodes_[i] + "'");
    }
  }
  for (auto& e : edges_) {
    if (e.src == e.dst) throw Error(ErrorKind::kInvalidArgument, "self-loop on '" + e.src + "'");
    if (!std::isfinite(e.weight)) {
      throw Error(ErrorKind::kInvalidArgument, "non-finite weight on " + e.src + " -> " + e.dst);
    }
    if (!spec_.directed && e.dst < e.src) std::swap(e.src, e.dst);
    if (!index_.count(e.src) || !index_.count(e.dst)) {
      throw Error(ErrorKind::kInvalidArgument, "edge endpoint not a node: " + e.src + " -> " + e.dst);
    }
  }
  std::sort(edges_.begin(), edges_.end(), [](const Edge& a, const Edge& b) {
    return std::tie(a.src, a.dst) < std::tie(b.src, b.dst);
  });
  for (std::size_t i = 1; i < edges_.size(); ++i) {
    if (edges_[i].src == edges_[i - 1].src && edges_[i].dst == edges_[i - 1].dst) {
      throw Error(ErrorKind::kInvalidArgument,
                  "duplicate edge " + edges_[i].src + " -> " + edges_[i].dst);
    }
  }

  adjacency_.assign(nodes_.size(), {});
  for (const auto& e : edges_) {
    const auto s = static_cast<std::uint32_t>(index_.at(e.src));
    const auto d = static_cast<std::uint32_t>(index_.at(e.dst));
    adjacency_[s].emplace_back(d, e.weight);
    if (!spec_.directed) adjacency_[d].emplace_back(s, e.weight);
  }
  for (auto& list : adjacency_) {
    std::sort(list.begin(), list.end(),
              [this](const auto& a, const auto& b) { return nodes_[a.first] < nodes_[b.first]; });
  }
}

std::optional<std::size_t> PaperGraph::node_index(std::string_view id) const {
  const auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

namespace {

std::vector<std::size_t> node_papers(const Corpus& corpus, const BuildOptions& options) {
  std::vector<std::size_t> selected;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (options.journal.empty() || corpus.papers()[i].journal == options.journal) {
      selected.push_back(i);
    }
  }
  return selected;
}

const std::vector<double>& embedding_of(const TextEmbeddingMap& embeddings, const std::string& id) {
  const auto it = embeddings.find(id);
  if (it == embeddings.end()) {
    throw Error(ErrorKind::kInvalidArgument, "no text embedding for '" + id + "'");
  }
  return it->second;
}

// Collapses orientation for undirected graphs; symmetric weights make the
// merge unambiguous.
std::vector<Edge> canonical_edges(std::vector<Edge> edges, bool directed) {
  if (!directed) {
    for (auto& e : edges) {
      if (e.dst < e.src) std::swap(e.src, e.dst);
    }
  }
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    return std::tie(a.src, a.dst) < std::tie(b.src, b.dst);
  });
  std::vector<Edge> unique;
  for (auto& e : edges) {
    if (!unique.empty() && unique.back().src == e.src && unique.back().dst == e.dst) {
      if (unique.back().weight != e.weight) {
        throw Error(ErrorKind::kInternal, "asymmetric weights on " + e.src + " -- " + e.dst);
      }
      continue;
    }
    unique.push_back(std::move(e));
  }
  return unique;
}

bool blank(const std::string& text) {
  return std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

}  // namespace

PaperGraph build_citation_graph(const Corpus& corpus, const GraphSpec& spec,
                                const TextEmbeddingMap* embeddings, const BuildOptions& options) {
  validate_graph_spec(spec);
  if (spec.kind != GraphKind::kCitation) {
    throw Error(ErrorKind::kInvalidArgument, "build_citation_graph needs a citation spec");
  }
  if (spec.weighted && embeddings == nullptr) {
    throw Error(ErrorKind::kInvalidArgument, "weighted citation graph needs text embeddings");
  }
  const auto selected = node_papers(corpus, options);
  std::vector<bool> is_node(corpus.size(), false);
  std::vector<std::string> nodes;
  for (auto i : selected) {
    is_node[i] = true;
    nodes.push_back(corpus.papers()[i].id);
  }

  std::vector<Edge> edges;
  for (const auto& [citing, cited] : corpus.citations()) {
    if (citing == cited || !is_node[citing] || !is_node[cited]) continue;
    const auto& a = corpus.papers()[citing];
    const auto& b = corpus.papers()[cited];
    if (a.journal != b.journal) continue;
    if (b.pub_year > a.pub_year) {
      throw Error(ErrorKind::kTemporal, a.id + " cites the later paper " + b.id +
                                            "; validate the corpus first");
    }
    double weight = 1.0;
    if (spec.weighted) {
      weight = cosine_similarity(embedding_of(*embeddings, a.id), embedding_of(*embeddings, b.id));
    }
    edges.push_back({a.id, b.id, weight});
  }
  return PaperGraph(spec, std::move(nodes), canonical_edges(std::move(edges), spec.directed));
}

PaperGraph build_similarity_graph(const Corpus& corpus, const TextEmbeddingMap& embeddings,
                                  const GraphSpec& spec, const BuildOptions& options) {
  validate_graph_spec(spec);
  if (spec.kind != GraphKind::kSimilarity) {
    throw Error(ErrorKind::kInvalidArgument, "build_similarity_graph needs a similarity spec");
  }
  if (embeddings.empty()) throw Error(ErrorKind::kInvalidArgument, "embedding map is empty");

  const auto selected = node_papers(corpus, options);
  std::vector<std::string> nodes;
  // Embedded papers sorted by (year, id); candidates of row r are a prefix.
  std::vector<std::size_t> order;
  std::size_t dim = 0;
  for (auto i : selected) {
    const auto& p = corpus.papers()[i];
    nodes.push_back(p.id);
    const auto it = embeddings.find(p.id);
    if (it == embeddings.end()) {
      if (!blank(p.abstract)) {
        throw Error(ErrorKind::kInvalidArgument, "no text embedding for '" + p.id + "'");
      }
      continue;
    }
    if (dim == 0) dim = it->second.size();
    if (it->second.size() != dim || dim == 0) {
      throw Error(ErrorKind::kDimension, "embedding for '" + p.id + "' has dimension " +
                                             std::to_string(it->second.size()));
    }
    order.push_back(i);
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& pa = corpus.papers()[a];
    const auto& pb = corpus.papers()[b];
    return std::tie(pa.pub_year, pa.id) < std::tie(pb.pub_year, pb.id);
  });

  const std::size_t n = order.size();
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> x(n, dim);
  Eigen::VectorXd norms(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto& v = embeddings.at(corpus.papers()[order[r]].id);
    for (std::size_t c = 0; c < dim; ++c) x(r, c) = v[c];
    norms[r] = x.row(r).norm();
    if (norms[r] == 0.0) {
      throw Error(ErrorKind::kInvalidArgument,
                  "zero text embedding for '" + corpus.papers()[order[r]].id + "'");
    }
  }
  // Last row index (exclusive) whose year is <= the year of row r.
  std::vector<std::size_t> prefix_end(n);
  for (std::size_t r = n; r-- > 0;) {
    const int year = corpus.papers()[order[r]].pub_year;
    prefix_end[r] = (r + 1 < n && corpus.papers()[order[r + 1]].pub_year == year) ? prefix_end[r + 1]
                                                                                   : r + 1;
  }

  const auto k = static_cast<std::size_t>(*spec.k);
  constexpr std::size_t kBlock = 128;
  const std::size_t n_blocks = (n + kBlock - 1) / kBlock;
  std::vector<std::vector<Edge>> block_edges(n_blocks);
  std::atomic<std::size_t> next{0};

  const auto work = [&] {
    for (std::size_t b = next++; b < n_blocks; b = next++) {
      const std::size_t r0 = b * kBlock;
      const std::size_t r1 = std::min(n, r0 + kBlock);
      const std::size_t cols = prefix_end[r1 - 1];
      const Eigen::MatrixXd dots = x.middleRows(r0, r1 - r0) * x.topRows(cols).transpose();
      std::vector<std::pair<double, std::size_t>> scored;
      for (std::size_t r = r0; r < r1; ++r) {
        const auto& self = corpus.papers()[order[r]];
        scored.clear();
        for (std::size_t c = 0; c < prefix_end[r]; ++c) {
          if (c == r) continue;
          if (corpus.papers()[order[c]].journal != self.journal) continue;
          scored.emplace_back(dots(r - r0, c) / (norms[r] * norms[c]), c);
        }
        const auto better = [&](const auto& a, const auto& b2) {
          if (a.first != b2.first) return a.first > b2.first;
          return corpus.papers()[order[a.second]].id < corpus.papers()[order[b2.second]].id;
        };
        const std::size_t take = std::min(k, scored.size());
        std::partial_sort(scored.begin(), scored.begin() + take, scored.end(), better);
        for (std::size_t t = 0; t < take; ++t) {
          const auto& other = corpus.papers()[order[scored[t].second]];
          double weight = 1.0;
          if (spec.weighted) {
            weight = cosine_similarity(embeddings.at(self.id), embeddings.at(other.id));
          }
          block_edges[b].push_back({self.id, other.id, weight});
        }
      }
    }
  };
  const std::size_t width = std::clamp<std::size_t>(options.workers, 1, std::max<std::size_t>(1, n_blocks));
  if (width == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < width; ++t) pool.emplace_back(work);
  }

  std::vector<Edge> edges;
  for (auto& block : block_edges) {
    for (auto& e : block) edges.push_back(std::move(e));
  }
  return PaperGraph(spec, std::move(nodes), canonical_edges(std::move(edges), spec.directed));
}

std::vector<Edge> check_temporal_consistency(const PaperGraph& graph, const Corpus& corpus) {
  std::vector<Edge> violations;
  for (const auto& e : graph.edges()) {
    const auto src = corpus.find(e.src);
    const auto dst = corpus.find(e.dst);
    if (!src || !dst) {
      violations.push_back(e);
      continue;
    }
    // Both endpoints exist by the later one's publication, so an undirected
    // edge can only fail on membership.
    if (graph.spec().directed && corpus.papers()[*dst].pub_year > corpus.papers()[*src].pub_year) {
      violations.push_back(e);
    }
  }
  return violations;
}

std::string graph_to_csv(const PaperGraph& graph) {
  const auto& spec = graph.spec();
  std::string out = std::string(to_string(spec.kind)) + ',' + (spec.directed ? "true" : "false") +
                    ',' + (spec.weighted ? "true" : "false") + ',' +
                    (spec.k ? std::to_string(*spec.k) : std::string()) + '\n';
  for (const auto& e : graph.edges()) {
    out += csv_field(e.src) + ',' + csv_field(e.dst) + ',' + format_double(e.weight) + '\n';
  }
  return out;
}

void save_graph(const PaperGraph& graph, const std::filesystem::path& path) {
  write_file(path, graph_to_csv(graph));
}

namespace {

bool parse_bool(const std::string& text, bool& out) {
  if (text == "true" || text == "1") {
    out = true;
    return true;
  }
  if (text == "false" || text == "0") {
    out = false;
    return true;
  }
  return false;
}

}  // namespace

PaperGraph parse_graph_csv(std::string_view text, const Corpus* corpus, std::string_view journal) {
  GraphSpec spec;
  std::vector<Edge> edges;
  std::vector<std::string> nodes;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t start = 0;
  bool have_header = false;
  while (start < text.size()) {
    const std::size_t end = std::min(text.find('\n', start), text.size());
    const auto line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    const auto bad = [&](const std::string& why) {
      return Error(ErrorKind::kParse, "graph line " + std::to_string(line_no) + ": " + why);
    };
    if (!have_header) {
      if (f.size() != 4) throw bad("header must be kind,directed,weighted,K");
      try {
        spec.kind = graph_kind_from_string(f[0]);
      } catch (const Error&) {
        throw bad("unknown kind '" + f[0] + "'");
      }
      if (!parse_bool(f[1], spec.directed) || !parse_bool(f[2], spec.weighted)) {
        throw bad("directed/weighted must be true or false");
      }
      if (!f[3].empty()) {
        std::int64_t k = 0;
        if (!parse_int64(f[3], k)) throw bad("K is not an integer");
        spec.k = static_cast<int>(k);
      }
      have_header = true;
      continue;
    }
    double weight = 0.0;
    if (f.size() != 3) throw bad("malformed edge record");
    if (!parse_finite_double(f[2], weight)) throw bad("weight '" + f[2] + "' is not a finite number");
    for (const auto* id : {&f[0], &f[1]}) {
      if (seen.insert(*id).second) nodes.push_back(*id);
    }
    edges.push_back({f[0], f[1], weight});
  }
  if (!have_header) throw Error(ErrorKind::kParse, "graph file has no header");
  if (corpus) {
    nodes.clear();
    for (const auto& p : corpus->papers()) {
      if (journal.empty() || p.journal == journal) nodes.push_back(p.id);
    }
  }
  try {
    return PaperGraph(spec, std::move(nodes), std::move(edges));
  } catch (const Error& e) {
    throw Error(ErrorKind::kParse, std::string("invalid graph file: ") + e.what());
  }
}

PaperGraph load_graph(const std::filesystem::path& path, const Corpus* corpus,
                      std::string_view journal) {
  return parse_graph_csv(read_file(path), corpus, journal);
}

}  // namespace citeimpact

#include <doctest.h>

#include <map>
#include <set>

#include "citeimpact/error.hpp"
#include "citeimpact/graph.hpp"
#include "citeimpact/rng.hpp"
#include "citeimpact/text_io.hpp"
#include "support.hpp"

using namespace citeimpact;

namespace {

const GraphSpec kCitDirUnw{GraphKind::kCitation, true, false, std::nullopt};
const GraphSpec kCitUndUnw{GraphKind::kCitation, false, false, std::nullopt};

Corpus two_papers() {
  Corpus c(2012);
  c.add_paper({"B", "J", 2010, "b", "x", "", "", ""}, {"", {0, 0, 0}});
  c.add_paper({"A", "J", 2012, "a", "x", "", "", ""}, {"", {0}});
  c.add_citation("A", "B");
  return c;
}

}  // namespace

TEST_CASE("graph names cover all twenty variants") {
  std::set<std::string> names;
  for (bool d : {true, false}) {
    for (bool w : {true, false}) {
      names.insert(graph_name({GraphKind::kCitation, d, w, std::nullopt}));
      for (int k : {3, 5, 7, 9}) names.insert(graph_name({GraphKind::kSimilarity, d, w, k}));
    }
  }
  CHECK(names.size() == 20);
  CHECK(graph_name(kCitDirUnw) == "citation_directed_unweighted");
  CHECK(graph_name({GraphKind::kSimilarity, false, true, 5}) == "similarity_k5_undirected_weighted");
  CHECK_THROWS_AS(validate_graph_spec({GraphKind::kSimilarity, true, false, std::nullopt}), Error);
  CHECK_THROWS_AS(validate_graph_spec({GraphKind::kCitation, true, false, 3}), Error);
}

TEST_CASE("citation edge maps directly") {
  const Corpus c = two_papers();
  const auto g = build_citation_graph(c, kCitDirUnw);
  REQUIRE(g.edges().size() == 1);
  CHECK(g.edges()[0] == Edge{"A", "B", 1.0});

  const auto u = build_citation_graph(c, kCitUndUnw);
  REQUIRE(u.edges().size() == 1);
  CHECK(u.edges()[0] == Edge{"A", "B", 1.0});  // "A" < "B" already canonical

  Corpus r(2012);
  r.add_paper({"Z", "J", 2010, "z", "x", "", "", ""}, {"", {0, 0, 0}});
  r.add_paper({"Y", "J", 2012, "y", "x", "", "", ""}, {"", {0}});
  r.add_citation("Z", "Y");  // a future citation; builders refuse it
  CHECK_THROWS_AS(build_citation_graph(r, kCitDirUnw), Error);
}

TEST_CASE("undirected edges are stored once as (min, max)") {
  Corpus ok(2012);
  ok.add_paper({"m", "J", 2012, "m", "x", "", "", ""}, {"", {0}});
  ok.add_paper({"k", "J", 2010, "k", "x", "", "", ""}, {"", {0, 0, 0}});
  ok.add_citation("m", "k");
  const auto g = build_citation_graph(ok, kCitUndUnw);
  REQUIRE(g.edges().size() == 1);
  CHECK(g.edges()[0].src == "k");
  CHECK(g.edges()[0].dst == "m");
  CHECK(g.neighbors(*g.node_index("k")).size() == 1);
  CHECK(g.neighbors(*g.node_index("m")).size() == 1);
}

TEST_CASE("weighted citation edges carry the abstract cosine") {
  const auto synth = generate_synthetic_corpus(300, 4);
  HashingEmbeddingProvider provider(64, 1);
  std::vector<std::string> texts;
  for (const auto& p : synth.corpus.papers()) texts.push_back(p.abstract);
  const auto vecs = provider.embed(texts, "m");
  TextEmbeddingMap emb;
  for (std::size_t i = 0; i < vecs.size(); ++i) emb[synth.corpus.paper(i).id] = vecs[i];
  for (bool directed : {true, false}) {
    const auto g = build_citation_graph(synth.corpus, {GraphKind::kCitation, directed, true, std::nullopt}, &emb);
    REQUIRE_FALSE(g.edges().empty());
    for (const auto& e : g.edges()) {
      CHECK(std::abs(e.weight - testsupport::plain_cosine(emb.at(e.src), emb.at(e.dst))) <= 1e-12);
    }
  }
  CHECK_THROWS_AS(build_citation_graph(synth.corpus, {GraphKind::kCitation, true, true, std::nullopt}), Error);
}

TEST_CASE("paper alone in the first year has no similarity out-edges") {
  Corpus c(2012);
  c.add_paper({"first", "J", 2010, "f", "x", "", "", ""}, {"", {0, 0, 0}});
  c.add_paper({"second", "J", 2011, "s", "x", "", "", ""}, {"", {0, 0}});
  c.add_paper({"third", "J", 2012, "t", "x", "", "", ""}, {"", {0}});
  TextEmbeddingMap emb{{"first", {1, 0}}, {"second", {1, 1}}, {"third", {0, 1}}};
  const auto g = build_similarity_graph(c, emb, {GraphKind::kSimilarity, true, false, 3});
  CHECK(g.neighbors(*g.node_index("first")).empty());
  CHECK(g.neighbors(*g.node_index("second")).size() == 1);
  CHECK(g.neighbors(*g.node_index("third")).size() == 2);
}

TEST_CASE("K larger than the candidate set links every feasible candidate") {
  Corpus c(2013);
  TextEmbeddingMap emb;
  for (int i = 0; i < 4; ++i) {
    const std::string id = "n" + std::to_string(i);
    c.add_paper({id, "J", 2010 + i, id, "x", "", "", ""}, {"", std::vector<std::int64_t>(4 - i, 0)});
    emb[id] = {1.0 + i, 2.0 - i, 0.5};
  }
  const auto g = build_similarity_graph(c, emb, {GraphKind::kSimilarity, true, false, 9});
  for (int i = 0; i < 4; ++i) CHECK(g.neighbors(*g.node_index("n" + std::to_string(i))).size() == static_cast<std::size_t>(i));
}

TEST_CASE("similarity top-K equals exhaustive ranking") {
  for (std::uint64_t seed : {1, 2, 3}) {
    auto [corpus, emb] = testsupport::random_embedded_corpus(20, 8, seed);
    for (bool directed : {true, false}) {
      const auto g = build_similarity_graph(corpus, emb, {GraphKind::kSimilarity, directed, true, 5});
      std::vector<std::pair<std::string, std::string>> got;
      for (const auto& e : g.edges()) {
        got.emplace_back(e.src, e.dst);
        CHECK(e.weight >= -1.0);
        CHECK(e.weight <= 1.0);
      }
      std::sort(got.begin(), got.end());
      CHECK(got == testsupport::brute_force_topk(corpus, emb, 5, directed));
      if (directed) {
        for (std::size_t i = 0; i < g.nodes().size(); ++i) CHECK(g.neighbors(i).size() <= 5);
      }
    }
  }
}

TEST_CASE("builders are deterministic") {
  auto [corpus, emb] = testsupport::random_embedded_corpus(150, 12, 8);
  const GraphSpec spec{GraphKind::kSimilarity, false, true, 7};
  BuildOptions serial, parallel;
  parallel.workers = 4;
  CHECK(build_similarity_graph(corpus, emb, spec, serial) == build_similarity_graph(corpus, emb, spec, parallel));
}

TEST_CASE("temporal check finds hand-built and injected violations") {
  Corpus c(2012);
  c.add_paper({"old", "J", 2010, "o", "x", "", "", ""}, {"", {0, 0, 0}});
  c.add_paper({"new", "J", 2012, "n", "x", "", "", ""}, {"", {0}});
  const PaperGraph bad(kCitDirUnw, {"old", "new"}, {{"old", "new", 1.0}});
  CHECK(check_temporal_consistency(bad, c).size() == 1);

  const auto synth = generate_synthetic_corpus(300, 21);
  const auto clean = build_citation_graph(synth.corpus, kCitDirUnw);
  CHECK(check_temporal_consistency(clean, synth.corpus).empty());

  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::set<std::pair<std::string, std::string>> seen;
    std::vector<Edge> edges = clean.edges();
    for (const auto& e : edges) seen.emplace(e.src, e.dst);
    const std::size_t inject = uniform_index(rng, 30);
    std::size_t injected = 0;
    while (injected < inject) {
      const auto& a = synth.corpus.paper(uniform_index(rng, synth.corpus.size()));
      const auto& b = synth.corpus.paper(uniform_index(rng, synth.corpus.size()));
      if (a.pub_year >= b.pub_year || !seen.emplace(a.id, b.id).second) continue;
      edges.push_back({a.id, b.id, 1.0});
      ++injected;
    }
    const PaperGraph fuzzed(kCitDirUnw, clean.nodes(), edges);
    CHECK(check_temporal_consistency(fuzzed, synth.corpus).size() == inject);
  }
}

TEST_CASE("graph csv round trips") {
  auto [corpus, emb] = testsupport::random_embedded_corpus(60, 6, 5);
  const auto g = build_similarity_graph(corpus, emb, {GraphKind::kSimilarity, true, true, 3});
  const auto text = graph_to_csv(g);
  const auto back = parse_graph_csv(text, &corpus);
  CHECK(back == g);
  CHECK(graph_to_csv(back) == text);
}

TEST_CASE("non-finite weights are rejected on load") {
  const std::string text = "similarity,true,true,3\na,b,NaN\n";
  CHECK_THROWS_AS(parse_graph_csv(text), Error);
  CHECK_THROWS_AS(parse_graph_csv("similarity,true,true,3\na,b,inf\n"), Error);
  CHECK(parse_graph_csv("similarity,true,true,3\na,b,0.5\n").edges().size() == 1);
}

TEST_CASE("large random graph round trips bit for bit") {
  testsupport::TempDir dir("graph");
  Rng rng(12);
  std::vector<std::string> nodes;
  for (int i = 0; i < 2000; ++i) nodes.push_back("v" + std::to_string(i));
  std::set<std::pair<std::size_t, std::size_t>> pairs;
  while (pairs.size() < 10000) {
    const auto a = uniform_index(rng, nodes.size());
    const auto b = uniform_index(rng, nodes.size());
    if (a != b) pairs.emplace(a, b);
  }
  std::vector<Edge> edges;
  for (auto [a, b] : pairs) edges.push_back({nodes[a], nodes[b], standard_normal(rng) * 1e-3 + uniform01(rng)});
  const PaperGraph g({GraphKind::kSimilarity, true, true, 9}, nodes, edges);
  save_graph(g, dir / "g.csv");
  const auto back = load_graph(dir / "g.csv");
  CHECK(back.edges() == g.edges());
  save_graph(back, dir / "g2.csv");
  CHECK(read_file(dir / "g.csv") == read_file(dir / "g2.csv"));
}

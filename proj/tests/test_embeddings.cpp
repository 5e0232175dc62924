#include <doctest.h>

#include <atomic>
#include <cmath>
#include <mutex>
#include <set>

#include "citeimpact/error.hpp"
#include "citeimpact/feature_matrix.hpp"
#include "citeimpact/node_embeddings.hpp"
#include "citeimpact/rng.hpp"
#include "citeimpact/text_embeddings.hpp"
#include "citeimpact/text_io.hpp"
#include "support.hpp"

using namespace citeimpact;

namespace {

// Records every request; returns `dim`-sized vectors derived from the text.
class CountingProvider final : public EmbeddingProvider {
 public:
  explicit CountingProvider(std::size_t dim) : dim_(dim) {}
  std::vector<std::vector<double>> embed(std::span<const std::string> texts, std::string_view) override {
    ++requests;
    std::vector<std::vector<double>> out;
    for (const auto& t : texts) {
      std::vector<double> v(dim_);
      for (std::size_t i = 0; i < dim_; ++i) v[i] = static_cast<double>((t.size() * 31 + i * 7) % 13) + 0.25;
      out.push_back(std::move(v));
    }
    return out;
  }
  std::atomic<int> requests{0};

 private:
  std::size_t dim_;
};

std::vector<Paper> papers(std::size_t n) {
  std::vector<Paper> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({"10.9/p" + std::to_string(i), "J", 2015, "t", "abstract text " + std::string(i + 1, 'x'), "", "", ""});
  }
  return out;
}

double mean_cosine(const FeatureMatrix& m, const std::vector<std::size_t>& a, const std::vector<std::size_t>& b,
                   bool same) {
  double sum = 0;
  std::size_t n = 0;
  for (auto i : a) {
    for (auto j : b) {
      if (same && i >= j) continue;
      sum += cosine_similarity(m.row(i), m.row(j));
      ++n;
    }
  }
  return sum / static_cast<double>(n);
}

}  // namespace

TEST_CASE("cosine basics") {
  const std::vector<double> v{0.3, -1.2, 4.0};
  const std::vector<double> neg{-0.3, 1.2, -4.0};
  CHECK(cosine_similarity(v, v) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 0.0);
  CHECK(cosine_similarity(v, neg) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK_THROWS_AS(cosine_similarity(v, std::vector<double>{1, 2}), Error);
  CHECK_THROWS_AS(cosine_similarity(v, std::vector<double>{0, 0, 0}), Error);
}

TEST_CASE("hashing provider is deterministic and sensitive to vocabulary") {
  HashingEmbeddingProvider p(128, 4);
  const std::vector<std::string> texts{"graphene oxide film", "graphene oxide membrane", "medieval poetry"};
  const auto a = p.embed(texts, "m");
  const auto b = p.embed(texts, "m");
  CHECK(a == b);
  REQUIRE(a.size() == 3);
  CHECK(a[0].size() == 128);
  CHECK(cosine_similarity(a[0], a[1]) > cosine_similarity(a[0], a[2]));
}

TEST_CASE("fetch is cache first and batches in order") {
  testsupport::TempDir dir("emb");
  const auto ps = papers(7);
  FetchOptions options;
  options.dimension = 16;
  options.batch_size = 3;
  CountingProvider provider(16);
  {
    EmbeddingCache cache(dir / "cache.jsonl");
    cache.load();
    const auto r = fetch_text_embeddings(provider, ps, cache, options);
    CHECK(r.batches_requested == 3);
    CHECK(provider.requests == 3);
    CHECK(r.embeddings.size() == 7);
    std::set<std::string> keys;
    for (const auto& [k, v] : r.embeddings) keys.insert(k);
    std::set<std::string> ids;
    for (const auto& p : ps) ids.insert(p.id);
    CHECK(keys == ids);
  }
  EmbeddingCache reloaded(dir / "cache.jsonl");
  reloaded.load();
  CHECK(reloaded.size() == 7);
  CountingProvider idle(16);
  const auto again = fetch_text_embeddings(idle, ps, reloaded, options);
  CHECK(idle.requests == 0);
  CHECK(again.cache_hits == 7);
  // Bit-identical vectors after the cache round trip.
  CountingProvider fresh(16);
  for (const auto& p : ps) {
    const std::string text = p.abstract;
    CHECK(again.embeddings.at(p.id) == fresh.embed(std::span<const std::string>(&text, 1), "m").front());
  }
}

TEST_CASE("empty abstracts are skipped and reported") {
  testsupport::TempDir dir("emb");
  auto ps = papers(3);
  ps[1].abstract = "   ";
  EmbeddingCache cache(dir / "c.jsonl");
  CountingProvider provider(8);
  FetchOptions options;
  options.dimension = 8;
  const auto r = fetch_text_embeddings(provider, ps, cache, options);
  CHECK(r.embeddings.size() == 2);
  CHECK(r.skipped_empty == std::vector<std::string>{ps[1].id});
}

TEST_CASE("wrong-dimension vectors raise a dimension error naming the paper") {
  testsupport::TempDir dir("emb");
  const auto ps = papers(1);
  EmbeddingCache cache(dir / "c.jsonl");
  CountingProvider provider(128);
  try {
    fetch_text_embeddings(provider, ps, cache, {});
    FAIL("expected a dimension error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDimension);
    CHECK(std::string(e.what()).find(ps[0].id) != std::string::npos);
  }
  EmbeddingCache reread(dir / "c.jsonl");
  reread.load();
  CHECK(reread.size() == 0);
}

TEST_CASE("corrupt cache lines are reported with their line") {
  testsupport::TempDir dir("emb");
  write_file(dir / "c.jsonl", "{\"paper_id\":\"a\",\"model_id\":\"m\",\"vector\":[1,2]}\n{oops\n");
  EmbeddingCache cache(dir / "c.jsonl");
  CHECK_THROWS_WITH_AS(cache.load(), doctest::Contains("2"), Error);
}

TEST_CASE("walks from an isolated node stay put") {
  const PaperGraph g({GraphKind::kCitation, true, false, std::nullopt}, {"a", "b", "lonely"}, {{"a", "b", 1.0}});
  WalkParams params;
  params.walks_per_node = 4;
  params.walk_length = 10;
  const auto walks = generate_walks(g, params);
  CHECK(walks.size() == 12);
  const auto lonely = *g.node_index("lonely");
  for (const auto& w : walks) {
    if (w.front() == lonely) CHECK(w.size() == 1);
  }
}

TEST_CASE("directed 3-cycle walks follow the cycle") {
  const PaperGraph g({GraphKind::kCitation, true, false, std::nullopt}, {"A", "B", "C"},
                     {{"A", "B", 1.0}, {"B", "C", 1.0}, {"C", "A", 1.0}});
  WalkParams params;
  params.walks_per_node = 3;
  params.walk_length = 25;
  params.p = 0.5;
  params.q = 2.0;
  for (const auto& w : generate_walks(g, params)) {
    CHECK(w.size() == 25);
    for (std::size_t i = 1; i < w.size(); ++i) CHECK(w[i] == (w[i - 1] + 1) % 3);
  }
}

TEST_CASE("walks are deterministic and only follow edges") {
  auto [corpus, emb] = testsupport::random_embedded_corpus(120, 8, 3);
  for (bool directed : {true, false}) {
    const auto g = build_similarity_graph(corpus, emb, {GraphKind::kSimilarity, directed, true, 4});
    WalkParams params;
    params.walks_per_node = 3;
    params.walk_length = 30;
    params.p = 0.25;
    params.q = 4.0;
    params.seed = 99;
    const auto a = generate_walks(g, params);
    params.workers = 3;
    const auto b = generate_walks(g, params);
    CHECK(walks_to_text(g, a) == walks_to_text(g, b));
    for (const auto& w : a) {
      for (std::size_t i = 1; i < w.size(); ++i) {
        const auto& nb = g.neighbors(w[i - 1]);
        const bool found = std::any_of(nb.begin(), nb.end(), [&](auto& e) { return e.first == w[i]; });
        CHECK(found);
      }
    }
  }
}

TEST_CASE("walk parameter validation") {
  WalkParams params;
  params.p = 0.0;
  CHECK_THROWS_AS(validate_walk_params(params), Error);
  params = {};
  params.walk_length = 0;
  CHECK_THROWS_AS(validate_walk_params(params), Error);
}

TEST_CASE("SGNS output and loss behaviour") {
  // Two 10-cliques joined by one bridge.
  std::vector<std::string> nodes;
  std::vector<Edge> edges;
  for (int i = 0; i < 20; ++i) nodes.push_back("c" + std::to_string(100 + i));
  for (int i = 0; i < 20; ++i) {
    for (int j = i + 1; j < 20; ++j) {
      if ((i < 10) == (j < 10)) edges.push_back({nodes[i], nodes[j], 1.0});
    }
  }
  edges.push_back({nodes[9], nodes[10], 1.0});
  const PaperGraph g({GraphKind::kCitation, false, false, std::nullopt}, nodes, edges);
  WalkParams wp;
  wp.walks_per_node = 10;
  wp.walk_length = 40;
  const auto walks = generate_walks(g, wp);
  SgnsParams sp;
  sp.dimension = 32;
  sp.epochs = 3;
  const auto r = train_sgns(walks, g.nodes(), sp);
  CHECK(r.embeddings.rows() == 20);
  CHECK(r.embeddings.dimension() == 32);
  REQUIRE(r.epoch_loss.size() == 3);
  REQUIRE(r.checkpoint_loss.size() >= 2);
  CHECK(r.checkpoint_loss.back() < r.checkpoint_loss.front());
  CHECK(r.epoch_loss.back() < r.epoch_loss.front());

  std::vector<std::size_t> left, right;
  for (std::size_t i = 0; i < r.embeddings.rows(); ++i) {
    const int n = std::stoi(r.embeddings.ids()[i].substr(1)) - 100;
    (n < 10 ? left : right).push_back(i);
  }
  const double intra = (mean_cosine(r.embeddings, left, left, true) + mean_cosine(r.embeddings, right, right, true)) / 2;
  const double inter = mean_cosine(r.embeddings, left, right, false);
  CHECK(intra > inter);

  CHECK(train_sgns(walks, g.nodes(), sp).embeddings == r.embeddings);
  CHECK_THROWS_AS(train_sgns({}, g.nodes(), sp), Error);
}

TEST_CASE("SGNS default dimension is 256") {
  const PaperGraph g({GraphKind::kCitation, true, false, std::nullopt}, {"a", "b"}, {{"a", "b", 1.0}});
  WalkParams wp;
  wp.walks_per_node = 2;
  wp.walk_length = 5;
  SgnsParams sp;
  sp.epochs = 1;
  const auto r = train_sgns(generate_walks(g, wp), g.nodes(), sp);
  CHECK(r.embeddings.dimension() == 256);
  for (double v : r.embeddings.values()) CHECK(std::isfinite(v));
}

TEST_CASE("SGNS gradients match finite differences on a toy problem") {
  Rng rng(1);
  const std::size_t dim = 5;
  std::vector<double> c(dim), o(dim);
  std::vector<std::vector<double>> negs(4, std::vector<double>(dim));
  for (auto& x : c) x = standard_normal(rng);
  for (auto& x : o) x = standard_normal(rng);
  for (auto& n : negs) for (auto& x : n) x = standard_normal(rng);
  std::vector<std::span<const double>> ns(negs.begin(), negs.end());
  SgnsGradients g;
  const double loss = sgns_pair_gradients(c, o, ns, g);
  CHECK(loss == doctest::Approx(sgns_pair_loss(c, o, ns)).epsilon(1e-14));
  for (std::size_t i = 0; i < dim; ++i) {
    const double keep = c[i];
    c[i] = keep + 1e-6;
    const double up = sgns_pair_loss(c, o, ns);
    c[i] = keep - 1e-6;
    const double down = sgns_pair_loss(c, o, ns);
    c[i] = keep;
    CHECK(g.center[i] == doctest::Approx((up - down) / 2e-6).epsilon(1e-4));
  }
}

TEST_CASE("feature assembly layouts") {
  FeatureMatrix node({"a", "b"}, 256);
  for (std::size_t i = 0; i < node.values().size(); ++i) node.row(i / 256)[i % 256] = 0.001 * static_cast<double>(i);
  TextEmbeddingMap text{{"a", std::vector<double>(3072, 0.5)}, {"b", std::vector<double>(3072, -0.5)}};

  const auto both = assemble_features(node, text, FeatureMode::kN2vTe3).features;
  CHECK(both.dimension() == 3328);
  for (std::size_t r = 0; r < 2; ++r) {
    const auto row = both.row(r);
    CHECK(std::equal(row.begin(), row.begin() + 256, node.row(r).begin()));
    CHECK(row[256] == (r == 0 ? 0.5 : -0.5));
  }
  CHECK(assemble_features(node, text, FeatureMode::kN2v).features == node);
  CHECK(assemble_features(node, text, FeatureMode::kTe3).features.dimension() == 3072);

  TextEmbeddingMap partial{{"a", std::vector<double>(3072, 0.5)}};
  CHECK_THROWS_WITH_AS(assemble_features(node, partial, FeatureMode::kN2vTe3), doctest::Contains("b"), Error);
  const auto excluded = assemble_features(node, partial, FeatureMode::kN2vTe3, {}, {"b"});
  CHECK(excluded.features.rows() == 1);
  CHECK(excluded.excluded == std::vector<std::string>{"b"});
}

TEST_CASE("feature matrix binary round trip") {
  testsupport::TempDir dir("fm");
  FeatureMatrix m({"x", "y", "z"}, 3, {1.0 / 3, 2e-300, -0.0, 4, 5, 6, 7, 8, 1e300});
  save_feature_matrix(m, dir / "m.bin");
  const auto back = load_feature_matrix(dir / "m.bin");
  CHECK(back == m);
  CHECK(back.find("y") != nullptr);
  CHECK(back.find("nope") == nullptr);
  CHECK(std::signbit(back.row(0)[2]));
}

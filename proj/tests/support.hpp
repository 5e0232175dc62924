#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include <unistd.h>

#include "citeimpact/corpus.hpp"
#include "citeimpact/graph.hpp"
#include "citeimpact/text_embeddings.hpp"

namespace testsupport {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("citeimpact-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

// All-pairs AUC with exact integer counting.
inline double auc_all_pairs(const std::vector<double>& scores, const std::vector<bool>& labels) {
  long long wins2 = 0;
  long long pos = 0;
  long long neg = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i]) ++pos; else ++neg;
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      if (scores[i] > scores[j]) wins2 += 2;
      else if (scores[i] == scores[j]) wins2 += 1;
    }
  }
  return static_cast<double>(wins2) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

inline double plain_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  long double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<long double>(a[i]) * b[i];
    na += static_cast<long double>(a[i]) * a[i];
    nb += static_cast<long double>(b[i]) * b[i];
  }
  return static_cast<double>(dot / std::sqrt(na * nb));
}

// Brute-force similarity edges: each paper links to its k most similar
// papers of the same or an earlier year, ties by ascending id.
inline std::vector<std::pair<std::string, std::string>> brute_force_topk(
    const citeimpact::Corpus& corpus, const citeimpact::TextEmbeddingMap& emb, int k, bool directed) {
  std::vector<std::pair<std::string, std::string>> edges;
  const auto& papers = corpus.papers();
  for (const auto& self : papers) {
    std::vector<std::pair<double, std::string>> cands;
    for (const auto& other : papers) {
      if (other.id == self.id || other.pub_year > self.pub_year) continue;
      cands.emplace_back(plain_cosine(emb.at(self.id), emb.at(other.id)), other.id);
    }
    std::sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (std::size_t t = 0; t < std::min<std::size_t>(k, cands.size()); ++t) {
      auto e = std::make_pair(self.id, cands[t].second);
      if (!directed && e.second < e.first) std::swap(e.first, e.second);
      edges.push_back(e);
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

// Corpus of n papers with random years and Gaussian embeddings of dimension d.
inline std::pair<citeimpact::Corpus, citeimpact::TextEmbeddingMap> random_embedded_corpus(
    std::size_t n, std::size_t d, std::uint64_t seed, int first_year = 2010, int last_year = 2020) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> year(first_year, last_year);
  citeimpact::Corpus corpus(last_year);
  citeimpact::TextEmbeddingMap emb;
  for (std::size_t i = 0; i < n; ++i) {
    citeimpact::Paper p;
    char buf[32];
    std::snprintf(buf, sizeof buf, "p%04zu", i);
    p.id = buf;
    p.journal = "J";
    p.pub_year = year(rng);
    p.title = "t";
    p.abstract = "a";
    citeimpact::CitationHistory h{p.id, std::vector<std::int64_t>(last_year - p.pub_year + 1, 0)};
    std::vector<double> v(d);
    for (auto& x : v) x = normal(rng);
    emb[p.id] = v;
    corpus.add_paper(p, h);
  }
  return {std::move(corpus), std::move(emb)};
}

}  // namespace testsupport

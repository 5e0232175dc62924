#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "citeimpact/corpus.hpp"
#include "citeimpact/http.hpp"

namespace citeimpact {

inline constexpr std::size_t kTextEmbeddingDimension = 3072;
inline constexpr std::string_view kDefaultEmbeddingModel = "text-embedding-3-large";

struct TextEmbedding {
  std::string paper_id;
  std::string model_id;
  std::vector<double> vector;
};

// Keyed by paper id as stored in the corpus.
using TextEmbeddingMap = std::map<std::string, std::vector<double>>;

// a.b / (|a||b|), clamped to [-1, 1]. Throws on dimension mismatch or a zero
// vector.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  // One vector per text, in request order.
  virtual std::vector<std::vector<double>> embed(std::span<const std::string> texts,
                                                 std::string_view model) = 0;
};

// Offline provider: each token hashes to a seeded Gaussian vector; a text is
// the normalized sum of its tokens plus a shared offset. Texts with shared
// vocabulary land close together, which is what synthetic corpora rely on.
class HashingEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HashingEmbeddingProvider(std::size_t dimension = kTextEmbeddingDimension,
                                    std::uint64_t seed = 0);
  std::vector<std::vector<double>> embed(std::span<const std::string> texts,
                                         std::string_view model) override;

 private:
  std::size_t dimension_;
  std::uint64_t seed_;
};

// OpenAI-style /v1/embeddings: {"model":..., "input":[...]} ->
// {"data":[{"index":i,"embedding":[...]}, ...]}.
class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HttpEmbeddingProvider(HttpEndpoint endpoint, RetryPolicy retry = {},
                                 std::shared_ptr<RateLimiter> limiter = nullptr);
  std::vector<std::vector<double>> embed(std::span<const std::string> texts,
                                         std::string_view model) override;

  std::size_t requests_sent() const noexcept { return requests_.load(); }

 private:
  HttpEndpoint endpoint_;
  RetryPolicy retry_;
  std::shared_ptr<RateLimiter> limiter_;
  std::atomic<std::size_t> requests_{0};
};

// Append-only JSONL: {"paper_id":..., "model_id":..., "vector":[...]}.
// Later lines win for repeated keys.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(std::filesystem::path path);

  // Throws Error(kParse) naming the line on corruption.
  void load();
  bool contains(std::string_view paper_id, std::string_view model_id) const;
  const std::vector<double>* find(std::string_view paper_id, std::string_view model_id) const;
  void append(std::span<const TextEmbedding> batch);
  std::size_t size() const noexcept { return entries_.size(); }
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  std::map<std::pair<std::string, std::string>, std::vector<double>> entries_;
};

struct FetchOptions {
  std::string model_id = std::string(kDefaultEmbeddingModel);
  std::size_t dimension = kTextEmbeddingDimension;
  std::size_t batch_size = 64;
  std::size_t max_concurrency = 4;
};

struct FetchResult {
  TextEmbeddingMap embeddings;
  std::vector<std::string> skipped_empty;
  std::size_t batches_requested = 0;
  std::size_t cache_hits = 0;
};

// Cache-first. Uncached abstracts go out in order-preserving batches; every
// fetched batch is persisted before the call returns.
FetchResult fetch_text_embeddings(EmbeddingProvider& provider, std::span<const Paper> papers,
                                  EmbeddingCache& cache, const FetchOptions& options = {});

}  // namespace citeimpact

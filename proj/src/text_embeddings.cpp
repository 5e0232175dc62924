#include "citeimpact/text_embeddings.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "citeimpact/error.hpp"
#include "citeimpact/rng.hpp"
#include "citeimpact/text_io.hpp"

namespace citeimpact {

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::kDimension, "cosine of vectors with dimensions " +
                                           std::to_string(a.size()) + " and " +
                                           std::to_string(b.size()));
  }
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw Error(ErrorKind::kInvalidArgument, "cosine of a zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

HashingEmbeddingProvider::HashingEmbeddingProvider(std::size_t dimension, std::uint64_t seed)
    : dimension_(dimension), seed_(seed) {
  if (dimension == 0) throw Error(ErrorKind::kInvalidArgument, "embedding dimension must be > 0");
}

std::vector<std::vector<double>> HashingEmbeddingProvider::embed(
    std::span<const std::string> texts, std::string_view /*model*/) {
  const auto gaussian = [this](std::string_view tag) {
    Rng rng(derive_seed(seed_, tag));
    std::vector<double> v(dimension_);
    for (auto& x : v) x = standard_normal(rng);
    return v;
  };
  const auto offset = gaussian("\x01shared-offset");
  std::unordered_map<std::string, std::vector<double>> token_vectors;

  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    std::vector<double> v(dimension_, 0.0);
    std::size_t tokens = 0;
    std::istringstream words(text);
    std::string word;
    while (words >> word) {
      for (char& c : word) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      auto it = token_vectors.find(word);
      if (it == token_vectors.end()) it = token_vectors.emplace(word, gaussian(word)).first;
      for (std::size_t i = 0; i < dimension_; ++i) v[i] += it->second[i];
      ++tokens;
    }
    const double scale = tokens ? 1.0 / std::sqrt(static_cast<double>(tokens)) : 0.0;
    double norm = 0.0;
    for (std::size_t i = 0; i < dimension_; ++i) {
      v[i] = v[i] * scale + 0.7 * offset[i];
      norm += v[i] * v[i];
    }
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    out.push_back(std::move(v));
  }
  return out;
}

HttpEmbeddingProvider::HttpEmbeddingProvider(HttpEndpoint endpoint, RetryPolicy retry,
                                             std::shared_ptr<RateLimiter> limiter)
    : endpoint_(std::move(endpoint)), retry_(retry), limiter_(std::move(limiter)) {}

std::vector<std::vector<double>> HttpEmbeddingProvider::embed(std::span<const std::string> texts,
                                                              std::string_view model) {
  nlohmann::json request;
  request["model"] = model;
  request["input"] = std::vector<std::string>(texts.begin(), texts.end());
  ++requests_;
  const auto response = post_json_with_retry(endpoint_, request.dump(), retry_, limiter_.get());

  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(response.body);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::kProvider, std::string("embedding response is not JSON: ") + e.what());
  }
  const auto data = doc.find("data");
  if (!doc.is_object() || data == doc.end() || !data->is_array() || data->size() != texts.size()) {
    throw Error(ErrorKind::kProvider, "embedding response must carry one 'data' item per input");
  }
  std::vector<std::vector<double>> out(texts.size());
  std::vector<bool> seen(texts.size(), false);
  for (std::size_t i = 0; i < data->size(); ++i) {
    const auto& item = (*data)[i];
    std::size_t slot = i;
    if (item.contains("index")) {
      if (!item["index"].is_number_unsigned() || item["index"].get<std::size_t>() >= texts.size()) {
        throw Error(ErrorKind::kProvider, "embedding response has an invalid index");
      }
      slot = item["index"].get<std::size_t>();
    }
    if (seen[slot]) throw Error(ErrorKind::kProvider, "embedding response repeats an index");
    seen[slot] = true;
    const auto embedding = item.find("embedding");
    if (embedding == item.end() || !embedding->is_array()) {
      throw Error(ErrorKind::kProvider, "embedding response item lacks 'embedding'");
    }
    for (const auto& x : *embedding) {
      if (!x.is_number()) throw Error(ErrorKind::kProvider, "non-numeric embedding entry");
      out[slot].push_back(x.get<double>());
    }
  }
  return out;
}

EmbeddingCache::EmbeddingCache(std::filesystem::path path) : path_(std::move(path)) {}

void EmbeddingCache::load() {
  entries_.clear();
  if (!std::filesystem::exists(path_)) return;
  std::ifstream in(path_);
  if (!in) throw Error(ErrorKind::kIo, "cannot open embedding cache " + path_.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto corrupt = [&](const std::string& why) {
      return Error(ErrorKind::kParse, "embedding cache " + path_.string() + " line " +
                                          std::to_string(line_no) + " is corrupt: " + why);
    };
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw corrupt("invalid JSON");
    }
    if (!record.is_object() || !record.contains("paper_id") || !record["paper_id"].is_string() ||
        !record.contains("model_id") || !record["model_id"].is_string() ||
        !record.contains("vector") || !record["vector"].is_array()) {
      throw corrupt("expected paper_id, model_id and vector");
    }
    std::vector<double> v;
    v.reserve(record["vector"].size());
    for (const auto& x : record["vector"]) {
      if (!x.is_number()) throw corrupt("non-numeric vector entry");
      v.push_back(x.get<double>());
    }
    entries_[{record["paper_id"].get<std::string>(), record["model_id"].get<std::string>()}] =
        std::move(v);
  }
}

bool EmbeddingCache::contains(std::string_view paper_id, std::string_view model_id) const {
  return find(paper_id, model_id) != nullptr;
}

const std::vector<double>* EmbeddingCache::find(std::string_view paper_id,
                                                std::string_view model_id) const {
  const auto it = entries_.find({std::string(paper_id), std::string(model_id)});
  return it == entries_.end() ? nullptr : &it->second;
}

void EmbeddingCache::append(std::span<const TextEmbedding> batch) {
  if (batch.empty()) return;
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot append to embedding cache " + path_.string());
  for (const auto& e : batch) {
    nlohmann::ordered_json record;
    record["paper_id"] = e.paper_id;
    record["model_id"] = e.model_id;
    record["vector"] = e.vector;
    out << record.dump() << '\n';
    entries_[{e.paper_id, e.model_id}] = e.vector;
  }
  out.flush();
  if (!out) throw Error(ErrorKind::kIo, "short write to embedding cache " + path_.string());
}

FetchResult fetch_text_embeddings(EmbeddingProvider& provider, std::span<const Paper> papers,
                                  EmbeddingCache& cache, const FetchOptions& options) {
  if (options.batch_size == 0) throw Error(ErrorKind::kInvalidArgument, "batch_size must be > 0");
  FetchResult result;
  std::vector<const Paper*> pending;
  for (const auto& paper : papers) {
    const bool blank = std::all_of(paper.abstract.begin(), paper.abstract.end(),
                                   [](unsigned char c) { return std::isspace(c) != 0; });
    if (blank) {
      result.skipped_empty.push_back(paper.id);
    } else if (const auto* hit = cache.find(paper.id, options.model_id)) {
      result.embeddings[paper.id] = *hit;
      ++result.cache_hits;
    } else {
      pending.push_back(&paper);
    }
  }

  const std::size_t n_batches = (pending.size() + options.batch_size - 1) / options.batch_size;
  result.batches_requested = n_batches;
  std::vector<std::vector<TextEmbedding>> fetched(n_batches);
  std::vector<std::exception_ptr> errors(n_batches);
  std::atomic<std::size_t> next{0};

  const auto worker = [&] {
    for (std::size_t b = next++; b < n_batches; b = next++) {
      try {
        const std::size_t begin = b * options.batch_size;
        const std::size_t end = std::min(pending.size(), begin + options.batch_size);
        std::vector<std::string> texts;
        for (std::size_t i = begin; i < end; ++i) texts.push_back(pending[i]->abstract);
        auto vectors = provider.embed(texts, options.model_id);
        if (vectors.size() != texts.size()) {
          throw Error(ErrorKind::kProvider, "provider returned " + std::to_string(vectors.size()) +
                                                " vectors for " + std::to_string(texts.size()) +
                                                " texts");
        }
        for (std::size_t i = begin; i < end; ++i) {
          auto& v = vectors[i - begin];
          if (v.size() != options.dimension) {
            throw Error(ErrorKind::kDimension,
                        "embedding for " + pending[i]->id + " has dimension " +
                            std::to_string(v.size()) + ", expected " +
                            std::to_string(options.dimension));
          }
          if (!std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); })) {
            throw Error(ErrorKind::kProvider, "non-finite embedding for " + pending[i]->id);
          }
          fetched[b].push_back({pending[i]->id, options.model_id, std::move(v)});
        }
      } catch (...) {
        fetched[b].clear();
        errors[b] = std::current_exception();
      }
    }
  };

  const std::size_t width = std::clamp<std::size_t>(options.max_concurrency, 1, std::max<std::size_t>(1, n_batches));
  if (width <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < width; ++t) pool.emplace_back(worker);
  }

  // Persist every completed batch in batch order before surfacing any error.
  for (auto& batch : fetched) {
    cache.append(batch);
    for (auto& e : batch) result.embeddings[e.paper_id] = std::move(e.vector);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return result;
}

}  // namespace citeimpact

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "citeimpact/corpus.hpp"
#include "citeimpact/error.hpp"
#include "citeimpact/graph.hpp"
#include "citeimpact/http.hpp"
#include "citeimpact/labeling.hpp"
#include "citeimpact/text_embeddings.hpp"

namespace citeimpact {

enum class RetrievalStrategy { kNone, kRandom, kTopSimilar };

const char* to_string(RetrievalStrategy strategy) noexcept;
RetrievalStrategy retrieval_strategy_from_string(std::string_view name);

struct RetrievalConfig {
  RetrievalStrategy strategy = RetrievalStrategy::kNone;
  std::size_t k = 5;
  std::uint64_t seed = 1;
};

// round(fraction * |nodes|) nodes without replacement, returned sorted by id.
std::vector<std::string> sample_targets(const PaperGraph& graph, double fraction,
                                        std::uint64_t seed);
std::vector<std::string> sample_targets_count(const PaperGraph& graph, std::size_t count,
                                              std::uint64_t seed);

// At most rc.k neighbors of `target` (out-neighbors when directed). Random
// picks keep their draw order; top_similar is ordered by descending cosine,
// ties by ascending id. With a corpus, candidates published after the target
// are skipped.
std::vector<std::string> retrieve_neighbors(const PaperGraph& graph, std::string_view target,
                                            const RetrievalConfig& rc,
                                            const TextEmbeddingMap* embeddings = nullptr,
                                            const Corpus* corpus = nullptr);

enum class NeighborEncoding {
  kIndicator,  // historical top-paper label per disclosed offset, as 0.0/1.0
  kAcc,        // accumulated citations per disclosed offset
};

const char* to_string(NeighborEncoding encoding) noexcept;
NeighborEncoding neighbor_encoding_from_string(std::string_view name);

struct NeighborContext {
  Paper paper;
  std::vector<int> years;
  std::vector<double> y_acc_vector;
};

// Discloses offsets 0..(target_pub_year - neighbor.pub_year) only. Throws
// Error(kTemporal) when the neighbor postdates the target.
NeighborContext mask_neighbor_history(const Paper& neighbor, const CitationHistory& history,
                                      const LabelGrid& labels, int percent, int target_pub_year,
                                      NeighborEncoding encoding = NeighborEncoding::kIndicator);

struct PromptConfig {
  std::string graph_name;
  RetrievalStrategy retrieval = RetrievalStrategy::kNone;
  std::size_t k_neighbors = 0;
  bool directed = true;
  bool weighted = false;
  int percent = 20;
};

struct PromptTarget {
  Paper paper;
  std::vector<int> years;  // horizon offsets, in the order probabilities are requested
  int max_year = 0;        // last observable calendar year
};

struct PromptBundle {
  std::string system;
  std::string developer;
  std::string user;
  std::size_t n_years = 0;
  std::string target_id;
  std::vector<int> years;
};

const std::string& system_prompt();
const std::string& developer_prompt();

// Escapes &, <, > and quotes for XML character data.
std::string xml_escape(std::string_view text);

std::string format_int_list(std::span<const int> values);
std::string format_probability_list(std::span<const double> values);

// Renders the REQUEST document. NEIGHBORS is omitted for strategy none.
PromptBundle build_prompt(const PromptConfig& config, const PromptTarget& target,
                          std::span<const NeighborContext> neighbors);

enum class ParseMode { kStrict, kLenient };

const char* to_string(ParseMode mode) noexcept;

enum class ResponseErrorKind {
  kMalformed,
  kMissingKey,
  kExtraKeys,
  kWrongLength,
  kOutOfRange,
  kNonNumeric,
};

const char* to_string(ResponseErrorKind kind) noexcept;

class ResponseError : public Error {
 public:
  ResponseError(ResponseErrorKind kind, const std::string& message)
      : Error(ErrorKind::kResponse, message), response_kind_(kind) {}
  ResponseErrorKind response_kind() const noexcept { return response_kind_; }

 private:
  ResponseErrorKind response_kind_;
};

struct ParsedResponse {
  std::vector<double> probabilities;
  ParseMode mode = ParseMode::kStrict;
};

// Strict {"response":{"y_acc_vector":[...]}}. If that fails as malformed, one
// retry strips a fenced code block; success there is flagged kLenient.
ParsedResponse parse_response(std::string_view text, std::size_t n_years);

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual std::string complete(const PromptBundle& prompt) = 0;
};

enum class MockMode { kHash, kOracle };

const char* to_string(MockMode mode) noexcept;
MockMode mock_mode_from_string(std::string_view name);

// hash: probabilities from a digest of the prompt bytes and seed.
// oracle: 0.9 for a true label, 0.1 otherwise, +/- seeded jitter below 0.05.
std::string mock_llm(const PromptBundle& prompt, MockMode mode, const LabelGrid* labels,
                     int percent, std::uint64_t seed);

class MockLlmClient final : public LlmClient {
 public:
  MockLlmClient(MockMode mode, const LabelGrid* labels, int percent, std::uint64_t seed);
  std::string complete(const PromptBundle& prompt) override;

 private:
  MockMode mode_;
  const LabelGrid* labels_;
  int percent_;
  std::uint64_t seed_;
};

// Chat-completions endpoint with system/developer/user messages. `options` is
// a JSON object merged into the request body (temperature, reasoning effort).
class HttpLlmClient final : public LlmClient {
 public:
  HttpLlmClient(HttpEndpoint endpoint, std::string model, std::string options_json = "{}",
                RetryPolicy retry = {}, std::shared_ptr<RateLimiter> limiter = nullptr);
  std::string complete(const PromptBundle& prompt) override;

 private:
  HttpEndpoint endpoint_;
  std::string model_;
  std::string options_json_;
  RetryPolicy retry_;
  std::shared_ptr<RateLimiter> limiter_;
};

struct RagOptions {
  RetrievalConfig retrieval;
  int percent = 20;
  NeighborEncoding encoding = NeighborEncoding::kIndicator;
  double max_failure_rate = 0.5;
  std::size_t workers = 1;
  std::optional<int> max_horizon;
  std::optional<std::filesystem::path> audit_dir;
};

struct TargetPrediction {
  std::string target_id;
  std::vector<int> years;
  std::vector<double> probabilities;  // empty when missing
  ParseMode mode = ParseMode::kStrict;
  bool missing = false;
  std::size_t attempts = 0;
  double latency_ms = 0.0;
  std::string error;
};

struct RagRun {
  std::vector<TargetPrediction> predictions;  // sorted by target id
  std::size_t failures = 0;
  std::size_t prompt_bytes = 0;
};

// One request per target covering horizons 0..(max_data_year - pub_year).
// A response that fails to parse is requested once more, then recorded as
// missing. Throws Error(kResponse) when failures / targets > max_failure_rate.
RagRun run_graphrag(const Corpus& corpus, const PaperGraph& graph,
                    std::span<const std::string> targets, LlmClient& client,
                    const LabelGrid& labels, const TextEmbeddingMap* embeddings,
                    const RagOptions& options);

// target_id,Y,probability,parse_mode
std::string predictions_csv(const RagRun& run);

// All feasible horizons for one threshold.
LabelGrid full_label_grid(const Corpus& corpus, std::string_view journal, int percent);

}  // namespace citeimpact

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "citeimpact/classifier.hpp"
#include "citeimpact/graph.hpp"
#include "citeimpact/graphrag.hpp"
#include "citeimpact/node_embeddings.hpp"

namespace citeimpact {

struct TextEmbeddingConfig {
  std::string provider = "hashing";  // hashing | remote
  std::string model = std::string(kDefaultEmbeddingModel);
  std::size_t dimension = kTextEmbeddingDimension;
  std::size_t batch_size = 64;
  std::size_t max_concurrency = 4;
  double requests_per_second = 0.0;  // 0 disables rate limiting
  double timeout_s = 60.0;
};

struct LlmConfig {
  std::string type = "mock";  // mock | remote
  MockMode mock_mode = MockMode::kHash;
  std::string model;
  nlohmann::json options = nlohmann::json::object();
  double timeout_s = 120.0;
  double requests_per_second = 0.0;
  std::size_t max_retries = 3;
};

struct RagConfig {
  std::string graph;  // graph name; defaults to the first configured graph
  RetrievalStrategy strategy = RetrievalStrategy::kTopSimilar;
  std::size_t k = 5;
  double fraction = 0.1;
  std::optional<std::size_t> count;  // overrides fraction
  int percent = 20;
  NeighborEncoding encoding = NeighborEncoding::kIndicator;
  double max_failure_rate = 0.5;
  std::optional<int> max_horizon;
  bool audit = true;
  LlmConfig client;
};

struct RunConfig {
  std::filesystem::path corpus;
  std::string journal;  // empty: the corpus must hold exactly one journal
  std::optional<int> max_data_year;
  std::uint64_t seed = 1;
  std::filesystem::path out = "citeimpact-run";
  std::size_t workers = 1;

  std::vector<int> horizons{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::vector<int> percents{10, 20, 30, 40, 50};
  std::vector<GraphSpec> graphs;  // defaults to all 20 variants
  std::vector<FeatureMode> modes{FeatureMode::kN2v, FeatureMode::kTe3, FeatureMode::kN2vTe3};

  TextEmbeddingConfig text;
  WalkParams walks;
  SgnsParams sgns;
  MlpConfig mlp;
  std::size_t repetitions = 10;
  SplitMode split = SplitMode::kValidation;
  bool save_models = false;

  RagConfig rag;
};

// Unknown keys and ill-typed values raise Error(kValidation). Relative paths
// resolve against `base_dir`.
RunConfig parse_run_config(std::string_view json_text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
// Canonical form with every default filled in.
nlohmann::json run_config_to_json(const RunConfig& config);

// All 4 citation and 16 similarity variants.
std::vector<GraphSpec> default_graph_specs();

enum class Stage { kValidate, kLabel, kEmbedText, kBuildGraph, kEmbedNodes, kTrain, kRag, kReport };

const char* to_string(Stage stage) noexcept;
Stage stage_from_string(std::string_view name);
// Dependency order used by run_all.
const std::vector<Stage>& all_stages();

struct StageResult {
  Stage stage = Stage::kValidate;
  int exit_code = 0;  // nonzero when the stage ran but found problems
  bool cache_hit = false;
  double wall_time_s = 0.0;
  std::vector<std::string> messages;
  std::filesystem::path manifest;
};

class Pipeline {
 public:
  explicit Pipeline(RunConfig config);

  const RunConfig& config() const noexcept { return config_; }

  // Throws Error(kMissingArtifact) naming the producing command when an
  // upstream output is absent.
  StageResult run(Stage stage);
  std::vector<StageResult> run_all();

  std::filesystem::path artifact(std::string_view relative) const { return config_.out / relative; }

 private:
  RunConfig config_;
};

}  // namespace citeimpact

#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "citeimpact/feature_matrix.hpp"
#include "citeimpact/graph.hpp"
#include "citeimpact/text_embeddings.hpp"

namespace citeimpact {

struct WalkParams {
  std::size_t walks_per_node = 20;
  std::size_t walk_length = 120;
  double p = 1.0;  // return
  double q = 1.0;  // in-out
  std::uint64_t seed = 1;
  std::size_t workers = 1;
};

void validate_walk_params(const WalkParams& params);

// Node indices into graph.nodes().
using Walk = std::vector<std::uint32_t>;

// walks_per_node walks from every node, grouped by walk index then node order.
// Each walk has its own derived seed so the result ignores `workers`.
// Transition weights <= 0 are never taken; a walk stops at a node with no
// usable out-edge.
std::vector<Walk> generate_walks(const PaperGraph& graph, const WalkParams& params);

// One space-separated id sequence per line.
std::string walks_to_text(const PaperGraph& graph, std::span<const Walk> walks);

struct SgnsParams {
  std::size_t dimension = 256;
  std::size_t window = 10;
  std::size_t negatives = 5;
  std::size_t epochs = 5;
  double initial_learning_rate = 0.025;
  double final_learning_rate = 0.0001;
  double noise_exponent = 0.75;
  std::uint64_t seed = 1;
  // Checkpoints per epoch at which the running mean loss is recorded.
  std::size_t loss_checkpoints = 10;
};

void validate_sgns_params(const SgnsParams& params);

struct SgnsResult {
  FeatureMatrix embeddings;                 // input vectors, one row per walked node
  std::vector<double> epoch_loss;           // mean loss per epoch
  std::vector<double> checkpoint_loss;      // mean loss within each checkpoint slice
};

// Skip-gram with negative sampling over walk co-occurrences. One row per node
// that appears in any walk, in `node_ids` order.
SgnsResult train_sgns(std::span<const Walk> walks, std::span<const std::string> node_ids,
                      const SgnsParams& params);

// Loss of one (center, context) pair with sampled negatives:
//   -log s(u_o . v_c) - sum_k log s(-u_k . v_c)
// and its gradients. Training applies these gradients with a plain SGD step.
struct SgnsGradients {
  std::vector<double> center;
  std::vector<double> positive;
  std::vector<std::vector<double>> negatives;
};

double sgns_pair_loss(std::span<const double> center, std::span<const double> positive,
                      std::span<const std::span<const double>> negatives);
double sgns_pair_gradients(std::span<const double> center, std::span<const double> positive,
                           std::span<const std::span<const double>> negatives,
                           SgnsGradients& out);

enum class FeatureMode { kN2v, kTe3, kN2vTe3 };

const char* to_string(FeatureMode mode) noexcept;
FeatureMode feature_mode_from_string(std::string_view name);

struct AssembleResult {
  FeatureMatrix features;
  std::vector<std::string> excluded;  // empty-abstract papers left out
};

// Rows follow `ids` (node_emb.ids() when empty). Structural part first for
// n2v_te3. A missing text embedding for an id listed in `empty_abstract_ids`
// excludes the row; any other missing vector throws naming the id.
AssembleResult assemble_features(const FeatureMatrix& node_emb, const TextEmbeddingMap& text_emb,
                                 FeatureMode mode, std::span<const std::string> ids = {},
                                 const std::set<std::string>& empty_abstract_ids = {});

}  // namespace citeimpact

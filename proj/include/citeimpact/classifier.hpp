#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "citeimpact/feature_matrix.hpp"
#include "citeimpact/graph.hpp"
#include "citeimpact/labeling.hpp"
#include "citeimpact/metrics.hpp"
#include "citeimpact/node_embeddings.hpp"

namespace citeimpact {

enum class Optimizer { kSgdMomentum, kAdam };

const char* to_string(Optimizer optimizer) noexcept;
Optimizer optimizer_from_string(std::string_view name);

enum class SplitMode {
  kValidation,  // 85/15; evaluation reuses the early-stopping split
  kThreeWay,    // 70/15/15; evaluation on an untouched test split
};

struct MlpConfig {
  std::vector<std::size_t> hidden_sizes{64, 32};
  std::size_t batch_size = 2048;
  std::size_t max_epochs = 80;
  double validation_fraction = 0.15;
  std::size_t early_stop_patience = 5;
  double learning_rate = 1e-3;
  Optimizer optimizer = Optimizer::kAdam;
  double momentum = 0.9;
  std::uint64_t seed = 1;
};

void validate_mlp_config(const MlpConfig& config);

struct BalancedDataset {
  FeatureMatrix features;
  std::vector<bool> labels;
  LabelKey key;
  std::size_t repetition = 0;
  std::uint64_t seed = 0;
};

// All positives plus n_pos negatives drawn uniformly without replacement.
BalancedDataset balanced_sample(const LabelTable& table, const FeatureMatrix& features,
                                std::uint64_t seed, std::size_t repetition = 0);

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;
};

// Dense ReLU hidden layers and a single logistic output unit.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<DenseLayer> layers);
  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
  static Mlp initialized(std::size_t input_dim, std::span<const std::size_t> hidden,
                         std::uint64_t seed);

  std::size_t input_dimension() const;
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::vector<DenseLayer>& layers() noexcept { return layers_; }

  // Rows are samples.
  Eigen::VectorXd forward(const Eigen::Ref<const Eigen::MatrixXd>& x) const;

  // Mean binary cross-entropy and its gradients with respect to every
  // parameter, laid out like layers().
  double loss_and_gradients(const Eigen::Ref<const Eigen::MatrixXd>& x,
                            std::span<const double> y, std::vector<DenseLayer>& gradients) const;
  double loss(const Eigen::Ref<const Eigen::MatrixXd>& x, std::span<const double> y) const;

 private:
  std::vector<DenseLayer> layers_;
};

// Tracks the best validation loss; stop() fires after `patience` epochs
// without strict improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  // Returns true when training should stop after this epoch (1-based).
  bool update(std::size_t epoch, double validation_loss);
  std::size_t best_epoch() const noexcept { return best_epoch_; }
  double best_loss() const noexcept { return best_loss_; }
  bool improved_last() const noexcept { return improved_last_; }

 private:
  std::size_t patience_;
  std::size_t best_epoch_ = 0;
  double best_loss_ = 0.0;
  bool improved_last_ = false;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
};

struct TrainedModel {
  Mlp network;
  MlpConfig config;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  std::size_t epochs_trained = 0;
};

struct TrainSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;  // empty unless kThreeWay
};

// Seeded shuffle, then the trailing rows are held out.
TrainSplit split_rows(std::size_t n, const MlpConfig& config, SplitMode mode);

// Mini-batch training on split.train, early stopping on split.validation;
// the best-validation weights are restored. Throws Error(kTraining) on a
// non-finite loss.
TrainedModel train_model(const BalancedDataset& dataset, const MlpConfig& config,
                         const TrainSplit& split);
TrainedModel train_model(const BalancedDataset& dataset, const MlpConfig& config);

std::vector<double> predict(const TrainedModel& model, const FeatureMatrix& rows);
std::vector<double> predict(const Mlp& network, const FeatureMatrix& rows);

void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

struct GridCell {
  std::optional<GraphSpec> graph;  // empty for text-only features
  FeatureMode mode = FeatureMode::kN2v;
  std::string journal;
  const FeatureMatrix* features = nullptr;
  const LabelTable* labels = nullptr;
};

struct GridOptions {
  std::size_t repetitions = 10;
  std::uint64_t base_seed = 1;
  MlpConfig mlp;
  SplitMode split = SplitMode::kValidation;
  std::size_t workers = 1;
  // Called once per trained model (cell index, repetition).
  std::function<void(std::size_t, std::size_t, const TrainedModel&)> on_model;
};

struct CellFailure {
  std::size_t cell = 0;
  std::size_t repetition = 0;
  std::string message;
};

struct GridResult {
  EvalReport report;
  std::vector<CellFailure> failures;
  std::size_t models_trained = 0;
};

// Every (cell, repetition) draws its own balanced sample and initial weights
// from seeds derived from base_seed; failures are recorded, not thrown.
GridResult run_experiment_grid(std::span<const GridCell> cells, const GridOptions& options);

}  // namespace citeimpact

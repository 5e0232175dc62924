#include "citeimpact/classifier.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <thread>

#include <nlohmann/json.hpp>

#include "citeimpact/error.hpp"
#include "citeimpact/rng.hpp"

namespace citeimpact {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

const char* to_string(Optimizer optimizer) noexcept {
  return optimizer == Optimizer::kAdam ? "adam" : "sgd_momentum";
}

Optimizer optimizer_from_string(std::string_view name) {
  if (name == "adam") return Optimizer::kAdam;
  if (name == "sgd_momentum" || name == "sgd") return Optimizer::kSgdMomentum;
  throw Error(ErrorKind::kInvalidArgument, "unknown optimizer '" + std::string(name) + "'");
}

void validate_mlp_config(const MlpConfig& config) {
  const bool sizes_ok = std::all_of(config.hidden_sizes.begin(), config.hidden_sizes.end(),
                                    [](std::size_t s) { return s > 0; });
  if (!sizes_ok || config.batch_size == 0 || config.max_epochs == 0 ||
      !(config.validation_fraction > 0.0 && config.validation_fraction < 1.0) ||
      !(config.learning_rate > 0.0) || config.momentum < 0.0 || config.momentum >= 1.0) {
    throw Error(ErrorKind::kInvalidArgument, "invalid MLP configuration");
  }
}

BalancedDataset balanced_sample(const LabelTable& table, const FeatureMatrix& features,
                                std::uint64_t seed, std::size_t repetition) {
  std::vector<std::string> positives;
  std::vector<std::string> negatives;
  std::size_t missing = 0;
  std::string first_missing;
  for (const auto& [id, entry] : table.entries) {
    const bool has_row = features.find(id) != nullptr;
    if (entry.label) {
      if (!has_row) {
        if (missing++ == 0) first_missing = id;
        continue;
      }
      positives.push_back(id);
    } else if (has_row) {
      negatives.push_back(id);
    }
  }
  if (missing > 0) {
    throw Error(ErrorKind::kInvalidArgument, std::to_string(missing) +
                                                 " positive papers lack feature rows, e.g. '" +
                                                 first_missing + "'");
  }
  if (positives.empty()) throw Error(ErrorKind::kInvalidArgument, "label table has no positives");
  if (negatives.size() < positives.size()) {
    throw Error(ErrorKind::kInvalidArgument,
                "cannot balance " + std::to_string(positives.size()) + " positives with " +
                    std::to_string(negatives.size()) + " negatives");
  }

  Rng rng(derive_seed(seed, "balanced-sample", repetition));
  // Partial Fisher-Yates: the first n_pos slots become the draw.
  for (std::size_t i = 0; i < positives.size(); ++i) {
    std::swap(negatives[i], negatives[i + uniform_index(rng, negatives.size() - i)]);
  }
  negatives.resize(positives.size());

  std::vector<std::string> ids = positives;
  ids.insert(ids.end(), negatives.begin(), negatives.end());
  BalancedDataset ds;
  ds.features = features.select(ids);
  ds.labels.assign(positives.size(), true);
  ds.labels.resize(ids.size(), false);
  ds.key = table.key;
  ds.repetition = repetition;
  ds.seed = seed;
  return ds;
}

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw Error(ErrorKind::kInvalidArgument, "MLP needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].bias.size() != layers_[i].weights.rows() ||
        (i > 0 && layers_[i].weights.cols() != layers_[i - 1].weights.rows())) {
      throw Error(ErrorKind::kDimension, "inconsistent MLP layer shapes");
    }
  }
  if (layers_.back().weights.rows() != 1) {
    throw Error(ErrorKind::kDimension, "MLP output layer must have one unit");
  }
}

Mlp Mlp::initialized(std::size_t input_dim, std::span<const std::size_t> hidden,
                     std::uint64_t seed) {
  Rng rng(derive_seed(seed, "mlp-init"));
  std::vector<DenseLayer> layers;
  std::size_t fan_in = input_dim;
  std::vector<std::size_t> sizes(hidden.begin(), hidden.end());
  sizes.push_back(1);
  for (auto out : sizes) {
    DenseLayer layer{Eigen::MatrixXd(out, fan_in), Eigen::VectorXd::Zero(out)};
    const double limit = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
        layer.weights(r, c) = (2.0 * uniform01(rng) - 1.0) * limit;
      }
    }
    layers.push_back(std::move(layer));
    fan_in = out;
  }
  return Mlp(std::move(layers));
}

std::size_t Mlp::input_dimension() const {
  return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().weights.cols());
}

namespace {

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// Pre-activations per layer for a batch; the last holds output logits.
std::vector<Eigen::MatrixXd> forward_pass(const std::vector<DenseLayer>& layers,
                                          const Eigen::Ref<const Eigen::MatrixXd>& x) {
  std::vector<Eigen::MatrixXd> z;
  z.reserve(layers.size());
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Eigen::MatrixXd pre = a * layers[l].weights.transpose();
    pre.rowwise() += layers[l].bias.transpose();
    z.push_back(pre);
    if (l + 1 < layers.size()) a = pre.cwiseMax(0.0);
  }
  return z;
}

}  // namespace

Eigen::VectorXd Mlp::forward(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  if (static_cast<std::size_t>(x.cols()) != input_dimension()) {
    throw Error(ErrorKind::kDimension, "input dimension " + std::to_string(x.cols()) +
                                           " does not match model input " +
                                           std::to_string(input_dimension()));
  }
  const auto z = forward_pass(layers_, x);
  return z.back().col(0).unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

double Mlp::loss(const Eigen::Ref<const Eigen::MatrixXd>& x, std::span<const double> y) const {
  const auto z = forward_pass(layers_, x);
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) total += softplus(z.back()(i, 0)) - y[i] * z.back()(i, 0);
  return total / static_cast<double>(x.rows());
}

double Mlp::loss_and_gradients(const Eigen::Ref<const Eigen::MatrixXd>& x,
                               std::span<const double> y, std::vector<DenseLayer>& gradients) const {
  const auto n = static_cast<double>(x.rows());
  const auto z = forward_pass(layers_, x);
  const std::size_t depth = layers_.size();

  double total = 0.0;
  Eigen::MatrixXd delta(x.rows(), 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double logit = z.back()(i, 0);
    total += softplus(logit) - y[i] * logit;
    delta(i, 0) = (1.0 / (1.0 + std::exp(-logit)) - y[i]) / n;
  }

  gradients.resize(depth);
  for (std::size_t l = depth; l-- > 0;) {
    if (l > 0) {
      const Eigen::MatrixXd input = z[l - 1].cwiseMax(0.0);
      gradients[l].weights = delta.transpose() * input;
    } else {
      gradients[l].weights = delta.transpose() * x;
    }
    gradients[l].bias = delta.colwise().sum().transpose();
    if (l > 0) {
      Eigen::MatrixXd back = delta * layers_[l].weights;
      delta = back.cwiseProduct((z[l - 1].array() > 0.0).cast<double>().matrix());
    }
  }
  return total / n;
}

bool EarlyStopping::update(std::size_t epoch, double validation_loss) {
  if (best_epoch_ == 0 || validation_loss < best_loss_) {
    best_epoch_ = epoch;
    best_loss_ = validation_loss;
    improved_last_ = true;
    return false;
  }
  improved_last_ = false;
  return epoch - best_epoch_ >= patience_;
}

TrainSplit split_rows(std::size_t n, const MlpConfig& config, SplitMode mode) {
  if (n < (mode == SplitMode::kThreeWay ? 3u : 2u)) {
    throw Error(ErrorKind::kInvalidArgument, "dataset too small to split");
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(config.seed, "split"));
  shuffle(order, rng);

  const auto held = [&](double fraction) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
  };
  TrainSplit split;
  std::size_t end = n;
  if (mode == SplitMode::kThreeWay) {
    const std::size_t t = held(config.validation_fraction);
    split.test.assign(order.end() - t, order.end());
    end -= t;
  }
  const std::size_t v = std::min(held(config.validation_fraction), end - 1);
  split.validation.assign(order.begin() + (end - v), order.begin() + end);
  split.train.assign(order.begin(), order.begin() + (end - v));
  return split;
}

namespace {

Eigen::MatrixXd gather_rows(const FeatureMatrix& features, std::span<const std::size_t> rows) {
  Eigen::MatrixXd x(rows.size(), features.dimension());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = features.row(rows[i]);
    for (std::size_t c = 0; c < r.size(); ++c) x(i, c) = r[c];
  }
  return x;
}

std::vector<double> gather_labels(const std::vector<bool>& labels, std::span<const std::size_t> rows) {
  std::vector<double> y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) y[i] = labels[rows[i]] ? 1.0 : 0.0;
  return y;
}

struct OptimizerState {
  std::vector<DenseLayer> first;   // momentum / Adam first moment
  std::vector<DenseLayer> second;  // Adam second moment
  std::size_t steps = 0;
};

DenseLayer zeros_like(const DenseLayer& layer) {
  return {Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols()),
          Eigen::VectorXd::Zero(layer.bias.size())};
}

void apply_step(Mlp& network, const std::vector<DenseLayer>& grads, const MlpConfig& config,
                OptimizerState& state) {
  auto& layers = network.layers();
  if (state.first.empty()) {
    for (const auto& l : layers) {
      state.first.push_back(zeros_like(l));
      state.second.push_back(zeros_like(l));
    }
  }
  ++state.steps;
  const double lr = config.learning_rate;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (config.optimizer == Optimizer::kSgdMomentum) {
      state.first[l].weights = config.momentum * state.first[l].weights - lr * grads[l].weights;
      state.first[l].bias = config.momentum * state.first[l].bias - lr * grads[l].bias;
      layers[l].weights += state.first[l].weights;
      layers[l].bias += state.first[l].bias;
    } else {
      constexpr double kBeta1 = 0.9;
      constexpr double kBeta2 = 0.999;
      constexpr double kEps = 1e-7;
      const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.steps));
      const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.steps));
      auto& m = state.first[l];
      auto& v = state.second[l];
      m.weights = kBeta1 * m.weights + (1.0 - kBeta1) * grads[l].weights;
      m.bias = kBeta1 * m.bias + (1.0 - kBeta1) * grads[l].bias;
      v.weights = kBeta2 * v.weights + (1.0 - kBeta2) * grads[l].weights.cwiseAbs2();
      v.bias = kBeta2 * v.bias + (1.0 - kBeta2) * grads[l].bias.cwiseAbs2();
      layers[l].weights.array() -=
          lr * (m.weights.array() / c1) / ((v.weights.array() / c2).sqrt() + kEps);
      layers[l].bias.array() -= lr * (m.bias.array() / c1) / ((v.bias.array() / c2).sqrt() + kEps);
    }
  }
}

}  // namespace

TrainedModel train_model(const BalancedDataset& dataset, const MlpConfig& config,
                         const TrainSplit& split) {
  validate_mlp_config(config);
  if (dataset.features.rows() == 0) throw Error(ErrorKind::kInvalidArgument, "empty dataset");
  if (split.train.empty() || split.validation.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "training and validation splits must be non-empty");
  }

  const Eigen::MatrixXd x_val = gather_rows(dataset.features, split.validation);
  const auto y_val = gather_labels(dataset.labels, split.validation);

  TrainedModel model;
  model.config = config;
  model.network = Mlp::initialized(dataset.features.dimension(), config.hidden_sizes, config.seed);
  Mlp best = model.network;
  EarlyStopping stopper(config.early_stop_patience);
  OptimizerState state;
  Rng rng(derive_seed(config.seed, "batches"));
  std::vector<std::size_t> order = split.train;
  std::vector<DenseLayer> grads;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    shuffle(order, rng);
    double train_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::span<const std::size_t> batch(order.data() + start,
                                               std::min(config.batch_size, order.size() - start));
      const Eigen::MatrixXd x = gather_rows(dataset.features, batch);
      const auto y = gather_labels(dataset.labels, batch);
      const double loss = model.network.loss_and_gradients(x, y, grads);
      if (!std::isfinite(loss)) {
        throw Error(ErrorKind::kTraining, "non-finite training loss at epoch " +
                                              std::to_string(epoch) + "; lower the learning rate");
      }
      train_total += loss * static_cast<double>(batch.size());
      apply_step(model.network, grads, config, state);
    }
    const double val_loss = model.network.loss(x_val, y_val);
    if (!std::isfinite(val_loss)) {
      throw Error(ErrorKind::kTraining, "non-finite validation loss at epoch " + std::to_string(epoch));
    }
    model.log.push_back({epoch, train_total / static_cast<double>(order.size()), val_loss});
    model.epochs_trained = epoch;
    const bool stop = stopper.update(epoch, val_loss);
    if (stopper.improved_last()) best = model.network;
    if (stop) break;
  }
  model.best_epoch = stopper.best_epoch();
  model.network = std::move(best);
  return model;
}

TrainedModel train_model(const BalancedDataset& dataset, const MlpConfig& config) {
  return train_model(dataset, config,
                     split_rows(dataset.features.rows(), config, SplitMode::kValidation));
}

std::vector<double> predict(const Mlp& network, const FeatureMatrix& rows) {
  if (rows.dimension() != network.input_dimension()) {
    throw Error(ErrorKind::kDimension, "feature dimension " + std::to_string(rows.dimension()) +
                                           " does not match model input " +
                                           std::to_string(network.input_dimension()));
  }
  if (rows.rows() == 0) return {};
  const Eigen::Map<const RowMatrix> x(rows.values().data(), rows.rows(), rows.dimension());
  const Eigen::VectorXd p = network.forward(x);
  return {p.data(), p.data() + p.size()};
}

std::vector<double> predict(const TrainedModel& model, const FeatureMatrix& rows) {
  return predict(model.network, rows);
}

namespace {

constexpr char kModelMagic[8] = {'C', 'I', 'M', 'L', 'P', '0', '0', '1'};

void write_u64(std::ofstream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint64_t read_u64(std::ifstream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw Error(ErrorKind::kParse, "truncated model file");
  return v;
}

nlohmann::json config_json(const TrainedModel& model) {
  const auto& c = model.config;
  nlohmann::json j;
  j["hidden_sizes"] = c.hidden_sizes;
  j["batch_size"] = c.batch_size;
  j["max_epochs"] = c.max_epochs;
  j["validation_fraction"] = c.validation_fraction;
  j["early_stop_patience"] = c.early_stop_patience;
  j["learning_rate"] = c.learning_rate;
  j["optimizer"] = to_string(c.optimizer);
  j["momentum"] = c.momentum;
  j["seed"] = c.seed;
  j["best_epoch"] = model.best_epoch;
  j["epochs_trained"] = model.epochs_trained;
  auto log = nlohmann::json::array();
  for (const auto& e : model.log) log.push_back({e.epoch, e.train_loss, e.validation_loss});
  j["log"] = std::move(log);
  return j;
}

}  // namespace

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out.write(kModelMagic, sizeof(kModelMagic));
  const std::string header = config_json(model).dump();
  write_u64(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  const auto& layers = model.network.layers();
  write_u64(out, layers.size());
  for (const auto& l : layers) {
    write_u64(out, static_cast<std::uint64_t>(l.weights.rows()));
    write_u64(out, static_cast<std::uint64_t>(l.weights.cols()));
    const RowMatrix w = l.weights;
    out.write(reinterpret_cast<const char*>(w.data()),
              static_cast<std::streamsize>(w.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(l.bias.data()),
              static_cast<std::streamsize>(l.bias.size() * sizeof(double)));
  }
  if (!out) throw Error(ErrorKind::kIo, "short write to " + path.string());
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  char magic[8] = {};
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kModelMagic)) {
    throw Error(ErrorKind::kParse, path.string() + " is not a model file");
  }
  std::string header(read_u64(in), '\0');
  in.read(header.data(), static_cast<std::streamsize>(header.size()));
  TrainedModel model;
  try {
    const auto j = nlohmann::json::parse(header);
    auto& c = model.config;
    c.hidden_sizes = j.at("hidden_sizes").get<std::vector<std::size_t>>();
    c.batch_size = j.at("batch_size");
    c.max_epochs = j.at("max_epochs");
    c.validation_fraction = j.at("validation_fraction");
    c.early_stop_patience = j.at("early_stop_patience");
    c.learning_rate = j.at("learning_rate");
    c.optimizer = optimizer_from_string(j.at("optimizer").get<std::string>());
    c.momentum = j.at("momentum");
    c.seed = j.at("seed");
    model.best_epoch = j.at("best_epoch");
    model.epochs_trained = j.at("epochs_trained");
    for (const auto& e : j.at("log")) {
      model.log.push_back({e.at(0).get<std::size_t>(), e.at(1).get<double>(), e.at(2).get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParse, path.string() + ": bad config header: " + e.what());
  }
  std::vector<DenseLayer> layers(read_u64(in));
  for (auto& l : layers) {
    const auto rows = static_cast<Eigen::Index>(read_u64(in));
    const auto cols = static_cast<Eigen::Index>(read_u64(in));
    RowMatrix w(rows, cols);
    in.read(reinterpret_cast<char*>(w.data()), static_cast<std::streamsize>(w.size() * sizeof(double)));
    l.weights = w;
    l.bias.resize(rows);
    in.read(reinterpret_cast<char*>(l.bias.data()), static_cast<std::streamsize>(rows * sizeof(double)));
    if (!in) throw Error(ErrorKind::kParse, "truncated model file " + path.string());
  }
  model.network = Mlp(std::move(layers));
  return model;
}

GridResult run_experiment_grid(std::span<const GridCell> cells, const GridOptions& options) {
  struct Outcome {
    std::optional<EvalRow> row;
    std::optional<CellFailure> failure;
  };
  const std::size_t total = cells.size() * options.repetitions;
  std::vector<Outcome> outcomes(total);
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> trained{0};

  const auto run_one = [&](std::size_t task) {
    const std::size_t c = task / options.repetitions;
    const std::size_t rep = task % options.repetitions;
    const auto& cell = cells[c];
    try {
      if (!cell.features || !cell.labels) {
        throw Error(ErrorKind::kInvalidArgument, "grid cell lacks features or labels");
      }
      const std::string tag = (cell.graph ? graph_name(*cell.graph) : std::string("text")) + "/" + to_string(cell.mode) + "/" +
                              cell.journal + "/" + std::to_string(cell.labels->key.horizon) + "/" +
                              std::to_string(cell.labels->key.percent);
      const auto seed = derive_seed(options.base_seed, tag, rep);
      const auto dataset = balanced_sample(*cell.labels, *cell.features, seed, rep);
      MlpConfig config = options.mlp;
      config.seed = derive_seed(seed, "mlp");
      const auto split = split_rows(dataset.features.rows(), config, options.split);
      const auto model = train_model(dataset, config, split);
      ++trained;
      if (options.on_model) options.on_model(c, rep, model);

      const auto& eval_rows = options.split == SplitMode::kThreeWay ? split.test : split.validation;
      const auto eval = dataset.features.select([&] {
        std::vector<std::string> ids;
        for (auto r : eval_rows) ids.push_back(dataset.features.ids()[r]);
        return ids;
      }());
      const auto scores = predict(model, eval);
      std::vector<bool> truth;
      for (auto r : eval_rows) truth.push_back(dataset.labels[r]);
      // std::vector<bool> has no contiguous storage; copy into a span-able buffer.
      std::unique_ptr<bool[]> flags(new bool[truth.size()]);
      std::size_t n_pos = 0;
      for (std::size_t i = 0; i < truth.size(); ++i) {
        flags[i] = truth[i];
        n_pos += truth[i];
      }
      EvalRow row;
      if (cell.graph) {
        row.config = {to_string(cell.graph->kind), cell.graph->directed, cell.graph->weighted,
                      cell.graph->k.value_or(0), to_string(cell.mode)};
      } else {
        row.config = {"none", false, false, 0, to_string(cell.mode)};
      }
      row.journal = cell.journal;
      row.horizon = cell.labels->key.horizon;
      row.percent = cell.labels->key.percent;
      row.repetition = rep;
      row.auc = auc_roc(scores, std::span<const bool>(flags.get(), truth.size()));
      row.n_pos = n_pos;
      row.n_neg = truth.size() - n_pos;
      outcomes[task].row = row;
    } catch (const std::exception& e) {
      outcomes[task].failure = CellFailure{c, rep, e.what()};
    }
  };

  const auto work = [&] {
    for (std::size_t t = next++; t < total; t = next++) run_one(t);
  };
  const std::size_t width = std::clamp<std::size_t>(options.workers, 1, std::max<std::size_t>(1, total));
  if (width == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < width; ++t) pool.emplace_back(work);
  }

  GridResult result;
  result.models_trained = trained;
  for (auto& o : outcomes) {
    if (o.row) result.report.rows.push_back(*o.row);
    if (o.failure) result.failures.push_back(*o.failure);
  }
  return result;
}

}  // namespace citeimpact

#include <doctest.h>

#include <cmath>
#include <atomic>
#include <set>

#include "citeimpact/classifier.hpp"
#include "citeimpact/error.hpp"
#include "citeimpact/rng.hpp"
#include "citeimpact/text_io.hpp"
#include "support.hpp"

using namespace citeimpact;

namespace {

LabelTable table_for(std::size_t n_pos, std::size_t n_neg) {
  LabelTable t;
  t.key = {0, 50};
  t.journal = "J";
  for (std::size_t i = 0; i < n_pos + n_neg; ++i) {
    t.entries["r" + std::to_string(100000 + i)] = {static_cast<std::int64_t>(i), i < n_pos};
  }
  t.n_pos = n_pos;
  return t;
}

FeatureMatrix rows_for(const LabelTable& t, std::size_t dim, std::uint64_t seed) {
  std::vector<std::string> ids;
  for (const auto& [id, e] : t.entries) ids.push_back(id);
  FeatureMatrix m(ids, dim);
  Rng rng(seed);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (auto& v : m.row(r)) v = standard_normal(rng);
  }
  return m;
}

// Two well-separated 2-d blobs, 100 points each.
BalancedDataset blobs() {
  Rng rng(31);
  std::vector<std::string> ids;
  std::vector<double> values;
  std::vector<bool> labels;
  for (int i = 0; i < 200; ++i) {
    const bool pos = i < 100;
    ids.push_back("b" + std::to_string(i));
    values.push_back((pos ? 3.0 : -3.0) + 0.5 * standard_normal(rng));
    values.push_back((pos ? 3.0 : -3.0) + 0.5 * standard_normal(rng));
    labels.push_back(pos);
  }
  return {FeatureMatrix(ids, 2, values), labels, {0, 50}, 0, 0};
}

}  // namespace

TEST_CASE("balanced sample keeps every positive and draws as many negatives") {
  const auto t = table_for(40, 300);
  const auto m = rows_for(t, 4, 1);
  const auto ds = balanced_sample(t, m, 9);
  CHECK(ds.features.rows() == 80);
  CHECK(std::count(ds.labels.begin(), ds.labels.end(), true) == 40);
  CHECK(std::count(ds.labels.begin(), ds.labels.end(), false) == 40);
  std::set<std::string> unique(ds.features.ids().begin(), ds.features.ids().end());
  CHECK(unique.size() == 80);

  const auto again = balanced_sample(t, m, 9);
  CHECK(again.features == ds.features);
  CHECK(again.labels == ds.labels);
  CHECK_FALSE(balanced_sample(t, m, 10, 1).features == ds.features);
}

TEST_CASE("the paper-scale cohort balances to twice its positives") {
  const auto t = table_for(7071, 35354 - 7071);
  const auto m = rows_for(t, 1, 2);
  CHECK(balanced_sample(t, m, 1).features.rows() == 14142);
}

TEST_CASE("too few negatives cannot be balanced") {
  const auto t = table_for(5, 3);
  CHECK_THROWS_AS(balanced_sample(t, rows_for(t, 2, 1), 1), Error);
}

TEST_CASE("positives without feature rows are an error") {
  const auto t = table_for(3, 10);
  auto m = rows_for(t, 2, 1);
  std::vector<std::string> keep(m.ids().begin() + 1, m.ids().end());
  CHECK_THROWS_AS(balanced_sample(t, m.select(keep), 1), Error);
}

TEST_CASE("zero network outputs one half") {
  std::vector<DenseLayer> layers{{Eigen::MatrixXd::Zero(4, 3), Eigen::VectorXd::Zero(4)},
                                 {Eigen::MatrixXd::Zero(1, 4), Eigen::VectorXd::Zero(1)}};
  const Mlp net(layers);
  const auto out = net.forward(Eigen::MatrixXd::Zero(2, 3));
  CHECK(out(0) == 0.5);
  CHECK(out(1) == 0.5);
}

TEST_CASE("single-layer forward pass matches the closed form") {
  Eigen::MatrixXd w(1, 3);
  w << 0.5, -1.25, 2.0;
  Eigen::VectorXd b(1);
  b << -0.3;
  const Mlp net({{w, b}});
  Eigen::MatrixXd x(2, 3);
  x << 1.0, 2.0, 3.0, -0.5, 0.25, 0.125;
  const auto out = net.forward(x);
  for (int r = 0; r < 2; ++r) {
    const double z = 0.5 * x(r, 0) - 1.25 * x(r, 1) + 2.0 * x(r, 2) - 0.3;
    CHECK(std::abs(out(r) - 1.0 / (1.0 + std::exp(-z))) <= 1e-12);
  }
}

TEST_CASE("predictions are pure and inside the unit interval") {
  const std::vector<std::size_t> hidden{64, 32};
  const Mlp net = Mlp::initialized(5, hidden, 3);
  FeatureMatrix rows({"a", "b", "c"}, 5, {1, 2, 3, 4, 5, 1, 2, 3, 4, 5, -40, 60, 0, 7, 1});
  const auto p = predict(net, rows);
  REQUIRE(p.size() == 3);
  CHECK(p[0] == p[1]);
  for (double v : p) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  CHECK(predict(net, rows) == p);
  CHECK_THROWS_AS(predict(net, FeatureMatrix({"a"}, 4, {1, 2, 3, 4})), Error);
}

TEST_CASE("early stopping arithmetic") {
  EarlyStopping stop(5);
  std::size_t halted = 0;
  for (std::size_t epoch = 1; epoch <= 80; ++epoch) {
    const double loss = epoch <= 3 ? 1.0 / static_cast<double>(epoch) : 1.0 + static_cast<double>(epoch);
    if (stop.update(epoch, loss)) {
      halted = epoch;
      break;
    }
  }
  CHECK(halted == 8);
  CHECK(stop.best_epoch() == 3);
}

TEST_CASE("training separates blobs and respects the epoch bound") {
  const auto ds = blobs();
  // A threshold on one axis already separates the blobs.
  std::vector<double> axis;
  for (std::size_t r = 0; r < ds.features.rows(); ++r) axis.push_back(ds.features.row(r)[0]);
  REQUIRE(testsupport::auc_all_pairs(axis, ds.labels) >= 0.99);

  MlpConfig config;
  config.seed = 4;
  const auto model = train_model(ds, config);
  CHECK(model.epochs_trained <= config.max_epochs);
  CHECK(model.log.size() == model.epochs_trained);
  if (model.epochs_trained < config.max_epochs) {
    CHECK(model.epochs_trained == model.best_epoch + config.early_stop_patience);
  }
  const auto p = predict(model, ds.features);
  CHECK(testsupport::auc_all_pairs(p, ds.labels) >= 0.99);

  MlpConfig sgd = config;
  sgd.optimizer = Optimizer::kSgdMomentum;
  sgd.learning_rate = 0.05;
  sgd.batch_size = 32;
  const auto sgd_model = train_model(ds, sgd);
  CHECK(testsupport::auc_all_pairs(predict(sgd_model, ds.features), ds.labels) >= 0.99);
}

TEST_CASE("training is reproducible and restores the best epoch") {
  const auto ds = blobs();
  MlpConfig config;
  config.batch_size = 16;
  config.seed = 12;
  const auto a = train_model(ds, config);
  const auto b = train_model(ds, config);
  CHECK(predict(a, ds.features) == predict(b, ds.features));
  REQUIRE(a.best_epoch >= 1);
  const auto split = split_rows(ds.features.rows(), config, SplitMode::kValidation);
  Eigen::MatrixXd xv(split.validation.size(), 2);
  std::vector<double> yv;
  for (std::size_t i = 0; i < split.validation.size(); ++i) {
    const auto row = ds.features.row(split.validation[i]);
    xv(i, 0) = row[0];
    xv(i, 1) = row[1];
    yv.push_back(ds.labels[split.validation[i]]);
  }
  double best = a.log.front().validation_loss;
  for (const auto& e : a.log) best = std::min(best, e.validation_loss);
  CHECK(a.network.loss(xv, yv) == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("splits hold out disjoint rows") {
  MlpConfig config;
  const auto s = split_rows(200, config, SplitMode::kValidation);
  CHECK(s.validation.size() == 30);
  CHECK(s.train.size() == 170);
  CHECK(s.test.empty());
  const auto t = split_rows(200, config, SplitMode::kThreeWay);
  CHECK(t.test.size() == 30);
  CHECK(t.validation.size() == 30);
  CHECK(t.train.size() == 140);
  std::set<std::size_t> all(t.train.begin(), t.train.end());
  all.insert(t.validation.begin(), t.validation.end());
  all.insert(t.test.begin(), t.test.end());
  CHECK(all.size() == 200);
}

TEST_CASE("exploding loss aborts with a diagnostic") {
  const auto ds = blobs();
  MlpConfig config;
  config.optimizer = Optimizer::kSgdMomentum;
  config.learning_rate = 1e12;
  config.batch_size = 8;
  std::vector<std::string> ids = ds.features.ids();
  std::vector<double> huge(ds.features.values());
  for (auto& v : huge) v *= 1e150;
  BalancedDataset big{FeatureMatrix(ids, 2, huge), ds.labels, ds.key, 0, 0};
  CHECK_THROWS_AS(train_model(big, config), Error);
}

TEST_CASE("config validation") {
  MlpConfig c;
  c.validation_fraction = 1.0;
  CHECK_THROWS_AS(validate_mlp_config(c), Error);
  c = {};
  c.hidden_sizes = {64, 0};
  CHECK_THROWS_AS(validate_mlp_config(c), Error);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(validate_mlp_config(c), Error);
  CHECK(optimizer_from_string("adam") == Optimizer::kAdam);
  CHECK(optimizer_from_string("sgd_momentum") == Optimizer::kSgdMomentum);
  CHECK_THROWS_AS(optimizer_from_string("rmsprop"), Error);
}

TEST_CASE("model files round trip") {
  testsupport::TempDir dir("model");
  MlpConfig config;
  config.max_epochs = 3;
  const auto model = train_model(blobs(), config);
  save_model(model, dir / "m.bin");
  const auto back = load_model(dir / "m.bin");
  CHECK(back.best_epoch == model.best_epoch);
  CHECK(back.log.size() == model.log.size());
  const auto ds = blobs();
  CHECK(predict(back, ds.features) == predict(model, ds.features));
  write_file(dir / "bad.bin", "NOTAMODEL");
  CHECK_THROWS_AS(load_model(dir / "bad.bin"), Error);
}

TEST_CASE("one cell with ten repetitions trains ten models") {
  const auto t = table_for(60, 200);
  const auto m = rows_for(t, 6, 3);
  const GridCell cell{GraphSpec{GraphKind::kCitation, true, false, std::nullopt}, FeatureMode::kN2v, "J", &m, &t};
  GridOptions options;
  std::atomic<int> seen{0};
  options.on_model = [&](std::size_t, std::size_t, const TrainedModel&) { ++seen; };
  const auto r = run_experiment_grid(std::span<const GridCell>(&cell, 1), options);
  CHECK(r.models_trained == 10);
  CHECK(seen == 10);
  CHECK(r.report.rows.size() == 10);
  CHECK(r.report.aggregates().size() == 1);

  options.workers = 3;
  options.on_model = nullptr;
  const auto parallel = run_experiment_grid(std::span<const GridCell>(&cell, 1), options);
  CHECK(eval_rows_csv(parallel.report) == eval_rows_csv(r.report));
}

TEST_CASE("coin-flip labels give chance-level AUC") {
  Rng rng(2000);
  LabelTable t;
  t.key = {0, 50};
  std::size_t n_pos = 0;
  for (int i = 0; i < 2000; ++i) {
    const bool label = uniform01(rng) < 0.5;
    t.entries["f" + std::to_string(10000 + i)] = {0, label};
    n_pos += label;
  }
  t.n_pos = n_pos;
  // Pad so that negatives outnumber positives.
  for (int i = 0; i < 200; ++i) t.entries["g" + std::to_string(10000 + i)] = {0, false};
  const auto m = rows_for(t, 8, 5);
  const GridCell cell{std::nullopt, FeatureMode::kTe3, "J", &m, &t};
  GridOptions options;
  const auto r = run_experiment_grid(std::span<const GridCell>(&cell, 1), options);
  CHECK(std::abs(r.report.aggregates().front().mean_auc - 0.5) <= 0.05);
}

TEST_CASE("failing cells are recorded, not thrown") {
  const auto good = table_for(20, 60);
  const auto bad = table_for(20, 5);
  const auto m = rows_for(good, 3, 1);
  const auto mb = rows_for(bad, 3, 1);
  const std::vector<GridCell> cells{{std::nullopt, FeatureMode::kTe3, "J", &m, &good},
                                    {std::nullopt, FeatureMode::kTe3, "J", &mb, &bad}};
  GridOptions options;
  options.repetitions = 2;
  const auto r = run_experiment_grid(cells, options);
  CHECK(r.report.rows.size() == 2);
  CHECK(r.failures.size() == 2);
  CHECK(r.failures.front().cell == 1);
}

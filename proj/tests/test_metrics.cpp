#include <doctest.h>

#include <cmath>
#include <memory>

#include "citeimpact/error.hpp"
#include "citeimpact/metrics.hpp"
#include "citeimpact/rng.hpp"
#include "support.hpp"

using namespace citeimpact;

namespace {

double auc(const std::vector<double>& s, const std::vector<bool>& l) {
  std::unique_ptr<bool[]> flags(new bool[l.size()]);
  for (std::size_t i = 0; i < l.size(); ++i) flags[i] = l[i];
  return auc_roc(s, {flags.get(), l.size()});
}

LabelGrid grid_with(const std::map<std::string, std::pair<bool, bool>>& labels) {
  // Two horizons, label per horizon.
  LabelGrid g;
  for (int y = 0; y < 2; ++y) {
    LabelTable t;
    t.key = {y, 20};
    for (const auto& [id, pair] : labels) t.entries[id] = {0, y == 0 ? pair.first : pair.second};
    g.tables[t.key] = t;
  }
  return g;
}

}  // namespace

TEST_CASE("AUC on small cases") {
  CHECK(auc({0.9, 0.8, 0.1, 0.2}, {true, true, false, false}) == 1.0);
  CHECK(auc({0.4, 0.4, 0.4, 0.4}, {true, false, true, false}) == 0.5);
  CHECK(auc({0.1, 0.9}, {true, false}) == 0.0);
  CHECK_THROWS_AS(auc({0.1, 0.2}, {true, true}), Error);
  CHECK_THROWS_AS(auc({0.1, NAN}, {true, false}), Error);
  CHECK_THROWS_AS(auc({0.1}, {true, false}), Error);
}

TEST_CASE("AUC equals the all-pairs count on random data") {
  Rng rng(100);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(100);
    std::vector<bool> l(100);
    for (int i = 0; i < 100; ++i) {
      s[i] = static_cast<double>(uniform_index(rng, 30));
      l[i] = uniform01(rng) < 0.4;
    }
    l[0] = true;
    l[1] = false;
    CHECK(auc(s, l) == testsupport::auc_all_pairs(s, l));
  }
}

TEST_CASE("AUC symmetry and monotone invariance") {
  Rng rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> s(80), neg(80), warped(80);
    std::vector<bool> l(80);
    for (int i = 0; i < 80; ++i) {
      s[i] = uniform01(rng) + i * 1e-9;  // tie-free
      neg[i] = -s[i];
      warped[i] = std::exp(3.0 * s[i]) + 11.0;
      l[i] = i % 3 == 0;
    }
    CHECK(auc(s, l) + auc(neg, l) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(auc(warped, l) == auc(s, l));
  }
}

TEST_CASE("aggregates give mean and sample deviation") {
  EvalReport report;
  const ConfigDescriptor cfg{"citation", true, false, 0, "n2v"};
  for (std::size_t rep = 0; rep < 3; ++rep) report.rows.push_back({cfg, "J", 5, 20, rep, 0.6 + 0.1 * rep, 10, 10});
  const auto agg = report.aggregates();
  REQUIRE(agg.size() == 1);
  CHECK(agg[0].repetitions == 3);
  CHECK(agg[0].mean_auc == doctest::Approx(0.7));
  CHECK(agg[0].std_auc == doctest::Approx(0.1));
  const auto csv = eval_aggregates_csv(report);
  CHECK(csv.rfind("graph_kind,directed,weighted,K,mode,journal,Y,P,n_reps,mean_auc,std_auc\n", 0) == 0);
  CHECK(eval_rows_csv(report).rfind("graph_kind,directed,weighted,K,mode,journal,Y,P,rep,auc\n", 0) == 0);
  CHECK(csv.find("citation,true,false,,n2v,J,5,20,3,") != std::string::npos);
}

TEST_CASE("horizon report joins, skips single-class horizons and normalizes counts") {
  const auto grid = grid_with({{"a", {true, true}}, {"b", {false, true}}, {"c", {false, true}}, {"d", {true, true}}});
  const std::vector<PredictionRow> preds{{"a", 0, 0.9, "strict"}, {"b", 0, 0.2, "strict"}, {"c", 0, 0.1, "strict"},
                                         {"d", 0, 0.7, "lenient"}, {"a", 1, 0.5, "strict"}, {"b", 1, 0.5, "strict"},
                                         {"zzz", 0, 0.5, "strict"}};
  const auto report = horizon_report("cfg", preds, grid, 20);
  REQUIRE(report.rows.size() == 1);
  CHECK(report.rows[0].horizon == 0);
  CHECK(report.rows[0].auc == 1.0);
  CHECK(report.rows[0].n_evaluated == 4);
  CHECK(report.rows[0].pct_available == 100.0);
  CHECK(report.notices.size() == 2);  // unjoinable zzz, single-class Y=1
  CHECK(horizon_report_csv(report.rows).rfind("config,Y,auc,n_pos,n_neg,n_evaluated,pct_available\n", 0) == 0);
  CHECK(plot_data_csv(report.rows) == "config,Y,auc,pct_available\ncfg,0,1,100\n");
}

TEST_CASE("pct available is relative to the busiest horizon") {
  const auto grid = grid_with({{"a", {true, true}}, {"b", {false, false}}, {"c", {false, true}}, {"d", {true, false}}});
  const std::vector<PredictionRow> preds{{"a", 0, 0.9, "strict"}, {"b", 0, 0.2, "strict"}, {"c", 0, 0.1, "strict"},
                                         {"d", 0, 0.7, "strict"}, {"a", 1, 0.8, "strict"}, {"b", 1, 0.1, "strict"}};
  const auto report = horizon_report("cfg", preds, grid, 20);
  REQUIRE(report.rows.size() == 2);
  CHECK(report.rows[0].pct_available == 100.0);
  CHECK(report.rows[1].pct_available == 50.0);
}

TEST_CASE("prediction csv parsing") {
  const auto rows = parse_predictions_csv("target_id,Y,probability,parse_mode\n10.1/x,0,0.25,strict\n10.1/x,1,1,lenient\n");
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].probability == 1.0);
  CHECK(rows[1].parse_mode == "lenient");
  CHECK_THROWS_AS(parse_predictions_csv("id,Y\n"), Error);
}

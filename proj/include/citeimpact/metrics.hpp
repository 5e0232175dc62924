#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "citeimpact/labeling.hpp"

namespace citeimpact {

// Mann-Whitney AUC via rank sums with average ranks for ties.
// Throws Error(kInvalidArgument) unless both classes are present.
double auc_roc(std::span<const double> scores, std::span<const bool> labels);

// Descriptor of the classifier configuration that produced a row.
struct ConfigDescriptor {
  std::string graph_kind;
  bool directed = true;
  bool weighted = false;
  int k = 0;  // 0 when not applicable
  std::string mode;

  auto operator<=>(const ConfigDescriptor&) const = default;
};

struct EvalRow {
  ConfigDescriptor config;
  std::string journal;
  int horizon = 0;
  int percent = 0;
  std::size_t repetition = 0;
  double auc = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

struct EvalAggregate {
  ConfigDescriptor config;
  std::string journal;
  int horizon = 0;
  int percent = 0;
  std::size_t repetitions = 0;
  double mean_auc = 0.0;
  double std_auc = 0.0;  // sample standard deviation; 0 for a single run
};

struct EvalReport {
  std::vector<EvalRow> rows;

  std::vector<EvalAggregate> aggregates() const;
};

// graph_kind,directed,weighted,K,mode,journal,Y,P,rep,auc
std::string eval_rows_csv(const EvalReport& report);
// graph_kind,directed,weighted,K,mode,journal,Y,P,n_reps,mean_auc,std_auc
std::string eval_aggregates_csv(const EvalReport& report);

struct PredictionRow {
  std::string target_id;
  int horizon = 0;
  double probability = 0.0;
  std::string parse_mode;
};

// target_id,Y,probability,parse_mode
std::vector<PredictionRow> parse_predictions_csv(std::string_view text);

struct HorizonRow {
  std::string config;
  int horizon = 0;
  double auc = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  std::size_t n_evaluated = 0;
  double pct_available = 0.0;  // n_evaluated relative to the busiest horizon
};

struct HorizonReport {
  std::vector<HorizonRow> rows;
  std::vector<std::string> notices;  // unjoinable rows, single-class horizons
};

// Joins predictions to labels at (target_id, Y) for threshold `percent`.
HorizonReport horizon_report(std::string_view config, std::span<const PredictionRow> predictions,
                             const LabelGrid& labels, int percent);

// config,Y,auc,n_pos,n_neg,n_evaluated,pct_available
std::string horizon_report_csv(std::span<const HorizonRow> rows);
// config,Y,auc,pct_available
std::string plot_data_csv(std::span<const HorizonRow> rows);

}  // namespace citeimpact

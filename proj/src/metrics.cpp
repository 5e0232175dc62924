#include "citeimpact/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <tuple>

#include "citeimpact/error.hpp"
#include "citeimpact/text_io.hpp"

namespace citeimpact {

double auc_roc(std::span<const double> scores, std::span<const bool> labels) {
  if (scores.size() != labels.size()) {
    throw Error(ErrorKind::kInvalidArgument, "scores and labels differ in length");
  }
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (std::isnan(scores[i])) throw Error(ErrorKind::kInvalidArgument, "NaN score");
    n_pos += labels[i];
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw Error(ErrorKind::kInvalidArgument, "AUC needs at least one positive and one negative");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });

  // Ranks are 1-based; tied runs share their average rank. Sums of
  // half-integers stay exact in double for any realistic n.
  double positive_rank_sum = 0.0;
  for (std::size_t start = 0; start < n;) {
    std::size_t end = start + 1;
    while (end < n && scores[order[end]] == scores[order[start]]) ++end;
    const double rank = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t i = start; i < end; ++i) {
      if (labels[order[i]]) positive_rank_sum += rank;
    }
    start = end;
  }
  const double np = static_cast<double>(n_pos);
  const double u = positive_rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

namespace {

std::string config_prefix(const ConfigDescriptor& c) {
  std::string out = csv_field(c.graph_kind);
  out += c.directed ? ",true" : ",false";
  out += c.weighted ? ",true," : ",false,";
  if (c.k > 0) out += std::to_string(c.k);
  out += ',';
  out += csv_field(c.mode);
  return out;
}

}  // namespace

std::vector<EvalAggregate> EvalReport::aggregates() const {
  using Key = std::tuple<ConfigDescriptor, std::string, int, int>;
  std::map<Key, std::vector<double>> groups;
  for (const auto& r : rows) groups[{r.config, r.journal, r.horizon, r.percent}].push_back(r.auc);

  std::vector<EvalAggregate> out;
  for (const auto& [key, aucs] : groups) {
    EvalAggregate a;
    std::tie(a.config, a.journal, a.horizon, a.percent) = key;
    a.repetitions = aucs.size();
    a.mean_auc = std::accumulate(aucs.begin(), aucs.end(), 0.0) / static_cast<double>(aucs.size());
    if (aucs.size() > 1) {
      double ss = 0.0;
      for (double v : aucs) ss += (v - a.mean_auc) * (v - a.mean_auc);
      a.std_auc = std::sqrt(ss / static_cast<double>(aucs.size() - 1));
    }
    out.push_back(std::move(a));
  }
  return out;
}

std::string eval_rows_csv(const EvalReport& report) {
  std::string out = "graph_kind,directed,weighted,K,mode,journal,Y,P,rep,auc\n";
  for (const auto& r : report.rows) {
    out += config_prefix(r.config) + ',' + csv_field(r.journal) + ',' + std::to_string(r.horizon) +
           ',' + std::to_string(r.percent) + ',' + std::to_string(r.repetition) + ',' +
           format_double(r.auc) + '\n';
  }
  return out;
}

std::string eval_aggregates_csv(const EvalReport& report) {
  std::string out = "graph_kind,directed,weighted,K,mode,journal,Y,P,n_reps,mean_auc,std_auc\n";
  for (const auto& a : report.aggregates()) {
    out += config_prefix(a.config) + ',' + csv_field(a.journal) + ',' + std::to_string(a.horizon) +
           ',' + std::to_string(a.percent) + ',' + std::to_string(a.repetitions) + ',' +
           format_double(a.mean_auc) + ',' + format_double(a.std_auc) + '\n';
  }
  return out;
}

std::vector<PredictionRow> parse_predictions_csv(std::string_view text) {
  std::vector<PredictionRow> rows;
  std::size_t line_no = 0;
  bool header = true;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (header) {
      header = false;
      if (fields != std::vector<std::string>{"target_id", "Y", "probability", "parse_mode"}) {
        throw Error(ErrorKind::kParse, "predictions CSV: unexpected header on line 1");
      }
      continue;
    }
    std::int64_t y = 0;
    PredictionRow row;
    if (fields.size() != 4 || !parse_int64(fields[1], y) ||
        !parse_finite_double(fields[2], row.probability)) {
      throw Error(ErrorKind::kParse, "predictions CSV line " + std::to_string(line_no) + " is malformed");
    }
    row.target_id = fields[0];
    row.horizon = static_cast<int>(y);
    row.parse_mode = fields[3];
    rows.push_back(std::move(row));
  }
  if (header) throw Error(ErrorKind::kParse, "predictions CSV is empty");
  return rows;
}

HorizonReport horizon_report(std::string_view config, std::span<const PredictionRow> predictions,
                             const LabelGrid& labels, int percent) {
  struct Bucket {
    std::vector<double> scores;
    std::vector<char> truth;
  };
  std::map<int, Bucket> by_horizon;
  HorizonReport report;
  std::size_t unjoinable = 0;
  for (const auto& p : predictions) {
    const LabelTable* table = labels.find({p.horizon, percent});
    const LabelEntry* entry = nullptr;
    if (table) {
      const auto it = table->entries.find(p.target_id);
      if (it != table->entries.end()) entry = &it->second;
    }
    if (!entry) {
      if (unjoinable++ < 20) {
        report.notices.push_back("no label for " + p.target_id + " at Y=" + std::to_string(p.horizon) +
                                 ", P=" + std::to_string(percent) + "; row excluded");
      }
      continue;
    }
    auto& b = by_horizon[p.horizon];
    b.scores.push_back(p.probability);
    b.truth.push_back(entry->label);
  }
  if (unjoinable > 20) {
    report.notices.push_back(std::to_string(unjoinable - 20) + " further unjoinable rows excluded");
  }

  std::size_t max_count = 0;
  for (const auto& [y, b] : by_horizon) max_count = std::max(max_count, b.scores.size());
  for (const auto& [y, b] : by_horizon) {
    const auto n_pos = static_cast<std::size_t>(std::count(b.truth.begin(), b.truth.end(), 1));
    const std::size_t n = b.scores.size();
    if (n_pos == 0 || n_pos == n) {
      report.notices.push_back("Y=" + std::to_string(y) + " has a single class (" +
                               std::to_string(n_pos) + " positives of " + std::to_string(n) +
                               "); row omitted");
      continue;
    }
    std::unique_ptr<bool[]> flags(new bool[n]);
    for (std::size_t i = 0; i < n; ++i) flags[i] = b.truth[i] != 0;
    HorizonRow row;
    row.config = std::string(config);
    row.horizon = y;
    row.auc = auc_roc(b.scores, std::span<const bool>(flags.get(), n));
    row.n_pos = n_pos;
    row.n_neg = n - n_pos;
    row.n_evaluated = n;
    row.pct_available = 100.0 * static_cast<double>(n) / static_cast<double>(max_count);
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string horizon_report_csv(std::span<const HorizonRow> rows) {
  std::string out = "config,Y,auc,n_pos,n_neg,n_evaluated,pct_available\n";
  for (const auto& r : rows) {
    out += csv_field(r.config) + ',' + std::to_string(r.horizon) + ',' + format_double(r.auc) + ',' +
           std::to_string(r.n_pos) + ',' + std::to_string(r.n_neg) + ',' +
           std::to_string(r.n_evaluated) + ',' + format_double(r.pct_available) + '\n';
  }
  return out;
}

std::string plot_data_csv(std::span<const HorizonRow> rows) {
  std::string out = "config,Y,auc,pct_available\n";
  for (const auto& r : rows) {
    out += csv_field(r.config) + ',' + std::to_string(r.horizon) + ',' + format_double(r.auc) + ',' +
           format_double(r.pct_available) + '\n';
  }
  return out;
}

}  // namespace citeimpact

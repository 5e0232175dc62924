#include "citeimpact/labeling.hpp"

#include <algorithm>

#include "citeimpact/error.hpp"
#include "citeimpact/text_io.hpp"

namespace citeimpact {

void validate_label_key(const LabelKey& key) {
  if (key.horizon < 0) throw Error(ErrorKind::kInvalidArgument, "horizon Y must be >= 0");
  if (key.percent <= 0 || key.percent >= 100) {
    throw Error(ErrorKind::kInvalidArgument, "percent P must satisfy 0 < P < 100");
  }
}

std::int64_t accumulated_citations(const CitationHistory& history, int horizon) {
  if (horizon < 0 || static_cast<std::size_t>(horizon) >= history.counts.size()) {
    throw Error(ErrorKind::kInvalidArgument,
                "horizon " + std::to_string(horizon) + " is outside the observable window of " +
                    history.paper_id + " (" + std::to_string(history.counts.size()) + " years)");
  }
  std::int64_t total = 0;
  for (int k = 0; k <= horizon; ++k) total += history.counts[k];
  return total;
}

std::size_t positive_count(std::size_t cohort_size, int percent) noexcept {
  // floor(P*n/100 + 1/2) == floor((2*P*n + 100) / 200)
  const auto scaled = 2ULL * static_cast<unsigned long long>(percent) * cohort_size + 100ULL;
  return static_cast<std::size_t>(scaled / 200ULL);
}

LabelTable assign_labels(const Corpus& corpus, std::string_view journal, const LabelKey& key) {
  validate_label_key(key);
  const auto members = cohort(corpus, journal, key.horizon);
  if (members.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "empty cohort for journal '" + std::string(journal) +
                                                 "' at Y=" + std::to_string(key.horizon));
  }

  std::vector<std::pair<std::int64_t, const std::string*>> ranked;
  ranked.reserve(members.size());
  for (const auto& id : members) {
    ranked.emplace_back(accumulated_citations(corpus.history(id), key.horizon), &id);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return *a.second < *b.second;
  });

  LabelTable table;
  table.key = key;
  table.journal = std::string(journal);
  table.n_pos = positive_count(members.size(), key.percent);
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const bool positive = i < table.n_pos;
    table.entries.emplace(*ranked[i].second, LabelEntry{ranked[i].first, positive});
    if (positive) table.cutoff_acc = ranked[i].first;
  }
  return table;
}

const LabelTable* LabelGrid::find(const LabelKey& key) const {
  const auto it = tables.find(key);
  return it == tables.end() ? nullptr : &it->second;
}

LabelGrid label_grid(const Corpus& corpus, std::string_view journal,
                     const std::set<int>& horizons, const std::set<int>& percents) {
  LabelGrid grid;
  for (int y : horizons) {
    if (cohort(corpus, journal, y).empty()) {
      grid.notices.push_back("Y=" + std::to_string(y) + " omitted: no paper of '" +
                             std::string(journal) + "' is observable that long");
      continue;
    }
    for (int p : percents) {
      LabelKey key{y, p};
      grid.tables.emplace(key, assign_labels(corpus, journal, key));
    }
  }
  return grid;
}

std::string label_grid_csv(const LabelGrid& grid) {
  std::string out = "journal,Y,P,paper_id,acc,label\n";
  for (const auto& [key, table] : grid.tables) {
    const std::string prefix = csv_field(table.journal) + ',' + std::to_string(key.horizon) + ',' +
                               std::to_string(key.percent) + ',';
    for (const auto& [id, entry] : table.entries) {
      out += prefix + csv_field(id) + ',' + std::to_string(entry.acc) + ',' +
             (entry.label ? "1" : "0") + '\n';
    }
  }
  return out;
}

LabelGrid parse_label_grid_csv(std::string_view text) {
  LabelGrid grid;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    const std::size_t end = std::min(text.find('\n', start), text.size());
    const auto line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    const auto f = split_csv_line(line);
    std::int64_t y = 0;
    std::int64_t p = 0;
    std::int64_t acc = 0;
    if (f.size() != 6 || !parse_int64(f[1], y) || !parse_int64(f[2], p) ||
        !parse_int64(f[4], acc) || (f[5] != "0" && f[5] != "1")) {
      throw Error(ErrorKind::kParse, "labels line " + std::to_string(line_no) + ": malformed row");
    }
    LabelKey key{static_cast<int>(y), static_cast<int>(p)};
    auto& table = grid.tables[key];
    table.key = key;
    table.journal = f[0];
    const bool positive = f[5] == "1";
    table.entries[f[3]] = LabelEntry{acc, positive};
    if (positive) {
      ++table.n_pos;
      table.cutoff_acc = table.cutoff_acc ? std::min(*table.cutoff_acc, acc) : acc;
    }
  }
  return grid;
}

}  // namespace citeimpact

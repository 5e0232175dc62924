#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "citeimpact/corpus.hpp"

namespace citeimpact {

// Horizon offset Y and top-percent threshold P.
struct LabelKey {
  int horizon = 0;
  int percent = 20;

  // Quantile form used in prompts: 1 - P/100.
  double q_value() const noexcept { return 1.0 - percent / 100.0; }
  auto operator<=>(const LabelKey&) const = default;
};

void validate_label_key(const LabelKey& key);

struct LabelEntry {
  std::int64_t acc = 0;
  bool label = false;

  bool operator==(const LabelEntry&) const = default;
};

struct LabelTable {
  LabelKey key;
  std::string journal;
  std::map<std::string, LabelEntry> entries;  // keyed by paper id
  std::optional<std::int64_t> cutoff_acc;     // lowest ACC among positives
  std::size_t n_pos = 0;

  bool operator==(const LabelTable&) const = default;
};

// Sum of counts[0..horizon]. Throws Error(kInvalidArgument) past the window.
std::int64_t accumulated_citations(const CitationHistory& history, int horizon);

// round-half-up(percent/100 * n), computed in integers.
std::size_t positive_count(std::size_t cohort_size, int percent) noexcept;

// Top n_pos papers by ACC, ties at the cutoff resolved by ascending id.
LabelTable assign_labels(const Corpus& corpus, std::string_view journal, const LabelKey& key);

struct LabelGrid {
  std::map<LabelKey, LabelTable> tables;
  std::vector<std::string> notices;  // one per omitted (infeasible) horizon

  const LabelTable* find(const LabelKey& key) const;
};

LabelGrid label_grid(const Corpus& corpus, std::string_view journal,
                     const std::set<int>& horizons, const std::set<int>& percents);

// Columns: journal,Y,P,paper_id,acc,label
std::string label_grid_csv(const LabelGrid& grid);
LabelGrid parse_label_grid_csv(std::string_view text);

}  // namespace citeimpact

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace citeimpact {

struct Paper {
  std::string id;  // DOI as written in the source; lookups use normalize_id
  std::string journal;
  int pub_year = 0;
  std::string title;
  std::string abstract;
  std::string domain;
  std::string field;
  std::string subfield;

  bool operator==(const Paper&) const = default;
};

// counts[k] = citations received k calendar years after publication.
struct CitationHistory {
  std::string paper_id;
  std::vector<std::int64_t> counts;

  bool operator==(const CitationHistory&) const = default;
};

// Trimmed, ASCII-lowercased DOI used as the identity key.
std::string normalize_id(std::string_view id);

// Immutable-after-construction paper collection. Papers keep insertion order;
// citations are index pairs (citing, cited) into that order.
class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(int max_data_year) : max_data_year_(max_data_year) {}

  // Returns the new paper's index. Throws on a duplicate normalized id.
  std::size_t add_paper(Paper paper, CitationHistory history);
  // Endpoints must already be present.
  void add_citation(std::string_view citing_id, std::string_view cited_id);
  void set_max_data_year(int year) { max_data_year_ = year; }

  int max_data_year() const noexcept { return max_data_year_; }
  std::size_t size() const noexcept { return papers_.size(); }
  const std::vector<Paper>& papers() const noexcept { return papers_; }
  const std::vector<CitationHistory>& histories() const noexcept { return histories_; }
  const std::vector<std::pair<std::size_t, std::size_t>>& citations() const noexcept {
    return citations_;
  }

  std::optional<std::size_t> find(std::string_view id) const;
  const Paper& paper(std::size_t index) const { return papers_.at(index); }
  const Paper& paper(std::string_view id) const;
  const CitationHistory& history(std::string_view id) const;

  // Ids of papers whose abstract is empty or whitespace only.
  std::vector<std::string> empty_abstract_ids() const;
  std::vector<std::string> journals() const;

  bool operator==(const Corpus& other) const;

 private:
  int max_data_year_ = 0;
  std::vector<Paper> papers_;
  std::vector<CitationHistory> histories_;
  std::vector<std::pair<std::size_t, std::size_t>> citations_;
  std::unordered_map<std::string, std::size_t> index_;
  std::unordered_set<std::uint64_t> citation_keys_;
};

struct LoadOptions {
  // When unset, inferred as max(pub_year + len(yearly_citations) - 1).
  std::optional<int> max_data_year;
};

// One JSON record per line. Throws Error(kParse) with the 1-based line number
// for malformed records, duplicate ids (naming both lines) and dangling
// references; histories that do not span the observable window are rejected.
Corpus load_corpus(const std::filesystem::path& path, const LoadOptions& options = {});
Corpus parse_corpus_jsonl(std::string_view text, const LoadOptions& options = {});
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
std::string corpus_to_jsonl(const Corpus& corpus);

struct Violation {
  std::string kind;
  std::string subject_id;
  std::string detail;

  bool operator==(const Violation&) const = default;
};

using ValidationReport = std::vector<Violation>;

// Kinds: temporal_citation, history_length, negative_count, empty_title,
// year_range, self_citation. Same-year citations are legal.
ValidationReport validate_corpus(const Corpus& corpus);
std::string validation_report_csv(const ValidationReport& report);

// Papers of `journal` observable at horizon offset `horizon`, in corpus order.
std::vector<std::string> cohort(const Corpus& corpus, std::string_view journal, int horizon);

struct SynthParams {
  std::string journal = "Synthetic Journal of Applied Materials";
  int first_year = 2009;
  int last_year = 2020;  // becomes max_data_year
  double annual_growth = 0.08;
  double planted_fraction = 0.2;
  double empty_abstract_fraction = 0.0;
  // Within-corpus references per paper (mean).
  double mean_references = 6.0;
  // Probability that a reference of a planted paper targets another planted paper.
  double planted_affinity = 0.6;
  // Relative weight of planted papers when anyone picks a reference.
  double planted_attractiveness = 3.0;
  double background_rate = 1.5;
  double planted_rate_multiplier = 4.0;
  int abstract_tokens = 60;
  double planted_token_fraction = 0.3;
  int background_vocabulary = 400;
  int planted_vocabulary = 40;
};

struct SyntheticCorpus {
  Corpus corpus;
  std::vector<std::string> planted_ids;
};

// Pure function of (n, seed, params). Planted papers get stochastically larger
// citation histories and share a planted token vocabulary.
SyntheticCorpus generate_synthetic_corpus(std::size_t n, std::uint64_t seed,
                                          const SynthParams& params = {});

}  // namespace citeimpact

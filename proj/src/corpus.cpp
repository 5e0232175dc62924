#include "citeimpact/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "citeimpact/error.hpp"
#include "citeimpact/rng.hpp"
#include "citeimpact/text_io.hpp"

namespace citeimpact {

using ordered_json = nlohmann::ordered_json;

std::string normalize_id(std::string_view id) {
  const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!id.empty() && is_space(id.front())) id.remove_prefix(1);
  while (!id.empty() && is_space(id.back())) id.remove_suffix(1);
  std::string out(id);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::size_t Corpus::add_paper(Paper paper, CitationHistory history) {
  auto key = normalize_id(paper.id);
  if (key.empty()) throw Error(ErrorKind::kInvalidArgument, "paper id is empty");
  if (index_.count(key) != 0) {
    throw Error(ErrorKind::kInvalidArgument, "duplicate paper id '" + paper.id + "'");
  }
  history.paper_id = paper.id;
  const std::size_t index = papers_.size();
  index_.emplace(std::move(key), index);
  papers_.push_back(std::move(paper));
  histories_.push_back(std::move(history));
  return index;
}

void Corpus::add_citation(std::string_view citing_id, std::string_view cited_id) {
  const auto citing = find(citing_id);
  const auto cited = find(cited_id);
  if (!citing || !cited) {
    throw Error(ErrorKind::kInvalidArgument, "citation endpoint not in corpus: " +
                                                 std::string(citing ? cited_id : citing_id));
  }
  const auto key = (static_cast<std::uint64_t>(*citing) << 32) | static_cast<std::uint64_t>(*cited);
  if (citation_keys_.insert(key).second) citations_.emplace_back(*citing, *cited);
}

std::optional<std::size_t> Corpus::find(std::string_view id) const {
  const auto it = index_.find(normalize_id(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const Paper& Corpus::paper(std::string_view id) const {
  const auto index = find(id);
  if (!index) throw Error(ErrorKind::kInvalidArgument, "unknown paper id '" + std::string(id) + "'");
  return papers_[*index];
}

const CitationHistory& Corpus::history(std::string_view id) const {
  const auto index = find(id);
  if (!index) throw Error(ErrorKind::kInvalidArgument, "unknown paper id '" + std::string(id) + "'");
  return histories_[*index];
}

std::vector<std::string> Corpus::empty_abstract_ids() const {
  std::vector<std::string> ids;
  for (const auto& p : papers_) {
    const bool blank = std::all_of(p.abstract.begin(), p.abstract.end(),
                                   [](unsigned char c) { return std::isspace(c) != 0; });
    if (blank) ids.push_back(p.id);
  }
  return ids;
}

std::vector<std::string> Corpus::journals() const {
  std::set<std::string> names;
  for (const auto& p : papers_) names.insert(p.journal);
  return {names.begin(), names.end()};
}

bool Corpus::operator==(const Corpus& other) const {
  if (max_data_year_ != other.max_data_year_ || papers_ != other.papers_ ||
      histories_ != other.histories_) {
    return false;
  }
  auto a = citations_;
  auto b = other.citations_;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return a == b;
}

namespace {

struct RawRecord {
  Paper paper;
  CitationHistory history;
  std::vector<std::string> references;
  std::size_t line = 0;
};

[[noreturn]] void fail_line(std::size_t line, const std::string& message) {
  throw Error(ErrorKind::kParse, "line " + std::to_string(line) + ": " + message);
}

std::string required_string(const nlohmann::json& record, const char* key, std::size_t line) {
  const auto it = record.find(key);
  if (it == record.end() || !it->is_string()) {
    fail_line(line, std::string("missing or non-string '") + key + "'");
  }
  return it->get<std::string>();
}

std::string optional_string(const nlohmann::json& record, const char* key, std::size_t line) {
  const auto it = record.find(key);
  if (it == record.end() || it->is_null()) return {};
  if (!it->is_string()) fail_line(line, std::string("non-string '") + key + "'");
  return it->get<std::string>();
}

RawRecord parse_record(std::string_view text, std::size_t line) {
  nlohmann::json record;
  try {
    record = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail_line(line, std::string("invalid JSON: ") + e.what());
  }
  if (!record.is_object()) fail_line(line, "record is not a JSON object");

  RawRecord raw;
  raw.line = line;
  raw.paper.id = required_string(record, "id", line);
  if (normalize_id(raw.paper.id).empty()) fail_line(line, "empty 'id'");
  raw.paper.journal = required_string(record, "journal", line);
  const auto year = record.find("pub_year");
  if (year == record.end() || !year->is_number_integer()) {
    fail_line(line, "missing or non-integer 'pub_year'");
  }
  raw.paper.pub_year = year->get<int>();
  raw.paper.title = required_string(record, "title", line);
  raw.paper.abstract = optional_string(record, "abstract", line);
  raw.paper.domain = optional_string(record, "domain", line);
  raw.paper.field = optional_string(record, "field", line);
  raw.paper.subfield = optional_string(record, "subfield", line);

  const auto counts = record.find("yearly_citations");
  if (counts == record.end() || !counts->is_array()) {
    fail_line(line, "missing or non-array 'yearly_citations'");
  }
  for (const auto& c : *counts) {
    if (!c.is_number_integer()) fail_line(line, "non-integer entry in 'yearly_citations'");
    const auto value = c.get<std::int64_t>();
    if (value < 0) fail_line(line, "negative entry in 'yearly_citations'");
    raw.history.counts.push_back(value);
  }
  raw.history.paper_id = raw.paper.id;

  const auto refs = record.find("references");
  if (refs != record.end() && !refs->is_null()) {
    if (!refs->is_array()) fail_line(line, "non-array 'references'");
    for (const auto& r : *refs) {
      if (!r.is_string()) fail_line(line, "non-string entry in 'references'");
      raw.references.push_back(r.get<std::string>());
    }
  }
  return raw;
}

}  // namespace

Corpus parse_corpus_jsonl(std::string_view text, const LoadOptions& options) {
  std::vector<RawRecord> records;
  std::unordered_map<std::string, std::size_t> first_line;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find('\n', start), text.size());
    std::string_view line = text.substr(start, end - start);
    ++line_no;
    start = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
      if (end == text.size()) break;
      continue;
    }
    auto raw = parse_record(line, line_no);
    const auto key = normalize_id(raw.paper.id);
    const auto [it, inserted] = first_line.emplace(key, line_no);
    if (!inserted) {
      throw Error(ErrorKind::kParse, "duplicate id '" + raw.paper.id + "' on lines " +
                                         std::to_string(it->second) + " and " +
                                         std::to_string(line_no));
    }
    records.push_back(std::move(raw));
    if (end == text.size()) break;
  }

  int max_year = 0;
  if (options.max_data_year) {
    max_year = *options.max_data_year;
  } else {
    bool any = false;
    for (const auto& r : records) {
      const int last = r.paper.pub_year + static_cast<int>(r.history.counts.size()) - 1;
      max_year = any ? std::max(max_year, last) : last;
      any = true;
    }
  }

  Corpus corpus(max_year);
  for (auto& r : records) {
    const long expected = static_cast<long>(max_year) - r.paper.pub_year + 1;
    if (expected < 1) {
      fail_line(r.line, "pub_year " + std::to_string(r.paper.pub_year) + " is after max_data_year " +
                            std::to_string(max_year));
    }
    if (static_cast<long>(r.history.counts.size()) != expected) {
      fail_line(r.line, "yearly_citations has " + std::to_string(r.history.counts.size()) +
                            " entries; the observable window needs " + std::to_string(expected));
    }
    corpus.add_paper(r.paper, r.history);
  }
  for (const auto& r : records) {
    for (const auto& ref : r.references) {
      if (!corpus.find(ref)) fail_line(r.line, "reference to unknown id '" + ref + "'");
      corpus.add_citation(r.paper.id, ref);
    }
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, const LoadOptions& options) {
  return parse_corpus_jsonl(read_file(path), options);
}

std::string corpus_to_jsonl(const Corpus& corpus) {
  std::vector<std::vector<std::size_t>> refs(corpus.size());
  for (const auto& [citing, cited] : corpus.citations()) refs[citing].push_back(cited);

  std::string out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& p = corpus.papers()[i];
    ordered_json record;
    record["id"] = p.id;
    record["journal"] = p.journal;
    record["pub_year"] = p.pub_year;
    record["title"] = p.title;
    record["abstract"] = p.abstract;
    record["domain"] = p.domain;
    record["field"] = p.field;
    record["subfield"] = p.subfield;
    record["yearly_citations"] = corpus.histories()[i].counts;
    auto references = ordered_json::array();
    for (auto j : refs[i]) references.push_back(corpus.papers()[j].id);
    record["references"] = std::move(references);
    out += record.dump();
    out += '\n';
  }
  return out;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  write_file(path, corpus_to_jsonl(corpus));
}

ValidationReport validate_corpus(const Corpus& corpus) {
  ValidationReport report;
  const int max_year = corpus.max_data_year();
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& p = corpus.papers()[i];
    const auto& h = corpus.histories()[i];
    if (p.title.empty()) report.push_back({"empty_title", p.id, "title is empty"});
    if (p.pub_year > max_year) {
      report.push_back({"year_range", p.id,
                        "pub_year " + std::to_string(p.pub_year) + " > max_data_year " +
                            std::to_string(max_year)});
    }
    const long expected = static_cast<long>(max_year) - p.pub_year + 1;
    if (static_cast<long>(h.counts.size()) != expected) {
      report.push_back({"history_length", p.id,
                        "length " + std::to_string(h.counts.size()) + ", expected " +
                            std::to_string(expected)});
    }
    for (std::size_t k = 0; k < h.counts.size(); ++k) {
      if (h.counts[k] < 0) {
        report.push_back({"negative_count", p.id, "offset " + std::to_string(k)});
      }
    }
  }
  for (const auto& [citing, cited] : corpus.citations()) {
    const auto& a = corpus.papers()[citing];
    const auto& b = corpus.papers()[cited];
    if (citing == cited) {
      report.push_back({"self_citation", a.id, "paper cites itself"});
    } else if (a.pub_year < b.pub_year) {
      report.push_back({"temporal_citation", a.id,
                        a.id + " (" + std::to_string(a.pub_year) + ") cites " + b.id + " (" +
                            std::to_string(b.pub_year) + ")"});
    }
  }
  return report;
}

std::string validation_report_csv(const ValidationReport& report) {
  std::string out = "kind,subject_id,detail\n";
  for (const auto& v : report) {
    out += csv_field(v.kind) + ',' + csv_field(v.subject_id) + ',' + csv_field(v.detail) + '\n';
  }
  return out;
}

std::vector<std::string> cohort(const Corpus& corpus, std::string_view journal, int horizon) {
  if (horizon < 0) throw Error(ErrorKind::kInvalidArgument, "horizon must be >= 0");
  std::vector<std::string> ids;
  for (const auto& p : corpus.papers()) {
    if (p.journal == journal && static_cast<long>(p.pub_year) + horizon <= corpus.max_data_year()) {
      ids.push_back(p.id);
    }
  }
  return ids;
}

namespace {

void check_fraction(double value, const char* name) {
  if (!(value >= 0.0 && value <= 1.0)) {
    throw Error(ErrorKind::kInvalidArgument, std::string(name) + " must lie in [0, 1]");
  }
}

std::string padded(std::size_t value, int width) {
  std::string s = std::to_string(value);
  if (static_cast<int>(s.size()) < width) s.insert(0, width - s.size(), '0');
  return s;
}

// Largest-remainder split of n papers over the years, growing geometrically.
std::vector<std::size_t> papers_per_year(std::size_t n, const SynthParams& params) {
  const int years = params.last_year - params.first_year + 1;
  std::vector<double> weight(years);
  double total = 0.0;
  for (int t = 0; t < years; ++t) {
    weight[t] = std::pow(1.0 + params.annual_growth, t);
    total += weight[t];
  }
  std::vector<std::size_t> counts(years);
  std::vector<std::pair<double, int>> remainders;
  std::size_t assigned = 0;
  for (int t = 0; t < years; ++t) {
    const double exact = static_cast<double>(n) * weight[t] / total;
    counts[t] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[t];
    remainders.emplace_back(exact - std::floor(exact), t);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++counts[remainders[i % years].second];
  return counts;
}

std::vector<std::size_t> choose_exact(std::size_t n, std::size_t count, Rng& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  shuffle(order, rng);
  order.resize(count);
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace

SyntheticCorpus generate_synthetic_corpus(std::size_t n, std::uint64_t seed,
                                          const SynthParams& params) {
  if (n < 2) throw Error(ErrorKind::kInvalidArgument, "synthetic corpus needs n >= 2");
  check_fraction(params.planted_fraction, "planted_fraction");
  check_fraction(params.empty_abstract_fraction, "empty_abstract_fraction");
  check_fraction(params.planted_affinity, "planted_affinity");
  check_fraction(params.planted_token_fraction, "planted_token_fraction");
  if (params.last_year < params.first_year) {
    throw Error(ErrorKind::kInvalidArgument, "last_year precedes first_year");
  }
  if (params.background_vocabulary < 1 || params.planted_vocabulary < 1 ||
      params.abstract_tokens < 1 || params.mean_references < 0.0 ||
      params.planted_attractiveness <= 0.0 || params.background_rate < 0.0 ||
      params.planted_rate_multiplier < 0.0) {
    throw Error(ErrorKind::kInvalidArgument, "invalid synthetic corpus parameters");
  }

  Rng rng(derive_seed(seed, "synthetic-corpus"));
  const auto per_year = papers_per_year(n, params);
  std::vector<int> year_of(n);
  for (std::size_t i = 0, t = 0; t < per_year.size(); ++t) {
    for (std::size_t j = 0; j < per_year[t]; ++j) year_of[i++] = params.first_year + static_cast<int>(t);
  }

  const auto planted_count =
      static_cast<std::size_t>(std::llround(params.planted_fraction * static_cast<double>(n)));
  const auto empty_count = static_cast<std::size_t>(
      std::llround(params.empty_abstract_fraction * static_cast<double>(n)));
  Rng pick_rng(derive_seed(seed, "planted"));
  const auto planted_idx = choose_exact(n, planted_count, pick_rng);
  Rng empty_rng(derive_seed(seed, "empty-abstracts"));
  const auto empty_idx = choose_exact(n, empty_count, empty_rng);
  std::vector<bool> planted(n, false);
  std::vector<bool> empty(n, false);
  for (auto i : planted_idx) planted[i] = true;
  for (auto i : empty_idx) empty[i] = true;

  static const char* const kSubfields[] = {"Surfaces, Coatings and Films", "Biomaterials",
                                           "Electronic, Optical and Magnetic Materials",
                                           "Polymers and Plastics"};

  SyntheticCorpus result;
  result.corpus.set_max_data_year(params.last_year);
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) {
    ids[i] = "10.5555/synth." + std::to_string(seed) + "." + padded(i, 6);

    Paper paper;
    paper.id = ids[i];
    paper.journal = params.journal;
    paper.pub_year = year_of[i];
    paper.title = "Synthetic study " + std::to_string(i);
    paper.domain = "Physical Sciences";
    paper.field = "Materials Science";
    paper.subfield = kSubfields[uniform_index(rng, 4)];
    if (!empty[i]) {
      std::string text;
      for (int t = 0; t < params.abstract_tokens; ++t) {
        if (t) text += ' ';
        if (planted[i] && uniform01(rng) < params.planted_token_fraction) {
          text += "pt" + padded(uniform_index(rng, params.planted_vocabulary), 3);
        } else {
          text += "w" + padded(uniform_index(rng, params.background_vocabulary), 4);
        }
      }
      paper.abstract = std::move(text);
    }

    CitationHistory history;
    const int span = params.last_year - year_of[i] + 1;
    const double fitness = std::exp(0.4 * standard_normal(rng));
    const double rate = params.background_rate * fitness *
                        (planted[i] ? params.planted_rate_multiplier : 1.0);
    for (int k = 0; k < span; ++k) {
      double shape = (k + 1) * std::exp(-k / 4.0);
      if (k == 0) shape *= 0.5;
      history.counts.push_back(poisson(rng, rate * shape));
    }
    result.corpus.add_paper(std::move(paper), std::move(history));
  }

  // References only point at lower indices, which are never in a later year.
  std::vector<std::size_t> planted_pool;
  std::vector<std::size_t> background_pool;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t available = planted_pool.size() + background_pool.size();
    const auto wanted = static_cast<std::size_t>(poisson(rng, params.mean_references));
    const std::size_t r = std::min(wanted, available);
    std::set<std::size_t> chosen;
    for (std::size_t attempt = 0; chosen.size() < r && attempt < 20 * r + 20; ++attempt) {
      const std::vector<std::size_t>* pool = nullptr;
      if (planted[i] && !planted_pool.empty() && uniform01(rng) < params.planted_affinity) {
        pool = &planted_pool;
      } else {
        const double wp = params.planted_attractiveness * static_cast<double>(planted_pool.size());
        const double wb = static_cast<double>(background_pool.size());
        pool = uniform01(rng) * (wp + wb) < wp ? &planted_pool : &background_pool;
      }
      chosen.insert((*pool)[uniform_index(rng, pool->size())]);
    }
    for (auto j : chosen) result.corpus.add_citation(ids[i], ids[j]);
    (planted[i] ? planted_pool : background_pool).push_back(i);
  }

  for (auto i : planted_idx) result.planted_ids.push_back(ids[i]);
  return result;
}

}  // namespace citeimpact

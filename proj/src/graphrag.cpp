#include "citeimpact/graphrag.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include <nlohmann/json.hpp>

#include "citeimpact/rng.hpp"
#include "citeimpact/text_io.hpp"

namespace citeimpact {

const char* to_string(RetrievalStrategy strategy) noexcept {
  switch (strategy) {
    case RetrievalStrategy::kNone: return "none";
    case RetrievalStrategy::kRandom: return "random";
    case RetrievalStrategy::kTopSimilar: return "top_similar";
  }
  return "none";
}

RetrievalStrategy retrieval_strategy_from_string(std::string_view name) {
  if (name == "none") return RetrievalStrategy::kNone;
  if (name == "random") return RetrievalStrategy::kRandom;
  if (name == "top_similar") return RetrievalStrategy::kTopSimilar;
  throw Error(ErrorKind::kInvalidArgument, "unknown retrieval strategy '" + std::string(name) + "'");
}

const char* to_string(NeighborEncoding encoding) noexcept {
  return encoding == NeighborEncoding::kAcc ? "acc" : "indicator";
}

NeighborEncoding neighbor_encoding_from_string(std::string_view name) {
  if (name == "indicator") return NeighborEncoding::kIndicator;
  if (name == "acc") return NeighborEncoding::kAcc;
  throw Error(ErrorKind::kInvalidArgument, "unknown neighbor encoding '" + std::string(name) + "'");
}

const char* to_string(ParseMode mode) noexcept {
  return mode == ParseMode::kLenient ? "lenient" : "strict";
}

const char* to_string(ResponseErrorKind kind) noexcept {
  switch (kind) {
    case ResponseErrorKind::kMalformed: return "malformed";
    case ResponseErrorKind::kMissingKey: return "missing_key";
    case ResponseErrorKind::kExtraKeys: return "extra_keys";
    case ResponseErrorKind::kWrongLength: return "wrong_length";
    case ResponseErrorKind::kOutOfRange: return "out_of_range";
    case ResponseErrorKind::kNonNumeric: return "non_numeric";
  }
  return "malformed";
}

const char* to_string(MockMode mode) noexcept {
  return mode == MockMode::kOracle ? "oracle" : "hash";
}

MockMode mock_mode_from_string(std::string_view name) {
  if (name == "hash") return MockMode::kHash;
  if (name == "oracle") return MockMode::kOracle;
  throw Error(ErrorKind::kInvalidArgument, "unknown mock mode '" + std::string(name) + "'");
}

namespace {

std::vector<std::string> draw_sorted(const PaperGraph& graph, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> idx(graph.nodes().size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(derive_seed(seed, "targets"));
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(idx[i], idx[i + uniform_index(rng, idx.size() - i)]);
  }
  std::vector<std::string> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(graph.nodes()[idx[i]]);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::vector<std::string> sample_targets(const PaperGraph& graph, double fraction,
                                        std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw Error(ErrorKind::kInvalidArgument, "target fraction must lie in (0, 1]");
  }
  const auto n = static_cast<double>(graph.nodes().size());
  return draw_sorted(graph, static_cast<std::size_t>(std::llround(fraction * n)), seed);
}

std::vector<std::string> sample_targets_count(const PaperGraph& graph, std::size_t count,
                                              std::uint64_t seed) {
  if (count > graph.nodes().size()) {
    throw Error(ErrorKind::kInvalidArgument, "cannot sample " + std::to_string(count) +
                                                 " targets from " +
                                                 std::to_string(graph.nodes().size()) + " nodes");
  }
  return draw_sorted(graph, count, seed);
}

std::vector<std::string> retrieve_neighbors(const PaperGraph& graph, std::string_view target,
                                            const RetrievalConfig& rc,
                                            const TextEmbeddingMap* embeddings,
                                            const Corpus* corpus) {
  const auto node = graph.node_index(target);
  if (!node) throw Error(ErrorKind::kInvalidArgument, "target '" + std::string(target) + "' is not in the graph");
  if (rc.strategy == RetrievalStrategy::kNone) return {};
  if (rc.k == 0) throw Error(ErrorKind::kInvalidArgument, "retrieval k must be at least 1");

  std::vector<std::string> candidates;
  const int target_year = corpus ? corpus->paper(target).pub_year : 0;
  for (const auto& [j, w] : graph.neighbors(*node)) {
    const auto& id = graph.nodes()[j];
    if (corpus && corpus->paper(id).pub_year > target_year) continue;
    candidates.push_back(id);
  }

  if (rc.strategy == RetrievalStrategy::kRandom) {
    const std::size_t take = std::min(rc.k, candidates.size());
    Rng rng(derive_seed(rc.seed, target));
    for (std::size_t i = 0; i < take; ++i) {
      std::swap(candidates[i], candidates[i + uniform_index(rng, candidates.size() - i)]);
    }
    candidates.resize(take);
    return candidates;
  }

  if (!embeddings) throw Error(ErrorKind::kMissingArtifact, "top_similar retrieval needs text embeddings");
  const auto lookup = [&](const std::string& id) -> const std::vector<double>& {
    const auto it = embeddings->find(id);
    if (it == embeddings->end()) {
      throw Error(ErrorKind::kMissingArtifact, "no text embedding for '" + id + "'");
    }
    return it->second;
  };
  const auto& anchor = lookup(std::string(target));
  std::vector<std::pair<double, std::string>> scored;
  for (auto& id : candidates) scored.emplace_back(cosine_similarity(anchor, lookup(id)), std::move(id));
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(rc.k, scored.size()); ++i) out.push_back(scored[i].second);
  return out;
}

NeighborContext mask_neighbor_history(const Paper& neighbor, const CitationHistory& history,
                                      const LabelGrid& labels, int percent, int target_pub_year,
                                      NeighborEncoding encoding) {
  if (neighbor.pub_year > target_pub_year) {
    throw Error(ErrorKind::kTemporal, "neighbor '" + neighbor.id + "' (" +
                                          std::to_string(neighbor.pub_year) +
                                          ") postdates its target (" +
                                          std::to_string(target_pub_year) + ")");
  }
  NeighborContext ctx;
  ctx.paper = neighbor;
  const int last = target_pub_year - neighbor.pub_year;
  const auto& key = neighbor.id;
  for (int y = 0; y <= last; ++y) {
    ctx.years.push_back(y);
    if (encoding == NeighborEncoding::kAcc) {
      ctx.y_acc_vector.push_back(static_cast<double>(accumulated_citations(history, y)));
      continue;
    }
    const LabelTable* table = labels.find({y, percent});
    const LabelEntry* entry = nullptr;
    if (table) {
      const auto it = table->entries.find(key);
      if (it != table->entries.end()) entry = &it->second;
    }
    if (!entry) {
      throw Error(ErrorKind::kMissingArtifact, "no label for neighbor '" + neighbor.id +
                                                   "' at Y=" + std::to_string(y) +
                                                   ", P=" + std::to_string(percent));
    }
    ctx.y_acc_vector.push_back(entry->label ? 1.0 : 0.0);
  }
  return ctx;
}

const std::string& system_prompt() {
  static const std::string text = R"(You are a scientific impact prediction engine for journal articles.

Your job is to estimate calibrated probabilities for whether a target paper will become a top paper within its journal at each requested horizon year.

Output rules

1. Output valid JSON only. No Markdown, no explanation, and no extra text.
2. The JSON must have exactly one top-level key: "response".
3. "response" must have exactly one key: "y_acc_vector".
4. The required structure is:

   {"response":{"y_acc_vector":[...]}}

5. "y_acc_vector" must contain numeric probabilities in [0,1].
6. Probabilities must be numbers, not strings.
7. The length of "y_acc_vector" must be exactly equal to <OUTPUT_SPEC><n_years>.
8. Do not reveal reasoning or chain-of-thought. Return only the final JSON.
9. Use only the information explicitly present in the XML input.
10. Do not use external facts or hidden assumptions about papers, authors, journals, venues, identifiers, files, or datasets.
)";
  return text;
}

const std::string& developer_prompt() {
  static const std::string text = R"(Task

Predict, for the target journal article, the probability that it will be a top paper by accumulated citations at each requested horizon year.

Positive event

The positive event is defined by <CONFIG><q_value>:

- q_value is a quantile threshold.
- A paper is considered top if it belongs to the top (1 - q_value) fraction within its journal or context.
- Example: q_value = 0.8 means the positive event is being in the top 20%.

Required prediction

Return one probability for each horizon year listed in <TARGET><years>.

- The output vector is:

  y_acc_vector[h] = P(target paper is a top paper by accumulated citations up to horizon h)

- The order of the probabilities must follow the exact order of <TARGET><years>:
  - first probability -> first year in <TARGET><years>;
  - second probability -> second year in <TARGET><years>;
  - and so on.

Input information

The XML contains three main sections.

1) <CONFIG>

This section provides the general experimental context:

- graph_name: name of the graph or retrieval setting;
- retrieval_type: whether neighbors were retrieved by top-k similarity/context or randomly;
- K_NEIGHBORS: number of retrieved neighbors requested;
- is_directed and is_weighted: graph construction flags;
- q_value: quantile threshold defining the positive class.

2) <TARGET>

This section describes the paper to be predicted:

- title;
- abstract;
- publication year;
- domain, field, and subfield;
- years: horizon years to predict;
- n_years: exact number of probabilities required in the output;
- years to predict;
- maximum observable year.

Use the target title, abstract, publication year, field information, and requested horizons as the main basis for the prediction.

3) <NEIGHBORS>

This section contains contextual papers retrieved from the graph:

- each neighbor has metadata, text, and a y_acc_vector;
- neighbor y_acc_vector values are historical or contextual calibration examples;
- they can help estimate how papers with related metadata or text behaved under the same target definition;
- do not copy neighbor vectors directly;
- do not assume the target has the same outcome as any individual neighbor;
- do not use neighbor vector length to decide output length.

Prediction guidance

Estimate calibrated probabilities from the available evidence:

- target paper metadata and text;
- field, domain, and subfield context;
- publication year and requested horizon years;
- neighborhood context and neighbor y_acc_vector values, when informative.

Do not force monotonicity, thresholds, labels, or fixed patterns unless supported by the input. Output probabilities, not binary decisions.

Leakage prevention

- The target's true y_acc_vector is not provided and must not be inferred from hidden conventions.
- Do not treat identifiers, graph names, retrieval order, filenames, or dataset-specific patterns as labels.
- If any field appears to describe the target's observed future outcome, ignore it.

Output validation

Before producing the final JSON, ensure that:

- there is exactly one key inside "response";
- that key is "y_acc_vector";
- y_acc_vector has exactly <OUTPUT_SPEC><n_years> values;
- every value is a numeric probability between 0 and 1;
- no extra text is included.

If evidence is weak or incomplete, still return a valid probability vector with exactly <OUTPUT_SPEC><n_years> values.
)";
  return text;
}

std::string xml_escape(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      case '\r': out += "&#13;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string format_int_list(std::span<const int> values) {
  std::string out = "[";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out += ", ";
    out += std::to_string(values[i]);
  }
  return out + "]";
}

std::string format_probability_list(std::span<const double> values) {
  std::string out = "[";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out += ", ";
    out += format_double(values[i]);
  }
  return out + "]";
}

namespace {

void element(std::string& out, std::string_view indent, std::string_view tag, std::string_view value) {
  out += indent;
  out += '<';
  out += tag;
  out += '>';
  out += value;
  out += "</";
  out += tag;
  out += ">\n";
}

void paper_fields(std::string& out, std::string_view indent, const Paper& p) {
  element(out, indent, "title", xml_escape(p.title));
  element(out, indent, "abstract", xml_escape(p.abstract));
  element(out, indent, "publication_year", std::to_string(p.pub_year));
  element(out, indent, "domain", xml_escape(p.domain));
  element(out, indent, "field", xml_escape(p.field));
  element(out, indent, "subfield", xml_escape(p.subfield));
}

}  // namespace

PromptBundle build_prompt(const PromptConfig& config, const PromptTarget& target,
                          std::span<const NeighborContext> neighbors) {
  if (target.years.empty()) throw Error(ErrorKind::kInvalidArgument, "prompt needs at least one horizon");
  const auto n_years = std::to_string(target.years.size());
  const bool with_neighbors = config.retrieval != RetrievalStrategy::kNone;

  std::vector<int> calendar;
  for (int y : target.years) calendar.push_back(target.paper.pub_year + y);

  std::string u;
  u += "<REQUEST>\n\n";
  u += "  <OUTPUT_SPEC>\n";
  element(u, "    ", "required_json_schema", R"({"response":{"y_acc_vector":[...]}})");
  element(u, "    ", "n_years", n_years);
  element(u, "    ", "required_vector_length", n_years);
  element(u, "    ", "probability_order", "same order as TARGET years");
  u += "  </OUTPUT_SPEC>\n\n";

  u += "  <CONFIG>\n";
  element(u, "    ", "graph_name", xml_escape(config.graph_name));
  element(u, "    ", "retrieval_type", to_string(config.retrieval));
  element(u, "    ", "K_NEIGHBORS", std::to_string(with_neighbors ? config.k_neighbors : 0));
  element(u, "    ", "is_directed", config.directed ? "true" : "false");
  element(u, "    ", "is_weighted", config.weighted ? "true" : "false");
  element(u, "    ", "q_value", format_double((100 - config.percent) / 100.0));
  u += "  </CONFIG>\n\n";

  u += "  <TARGET>\n";
  paper_fields(u, "    ", target.paper);
  element(u, "    ", "years", format_int_list(target.years));
  element(u, "    ", "n_years", n_years);
  element(u, "    ", "years_to_predict", format_int_list(calendar));
  element(u, "    ", "max_year", std::to_string(target.max_year));
  u += "  </TARGET>\n\n";

  if (with_neighbors) {
    u += "  <NEIGHBORS>\n";
    for (const auto& n : neighbors) {
      u += "    <PAPER>\n";
      paper_fields(u, "      ", n.paper);
      element(u, "      ", "years", format_int_list(n.years));
      element(u, "      ", "y_acc_vector", format_probability_list(n.y_acc_vector));
      u += "    </PAPER>\n";
    }
    u += "  </NEIGHBORS>\n\n";
  }
  u += "</REQUEST>\n";

  PromptBundle bundle;
  bundle.system = system_prompt();
  bundle.developer = developer_prompt();
  bundle.user = std::move(u);
  bundle.n_years = target.years.size();
  bundle.target_id = target.paper.id;
  bundle.years = target.years;
  return bundle;
}

namespace {

[[noreturn]] void reject(ResponseErrorKind kind, const std::string& message) {
  throw ResponseError(kind, message);
}

std::vector<double> parse_strict(std::string_view text, std::size_t n_years) {
  using nlohmann::json;
  std::vector<std::vector<std::string>> seen;
  bool duplicate = false;
  const json::parser_callback_t track = [&](int, json::parse_event_t event, json& parsed) {
    if (event == json::parse_event_t::object_start) {
      seen.emplace_back();
    } else if (event == json::parse_event_t::object_end) {
      seen.pop_back();
    } else if (event == json::parse_event_t::key) {
      auto& keys = seen.back();
      const auto& k = parsed.get_ref<const std::string&>();
      if (std::find(keys.begin(), keys.end(), k) != keys.end()) duplicate = true;
      keys.push_back(k);
    }
    return true;
  };

  json doc;
  try {
    doc = json::parse(text.begin(), text.end(), track);
  } catch (const json::exception& e) {
    reject(ResponseErrorKind::kMalformed, std::string("response is not valid JSON: ") + e.what());
  }
  if (duplicate) reject(ResponseErrorKind::kExtraKeys, "response repeats a key");
  if (!doc.is_object()) reject(ResponseErrorKind::kMalformed, "top level must be a JSON object");
  if (!doc.contains("response")) reject(ResponseErrorKind::kMissingKey, "missing key \"response\"");
  if (doc.size() != 1) reject(ResponseErrorKind::kExtraKeys, "top level must hold only \"response\"");
  const auto& inner = doc["response"];
  if (!inner.is_object()) reject(ResponseErrorKind::kMalformed, "\"response\" must be an object");
  if (!inner.contains("y_acc_vector")) reject(ResponseErrorKind::kMissingKey, "missing key \"y_acc_vector\"");
  if (inner.size() != 1) reject(ResponseErrorKind::kExtraKeys, "\"response\" must hold only \"y_acc_vector\"");
  const auto& vec = inner["y_acc_vector"];
  if (!vec.is_array()) reject(ResponseErrorKind::kMalformed, "\"y_acc_vector\" must be an array");
  if (vec.size() != n_years) {
    reject(ResponseErrorKind::kWrongLength, "expected " + std::to_string(n_years) +
                                                " probabilities, got " + std::to_string(vec.size()));
  }
  std::vector<double> out;
  out.reserve(vec.size());
  for (std::size_t i = 0; i < vec.size(); ++i) {
    if (!vec[i].is_number()) reject(ResponseErrorKind::kNonNumeric, "entry " + std::to_string(i) + " is not a number");
    const double p = vec[i].get<double>();
    if (!(p >= 0.0 && p <= 1.0)) {
      reject(ResponseErrorKind::kOutOfRange, "entry " + std::to_string(i) + " lies outside [0,1]");
    }
    out.push_back(p);
  }
  return out;
}

std::optional<std::string_view> fenced_body(std::string_view text) {
  const auto open = text.find("```");
  if (open == std::string_view::npos) return std::nullopt;
  const auto body = text.find('\n', open);
  if (body == std::string_view::npos) return std::nullopt;
  const auto close = text.find("```", body + 1);
  if (close == std::string_view::npos) return std::nullopt;
  return text.substr(body + 1, close - body - 1);
}

}  // namespace

ParsedResponse parse_response(std::string_view text, std::size_t n_years) {
  try {
    return {parse_strict(text, n_years), ParseMode::kStrict};
  } catch (const ResponseError& e) {
    if (e.response_kind() != ResponseErrorKind::kMalformed) throw;
    const auto body = fenced_body(text);
    if (!body) throw;
    return {parse_strict(*body, n_years), ParseMode::kLenient};
  }
}

namespace {

std::string render_response(std::span<const double> probabilities) {
  std::string out = R"({"response":{"y_acc_vector":[)";
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    if (i > 0) out += ',';
    out += format_double(probabilities[i]);
  }
  return out + "]}}";
}

// Quantized to 1e-6 so responses stay short.
double quantize(double p) { return std::round(p * 1e6) / 1e6; }

}  // namespace

std::string mock_llm(const PromptBundle& prompt, MockMode mode, const LabelGrid* labels,
                     int percent, std::uint64_t seed) {
  std::vector<double> probs;
  probs.reserve(prompt.n_years);
  if (mode == MockMode::kHash) {
    std::uint64_t h = fnv1a64(prompt.system);
    h = fnv1a64(prompt.developer, h);
    h = fnv1a64(prompt.user, h);
    Rng rng(derive_seed(seed, h));
    for (std::size_t i = 0; i < prompt.n_years; ++i) probs.push_back(quantize(uniform01(rng)));
    return render_response(probs);
  }

  if (!labels) throw Error(ErrorKind::kInvalidArgument, "oracle mock needs a label grid");
  if (prompt.years.size() != prompt.n_years) {
    throw Error(ErrorKind::kInvalidArgument, "prompt years and n_years disagree");
  }
  Rng rng(derive_seed(seed, prompt.target_id));
  const auto& key = prompt.target_id;
  for (int y : prompt.years) {
    const LabelTable* table = labels->find({y, percent});
    double base = 0.5;
    if (table) {
      const auto it = table->entries.find(key);
      if (it != table->entries.end()) base = it->second.label ? 0.9 : 0.1;
    }
    probs.push_back(quantize(base + (uniform01(rng) - 0.5) * 0.098));
  }
  return render_response(probs);
}

MockLlmClient::MockLlmClient(MockMode mode, const LabelGrid* labels, int percent, std::uint64_t seed)
    : mode_(mode), labels_(labels), percent_(percent), seed_(seed) {
  if (mode == MockMode::kOracle && !labels) {
    throw Error(ErrorKind::kInvalidArgument, "oracle mock needs a label grid");
  }
}

std::string MockLlmClient::complete(const PromptBundle& prompt) {
  return mock_llm(prompt, mode_, labels_, percent_, seed_);
}

HttpLlmClient::HttpLlmClient(HttpEndpoint endpoint, std::string model, std::string options_json,
                             RetryPolicy retry, std::shared_ptr<RateLimiter> limiter)
    : endpoint_(std::move(endpoint)),
      model_(std::move(model)),
      options_json_(std::move(options_json)),
      retry_(retry),
      limiter_(std::move(limiter)) {
  const auto options = nlohmann::json::parse(options_json_, nullptr, false);
  if (options.is_discarded() || !options.is_object()) {
    throw Error(ErrorKind::kInvalidArgument, "LLM provider options must be a JSON object");
  }
}

std::string HttpLlmClient::complete(const PromptBundle& prompt) {
  auto body = nlohmann::json::parse(options_json_);
  body["model"] = model_;
  body["messages"] = nlohmann::json::array({
      {{"role", "system"}, {"content", prompt.system}},
      {{"role", "developer"}, {"content", prompt.developer}},
      {{"role", "user"}, {"content", prompt.user}},
  });
  const auto response = post_json_with_retry(endpoint_, body.dump(), retry_, limiter_.get());
  try {
    const auto doc = nlohmann::json::parse(response.body);
    return doc.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kProvider, std::string("unexpected chat completion payload: ") + e.what());
  }
}

namespace {

std::string audit_stem(std::string_view id) {
  std::string out;
  for (char c : id) {
    const bool keep = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                      c == '.' || c == '-' || c == '_';
    out += keep ? c : '_';
  }
  return out;
}

}  // namespace

RagRun run_graphrag(const Corpus& corpus, const PaperGraph& graph,
                    std::span<const std::string> targets, LlmClient& client,
                    const LabelGrid& labels, const TextEmbeddingMap* embeddings,
                    const RagOptions& options) {
  std::vector<std::string> order(targets.begin(), targets.end());
  std::sort(order.begin(), order.end());
  order.erase(std::unique(order.begin(), order.end()), order.end());

  const auto& spec = graph.spec();
  PromptConfig pc;
  pc.graph_name = graph_name(spec);
  pc.retrieval = options.retrieval.strategy;
  pc.k_neighbors = options.retrieval.k;
  pc.directed = spec.directed;
  pc.weighted = spec.weighted;
  pc.percent = options.percent;

  // Prompts are built up front so that setup errors surface before any request.
  std::vector<PromptBundle> bundles;
  bundles.reserve(order.size());
  for (const auto& id : order) {
    const Paper& paper = corpus.paper(id);
    PromptTarget target;
    target.paper = paper;
    target.max_year = corpus.max_data_year();
    int last = corpus.max_data_year() - paper.pub_year;
    if (options.max_horizon) last = std::min(last, *options.max_horizon);
    for (int y = 0; y <= last; ++y) target.years.push_back(y);
    if (target.years.empty()) {
      throw Error(ErrorKind::kInvalidArgument, "target '" + id + "' has no observable horizon");
    }
    std::vector<NeighborContext> contexts;
    for (const auto& n : retrieve_neighbors(graph, id, options.retrieval, embeddings, &corpus)) {
      contexts.push_back(mask_neighbor_history(corpus.paper(n), corpus.history(n), labels,
                                               options.percent, paper.pub_year, options.encoding));
    }
    bundles.push_back(build_prompt(pc, target, contexts));
  }

  RagRun run;
  run.predictions.resize(order.size());
  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (std::size_t i = next++; i < order.size(); i = next++) {
      const auto& bundle = bundles[i];
      auto& pred = run.predictions[i];
      pred.target_id = order[i];
      pred.years = bundle.years;
      const auto start = std::chrono::steady_clock::now();
      std::string raw;
      for (pred.attempts = 1; pred.attempts <= 2; ++pred.attempts) {
        try {
          raw = client.complete(bundle);
          const auto parsed = parse_response(raw, bundle.n_years);
          pred.probabilities = parsed.probabilities;
          pred.mode = parsed.mode;
          pred.error.clear();
          break;
        } catch (const std::exception& e) {
          pred.error = e.what();
        }
      }
      pred.attempts = std::min<std::size_t>(pred.attempts, 2);
      pred.missing = pred.probabilities.empty();
      pred.latency_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      if (options.audit_dir) {
        const auto stem = *options.audit_dir / audit_stem(pred.target_id);
        write_file(stem.string() + ".system.txt", bundle.system);
        write_file(stem.string() + ".developer.txt", bundle.developer);
        write_file(stem.string() + ".user.xml", bundle.user);
        write_file(stem.string() + ".response.json", raw);
      }
    }
  };
  const std::size_t width = std::clamp<std::size_t>(options.workers, 1, std::max<std::size_t>(1, order.size()));
  if (width == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < width; ++t) pool.emplace_back(work);
  }

  for (const auto& b : bundles) run.prompt_bytes += b.system.size() + b.developer.size() + b.user.size();
  for (const auto& p : run.predictions) run.failures += p.missing;
  if (!order.empty() &&
      static_cast<double>(run.failures) > options.max_failure_rate * static_cast<double>(order.size())) {
    std::string example;
    for (const auto& p : run.predictions) {
      if (p.missing) {
        example = p.target_id + ": " + p.error;
        break;
      }
    }
    throw Error(ErrorKind::kResponse, std::to_string(run.failures) + " of " +
                                          std::to_string(order.size()) +
                                          " targets failed, above the configured limit (" + example + ")");
  }
  return run;
}

std::string predictions_csv(const RagRun& run) {
  std::string out = "target_id,Y,probability,parse_mode\n";
  for (const auto& p : run.predictions) {
    if (p.missing) continue;
    for (std::size_t i = 0; i < p.years.size(); ++i) {
      out += csv_field(p.target_id) + ',' + std::to_string(p.years[i]) + ',' +
             format_double(p.probabilities[i]) + ',' + to_string(p.mode) + '\n';
    }
  }
  return out;
}

LabelGrid full_label_grid(const Corpus& corpus, std::string_view journal, int percent) {
  std::optional<int> earliest;
  for (const auto& p : corpus.papers()) {
    if (p.journal == journal) earliest = std::min(earliest.value_or(p.pub_year), p.pub_year);
  }
  if (!earliest) throw Error(ErrorKind::kInvalidArgument, "no papers in journal '" + std::string(journal) + "'");
  std::set<int> horizons;
  for (int y = 0; y <= corpus.max_data_year() - *earliest; ++y) horizons.insert(y);
  return label_grid(corpus, journal, horizons, {percent});
}

}  // namespace citeimpact

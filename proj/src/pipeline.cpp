#include "citeimpact/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <set>

#include "citeimpact/corpus.hpp"
#include "citeimpact/error.hpp"
#include "citeimpact/feature_matrix.hpp"
#include "citeimpact/labeling.hpp"
#include "citeimpact/metrics.hpp"
#include "citeimpact/rng.hpp"
#include "citeimpact/text_embeddings.hpp"
#include "citeimpact/text_io.hpp"

namespace citeimpact {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

[[noreturn]] void schema_error(const std::string& message) {
  throw Error(ErrorKind::kValidation, "run config: " + message);
}

// Reads one JSON object, remembering which keys were consumed so leftovers
// can be reported.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) schema_error("'" + label() + "' must be an object");
  }

  bool has(const char* key) {
    used_.insert(key);
    return node_.contains(key) && !node_.at(key).is_null();
  }

  const json& at(const char* key) { return node_.at(key); }

  template <class T>
  void get(const char* key, T& out) {
    if (!has(key)) return;
    out = convert<T>(node_.at(key), key);
  }

  template <class T>
  void get(const char* key, std::optional<T>& out) {
    if (!has(key)) return;
    out = convert<T>(node_.at(key), key);
  }

  void finish() const {
    for (const auto& [key, value] : node_.items()) {
      if (used_.count(key) != 0) continue;
      std::string lowered = key;
      std::transform(lowered.begin(), lowered.end(), lowered.begin(), ::tolower);
      if (lowered.find("token") != std::string::npos || lowered.find("key") != std::string::npos ||
          lowered.find("secret") != std::string::npos) {
        schema_error("'" + child(key) +
                     "' looks like a credential; provider tokens are read from environment variables only");
      }
      schema_error("unknown key '" + child(key) + "'");
    }
  }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string label() const { return path_.empty() ? "<root>" : path_; }

  template <class T>
  T convert(const json& v, const std::string& key) const {
    const auto bad = [&](const char* what) { schema_error("'" + child(key) + "' must be " + what); };
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) bad("a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) bad("a string");
      return v.get<std::string>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) bad("a number");
      return v.get<T>();
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!v.is_number_unsigned()) bad("a non-negative integer");
      return v.get<T>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) bad("an integer");
      return v.get<T>();
    } else {
      if (!v.is_array()) bad("an array");
      T out;
      for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(convert<typename T::value_type>(v[i], key + "[" + std::to_string(i) + "]"));
      }
      return out;
    }
  }

  const json& node_;
  std::string path_;
  std::set<std::string> used_;
};

GraphSpec parse_graph_spec(const json& node, const std::string& path) {
  Section s(node, path);
  GraphSpec spec;
  std::string kind;
  s.get("kind", kind);
  if (kind.empty()) schema_error("'" + path + ".kind' is required");
  try {
    spec.kind = graph_kind_from_string(kind);
  } catch (const Error& e) {
    schema_error("'" + path + ".kind': " + e.what());
  }
  s.get("directed", spec.directed);
  s.get("weighted", spec.weighted);
  s.get("k", spec.k);
  s.finish();
  try {
    validate_graph_spec(spec);
  } catch (const Error& e) {
    schema_error("'" + path + "': " + e.what());
  }
  return spec;
}

template <class F>
auto checked(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    schema_error("'" + path + "': " + e.what());
  }
}

}  // namespace

std::vector<GraphSpec> default_graph_specs() {
  std::vector<GraphSpec> out;
  for (bool directed : {true, false}) {
    for (bool weighted : {false, true}) out.push_back({GraphKind::kCitation, directed, weighted, std::nullopt});
  }
  for (int k : {3, 5, 7, 9}) {
    for (bool directed : {true, false}) {
      for (bool weighted : {false, true}) out.push_back({GraphKind::kSimilarity, directed, weighted, k});
    }
  }
  return out;
}

RunConfig parse_run_config(std::string_view json_text, const fs::path& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    schema_error(std::string("not valid JSON: ") + e.what());
  }
  RunConfig c;
  c.graphs = default_graph_specs();
  Section s(root, "");

  std::string corpus;
  s.get("corpus", corpus);
  if (corpus.empty()) schema_error("'corpus' is required");
  c.corpus = fs::path(corpus).is_absolute() ? fs::path(corpus) : base_dir / corpus;
  s.get("journal", c.journal);
  s.get("max_data_year", c.max_data_year);
  s.get("seed", c.seed);
  std::string out;
  s.get("out", out);
  if (!out.empty()) c.out = fs::path(out).is_absolute() ? fs::path(out) : base_dir / out;
  s.get("workers", c.workers);
  if (c.workers == 0) schema_error("'workers' must be at least 1");

  if (s.has("labels")) {
    Section l(s.at("labels"), "labels");
    l.get("horizons", c.horizons);
    l.get("percents", c.percents);
    l.finish();
    if (c.horizons.empty() || c.percents.empty()) schema_error("'labels' needs horizons and percents");
    for (int y : c.horizons) {
      for (int p : c.percents) checked("labels", [&] { validate_label_key({y, p}); return 0; });
    }
  }

  if (s.has("graphs")) {
    const auto& g = s.at("graphs");
    if (!g.is_array() || g.empty()) schema_error("'graphs' must be a non-empty array");
    c.graphs.clear();
    for (std::size_t i = 0; i < g.size(); ++i) {
      c.graphs.push_back(parse_graph_spec(g[i], "graphs[" + std::to_string(i) + "]"));
    }
  }

  if (s.has("feature_modes")) {
    std::vector<std::string> names;
    s.get("feature_modes", names);
    c.modes.clear();
    for (const auto& n : names) c.modes.push_back(checked("feature_modes", [&] { return feature_mode_from_string(n); }));
    if (c.modes.empty()) schema_error("'feature_modes' must not be empty");
  }

  if (s.has("text_embeddings")) {
    Section t(s.at("text_embeddings"), "text_embeddings");
    t.get("provider", c.text.provider);
    t.get("model", c.text.model);
    t.get("dimension", c.text.dimension);
    t.get("batch_size", c.text.batch_size);
    t.get("max_concurrency", c.text.max_concurrency);
    t.get("requests_per_second", c.text.requests_per_second);
    t.get("timeout_s", c.text.timeout_s);
    t.finish();
    if (c.text.provider != "hashing" && c.text.provider != "remote") {
      schema_error("'text_embeddings.provider' must be hashing or remote");
    }
    if (c.text.dimension == 0 || c.text.batch_size == 0 || c.text.max_concurrency == 0) {
      schema_error("'text_embeddings' sizes must be positive");
    }
  }

  if (s.has("walks")) {
    Section w(s.at("walks"), "walks");
    w.get("walks_per_node", c.walks.walks_per_node);
    w.get("walk_length", c.walks.walk_length);
    w.get("p", c.walks.p);
    w.get("q", c.walks.q);
    w.finish();
    checked("walks", [&] { validate_walk_params(c.walks); return 0; });
  }

  if (s.has("sgns")) {
    Section g(s.at("sgns"), "sgns");
    g.get("dimension", c.sgns.dimension);
    g.get("window", c.sgns.window);
    g.get("negatives", c.sgns.negatives);
    g.get("epochs", c.sgns.epochs);
    g.get("initial_learning_rate", c.sgns.initial_learning_rate);
    g.get("final_learning_rate", c.sgns.final_learning_rate);
    g.get("noise_exponent", c.sgns.noise_exponent);
    g.finish();
    checked("sgns", [&] { validate_sgns_params(c.sgns); return 0; });
  }

  if (s.has("classifier")) {
    Section m(s.at("classifier"), "classifier");
    m.get("hidden_sizes", c.mlp.hidden_sizes);
    m.get("batch_size", c.mlp.batch_size);
    m.get("max_epochs", c.mlp.max_epochs);
    m.get("validation_fraction", c.mlp.validation_fraction);
    m.get("early_stop_patience", c.mlp.early_stop_patience);
    m.get("learning_rate", c.mlp.learning_rate);
    std::string optimizer;
    m.get("optimizer", optimizer);
    if (!optimizer.empty()) c.mlp.optimizer = checked("classifier.optimizer", [&] { return optimizer_from_string(optimizer); });
    m.get("momentum", c.mlp.momentum);
    m.get("repetitions", c.repetitions);
    std::string split;
    m.get("split", split);
    if (split == "three_way") {
      c.split = SplitMode::kThreeWay;
    } else if (!split.empty() && split != "validation") {
      schema_error("'classifier.split' must be validation or three_way");
    }
    m.get("save_models", c.save_models);
    m.finish();
    checked("classifier", [&] { validate_mlp_config(c.mlp); return 0; });
    if (c.repetitions == 0) schema_error("'classifier.repetitions' must be at least 1");
  }

  if (s.has("rag")) {
    Section r(s.at("rag"), "rag");
    r.get("graph", c.rag.graph);
    std::string strategy;
    r.get("strategy", strategy);
    if (!strategy.empty()) c.rag.strategy = checked("rag.strategy", [&] { return retrieval_strategy_from_string(strategy); });
    r.get("k", c.rag.k);
    r.get("fraction", c.rag.fraction);
    r.get("count", c.rag.count);
    r.get("percent", c.rag.percent);
    std::string encoding;
    r.get("encoding", encoding);
    if (!encoding.empty()) c.rag.encoding = checked("rag.encoding", [&] { return neighbor_encoding_from_string(encoding); });
    r.get("max_failure_rate", c.rag.max_failure_rate);
    r.get("max_horizon", c.rag.max_horizon);
    r.get("audit", c.rag.audit);
    if (r.has("client")) {
      Section cl(r.at("client"), "rag.client");
      cl.get("type", c.rag.client.type);
      std::string mode;
      cl.get("mock_mode", mode);
      if (!mode.empty()) c.rag.client.mock_mode = checked("rag.client.mock_mode", [&] { return mock_mode_from_string(mode); });
      cl.get("model", c.rag.client.model);
      if (cl.has("options")) {
        c.rag.client.options = cl.at("options");
        if (!c.rag.client.options.is_object()) schema_error("'rag.client.options' must be an object");
      }
      cl.get("timeout_s", c.rag.client.timeout_s);
      cl.get("requests_per_second", c.rag.client.requests_per_second);
      cl.get("max_retries", c.rag.client.max_retries);
      cl.finish();
      if (c.rag.client.type != "mock" && c.rag.client.type != "remote") {
        schema_error("'rag.client.type' must be mock or remote");
      }
      if (c.rag.client.type == "remote" && c.rag.client.model.empty()) {
        schema_error("'rag.client.model' is required for a remote client");
      }
    }
    r.finish();
    if (!(c.rag.fraction > 0.0 && c.rag.fraction <= 1.0)) schema_error("'rag.fraction' must lie in (0, 1]");
    if (c.rag.strategy != RetrievalStrategy::kNone && c.rag.k == 0) schema_error("'rag.k' must be at least 1");
    checked("rag.percent", [&] { validate_label_key({0, c.rag.percent}); return 0; });
  }
  s.finish();

  if (c.rag.graph.empty()) {
    c.rag.graph = graph_name(c.graphs.front());
  } else {
    const bool known = std::any_of(c.graphs.begin(), c.graphs.end(),
                                   [&](const GraphSpec& g) { return graph_name(g) == c.rag.graph; });
    if (!known) schema_error("'rag.graph' names no configured graph: " + c.rag.graph);
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::kIo, "run config " + path.string() + " not found");
  return parse_run_config(read_file(path), path.parent_path());
}

json run_config_to_json(const RunConfig& c) {
  json j = json::object();
  j["corpus"] = c.corpus.string();
  j["journal"] = c.journal;
  j["max_data_year"] = c.max_data_year ? json(*c.max_data_year) : json(nullptr);
  j["seed"] = c.seed;
  j["out"] = c.out.string();
  j["workers"] = c.workers;
  j["labels"] = {{"horizons", c.horizons}, {"percents", c.percents}};
  auto graphs = json::array();
  for (const auto& g : c.graphs) {
    json node = {{"kind", to_string(g.kind)}, {"directed", g.directed}, {"weighted", g.weighted}};
    if (g.k) node["k"] = *g.k;
    graphs.push_back(node);
  }
  j["graphs"] = graphs;
  auto modes = json::array();
  for (auto m : c.modes) modes.push_back(to_string(m));
  j["feature_modes"] = modes;
  j["text_embeddings"] = {{"provider", c.text.provider},
                          {"model", c.text.model},
                          {"dimension", c.text.dimension},
                          {"batch_size", c.text.batch_size},
                          {"max_concurrency", c.text.max_concurrency},
                          {"requests_per_second", c.text.requests_per_second},
                          {"timeout_s", c.text.timeout_s}};
  j["walks"] = {{"walks_per_node", c.walks.walks_per_node},
                {"walk_length", c.walks.walk_length},
                {"p", c.walks.p},
                {"q", c.walks.q}};
  j["sgns"] = {{"dimension", c.sgns.dimension},
               {"window", c.sgns.window},
               {"negatives", c.sgns.negatives},
               {"epochs", c.sgns.epochs},
               {"initial_learning_rate", c.sgns.initial_learning_rate},
               {"final_learning_rate", c.sgns.final_learning_rate},
               {"noise_exponent", c.sgns.noise_exponent}};
  j["classifier"] = {{"hidden_sizes", c.mlp.hidden_sizes},
                     {"batch_size", c.mlp.batch_size},
                     {"max_epochs", c.mlp.max_epochs},
                     {"validation_fraction", c.mlp.validation_fraction},
                     {"early_stop_patience", c.mlp.early_stop_patience},
                     {"learning_rate", c.mlp.learning_rate},
                     {"optimizer", to_string(c.mlp.optimizer)},
                     {"momentum", c.mlp.momentum},
                     {"repetitions", c.repetitions},
                     {"split", c.split == SplitMode::kThreeWay ? "three_way" : "validation"},
                     {"save_models", c.save_models}};
  j["rag"] = {{"graph", c.rag.graph},
              {"strategy", to_string(c.rag.strategy)},
              {"k", c.rag.k},
              {"fraction", c.rag.fraction},
              {"count", c.rag.count ? json(*c.rag.count) : json(nullptr)},
              {"percent", c.rag.percent},
              {"encoding", to_string(c.rag.encoding)},
              {"max_failure_rate", c.rag.max_failure_rate},
              {"max_horizon", c.rag.max_horizon ? json(*c.rag.max_horizon) : json(nullptr)},
              {"audit", c.rag.audit},
              {"client",
               {{"type", c.rag.client.type},
                {"mock_mode", to_string(c.rag.client.mock_mode)},
                {"model", c.rag.client.model},
                {"options", c.rag.client.options},
                {"timeout_s", c.rag.client.timeout_s},
                {"requests_per_second", c.rag.client.requests_per_second},
                {"max_retries", c.rag.client.max_retries}}}};
  return j;
}

const char* to_string(Stage stage) noexcept {
  switch (stage) {
    case Stage::kValidate: return "validate";
    case Stage::kLabel: return "label";
    case Stage::kEmbedText: return "embed-text";
    case Stage::kBuildGraph: return "build-graph";
    case Stage::kEmbedNodes: return "embed-nodes";
    case Stage::kTrain: return "train";
    case Stage::kRag: return "rag";
    case Stage::kReport: return "report";
  }
  return "validate";
}

Stage stage_from_string(std::string_view name) {
  for (auto s : all_stages()) {
    if (name == to_string(s)) return s;
  }
  throw Error(ErrorKind::kInvalidArgument, "unknown stage '" + std::string(name) + "'");
}

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> stages{Stage::kValidate,   Stage::kLabel, Stage::kEmbedText,
                                         Stage::kBuildGraph, Stage::kEmbedNodes, Stage::kTrain,
                                         Stage::kRag,        Stage::kReport};
  return stages;
}

namespace {

struct Input {
  fs::path path;
  std::string producer;  // empty for user-supplied files
};

struct Outcome {
  std::vector<fs::path> outputs;
  json seeds = json::object();
  json extra = json::object();
  std::vector<std::string> messages;
  int exit_code = 0;
};

bool needs_text_for_graphs(const RunConfig& c) {
  return std::any_of(c.graphs.begin(), c.graphs.end(), [](const GraphSpec& g) {
    return g.kind == GraphKind::kSimilarity || g.weighted;
  });
}

bool uses_mode(const RunConfig& c, FeatureMode m) {
  return std::find(c.modes.begin(), c.modes.end(), m) != c.modes.end();
}

std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) out[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return out;
}

TextEmbeddingMap to_map(const FeatureMatrix& m) {
  TextEmbeddingMap out;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto r = m.row(i);
    out.emplace(m.ids()[i], std::vector<double>(r.begin(), r.end()));
  }
  return out;
}

std::string env_or_empty(const char* name) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : std::string();
}

std::shared_ptr<RateLimiter> limiter_for(double rps) {
  return rps > 0.0 ? std::make_shared<RateLimiter>(rps, std::max(1.0, rps)) : nullptr;
}

class StageRunner {
 public:
  StageRunner(const RunConfig& config, Stage stage) : c_(config), stage_(stage) {}

  StageResult run();

 private:
  fs::path out(std::string_view rel) const { return c_.out / rel; }
  fs::path text_matrix() const { return out("text_embeddings.bin"); }
  fs::path label_csv() const { return out("labels.csv"); }
  fs::path graph_csv(const GraphSpec& g) const { return out("graphs/" + graph_name(g) + ".csv"); }
  fs::path node_matrix(const GraphSpec& g) const { return out("node_embeddings/" + graph_name(g) + ".bin"); }
  fs::path predictions() const { return out("rag/predictions.csv"); }

  const GraphSpec& rag_graph() const {
    for (const auto& g : c_.graphs) {
      if (graph_name(g) == c_.rag.graph) return g;
    }
    throw Error(ErrorKind::kValidation, "run config: rag.graph names no configured graph");
  }

  std::vector<Input> inputs() const;
  json section() const;

  Corpus load() const {
    if (!fs::exists(c_.corpus)) {
      throw Error(ErrorKind::kMissingArtifact, "corpus file " + c_.corpus.string() +
                                                   " not found; point 'corpus' at a JSONL corpus or create one with `citeimpact synth`");
    }
    LoadOptions options;
    options.max_data_year = c_.max_data_year;
    return load_corpus(c_.corpus, options);
  }

  std::string journal(const Corpus& corpus) const {
    if (!c_.journal.empty()) {
      const auto all = corpus.journals();
      if (std::find(all.begin(), all.end(), c_.journal) == all.end()) {
        throw Error(ErrorKind::kValidation, "journal '" + c_.journal + "' does not occur in the corpus");
      }
      return c_.journal;
    }
    const auto all = corpus.journals();
    if (all.size() != 1) {
      throw Error(ErrorKind::kValidation, "corpus holds " + std::to_string(all.size()) +
                                              " journals; set 'journal' in the run config");
    }
    return all.front();
  }

  Outcome validate();
  Outcome label();
  Outcome embed_text();
  Outcome build_graph();
  Outcome embed_nodes();
  Outcome train();
  Outcome rag();
  Outcome report();

  const RunConfig& c_;
  Stage stage_;
};

std::vector<Input> StageRunner::inputs() const {
  std::vector<Input> in{{c_.corpus, ""}};
  switch (stage_) {
    case Stage::kValidate:
    case Stage::kLabel:
    case Stage::kEmbedText:
      break;
    case Stage::kBuildGraph:
      if (needs_text_for_graphs(c_)) in.push_back({text_matrix(), "embed-text"});
      break;
    case Stage::kEmbedNodes:
      for (const auto& g : c_.graphs) in.push_back({graph_csv(g), "build-graph"});
      break;
    case Stage::kTrain:
      in.push_back({label_csv(), "label"});
      if (uses_mode(c_, FeatureMode::kTe3) || uses_mode(c_, FeatureMode::kN2vTe3)) {
        in.push_back({text_matrix(), "embed-text"});
      }
      if (uses_mode(c_, FeatureMode::kN2v) || uses_mode(c_, FeatureMode::kN2vTe3)) {
        for (const auto& g : c_.graphs) in.push_back({node_matrix(g), "embed-nodes"});
      }
      break;
    case Stage::kRag:
      in.push_back({graph_csv(rag_graph()), "build-graph"});
      if (c_.rag.strategy == RetrievalStrategy::kTopSimilar) in.push_back({text_matrix(), "embed-text"});
      break;
    case Stage::kReport:
      in.push_back({predictions(), "rag"});
      break;
  }
  return in;
}

json StageRunner::section() const {
  const json full = run_config_to_json(c_);
  json s = {{"corpus", full["corpus"]}, {"journal", full["journal"]}, {"max_data_year", full["max_data_year"]}};
  const auto take = [&](const char* key) { s[key] = full[key]; };
  switch (stage_) {
    case Stage::kValidate: break;
    case Stage::kLabel: take("labels"); break;
    case Stage::kEmbedText: take("text_embeddings"); take("seed"); break;
    case Stage::kBuildGraph: take("graphs"); break;
    case Stage::kEmbedNodes: take("graphs"); take("walks"); take("sgns"); take("seed"); break;
    case Stage::kTrain:
      take("graphs"); take("feature_modes"); take("classifier"); take("labels"); take("seed");
      break;
    case Stage::kRag: take("rag"); take("seed"); break;
    case Stage::kReport: take("rag"); break;
  }
  return s;
}

StageResult StageRunner::run() {
  const auto start = std::chrono::steady_clock::now();
  const auto in = inputs();
  json input_digests = json::object();
  std::string fingerprint_material = std::string(to_string(stage_)) + "\n" + section().dump() + "\n";
  for (const auto& i : in) {
    if (!fs::exists(i.path)) {
      if (i.producer.empty()) {
        throw Error(ErrorKind::kMissingArtifact, "input " + i.path.string() + " not found");
      }
      throw Error(ErrorKind::kMissingArtifact, "missing " + i.path.string() + "; run `citeimpact " +
                                                   i.producer + "` first");
    }
    const auto digest = sha256_file(i.path);
    input_digests[i.path.string()] = digest;
    fingerprint_material += i.path.string() + "=" + digest + "\n";
    if (i.path.extension() == ".bin") {
      const auto ids = fs::path(i.path.string() + ".ids");
      const auto ids_digest = fs::exists(ids) ? sha256_file(ids) : std::string("absent");
      input_digests[ids.string()] = ids_digest;
      fingerprint_material += ids.string() + "=" + ids_digest + "\n";
    }
  }
  const std::string fingerprint = sha256_hex(fingerprint_material);
  const fs::path manifest_path = out(std::string("manifests/") + to_string(stage_) + ".json");

  StageResult result;
  result.stage = stage_;
  result.manifest = manifest_path;

  json manifest;
  bool hit = false;
  if (fs::exists(manifest_path)) {
    const auto previous = json::parse(read_file(manifest_path), nullptr, false);
    if (!previous.is_discarded() && previous.value("fingerprint", "") == fingerprint &&
        previous.contains("outputs") && previous["outputs"].is_object()) {
      hit = true;
      for (const auto& [path, digest] : previous["outputs"].items()) {
        if (!fs::exists(path) || sha256_file(path) != digest.get<std::string>()) {
          hit = false;
          break;
        }
      }
      if (hit) manifest = previous;
    }
  }

  if (!hit) {
    Outcome outcome;
    switch (stage_) {
      case Stage::kValidate: outcome = validate(); break;
      case Stage::kLabel: outcome = label(); break;
      case Stage::kEmbedText: outcome = embed_text(); break;
      case Stage::kBuildGraph: outcome = build_graph(); break;
      case Stage::kEmbedNodes: outcome = embed_nodes(); break;
      case Stage::kTrain: outcome = train(); break;
      case Stage::kRag: outcome = rag(); break;
      case Stage::kReport: outcome = report(); break;
    }
    json outputs = json::object();
    for (const auto& p : outcome.outputs) outputs[p.string()] = sha256_file(p);
    manifest = json::object();
    manifest["stage"] = to_string(stage_);
    manifest["tool_version"] = kToolVersion;
    manifest["config"] = run_config_to_json(c_);
    manifest["fingerprint"] = fingerprint;
    manifest["seeds"] = outcome.seeds;
    manifest["inputs"] = input_digests;
    manifest["outputs"] = outputs;
    manifest["exit_code"] = outcome.exit_code;
    manifest["messages"] = outcome.messages;
    manifest["details"] = outcome.extra;
  }

  result.cache_hit = hit;
  result.exit_code = manifest.value("exit_code", 0);
  result.messages = manifest.value("messages", std::vector<std::string>{});
  result.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  manifest["cache_hit"] = hit;
  manifest["wall_time_s"] = result.wall_time_s;
  write_file(manifest_path, manifest.dump(2) + "\n");
  return result;
}

Outcome StageRunner::validate() {
  Outcome o;
  const Corpus corpus = load();
  const auto report = validate_corpus(corpus);
  const auto path = out("validation.csv");
  write_file(path, validation_report_csv(report));
  o.outputs.push_back(path);
  o.extra["papers"] = corpus.size();
  o.extra["citations"] = corpus.citations().size();
  o.extra["max_data_year"] = corpus.max_data_year();
  o.extra["violations"] = report.size();
  if (!report.empty()) {
    o.exit_code = 1;
    o.messages.push_back(std::to_string(report.size()) + " validation violations; see " + path.string());
  }
  return o;
}

Outcome StageRunner::label() {
  Outcome o;
  const Corpus corpus = load();
  const auto grid = label_grid(corpus, journal(corpus), {c_.horizons.begin(), c_.horizons.end()},
                               {c_.percents.begin(), c_.percents.end()});
  write_file(label_csv(), label_grid_csv(grid));
  o.outputs.push_back(label_csv());
  o.messages = grid.notices;
  json tables = json::array();
  for (const auto& [key, table] : grid.tables) {
    tables.push_back({{"Y", key.horizon}, {"P", key.percent}, {"cohort", table.entries.size()}, {"n_pos", table.n_pos}});
  }
  o.extra["tables"] = tables;
  return o;
}

Outcome StageRunner::embed_text() {
  Outcome o;
  const Corpus corpus = load();
  const auto j = journal(corpus);
  std::vector<Paper> papers;
  for (const auto& p : corpus.papers()) {
    if (p.journal == j) papers.push_back(p);
  }

  FetchOptions fetch;
  fetch.dimension = c_.text.dimension;
  fetch.batch_size = c_.text.batch_size;
  fetch.max_concurrency = std::min(c_.text.max_concurrency, std::max<std::size_t>(1, c_.workers));
  std::unique_ptr<EmbeddingProvider> provider;
  if (c_.text.provider == "hashing") {
    const auto seed = derive_seed(c_.seed, "text-embeddings");
    o.seeds["text_embeddings"] = seed;
    provider = std::make_unique<HashingEmbeddingProvider>(c_.text.dimension, seed);
    fetch.model_id = "hashing-" + std::to_string(c_.text.dimension) + "-" + hex64(seed);
  } else {
    HttpEndpoint endpoint;
    endpoint.url = env_or_empty("CITEIMPACT_EMBEDDING_URL");
    if (endpoint.url.empty()) {
      throw Error(ErrorKind::kInvalidArgument, "remote embeddings need CITEIMPACT_EMBEDDING_URL in the environment");
    }
    endpoint.token = env_or_empty("CITEIMPACT_EMBEDDING_TOKEN");
    endpoint.timeout = std::chrono::milliseconds(static_cast<long long>(c_.text.timeout_s * 1000));
    provider = std::make_unique<HttpEmbeddingProvider>(endpoint, RetryPolicy{}, limiter_for(c_.text.requests_per_second));
    fetch.model_id = c_.text.model;
  }

  EmbeddingCache cache(out("cache/text_embeddings.jsonl"));
  cache.load();
  const auto result = fetch_text_embeddings(*provider, papers, cache, fetch);

  std::vector<std::string> ids;
  std::vector<double> values;
  for (const auto& p : papers) {
    const auto it = result.embeddings.find(p.id);
    if (it == result.embeddings.end()) continue;
    ids.push_back(p.id);
    values.insert(values.end(), it->second.begin(), it->second.end());
  }
  save_feature_matrix(FeatureMatrix(std::move(ids), c_.text.dimension, std::move(values)), text_matrix());
  o.outputs = {text_matrix(), fs::path(text_matrix().string() + ".ids")};
  o.extra["model_id"] = fetch.model_id;
  o.extra["embedded"] = result.embeddings.size();
  o.extra["skipped_empty"] = result.skipped_empty;
  o.extra["batches_requested"] = result.batches_requested;
  o.extra["cache_hits"] = result.cache_hits;
  if (!result.skipped_empty.empty()) {
    o.messages.push_back(std::to_string(result.skipped_empty.size()) + " papers with empty abstracts were not embedded");
  }
  return o;
}

Outcome StageRunner::build_graph() {
  Outcome o;
  const Corpus corpus = load();
  BuildOptions options;
  options.journal = journal(corpus);
  options.workers = c_.workers;
  std::optional<TextEmbeddingMap> text;
  if (needs_text_for_graphs(c_)) text = to_map(load_feature_matrix(text_matrix()));
  json graphs = json::array();
  for (const auto& spec : c_.graphs) {
    const PaperGraph g = spec.kind == GraphKind::kCitation
                             ? build_citation_graph(corpus, spec, text ? &*text : nullptr, options)
                             : build_similarity_graph(corpus, *text, spec, options);
    const auto violations = check_temporal_consistency(g, corpus);
    if (!violations.empty()) {
      throw Error(ErrorKind::kTemporal, graph_name(spec) + " has " + std::to_string(violations.size()) +
                                            " edges pointing forward in time");
    }
    save_graph(g, graph_csv(spec));
    o.outputs.push_back(graph_csv(spec));
    graphs.push_back({{"name", graph_name(spec)}, {"nodes", g.nodes().size()}, {"edges", g.edges().size()}});
  }
  o.extra["graphs"] = graphs;
  return o;
}

Outcome StageRunner::embed_nodes() {
  Outcome o;
  const Corpus corpus = load();
  const auto j = journal(corpus);
  json details = json::array();
  for (const auto& spec : c_.graphs) {
    const auto name = graph_name(spec);
    const PaperGraph g = load_graph(graph_csv(spec), &corpus, j);
    WalkParams walks = c_.walks;
    walks.seed = derive_seed(c_.seed, "walks/" + name);
    walks.workers = c_.workers;
    SgnsParams sgns = c_.sgns;
    sgns.seed = derive_seed(c_.seed, "sgns/" + name);
    o.seeds["walks/" + name] = walks.seed;
    o.seeds["sgns/" + name] = sgns.seed;
    const auto trained = train_sgns(generate_walks(g, walks), g.nodes(), sgns);
    save_feature_matrix(trained.embeddings, node_matrix(spec));
    o.outputs.push_back(node_matrix(spec));
    o.outputs.push_back(node_matrix(spec).string() + ".ids");
    details.push_back({{"graph", name}, {"rows", trained.embeddings.rows()}, {"epoch_loss", trained.epoch_loss}});
  }
  o.extra["graphs"] = details;
  return o;
}

Outcome StageRunner::train() {
  Outcome o;
  const Corpus corpus = load();
  const auto j = journal(corpus);
  const LabelGrid grid = parse_label_grid_csv(read_file(label_csv()));
  std::vector<const LabelTable*> tables;
  for (const auto& [key, table] : grid.tables) {
    if (table.journal == j) tables.push_back(&table);
  }
  if (tables.empty()) throw Error(ErrorKind::kMissingArtifact, "labels.csv has no tables for '" + j + "'; rerun `citeimpact label`");

  const bool want_text = uses_mode(c_, FeatureMode::kTe3) || uses_mode(c_, FeatureMode::kN2vTe3);
  std::optional<FeatureMatrix> text_matrix_rows;
  std::optional<TextEmbeddingMap> text;
  if (want_text) {
    text_matrix_rows = load_feature_matrix(text_matrix());
    text = to_map(*text_matrix_rows);
  }
  const auto empty_ids = corpus.empty_abstract_ids();
  const std::set<std::string> empty_set(empty_ids.begin(), empty_ids.end());

  GridOptions options;
  options.repetitions = c_.repetitions;
  options.base_seed = derive_seed(c_.seed, "train");
  options.mlp = c_.mlp;
  options.split = c_.split;
  options.workers = c_.workers;
  o.seeds["train"] = options.base_seed;

  EvalReport report;
  std::size_t failures = 0;
  std::size_t models = 0;
  json excluded = json::object();

  const auto run_cells = [&](const std::optional<GraphSpec>& graph, FeatureMode mode, const FeatureMatrix& features) {
    // Papers without a feature row (empty abstracts in text modes) cannot be
    // sampled; their labels stay as assigned on the full cohort.
    std::vector<LabelTable> filtered;
    filtered.reserve(tables.size());
    for (const auto* t : tables) {
      LabelTable copy = *t;
      std::erase_if(copy.entries, [&](const auto& e) { return features.find(e.first) == nullptr; });
      copy.n_pos = static_cast<std::size_t>(std::count_if(copy.entries.begin(), copy.entries.end(),
                                                          [](const auto& e) { return e.second.label; }));
      filtered.push_back(std::move(copy));
    }
    std::vector<GridCell> cells;
    for (const auto& t : filtered) cells.push_back({graph, mode, j, &features, &t});
    const std::string label = (graph ? graph_name(*graph) : std::string("text")) + "/" + to_string(mode);
    auto local = options;
    if (c_.save_models) {
      local.on_model = [&](std::size_t cell, std::size_t rep, const TrainedModel& model) {
        const auto& key = cells[cell].labels->key;
        save_model(model, out("models/" + label + "/Y" + std::to_string(key.horizon) + "_P" +
                              std::to_string(key.percent) + "_rep" + std::to_string(rep) + ".bin"));
      };
    }
    const auto result = run_experiment_grid(cells, local);
    models += result.models_trained;
    failures += result.failures.size();
    for (const auto& f : result.failures) {
      const auto& key = cells[f.cell].labels->key;
      if (o.messages.size() < 50) {
        o.messages.push_back(label + " Y=" + std::to_string(key.horizon) + " P=" + std::to_string(key.percent) +
                             " rep " + std::to_string(f.repetition) + ": " + f.message);
      }
    }
    report.rows.insert(report.rows.end(), result.report.rows.begin(), result.report.rows.end());
  };

  if (uses_mode(c_, FeatureMode::kTe3)) {
    const auto assembled = assemble_features(*text_matrix_rows, *text, FeatureMode::kTe3);
    run_cells(std::nullopt, FeatureMode::kTe3, assembled.features);
  }
  for (const auto& spec : c_.graphs) {
    if (!uses_mode(c_, FeatureMode::kN2v) && !uses_mode(c_, FeatureMode::kN2vTe3)) break;
    const FeatureMatrix nodes = load_feature_matrix(node_matrix(spec));
    if (uses_mode(c_, FeatureMode::kN2v)) run_cells(spec, FeatureMode::kN2v, nodes);
    if (uses_mode(c_, FeatureMode::kN2vTe3)) {
      const auto assembled = assemble_features(nodes, *text, FeatureMode::kN2vTe3, {}, empty_set);
      if (!assembled.excluded.empty()) excluded[graph_name(spec)] = assembled.excluded.size();
      run_cells(spec, FeatureMode::kN2vTe3, assembled.features);
    }
  }

  const auto rows_path = out("eval/rows.csv");
  const auto agg_path = out("eval/aggregates.csv");
  write_file(rows_path, eval_rows_csv(report));
  write_file(agg_path, eval_aggregates_csv(report));
  o.outputs = {rows_path, agg_path};
  o.extra["models_trained"] = models;
  o.extra["failures"] = failures;
  o.extra["excluded_empty_abstracts"] = excluded;
  if (failures > 0) o.messages.push_back(std::to_string(failures) + " (cell, repetition) runs failed");
  if (report.rows.empty()) throw Error(ErrorKind::kTraining, "no classifier run succeeded");
  return o;
}

Outcome StageRunner::rag() {
  Outcome o;
  const Corpus corpus = load();
  const auto j = journal(corpus);
  const PaperGraph graph = load_graph(graph_csv(rag_graph()), &corpus, j);
  const LabelGrid labels = full_label_grid(corpus, j, c_.rag.percent);
  std::optional<TextEmbeddingMap> text;
  if (c_.rag.strategy == RetrievalStrategy::kTopSimilar) text = to_map(load_feature_matrix(text_matrix()));

  const auto target_seed = derive_seed(c_.seed, "rag-targets");
  const auto targets = c_.rag.count ? sample_targets_count(graph, *c_.rag.count, target_seed)
                                    : sample_targets(graph, c_.rag.fraction, target_seed);
  RagOptions options;
  options.retrieval = {c_.rag.strategy, c_.rag.k, derive_seed(c_.seed, "rag-retrieval")};
  options.percent = c_.rag.percent;
  options.encoding = c_.rag.encoding;
  options.max_failure_rate = c_.rag.max_failure_rate;
  options.workers = c_.workers;
  options.max_horizon = c_.rag.max_horizon;
  if (c_.rag.audit) {
    const auto audit = out("rag/audit");
    fs::remove_all(audit);
    fs::create_directories(audit);
    options.audit_dir = audit;
  }
  o.seeds["rag_targets"] = target_seed;
  o.seeds["rag_retrieval"] = options.retrieval.seed;

  std::unique_ptr<LlmClient> client;
  if (c_.rag.client.type == "mock") {
    const auto seed = derive_seed(c_.seed, "mock-llm");
    o.seeds["mock_llm"] = seed;
    client = std::make_unique<MockLlmClient>(c_.rag.client.mock_mode, &labels, c_.rag.percent, seed);
  } else {
    HttpEndpoint endpoint;
    endpoint.url = env_or_empty("CITEIMPACT_LLM_URL");
    if (endpoint.url.empty()) {
      throw Error(ErrorKind::kInvalidArgument, "remote LLM client needs CITEIMPACT_LLM_URL in the environment");
    }
    endpoint.token = env_or_empty("CITEIMPACT_LLM_TOKEN");
    endpoint.timeout = std::chrono::milliseconds(static_cast<long long>(c_.rag.client.timeout_s * 1000));
    RetryPolicy retry;
    retry.max_retries = c_.rag.client.max_retries;
    client = std::make_unique<HttpLlmClient>(endpoint, c_.rag.client.model, c_.rag.client.options.dump(), retry,
                                             limiter_for(c_.rag.client.requests_per_second));
  }

  const auto run = run_graphrag(corpus, graph, targets, *client, labels, text ? &*text : nullptr, options);
  write_file(predictions(), predictions_csv(run));
  std::string log = "target_id,n_years,attempts,missing,parse_mode,error\n";
  double latency = 0.0;
  for (const auto& p : run.predictions) {
    log += csv_field(p.target_id) + ',' + std::to_string(p.years.size()) + ',' + std::to_string(p.attempts) + ',' +
           (p.missing ? "true" : "false") + ',' + to_string(p.mode) + ',' + csv_field(p.error) + '\n';
    latency += p.latency_ms;
  }
  const auto log_path = out("rag/run_log.csv");
  write_file(log_path, log);
  o.outputs = {predictions(), log_path};
  o.extra["targets"] = targets.size();
  o.extra["failures"] = run.failures;
  o.extra["prompt_bytes"] = run.prompt_bytes;
  o.extra["mean_latency_ms"] = run.predictions.empty() ? 0.0 : latency / static_cast<double>(run.predictions.size());
  if (run.failures > 0) o.messages.push_back(std::to_string(run.failures) + " targets recorded as missing");
  return o;
}

Outcome StageRunner::report() {
  Outcome o;
  const Corpus corpus = load();
  const auto j = journal(corpus);
  const LabelGrid labels = full_label_grid(corpus, j, c_.rag.percent);
  const auto rows = parse_predictions_csv(read_file(predictions()));
  const std::string config = c_.rag.graph + "/" + to_string(c_.rag.strategy) + "/k" +
                             std::to_string(c_.rag.strategy == RetrievalStrategy::kNone ? 0 : c_.rag.k);
  const auto horizons = horizon_report(config, rows, labels, c_.rag.percent);
  const auto report_path = out("report/horizon_report.csv");
  const auto plot_path = out("report/plot_data.csv");
  write_file(report_path, horizon_report_csv(horizons.rows));
  write_file(plot_path, plot_data_csv(horizons.rows));

  std::string summary = "journal: " + j + "\n";
  summary += "papers: " + std::to_string(corpus.size()) + "\n\n";
  summary += "GraphRAG (" + config + ", P=" + std::to_string(c_.rag.percent) + ")\n";
  for (const auto& r : horizons.rows) {
    char line[160];
    std::snprintf(line, sizeof line, "  Y=%-3d auc=%.4f  n=%-6zu available=%.1f%%\n", r.horizon, r.auc,
                  r.n_evaluated, r.pct_available);
    summary += line;
  }
  for (const auto& n : horizons.notices) summary += "  note: " + n + "\n";
  const auto aggregates = out("eval/aggregates.csv");
  if (fs::exists(aggregates)) {
    summary += "\nClassifier grid (mean AUC over repetitions)\n";
    summary += read_file(aggregates);
    o.extra["classifier_aggregates_sha256"] = sha256_file(aggregates);
  }
  const auto summary_path = out("report/summary.txt");
  write_file(summary_path, summary);
  o.outputs = {report_path, plot_path, summary_path};
  o.messages = horizons.notices;
  return o;
}

}  // namespace

Pipeline::Pipeline(RunConfig config) : config_(std::move(config)) {}

StageResult Pipeline::run(Stage stage) { return StageRunner(config_, stage).run(); }

std::vector<StageResult> Pipeline::run_all() {
  std::vector<StageResult> results;
  for (auto stage : all_stages()) {
    results.push_back(run(stage));
    if (stage == Stage::kValidate && results.back().exit_code != 0) break;
  }
  return results;
}

}  // namespace citeimpact

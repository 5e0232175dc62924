#include "citeimpact/node_embeddings.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "citeimpact/error.hpp"
#include "citeimpact/rng.hpp"

namespace citeimpact {

void validate_walk_params(const WalkParams& params) {
  if (params.walks_per_node == 0 || params.walk_length == 0 || !(params.p > 0.0) ||
      !(params.q > 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "walk parameters must be positive");
  }
}

namespace {

struct NodeTransitions {
  std::vector<std::uint32_t> targets;  // usable out-neighbors (weight > 0)
  std::vector<double> weights;
  AliasTable alias;
  std::vector<std::uint32_t> sorted_targets;  // by index, for adjacency tests
};

std::vector<NodeTransitions> transitions_of(const PaperGraph& graph) {
  std::vector<NodeTransitions> out(graph.nodes().size());
  for (std::size_t v = 0; v < out.size(); ++v) {
    auto& t = out[v];
    for (const auto& [u, w] : graph.neighbors(v)) {
      if (w > 0.0) {
        t.targets.push_back(u);
        t.weights.push_back(w);
      }
    }
    t.alias = AliasTable(t.weights);
    t.sorted_targets = t.targets;
    std::sort(t.sorted_targets.begin(), t.sorted_targets.end());
  }
  return out;
}

bool has_edge(const std::vector<NodeTransitions>& tr, std::uint32_t from, std::uint32_t to) {
  const auto& s = tr[from].sorted_targets;
  return std::binary_search(s.begin(), s.end(), to);
}

Walk one_walk(const std::vector<NodeTransitions>& tr, std::uint32_t start,
              const WalkParams& params, Rng& rng) {
  Walk walk{start};
  walk.reserve(params.walk_length);
  const bool first_order = params.p == 1.0 && params.q == 1.0;
  std::vector<double> cumulative;
  while (walk.size() < params.walk_length) {
    const auto current = walk.back();
    const auto& t = tr[current];
    if (t.alias.empty()) break;
    if (first_order || walk.size() == 1) {
      walk.push_back(t.targets[t.alias.sample(rng)]);
      continue;
    }
    const auto previous = walk[walk.size() - 2];
    cumulative.resize(t.targets.size());
    double total = 0.0;
    for (std::size_t i = 0; i < t.targets.size(); ++i) {
      const auto x = t.targets[i];
      double bias = 1.0 / params.q;
      if (x == previous) {
        bias = 1.0 / params.p;
      } else if (has_edge(tr, x, previous)) {
        bias = 1.0;
      }
      total += t.weights[i] * bias;
      cumulative[i] = total;
    }
    const double r = uniform01(rng) * total;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), r);
    const auto pick = std::min<std::size_t>(it - cumulative.begin(), t.targets.size() - 1);
    walk.push_back(t.targets[pick]);
  }
  return walk;
}

}  // namespace

std::vector<Walk> generate_walks(const PaperGraph& graph, const WalkParams& params) {
  validate_walk_params(params);
  const std::size_t n = graph.nodes().size();
  if (n == 0) throw Error(ErrorKind::kInvalidArgument, "cannot walk an empty graph");
  const auto tr = transitions_of(graph);

  std::vector<Walk> walks(n * params.walks_per_node);
  std::atomic<std::size_t> next{0};
  constexpr std::size_t kChunk = 256;
  const auto work = [&] {
    for (std::size_t c = next++ * kChunk; c < walks.size(); c = next++ * kChunk) {
      for (std::size_t slot = c; slot < std::min(walks.size(), c + kChunk); ++slot) {
        const std::size_t round = slot / n;
        const auto node = static_cast<std::uint32_t>(slot % n);
        Rng rng(derive_seed(params.seed, node, round));
        walks[slot] = one_walk(tr, node, params, rng);
      }
    }
  };
  const std::size_t width = std::max<std::size_t>(1, params.workers);
  if (width == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < width; ++t) pool.emplace_back(work);
  }
  return walks;
}

std::string walks_to_text(const PaperGraph& graph, std::span<const Walk> walks) {
  std::string out;
  for (const auto& walk : walks) {
    for (std::size_t i = 0; i < walk.size(); ++i) {
      if (i) out += ' ';
      out += graph.nodes()[walk[i]];
    }
    out += '\n';
  }
  return out;
}

void validate_sgns_params(const SgnsParams& params) {
  if (params.dimension == 0 || params.window == 0 || params.epochs == 0 ||
      !(params.initial_learning_rate > 0.0) || params.final_learning_rate < 0.0 ||
      params.loss_checkpoints == 0) {
    throw Error(ErrorKind::kInvalidArgument, "invalid SGNS parameters");
  }
}

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
// log(1 + e^x) without overflow.
inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

// outputs[0] is the positive context, the rest are negatives. Adds dL/dcenter
// into grad_center and reports dL/doutput_j = coeff_j * center via emit(j,
// coeff_j) right after output j's contribution to grad_center is taken.
template <typename Emit>
double pair_kernel(const double* center, std::size_t dim, std::span<const double* const> outputs,
                   double* grad_center, Emit&& emit) {
  double loss = 0.0;
  for (std::size_t j = 0; j < outputs.size(); ++j) {
    const double label = j == 0 ? 1.0 : 0.0;
    const double score = dot(center, outputs[j], dim);
    loss += j == 0 ? softplus(-score) : softplus(score);
    const double coeff = sigmoid(score) - label;
    for (std::size_t i = 0; i < dim; ++i) grad_center[i] += coeff * outputs[j][i];
    emit(j, coeff);
  }
  return loss;
}

}  // namespace

double sgns_pair_loss(std::span<const double> center, std::span<const double> positive,
                      std::span<const std::span<const double>> negatives) {
  double loss = softplus(-dot(center.data(), positive.data(), center.size()));
  for (const auto& n : negatives) loss += softplus(dot(center.data(), n.data(), center.size()));
  return loss;
}

double sgns_pair_gradients(std::span<const double> center, std::span<const double> positive,
                           std::span<const std::span<const double>> negatives,
                           SgnsGradients& out) {
  const std::size_t dim = center.size();
  std::vector<const double*> outputs{positive.data()};
  for (const auto& n : negatives) outputs.push_back(n.data());
  out.center.assign(dim, 0.0);
  out.positive.assign(dim, 0.0);
  out.negatives.assign(negatives.size(), std::vector<double>(dim, 0.0));
  return pair_kernel(center.data(), dim, outputs, out.center.data(), [&](std::size_t j, double coeff) {
    auto& g = j == 0 ? out.positive : out.negatives[j - 1];
    for (std::size_t i = 0; i < dim; ++i) g[i] = coeff * center[i];
  });
}

SgnsResult train_sgns(std::span<const Walk> walks, std::span<const std::string> node_ids,
                      const SgnsParams& params) {
  validate_sgns_params(params);
  std::size_t total_tokens = 0;
  for (const auto& w : walks) total_tokens += w.size();
  if (walks.empty() || total_tokens == 0) {
    throw Error(ErrorKind::kInvalidArgument, "SGNS needs a non-empty walk set");
  }

  std::vector<double> frequency(node_ids.size(), 0.0);
  for (const auto& w : walks) {
    for (auto v : w) {
      if (v >= node_ids.size()) throw Error(ErrorKind::kInvalidArgument, "walk node out of range");
      frequency[v] += 1.0;
    }
  }
  std::vector<double> noise(node_ids.size());
  for (std::size_t v = 0; v < noise.size(); ++v) {
    noise[v] = frequency[v] > 0.0 ? std::pow(frequency[v], params.noise_exponent) : 0.0;
  }
  const AliasTable noise_table(noise);

  const std::size_t dim = params.dimension;
  Rng rng(derive_seed(params.seed, "sgns"));
  std::vector<double> input(node_ids.size() * dim);
  std::vector<double> output(node_ids.size() * dim, 0.0);
  for (auto& x : input) x = (uniform01(rng) - 0.5) / static_cast<double>(dim);

  SgnsResult result;
  const double total_positions = static_cast<double>(total_tokens * params.epochs);
  const std::size_t slice = std::max<std::size_t>(1, (total_tokens + params.loss_checkpoints - 1) /
                                                         params.loss_checkpoints);
  std::vector<double> grad_center(dim);
  std::vector<const double*> outputs;
  std::vector<double*> output_rows;
  std::size_t processed = 0;

  for (std::size_t epoch = 0; epoch < params.epochs; ++epoch) {
    double epoch_loss = 0.0;
    std::size_t epoch_pairs = 0;
    double slice_loss = 0.0;
    std::size_t slice_pairs = 0;
    std::size_t epoch_position = 0;
    for (const auto& walk : walks) {
      for (std::size_t i = 0; i < walk.size(); ++i, ++processed, ++epoch_position) {
        const double progress = static_cast<double>(processed) / total_positions;
        const double lr = params.initial_learning_rate -
                          (params.initial_learning_rate - params.final_learning_rate) * progress;
        const std::size_t reach = params.window - uniform_index(rng, params.window);
        const std::size_t lo = i >= reach ? i - reach : 0;
        const std::size_t hi = std::min(walk.size() - 1, i + reach);
        double* center = input.data() + walk[i] * dim;
        for (std::size_t j = lo; j <= hi; ++j) {
          if (j == i) continue;
          outputs.clear();
          output_rows.clear();
          output_rows.push_back(output.data() + walk[j] * dim);
          for (std::size_t k = 0; k < params.negatives; ++k) {
            const auto neg = noise_table.sample(rng);
            if (neg == walk[j]) continue;
            output_rows.push_back(output.data() + neg * dim);
          }
          for (auto* row : output_rows) outputs.push_back(row);
          std::fill(grad_center.begin(), grad_center.end(), 0.0);
          const double loss = pair_kernel(center, dim, outputs, grad_center.data(),
                                          [&](std::size_t o, double coeff) {
                                            double* u = output_rows[o];
                                            for (std::size_t d = 0; d < dim; ++d) u[d] -= lr * coeff * center[d];
                                          });
          for (std::size_t d = 0; d < dim; ++d) center[d] -= lr * grad_center[d];
          epoch_loss += loss;
          slice_loss += loss;
          ++epoch_pairs;
          ++slice_pairs;
        }
        if ((epoch_position + 1) % slice == 0) {
          if (epoch == 0) result.checkpoint_loss.push_back(slice_pairs ? slice_loss / slice_pairs : 0.0);
          slice_loss = 0.0;
          slice_pairs = 0;
        }
      }
    }
    if (epoch == 0 && slice_pairs > 0) result.checkpoint_loss.push_back(slice_loss / slice_pairs);
    result.epoch_loss.push_back(epoch_pairs ? epoch_loss / epoch_pairs : 0.0);
  }

  std::vector<std::string> ids;
  std::vector<double> rows;
  for (std::size_t v = 0; v < node_ids.size(); ++v) {
    if (frequency[v] == 0.0) continue;
    ids.push_back(node_ids[v]);
    rows.insert(rows.end(), input.begin() + v * dim, input.begin() + (v + 1) * dim);
  }
  result.embeddings = FeatureMatrix(std::move(ids), dim, std::move(rows));
  return result;
}

const char* to_string(FeatureMode mode) noexcept {
  switch (mode) {
    case FeatureMode::kN2v: return "n2v";
    case FeatureMode::kTe3: return "te3";
    case FeatureMode::kN2vTe3: return "n2v_te3";
  }
  return "unknown";
}

FeatureMode feature_mode_from_string(std::string_view name) {
  if (name == "n2v") return FeatureMode::kN2v;
  if (name == "te3") return FeatureMode::kTe3;
  if (name == "n2v_te3") return FeatureMode::kN2vTe3;
  throw Error(ErrorKind::kInvalidArgument, "unknown feature mode '" + std::string(name) + "'");
}

AssembleResult assemble_features(const FeatureMatrix& node_emb, const TextEmbeddingMap& text_emb,
                                 FeatureMode mode, std::span<const std::string> ids,
                                 const std::set<std::string>& empty_abstract_ids) {
  std::vector<std::string> wanted = ids.empty() ? node_emb.ids()
                                                : std::vector<std::string>(ids.begin(), ids.end());
  const bool use_nodes = mode != FeatureMode::kTe3;
  const bool use_text = mode != FeatureMode::kN2v;

  std::size_t text_dim = 0;
  AssembleResult result;
  std::vector<std::string> kept;
  std::vector<const double*> node_rows;
  std::vector<const std::vector<double>*> text_rows;
  for (const auto& id : wanted) {
    const double* node_row = nullptr;
    if (use_nodes) {
      node_row = node_emb.find(id);
      if (!node_row) throw Error(ErrorKind::kInvalidArgument, "no node embedding for '" + id + "'");
    }
    const std::vector<double>* text_row = nullptr;
    if (use_text) {
      const auto it = text_emb.find(id);
      if (it == text_emb.end()) {
        if (empty_abstract_ids.count(id)) {
          result.excluded.push_back(id);
          continue;
        }
        throw Error(ErrorKind::kInvalidArgument, "no text embedding for '" + id + "'");
      }
      text_row = &it->second;
      if (text_dim == 0) text_dim = text_row->size();
      if (text_row->size() != text_dim) {
        throw Error(ErrorKind::kDimension, "text embedding for '" + id + "' has dimension " +
                                               std::to_string(text_row->size()));
      }
    }
    kept.push_back(id);
    node_rows.push_back(node_row);
    text_rows.push_back(text_row);
  }

  const std::size_t node_dim = use_nodes ? node_emb.dimension() : 0;
  FeatureMatrix features(std::move(kept), node_dim + text_dim);
  for (std::size_t r = 0; r < features.rows(); ++r) {
    auto row = features.row(r);
    if (use_nodes) std::copy(node_rows[r], node_rows[r] + node_dim, row.begin());
    if (use_text) std::copy(text_rows[r]->begin(), text_rows[r]->end(), row.begin() + node_dim);
  }
  result.features = std::move(features);
  return result;
}

}  // namespace citeimpact

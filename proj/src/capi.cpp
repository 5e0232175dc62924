#include "citeimpact/citeimpact.h"

#include <memory>
#include <set>
#include <string>
#include <vector>

#include "citeimpact/corpus.hpp"
#include "citeimpact/error.hpp"
#include "citeimpact/graphrag.hpp"
#include "citeimpact/labeling.hpp"
#include "citeimpact/metrics.hpp"
#include "citeimpact/pipeline.hpp"
#include "citeimpact/text_io.hpp"

struct ci_corpus {
  citeimpact::Corpus corpus;
};

struct ci_pipeline {
  citeimpact::Pipeline pipeline;
  std::string summary;
};

namespace {

thread_local std::string last_error;

ci_status status_of(citeimpact::ErrorKind kind) {
  using citeimpact::ErrorKind;
  switch (kind) {
    case ErrorKind::kInvalidArgument: return CI_ERR_INVALID_ARGUMENT;
    case ErrorKind::kIo: return CI_ERR_IO;
    case ErrorKind::kParse: return CI_ERR_PARSE;
    case ErrorKind::kValidation: return CI_ERR_VALIDATION;
    case ErrorKind::kTemporal: return CI_ERR_TEMPORAL;
    case ErrorKind::kDimension: return CI_ERR_DIMENSION;
    case ErrorKind::kProvider: return CI_ERR_PROVIDER;
    case ErrorKind::kMissingArtifact: return CI_ERR_MISSING_ARTIFACT;
    case ErrorKind::kResponse: return CI_ERR_RESPONSE;
    case ErrorKind::kTraining: return CI_ERR_TRAINING;
    case ErrorKind::kInternal: return CI_ERR_INTERNAL;
  }
  return CI_ERR_INTERNAL;
}

ci_status fail(ci_status status, std::string message) {
  last_error = std::move(message);
  return status;
}

template <class F>
ci_status guarded(F&& f) {
  try {
    f();
    return CI_OK;
  } catch (const citeimpact::Error& e) {
    return fail(status_of(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(CI_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(CI_ERR_INTERNAL, e.what());
  }
}

ci_status null_argument(const char* name) {
  return fail(CI_ERR_INVALID_ARGUMENT, std::string(name) + " must not be NULL");
}

}  // namespace

extern "C" {

const char* ci_version(void) { return "0.1.0"; }

const char* ci_status_name(ci_status status) {
  switch (status) {
    case CI_OK: return "ok";
    case CI_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case CI_ERR_IO: return "io";
    case CI_ERR_PARSE: return "parse";
    case CI_ERR_VALIDATION: return "validation";
    case CI_ERR_TEMPORAL: return "temporal";
    case CI_ERR_DIMENSION: return "dimension";
    case CI_ERR_PROVIDER: return "provider";
    case CI_ERR_MISSING_ARTIFACT: return "missing_artifact";
    case CI_ERR_RESPONSE: return "response";
    case CI_ERR_TRAINING: return "training";
    case CI_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* ci_last_error(void) { return last_error.c_str(); }

ci_status ci_corpus_load(const char* path, int max_data_year, ci_corpus** out) {
  if (!path) return null_argument("path");
  if (!out) return null_argument("out");
  *out = nullptr;
  return guarded([&] {
    citeimpact::LoadOptions options;
    if (max_data_year > 0) options.max_data_year = max_data_year;
    *out = new ci_corpus{citeimpact::load_corpus(path, options)};
  });
}

ci_status ci_corpus_generate(size_t n, uint64_t seed, double planted_fraction, ci_corpus** out) {
  if (!out) return null_argument("out");
  *out = nullptr;
  return guarded([&] {
    citeimpact::SynthParams params;
    params.planted_fraction = planted_fraction;
    *out = new ci_corpus{citeimpact::generate_synthetic_corpus(n, seed, params).corpus};
  });
}

ci_status ci_corpus_save(const ci_corpus* corpus, const char* path) {
  if (!corpus) return null_argument("corpus");
  if (!path) return null_argument("path");
  return guarded([&] { citeimpact::save_corpus(corpus->corpus, path); });
}

ci_status ci_corpus_size(const ci_corpus* corpus, size_t* out) {
  if (!corpus) return null_argument("corpus");
  if (!out) return null_argument("out");
  *out = corpus->corpus.size();
  return CI_OK;
}

ci_status ci_corpus_validate(const ci_corpus* corpus, const char* report_csv_path, size_t* violations) {
  if (!corpus) return null_argument("corpus");
  return guarded([&] {
    const auto report = citeimpact::validate_corpus(corpus->corpus);
    if (report_csv_path) citeimpact::write_file(report_csv_path, citeimpact::validation_report_csv(report));
    if (violations) *violations = report.size();
  });
}

void ci_corpus_free(ci_corpus* corpus) { delete corpus; }

ci_status ci_label_export(const ci_corpus* corpus, const char* journal, const int* horizons,
                          size_t n_horizons, const int* percents, size_t n_percents, const char* path) {
  if (!corpus) return null_argument("corpus");
  if (!path) return null_argument("path");
  if ((!horizons && n_horizons) || (!percents && n_percents)) return null_argument("horizons/percents");
  return guarded([&] {
    std::string j = journal ? journal : "";
    if (j.empty()) {
      const auto all = corpus->corpus.journals();
      if (all.size() != 1) {
        throw citeimpact::Error(citeimpact::ErrorKind::kInvalidArgument,
                                "corpus holds several journals; pass one explicitly");
      }
      j = all.front();
    }
    const auto grid = citeimpact::label_grid(corpus->corpus, j, std::set<int>(horizons, horizons + n_horizons),
                                             std::set<int>(percents, percents + n_percents));
    citeimpact::write_file(path, citeimpact::label_grid_csv(grid));
  });
}

ci_status ci_auc_roc(const double* scores, const unsigned char* labels, size_t n, double* out) {
  if ((!scores || !labels) && n > 0) return null_argument("scores/labels");
  if (!out) return null_argument("out");
  return guarded([&] {
    std::unique_ptr<bool[]> flags(new bool[n]);
    for (size_t i = 0; i < n; ++i) flags[i] = labels[i] != 0;
    *out = citeimpact::auc_roc({scores, n}, {flags.get(), n});
  });
}

ci_status ci_parse_response(const char* text, size_t n_years, double* probabilities, int* lenient,
                            ci_response_error* error_kind) {
  if (!text) return null_argument("text");
  if (!probabilities && n_years > 0) return null_argument("probabilities");
  if (error_kind) *error_kind = CI_RESPONSE_OK;
  try {
    const auto parsed = citeimpact::parse_response(text, n_years);
    std::copy(parsed.probabilities.begin(), parsed.probabilities.end(), probabilities);
    if (lenient) *lenient = parsed.mode == citeimpact::ParseMode::kLenient;
    return CI_OK;
  } catch (const citeimpact::ResponseError& e) {
    if (error_kind) *error_kind = static_cast<ci_response_error>(static_cast<int>(e.response_kind()) + 1);
    return fail(CI_ERR_RESPONSE, e.what());
  } catch (const std::exception& e) {
    return fail(CI_ERR_INTERNAL, e.what());
  }
}

ci_status ci_pipeline_open(const char* config_path, const ci_overrides* overrides, ci_pipeline** out) {
  if (!config_path) return null_argument("config_path");
  if (!out) return null_argument("out");
  *out = nullptr;
  return guarded([&] {
    auto config = citeimpact::load_run_config(config_path);
    if (overrides) {
      if (overrides->has_seed) config.seed = overrides->seed;
      if (overrides->out && *overrides->out) config.out = overrides->out;
      if (overrides->workers > 0) config.workers = overrides->workers;
    }
    *out = new ci_pipeline{citeimpact::Pipeline(std::move(config)), {}};
  });
}

ci_status ci_pipeline_run(ci_pipeline* pipeline, const char* stage, int* stage_exit_code) {
  if (!pipeline) return null_argument("pipeline");
  if (!stage) return null_argument("stage");
  pipeline->summary.clear();
  if (stage_exit_code) *stage_exit_code = 0;
  return guarded([&] {
    const std::string name = stage;
    std::vector<citeimpact::Stage> stages;
    if (name == "all") {
      stages = citeimpact::all_stages();
    } else {
      stages.push_back(citeimpact::stage_from_string(name));
    }
    for (auto s : stages) {
      const auto r = pipeline->pipeline.run(s);
      auto& log = pipeline->summary;
      log += std::string(citeimpact::to_string(s)) + ": " + (r.exit_code == 0 ? "ok" : "problems found") +
             (r.cache_hit ? " (cache hit)" : "") + ", " + citeimpact::format_double(r.wall_time_s) +
             " s, manifest " + r.manifest.string() + "\n";
      for (const auto& m : r.messages) log += "  " + m + "\n";
      if (r.exit_code != 0) {
        if (stage_exit_code) *stage_exit_code = r.exit_code;
        break;
      }
    }
  });
}

const char* ci_pipeline_summary(const ci_pipeline* pipeline) {
  return pipeline ? pipeline->summary.c_str() : "";
}

void ci_pipeline_free(ci_pipeline* pipeline) { delete pipeline; }

}  // extern "C"

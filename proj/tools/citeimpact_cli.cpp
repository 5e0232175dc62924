#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "citeimpact/citeimpact.h"

namespace {

// 0 success, 1 a stage ran but reported problems, 2 bad usage or config,
// 3 missing upstream artifact, 4 any other failure.
int exit_code_for(ci_status status) {
  switch (status) {
    case CI_OK: return 0;
    case CI_ERR_INVALID_ARGUMENT:
    case CI_ERR_VALIDATION: return 2;
    case CI_ERR_MISSING_ARTIFACT: return 3;
    default: return 4;
  }
}

int report_failure(ci_status status) {
  std::fprintf(stderr, "citeimpact: error (%s): %s\n", ci_status_name(status), ci_last_error());
  return exit_code_for(status);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Citation-impact prediction pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(ci_version()));

  std::string config_path;
  long long seed = -1;
  std::string out_dir;
  std::size_t workers = 0;

  struct StageCommand {
    const char* name;
    const char* help;
  };
  const std::vector<StageCommand> stages{
      {"validate", "Check corpus integrity and temporal rules"},
      {"label", "Compute accumulated citations and top-P labels"},
      {"embed-text", "Embed abstracts (cached)"},
      {"build-graph", "Build citation and similarity graphs"},
      {"embed-nodes", "Random walks and skip-gram node embeddings"},
      {"train", "Balanced-sampling classifier grid"},
      {"rag", "GraphRAG prompting over sampled targets"},
      {"report", "Per-horizon AUC report and plot data"},
      {"all", "Run every stage in order"},
  };

  std::vector<CLI::App*> stage_apps;
  for (const auto& s : stages) {
    auto* sub = app.add_subcommand(s.name, s.help);
    sub->add_option("--config", config_path, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Override the global seed")->check(CLI::NonNegativeNumber);
    sub->add_option("--out", out_dir, "Override the output directory");
    sub->add_option("--workers", workers, "Override the worker count")->check(CLI::PositiveNumber);
    stage_apps.push_back(sub);
  }

  std::size_t synth_n = 1000;
  long long synth_seed = 1;
  double planted = 0.2;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Write a synthetic corpus with a planted high-impact cluster");
  synth->add_option("--n", synth_n, "Number of papers")->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed, "Generator seed")->check(CLI::NonNegativeNumber);
  synth->add_option("--planted-fraction", planted, "Share of planted papers")->check(CLI::Range(0.0, 1.0));
  synth->add_option("--output", synth_out, "Destination JSONL")->required();

  CLI11_PARSE(app, argc, argv);

  if (synth->parsed()) {
    ci_corpus* corpus = nullptr;
    ci_status st = ci_corpus_generate(synth_n, static_cast<uint64_t>(synth_seed), planted, &corpus);
    if (st == CI_OK) st = ci_corpus_save(corpus, synth_out.c_str());
    ci_corpus_free(corpus);
    if (st != CI_OK) return report_failure(st);
    std::printf("wrote %zu papers to %s\n", synth_n, synth_out.c_str());
    return 0;
  }

  for (std::size_t i = 0; i < stage_apps.size(); ++i) {
    if (!stage_apps[i]->parsed()) continue;
    ci_overrides overrides{};
    overrides.has_seed = seed >= 0;
    overrides.seed = seed >= 0 ? static_cast<uint64_t>(seed) : 0;
    overrides.out = out_dir.empty() ? nullptr : out_dir.c_str();
    overrides.workers = workers;

    ci_pipeline* pipeline = nullptr;
    ci_status st = ci_pipeline_open(config_path.c_str(), &overrides, &pipeline);
    if (st != CI_OK) return report_failure(st);
    int stage_exit = 0;
    st = ci_pipeline_run(pipeline, stages[i].name, &stage_exit);
    std::fputs(ci_pipeline_summary(pipeline), stdout);
    ci_pipeline_free(pipeline);
    if (st != CI_OK) return report_failure(st);
    return stage_exit == 0 ? 0 : 1;
  }
  return 2;
}

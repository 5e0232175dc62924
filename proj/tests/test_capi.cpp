// Exercises the shared library through its C interface only.
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "citeimpact/citeimpact.h"
#include "support.hpp"

TEST_CASE("version and status names") {
  CHECK(std::string(ci_version()).size() > 0);
  CHECK(std::string(ci_status_name(CI_OK)) == "ok");
  CHECK(std::string(ci_status_name(CI_ERR_MISSING_ARTIFACT)).size() > 0);
}

TEST_CASE("corpus handles") {
  testsupport::TempDir dir("capi");
  ci_corpus* corpus = nullptr;
  REQUIRE(ci_corpus_generate(120, 3, 0.2, &corpus) == CI_OK);
  size_t n = 0;
  CHECK(ci_corpus_size(corpus, &n) == CI_OK);
  CHECK(n == 120);
  size_t violations = 99;
  CHECK(ci_corpus_validate(corpus, (dir / "v.csv").c_str(), &violations) == CI_OK);
  CHECK(violations == 0);
  const auto path = dir / "c.jsonl";
  CHECK(ci_corpus_save(corpus, path.c_str()) == CI_OK);

  const int horizons[] = {0, 1};
  const int percents[] = {20};
  CHECK(ci_label_export(corpus, nullptr, horizons, 2, percents, 1, (dir / "labels.csv").c_str()) == CI_OK);
  CHECK(std::filesystem::file_size(dir / "labels.csv") > 0);
  ci_corpus_free(corpus);

  ci_corpus* loaded = nullptr;
  REQUIRE(ci_corpus_load(path.c_str(), 0, &loaded) == CI_OK);
  CHECK(ci_corpus_size(loaded, &n) == CI_OK);
  CHECK(n == 120);
  ci_corpus_free(loaded);

  ci_corpus* missing = nullptr;
  CHECK(ci_corpus_load((dir / "nope.jsonl").c_str(), 0, &missing) == CI_ERR_IO);
  CHECK(missing == nullptr);
  CHECK(std::string(ci_last_error()).find("nope") != std::string::npos);
  CHECK(ci_corpus_size(nullptr, &n) == CI_ERR_INVALID_ARGUMENT);
  ci_corpus_free(nullptr);
}

TEST_CASE("auc and response parsing") {
  const double scores[] = {0.9, 0.8, 0.1, 0.2};
  const unsigned char labels[] = {1, 1, 0, 0};
  double auc = 0;
  CHECK(ci_auc_roc(scores, labels, 4, &auc) == CI_OK);
  CHECK(auc == 1.0);
  const unsigned char one_class[] = {1, 1, 1, 1};
  CHECK(ci_auc_roc(scores, one_class, 4, &auc) == CI_ERR_INVALID_ARGUMENT);

  double probs[2] = {0, 0};
  int lenient = -1;
  ci_response_error kind = CI_RESPONSE_MALFORMED;
  CHECK(ci_parse_response(R"({"response":{"y_acc_vector":[0.2,0.7]}})", 2, probs, &lenient, &kind) == CI_OK);
  CHECK(probs[1] == 0.7);
  CHECK(lenient == 0);
  CHECK(kind == CI_RESPONSE_OK);
  CHECK(ci_parse_response(R"({"response":{"y_acc_vector":[0.2,0.7]}})", 3, probs, nullptr, &kind) ==
        CI_ERR_RESPONSE);
  CHECK(kind == CI_RESPONSE_WRONG_LENGTH);
}

TEST_CASE("pipeline through the C interface") {
  testsupport::TempDir dir("capi");
  ci_corpus* corpus = nullptr;
  REQUIRE(ci_corpus_generate(80, 5, 0.2, &corpus) == CI_OK);
  REQUIRE(ci_corpus_save(corpus, (dir / "corpus.jsonl").c_str()) == CI_OK);
  ci_corpus_free(corpus);
  std::ofstream(dir / "run.json") << R"({"corpus": "corpus.jsonl", "out": "ignored",
    "labels": {"horizons": [0], "percents": [20]},
    "graphs": [{"kind": "citation", "directed": true, "weighted": false}],
    "text_embeddings": {"dimension": 16},
    "walks": {"walks_per_node": 2, "walk_length": 6},
    "sgns": {"dimension": 8, "epochs": 1},
    "classifier": {"repetitions": 1, "max_epochs": 2}})";

  const auto out = (dir / "elsewhere").string();
  ci_overrides overrides{1, 77, out.c_str(), 2};
  ci_pipeline* p = nullptr;
  REQUIRE(ci_pipeline_open((dir / "run.json").c_str(), &overrides, &p) == CI_OK);
  int code = -1;
  CHECK(ci_pipeline_run(p, "train", &code) == CI_ERR_MISSING_ARTIFACT);
  CHECK(std::string(ci_last_error()).find("citeimpact") != std::string::npos);
  CHECK(ci_pipeline_run(p, "all", &code) == CI_OK);
  CHECK(code == 0);
  CHECK(std::string(ci_pipeline_summary(p)).size() > 0);
  CHECK(std::filesystem::exists(dir / "elsewhere" / "report" / "summary.txt"));
  CHECK(ci_pipeline_run(p, "bogus", &code) == CI_ERR_INVALID_ARGUMENT);
  ci_pipeline_free(p);

  CHECK(ci_pipeline_open((dir / "missing.json").c_str(), nullptr, &p) != CI_OK);
}

#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "neuroalign/neuroalign.h"
#include "support/tempdir.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

TEST_CASE("version and error reporting") {
  CHECK(std::string(na_version()) == "0.1.0");
  const double x[2] = {1, 2};
  double r = 0.0;
  CHECK(na_correlation(x, x, 2, NA_PEARSON, &r) == NA_ERR_INVALID_ARGUMENT);
  CHECK(std::string(na_last_error()).size() > 0);
  CHECK(na_correlation(nullptr, x, 2, NA_PEARSON, &r) == NA_ERR_INVALID_ARGUMENT);
}

TEST_CASE("correlations") {
  const double x[4] = {1, 2, 3, 4}, y[4] = {1, 3, 2, 4};
  double r = 0.0;
  REQUIRE(na_correlation(x, y, 4, NA_SPEARMAN, &r) == NA_OK);
  CHECK(r == doctest::Approx(0.8).epsilon(1e-12));
  REQUIRE(na_correlation(x, x, 4, NA_PEARSON, &r) == NA_OK);
  CHECK(r == doctest::Approx(1.0));
}

TEST_CASE("RDM handles") {
  const double patterns[12] = {1, 2, 3, 4, 2, 1, 0, 1, 1, 2, 3, 4};  // rows 0 and 2 identical
  na_rdm* a = nullptr;
  REQUIRE(na_rdm_from_patterns(patterns, 3, 4, nullptr, &a) == NA_OK);
  size_t n = 0;
  REQUIRE(na_rdm_size(a, &n) == NA_OK);
  CHECK(n == 3);
  std::vector<double> m(9);
  REQUIRE(na_rdm_copy_matrix(a, m.data(), m.size()) == NA_OK);
  CHECK(std::abs(m[2]) < 1e-12);
  CHECK(m[1] == m[3]);
  CHECK(na_rdm_copy_matrix(a, m.data(), 8) == NA_ERR_INVALID_ARGUMENT);

  double rho = 0.0;
  const double values[3] = {0, 1, 3};
  na_rdm* f = nullptr;
  REQUIRE(na_rdm_from_feature(values, 3, nullptr, &f) == NA_OK);
  REQUIRE(na_rdm_compare(f, f, &rho) == NA_OK);
  CHECK(rho == doctest::Approx(1.0));

  // Asymmetric input is rejected.
  const double bad[9] = {0, 1, 2, 1.5, 0, 3, 2, 3, 0};
  na_rdm* b = nullptr;
  CHECK(na_rdm_from_matrix(bad, 3, NA_RDM_ONE_MINUS_PEARSON, nullptr, &b) == NA_ERR_INVALID_ARGUMENT);
  CHECK(b == nullptr);

  const double ok[9] = {0, 1, 2, 1, 0, 3, 2, 3, 0};
  REQUIRE(na_rdm_from_matrix(ok, 3, NA_RDM_ABS_FEATURE_DIFF, nullptr, &b) == NA_OK);
  REQUIRE(na_partial_spearman(b, f, nullptr, 0, &rho) == NA_OK);
  double direct = 0.0;
  REQUIRE(na_rdm_compare(b, f, &direct) == NA_OK);
  CHECK(rho == direct);

  const char* other_ids[3] = {"x", "y", "z"};
  na_rdm* c = nullptr;
  REQUIRE(na_rdm_from_feature(values, 3, other_ids, &c) == NA_OK);
  CHECK(na_rdm_compare(f, c, &rho) == NA_ERR_INVALID_ARGUMENT);

  na_rdm_free(a);
  na_rdm_free(b);
  na_rdm_free(c);
  na_rdm_free(f);
  na_rdm_free(nullptr);
}

TEST_CASE("improvement ratio") {
  double ratio = 0.0;
  int defined = 0;
  REQUIRE(na_improvement_ratio(0.143, 0.1, &ratio, &defined) == NA_OK);
  CHECK(defined == 1);
  CHECK(ratio == doctest::Approx(0.43));
  REQUIRE(na_improvement_ratio(0.2, 0.0, &ratio, &defined) == NA_OK);
  CHECK(defined == 0);
}

TEST_CASE("PCA handles") {
  std::vector<double> x;
  for (int i = 0; i < 10; ++i) {
    const double t = i - 4.5;
    x.insert(x.end(), {0.6 * t + 1.0, 0.8 * t - 2.0, 0.01 * ((i % 3) - 1)});
  }
  na_pca* p = nullptr;
  REQUIRE(na_pca_fit(x.data(), 10, 3, 2, &p) == NA_OK);
  size_t k = 0;
  REQUIRE(na_pca_k(p, &k) == NA_OK);
  CHECK(k == 2);
  std::vector<double> y(20);
  REQUIRE(na_pca_apply(p, x.data(), 10, 3, y.data()) == NA_OK);
  for (int i = 0; i < 10; ++i) CHECK(std::abs(y[static_cast<size_t>(2 * i)]) == doctest::Approx(std::abs(i - 4.5)).epsilon(1e-3));
  CHECK(na_pca_apply(p, x.data(), 10, 4, y.data()) == NA_ERR_INVALID_ARGUMENT);
  na_pca_free(p);
  CHECK(na_pca_fit(x.data(), 10, 3, 4, &p) == NA_ERR_INVALID_ARGUMENT);
}

TEST_CASE("runs, checkpoints and model RDMs through the C interface") {
  testsupport::TempDir tmp;
  {
    std::ofstream(tmp / "synth.json") << json{{"seed", 2},
                                              {"synth",
                                               {{"fmri", {{"n_train", 16}, {"n_test", 6}, {"n_voxels", 12}}},
                                                {"eeg", {{"n_stimuli", 3}, {"n_subjects", 1}, {"repetitions", 5},
                                                         {"n_channels", 2}, {"n_timepoints", 2}}},
                                                {"embedding_dimensions", 2}}}}
                                             .dump();
  }
  na_run_options o{};
  o.command = "synth";
  const std::string synth_cfg = (tmp / "synth.json").string(), data_out = (tmp / "data").string();
  o.config_path = synth_cfg.c_str();
  o.out_dir = data_out.c_str();
  const char* dir = nullptr;
  REQUIRE(na_run(&o, &dir) == NA_OK);
  CHECK(fs::path(dir) == tmp / "data");

  json c;
  std::ifstream(tmp / "data" / "pipeline_config.json") >> c;
  c["training"] = {{"epochs", 1}, {"batch_size", 8}, {"pca_k", 4}, {"per_layer_dim", 8}};
  std::ofstream(tmp / "data" / "cfg.json") << c.dump();
  const std::string cfg = (tmp / "data" / "cfg.json").string(), train_out = (tmp / "train").string();
  o = na_run_options{};
  o.command = "train";
  o.config_path = cfg.c_str();
  o.out_dir = train_out.c_str();
  o.has_beta = 1;
  o.beta = 20.0;
  REQUIRE(na_run(&o, &dir) == NA_OK);

  json models;
  std::ifstream(tmp / "train" / "models.json") >> models;
  const std::string ckpt = (tmp / "train" / models["models"][0]["checkpoint"].get<std::string>()).string();
  na_model* model = nullptr;
  REQUIRE(na_model_load(ckpt.c_str(), &model) == NA_OK);
  std::vector<double> images(4 * 3 * 32 * 32);
  for (size_t i = 0; i < images.size(); ++i) images[i] = 0.5 + 0.4 * std::sin(0.001 * static_cast<double>(i * (i % 7 + 1)));
  na_rdm* rdms[4] = {nullptr, nullptr, nullptr, nullptr};
  REQUIRE(na_model_rdms(model, images.data(), 4, 32, 32, rdms) == NA_OK);
  for (na_rdm* r : rdms) {
    size_t n = 0;
    REQUIRE(na_rdm_size(r, &n) == NA_OK);
    CHECK(n == 4);
    na_rdm_free(r);
  }
  CHECK(na_model_rdms(model, images.data(), 4, 16, 16, rdms) == NA_ERR_INVALID_ARGUMENT);
  na_model_free(model);
  CHECK(na_model_load((tmp / "nothing").string().c_str(), &model) == NA_ERR_DATA);

  // Bad config, missing report runs.
  std::ofstream(tmp / "bad.json") << R"({"training": {"betaa": 1}})";
  const std::string bad = (tmp / "bad.json").string(), bad_out = (tmp / "bad_out").string();
  o = na_run_options{};
  o.command = "train";
  o.config_path = bad.c_str();
  o.out_dir = bad_out.c_str();
  CHECK(na_run(&o, &dir) == NA_ERR_CONFIG);
  CHECK(std::string(na_last_error()).find("training.betaa") != std::string::npos);

  const std::string empty = (tmp / "empty").string();
  fs::create_directories(empty);
  o = na_run_options{};
  o.command = "report";
  o.out_dir = empty.c_str();
  CHECK(na_run(&o, &dir) == NA_ERR_DATA);
  CHECK(std::string(na_last_error()).find("no runs found") != std::string::npos);
}

// Evaluation pipeline: train/test splitting, metrics, the synthetic
// generator's distributional guarantees, and the benchmark reports.

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "poigp/eval.hpp"

using namespace poigp;

namespace {

Dataset make_synth(std::uint64_t seed, int stations) {
  SynthConfig config;
  config.seed = seed;
  config.stations = stations;
  config.type_names = {"Cafe", "School"};
  config.poi_counts = {15, 10};
  config.theta = {0.4, 0.6};
  config.sigma_alpha = {0.15, 0.1};
  config.noise_sd = 0.1;
  config.charger_weights = Eigen::Vector4d(0.4, -0.2, 0.3, 0.1);
  return synth_generate(config).data;
}

BenchmarkConfig tiny_bench(std::uint64_t seed) {
  BenchmarkConfig config;
  config.split.seed = seed;
  config.model.charger_hidden = {4};
  config.model.inducing_count = 15;
  config.model.seed = seed + 1;
  config.model.opt.iterations = 40;
  config.model.opt.step = 0.02;
  config.gwr_bandwidth = 2.0;  // skip the bandwidth cross-validation
  config.rf.trees = 25;
  config.nn.iterations = 150;
  return config;
}

double sample_var(const Eigen::VectorXd& v) {
  const double mean = v.mean();
  return (v.array() - mean).square().sum() / (v.size() - 1);
}

}  // namespace

TEST_CASE("the split puts floor(ratio n) stations in train") {
  const Dataset data = make_synth(61, 287);
  SplitConfig config;
  config.ratio = 0.8;
  config.seed = 5;
  const SplitResult sp = split(data, config);

  CHECK(sp.train.stations.size() == 229);  // floor(0.8 * 287)
  CHECK(sp.test.stations.size() == 58);
  CHECK(sp.train_index.size() == 229);
  CHECK(sp.test_index.size() == 58);

  std::set<std::size_t> seen(sp.train_index.begin(), sp.train_index.end());
  for (std::size_t i : sp.test_index) {
    CHECK(seen.insert(i).second);  // disjoint
  }
  CHECK(seen.size() == 287);  // exhaustive

  // Both halves keep the full POI registry and the projection reference.
  CHECK(sp.train.poi_types == data.poi_types);
  CHECK(sp.test.pois.size() == data.pois.size());
  CHECK(sp.train.reference.lon == data.reference.lon);

  // Standardization statistics come from the training half only.
  Eigen::VectorXd y_train(229);
  for (std::size_t i = 0; i < sp.train_index.size(); ++i) {
    y_train(static_cast<Eigen::Index>(i)) =
        data.stations[sp.train_index[i]].utilization;
  }
  const StandardizedTarget st = standardize_target(y_train);
  CHECK(sp.target_stats.mean == doctest::Approx(st.mean).epsilon(1e-14));
  CHECK(sp.target_stats.sd == doctest::Approx(st.sd).epsilon(1e-14));
  REQUIRE(sp.train.target_stats.has_value());
  CHECK(sp.train.target_stats->mean == sp.target_stats.mean);
}

TEST_CASE("splits are seed-deterministic and seed-sensitive") {
  const Dataset data = make_synth(62, 60);
  SplitConfig config;
  config.seed = 9;
  const SplitResult a = split(data, config);
  const SplitResult b = split(data, config);
  CHECK(a.train_index == b.train_index);
  CHECK(a.test_index == b.test_index);

  config.seed = 10;
  const SplitResult c = split(data, config);
  CHECK(a.train_index != c.train_index);

  SplitConfig bad;
  bad.ratio = 1.0;
  CHECK_THROWS_AS((void)split(data, bad), input_error);
}

TEST_CASE("rmse and predictive log-likelihood reference values") {
  Eigen::VectorXd pred(2), actual(2);
  pred << 3.0, 0.0;
  actual << 0.0, 4.0;
  CHECK(rmse(pred, actual) ==
        doctest::Approx(3.5355339059327378).epsilon(1e-14));
  CHECK(rmse(actual, actual) == 0.0);

  const Eigen::VectorXd zero3 = Eigen::VectorXd::Zero(3);
  const Eigen::VectorXd one3 = Eigen::VectorXd::Ones(3);
  CHECK(test_loglik(zero3, one3, zero3) ==
        doctest::Approx(-2.756815599614018).epsilon(1e-13));

  // Overconfidence is punished: same miss, smaller claimed variance.
  Eigen::VectorXd mean1(1), var_wide(1), var_tight(1), y1(1);
  mean1 << 1.0;
  y1 << 0.0;
  var_wide << 1.0;
  var_tight << 0.01;
  CHECK(test_loglik(mean1, var_wide, y1) ==
        doctest::Approx(-1.4189385332046727).epsilon(1e-13));
  CHECK(test_loglik(mean1, var_tight, y1) ==
        doctest::Approx(-48.616353440210624).epsilon(1e-13));

  CHECK_THROWS_AS((void)rmse(pred, zero3), input_error);
}

TEST_CASE("the generator's components have the configured spread") {
  // Pool over independent seeds so the sample statistics concentrate.
  std::vector<double> alpha_draws;
  std::vector<double> noise_draws;
  double h0_var_acc = 0.0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    SynthConfig config;
    config.seed = 1000 + static_cast<std::uint64_t>(s);
    config.stations = 200;
    config.type_names = {"A"};
    config.poi_counts = {30};
    config.theta = {0.5};
    config.sigma_alpha = {0.2};
    config.matern_var = 0.4;
    config.noise_sd = 0.1;
    config.charger_weights = Eigen::Vector4d(0.4, -0.2, 0.3, 0.1);
    const SynthResult r = synth_generate(config);

    for (Eigen::Index i = 0; i < r.truth.alphas[0].size(); ++i) {
      alpha_draws.push_back(r.truth.alphas[0](i));
    }
    const Eigen::VectorXd eps = r.truth.y_raw - r.truth.g_values -
                                r.truth.h_poi.rowwise().sum() - r.truth.h0;
    for (Eigen::Index i = 0; i < eps.size(); ++i) {
      noise_draws.push_back(eps(i));
    }
    h0_var_acc += sample_var(r.truth.h0);
  }

  const auto var_of = [](const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return acc / static_cast<double>(v.size() - 1);
  };

  // 600 alpha draws, 4000 noise draws: 10% bands are > 5 sigma wide.
  CHECK(std::sqrt(var_of(alpha_draws)) ==
        doctest::Approx(0.2).epsilon(0.10));
  CHECK(std::sqrt(var_of(noise_draws)) ==
        doctest::Approx(0.1).epsilon(0.10));

  // Spatial draws are correlated, so their variance estimate is loose.
  CHECK(h0_var_acc / seeds == doctest::Approx(0.4).epsilon(0.5));
}

TEST_CASE("the generator is seed-deterministic") {
  SynthConfig config;
  config.seed = 70;
  config.stations = 40;
  config.type_names = {"A"};
  config.poi_counts = {10};
  config.theta = {0.5};
  config.sigma_alpha = {0.2};
  const SynthResult a = synth_generate(config);
  const SynthResult b = synth_generate(config);
  CHECK(ground_truth_json(a.truth) == ground_truth_json(b.truth));
  CHECK((a.data.utilization_vector() - b.data.utilization_vector())
            .cwiseAbs()
            .maxCoeff() == 0.0);

  config.seed = 71;
  const SynthResult c = synth_generate(config);
  CHECK(ground_truth_json(a.truth) != ground_truth_json(c.truth));
}

TEST_CASE("switching off the latent surfaces leaves covariates plus noise") {
  SynthConfig config;
  config.seed = 72;
  config.stations = 400;
  config.type_names = {"A"};
  config.poi_counts = {10};
  config.theta = {0.5};
  config.sigma_alpha = {0.0};
  config.matern_var = 0.0;
  config.noise_sd = 0.25;
  config.charger_weights = Eigen::Vector4d(0.5, 0.0, 0.0, 0.0);
  const SynthResult r = synth_generate(config);

  CHECK(r.truth.h_poi.cwiseAbs().maxCoeff() == 0.0);
  CHECK(r.truth.h0.cwiseAbs().maxCoeff() == 0.0);
  const Eigen::VectorXd eps = r.truth.y_raw - r.truth.g_values;
  CHECK(std::sqrt(sample_var(eps)) == doctest::Approx(0.25).epsilon(0.15));

  // The affine map sends the raw range onto [0, 1] exactly.
  const Eigen::VectorXd u = r.data.utilization_vector();
  CHECK(u.minCoeff() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(u.maxCoeff() == doctest::Approx(1.0).epsilon(1e-12));
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    const double mapped = (r.truth.y_raw(i) - r.truth.offset) * r.truth.scale;
    CHECK(u(i) == doctest::Approx(mapped).epsilon(1e-12));
  }
}

TEST_CASE("predicting zero on a standardized split scores near unit rmse") {
  const Dataset data = make_synth(73, 300);
  SplitConfig config;
  config.seed = 3;
  const SplitResult sp = split(data, config);
  const Eigen::VectorXd y_test_std =
      ((sp.test.utilization_vector().array() - sp.target_stats.mean) /
       sp.target_stats.sd)
          .matrix();
  const double null_rmse =
      rmse(Eigen::VectorXd::Zero(y_test_std.size()), y_test_std);
  CHECK(null_rmse > 0.7);
  CHECK(null_rmse < 1.3);
}

TEST_CASE("the benchmark produces nine deterministic rows") {
  const Dataset data = make_synth(74, 60);
  const BenchmarkConfig config = tiny_bench(4);

  const EvalReport report = run_benchmark(data, config);
  REQUIRE(report.rows.size() == 9);
  CHECK(report.train_count == 48);
  CHECK(report.test_count == 12);
  CHECK(report.config_hash == config.hash_hex_id());

  const std::vector<std::string> labels = {
      "GWR",           "GWR",           "Linear kriging", "Linear kriging",
      "RF kriging",    "RF kriging",    "Neural network", "Neural network",
      "POI model (ours)"};
  for (std::size_t i = 0; i < 9; ++i) {
    CHECK(report.rows[i].label == labels[i]);
    CHECK_FALSE(report.rows[i].failed);
    CHECK(std::isfinite(report.rows[i].rmse));
    CHECK(report.rows[i].mode == (i == 8 ? "" : (i % 2 == 0 ? "[none]"
                                                            : "[both]")));
  }

  const EvalReport again = run_benchmark(data, config);
  CHECK(report_csv(report) == report_csv(again));
  CHECK(report_text(report) == report_text(again));

  // Timings live in the sidecar, never in the deterministic outputs.
  CHECK(report_csv(report).find(" s\n") == std::string::npos);
  CHECK(report_timings_text(report).find(" s\n") != std::string::npos);
}

TEST_CASE("a failing baseline is reported without sinking the run") {
  const Dataset data = make_synth(75, 60);
  BenchmarkConfig config = tiny_bench(5);
  config.rf.max_depth = 0;  // rejected by the forest fitter

  const EvalReport report = run_benchmark(data, config);
  REQUIRE(report.rows.size() == 9);
  int failed = 0;
  for (const EvalRow& row : report.rows) {
    if (row.failed) {
      ++failed;
      CHECK(row.label == "RF kriging");
      CHECK_FALSE(row.error.empty());
    }
  }
  CHECK(failed == 2);
  CHECK(report_csv(report).find("failed") != std::string::npos);
}

TEST_CASE("the sensitivity grid covers both charger and kernel choices") {
  const Dataset data = make_synth(76, 60);
  const BenchmarkConfig config = tiny_bench(6);

  const EvalReport report = sensitivity(data, config);
  REQUIRE(report.rows.size() == 4);
  CHECK(report.rows[0].label == "POI model (neural, relu)");
  CHECK(report.rows[1].label == "POI model (linear, relu)");
  CHECK(report.rows[2].label == "POI model (neural, gaussian)");
  CHECK(report.rows[3].label == "POI model (linear, gaussian)");
  for (const EvalRow& row : report.rows) {
    CHECK_FALSE(row.failed);
    CHECK(std::isfinite(row.loglik));
  }
}

TEST_CASE("repeated benchmarks aggregate cleanly") {
  const Dataset data = make_synth(77, 60);
  BenchmarkConfig config = tiny_bench(7);
  config.repeats = 2;

  const std::vector<EvalReport> reports = run_benchmark_repeats(data, config);
  REQUIRE(reports.size() == 2);
  CHECK(reports[0].seed != reports[1].seed);

  const std::string csv = repeats_csv(reports);
  CHECK(csv.rfind("label,mode,rmse_mean,rmse_sd,loglik_mean,loglik_sd,"
                  "failures,runs\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 10);
  CHECK(csv.find("POI model (ours)") != std::string::npos);
}

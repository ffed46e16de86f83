#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "poigp/baselines.hpp"
#include "poigp/dataset.hpp"
#include "poigp/model.hpp"

namespace poigp {

// --- train/test split -----------------------------------------------------

struct SplitConfig {
  double ratio = 0.8;
  std::uint64_t seed = 0;
};

struct SplitResult {
  Dataset train;
  Dataset test;
  std::vector<std::size_t> train_index;  // into the input station list
  std::vector<std::size_t> test_index;
  TargetStats target_stats;       // train-only statistics
  VectorStats covariate_stats;    // train-only statistics
};

// Seeded uniform split; floor(ratio * N) stations go to train. The returned
// datasets carry the train-derived standardization statistics.
SplitResult split(const Dataset& data, const SplitConfig& config);

// --- metrics (standardized scale) -------------------------------------------

double rmse(const Eigen::VectorXd& pred, const Eigen::VectorXd& actual);
double test_loglik(const Eigen::VectorXd& means,
                   const Eigen::VectorXd& variances,
                   const Eigen::VectorXd& actual);

// --- synthetic generator ----------------------------------------------------

struct SynthBounds {
  double x_min = 0.0;
  double x_max = 5.0;
  double y_min = 0.0;
  double y_max = 5.0;
};

struct SynthConfig {
  int stations = 300;
  std::vector<std::string> type_names;  // must be sorted (registry order)
  std::vector<int> poi_counts;          // per type
  std::vector<double> theta;            // per type, km
  std::vector<double> sigma_alpha;      // per type, sd of alpha (0 = off)
  PointKernel kernel = PointKernel::kRelu;
  double matern_var = 0.5;   // 0 switches the spatial surface off
  double matern_len = 1.0;
  double noise_sd = 0.1;
  int covariate_count = 4;
  Eigen::VectorXd charger_weights;  // empty = zeros
  double charger_bias = 0.0;
  SynthBounds bounds;
  GeoPoint reference{4.9, 52.37};
  std::uint64_t seed = 0;

  void validate() const;
  std::string canonical_text() const;
};

// Everything the generator knows that a fitted model is asked to recover.
struct GroundTruth {
  std::vector<Eigen::VectorXd> alphas;  // per type
  std::vector<double> theta;
  std::vector<double> sigma_alpha;
  Eigen::MatrixXd h_poi;     // station x type latent surfaces
  Eigen::VectorXd h0;        // spatial surface at stations
  Eigen::VectorXd g_values;  // covariate contribution
  Eigen::VectorXd y_raw;     // before the affine map to [0, 1]
  // utilization = (y_raw - offset) * scale
  double offset = 0.0;
  double scale = 1.0;
};

struct SynthResult {
  Dataset data;
  GroundTruth truth;
};

SynthResult synth_generate(const SynthConfig& config);

std::string ground_truth_json(const GroundTruth& truth);

// --- benchmark and sensitivity ------------------------------------------------

struct BenchmarkConfig {
  SplitConfig split;
  ModelSpec model;            // the "POI model (ours)" row
  std::vector<double> dmax;   // per-type density radii; empty = 0.3 km each
  double gwr_bandwidth = 0.0;  // 0 = cross-validated
  RfConfig rf;
  NnConfig nn;
  bool nn_use_coords = true;
  int repeats = 1;

  std::string canonical_text() const;
  std::string hash_hex_id() const;  // stable id for run directories
};

struct EvalRow {
  std::string label;
  std::string mode;  // "[none]" / "[both]" for baselines, "" for ours
  double rmse = 0.0;
  double loglik = 0.0;
  double train_seconds = 0.0;  // reported in the timings sidecar only
  bool failed = false;
  std::string error;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  int train_count = 0;
  int test_count = 0;
  double ratio = 0.8;
  std::uint64_t seed = 0;
  std::string config_hash;
};

// Rows: each baseline in [none] then [both] mode, then the model itself.
// A row that throws is recorded as failed; the run continues.
EvalReport run_benchmark(const Dataset& data, const BenchmarkConfig& config);

// Repeated-splits mode: seeds derived from the base seed per repetition.
std::vector<EvalReport> run_benchmark_repeats(const Dataset& data,
                                              const BenchmarkConfig& config);

// Charger/kernel grid on one shared split: neural+relu, linear+relu,
// neural+gaussian, linear+gaussian.
EvalReport sensitivity(const Dataset& data, const BenchmarkConfig& config);

std::string report_csv(const EvalReport& report);
std::string report_text(const EvalReport& report);
std::string report_timings_text(const EvalReport& report);
std::string repeats_csv(const std::vector<EvalReport>& reports);

}  // namespace poigp

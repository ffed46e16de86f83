#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "poigp/dataset.hpp"
#include "poigp/kernels.hpp"
#include "poigp/mlp.hpp"

namespace poigp {

enum class ChargerKind { kLinear, kNeuralNet };

inline std::string charger_kind_name(ChargerKind k) {
  return k == ChargerKind::kLinear ? "linear" : "neural";
}

inline ChargerKind charger_kind_from_name(const std::string& name) {
  if (name == "linear") return ChargerKind::kLinear;
  if (name == "neural") return ChargerKind::kNeuralNet;
  throw parameter_error("unknown charger kind: " + name +
                        " (expected linear or neural)");
}

struct OptimizerConfig {
  int iterations = 5000;
  double step = 0.01;
  bool cosine_decay = false;
};

struct ModelSpec {
  ChargerKind charger = ChargerKind::kNeuralNet;
  PointKernel kernel = PointKernel::kRelu;
  std::vector<int> charger_hidden = {8, 8};
  std::vector<std::string> poi_types;  // empty = every registered type
  int inducing_count = 100;            // capped at N_train when binding
  std::uint64_t seed = 0;
  OptimizerConfig opt;

  // Initial values for the positive parameters (pre-softplus applied inside).
  double init_theta = 0.3;
  double init_matern_var = 0.5;
  double init_matern_len = 1.0;
  double init_noise_sd = 0.5;
  double init_alpha_var = 0.1;
  double charger_weight_sd = 0.1;

  // Freezes for controlled experiments: a frozen block keeps its initial
  // value and contributes no gradient.
  bool train_kernel_params = true;
  bool train_charger = true;
  std::optional<double> fixed_noise_sd;

  void validate() const {
    if (inducing_count < 1) {
      throw parameter_error("inducing_count must be >= 1");
    }
    if (opt.iterations < 0) throw parameter_error("iterations must be >= 0");
    if (!(opt.step > 0.0)) throw parameter_error("step must be positive");
    for (double v : {init_theta, init_matern_var, init_matern_len,
                     init_noise_sd, init_alpha_var}) {
      if (!(v > 0.0)) {
        throw parameter_error("initial parameter values must be positive");
      }
    }
    if (fixed_noise_sd && !(*fixed_noise_sd > 0.0)) {
      throw parameter_error("fixed_noise_sd must be positive");
    }
  }
};

// Variational posterior q(u) = N(m, L L') for one latent process.
struct VariationalProcess {
  Eigen::VectorXd m;
  Eigen::MatrixXd l;  // lower triangular, strictly positive diagonal
};

struct TraceRow {
  int iteration = 0;
  double elbo = 0.0;
  double grad_variational = 0.0;
  double grad_kernel = 0.0;
  double grad_charger = 0.0;
  double grad_noise = 0.0;
};

// Everything needed to reproduce predictions: data frame, learned
// parameters, variational state, and the standardization applied on ingest.
struct FittedModel {
  ModelSpec spec;
  GeoPoint reference;

  // Process order: one POI process per type (registry order), then the
  // station-level spatial process last.
  std::vector<std::string> poi_types;
  std::vector<PointMatrix> poi_locations;
  PointMatrix inducing;

  std::vector<double> theta;      // per POI type, km
  std::vector<double> alpha_var;  // per POI type
  double matern_var = 0.0;
  double matern_len = 0.0;
  double noise_sd = 0.0;
  Mlp charger;

  std::vector<VariationalProcess> processes;  // size poi_types.size() + 1

  TargetStats target_stats;
  VectorStats covariate_stats;
  std::vector<std::string> covariate_names;

  std::vector<TraceRow> trace;  // not persisted; exported separately
  bool trained = false;

  int process_count() const { return static_cast<int>(processes.size()); }
  int spatial_process() const { return static_cast<int>(poi_types.size()); }

  void require_trained() const {
    if (!trained) throw state_error("model is not trained");
  }
};

// Charger contribution g(x) on standardized covariates.
Eigen::VectorXd charger_influence(const FittedModel& model,
                                  const Eigen::MatrixXd& x_std);

// Posterior marginals of one latent process at query locations.
// Process index: 0..G-1 are POI types, G is the spatial process.
struct PosteriorMarginals {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
};
PosteriorMarginals posterior_component(const FittedModel& model, int process,
                                       const PointMatrix& query);

struct Prediction {
  Eigen::VectorXd mean;         // standardized scale
  Eigen::VectorXd variance;     // standardized scale, >= noise_sd^2
  Eigen::VectorXd utilization;  // de-standardized mean, clamped to [0,1]
};

// x_raw: raw covariates (the model applies its stored standardization).
Prediction predict(const FittedModel& model, const Eigen::MatrixXd& x_raw,
                   const PointMatrix& locations);

struct LogDensityResult {
  Eigen::VectorXd per_point;
  double sum = 0.0;
};

// Gaussian log density of standardized targets under predict's marginals.
LogDensityResult log_predictive_density(const FittedModel& model,
                                        const Eigen::MatrixXd& x_raw,
                                        const PointMatrix& locations,
                                        const Eigen::VectorXd& y_std);

double gaussian_loglik(double y, double mean, double variance);

// Model persistence. The JSON layout is versioned; doubles are written with
// shortest round-trip formatting so save -> load -> save is byte-stable.
std::string model_to_json(const FittedModel& model);
FittedModel model_from_json(const std::string& text);
void save_model(const FittedModel& model, const std::string& path);
FittedModel load_model(const std::string& path);

void write_trace_csv(const std::vector<TraceRow>& trace,
                     const std::string& path);

}  // namespace poigp

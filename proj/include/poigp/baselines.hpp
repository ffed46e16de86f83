#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "poigp/dataset.hpp"
#include "poigp/mlp.hpp"
#include "poigp/model.hpp"

namespace poigp {

// --- engineered POI features ------------------------------------------------

enum class FeatureMode { kNone, kDistance, kDensity, kBoth };

std::string feature_mode_name(FeatureMode mode);
FeatureMode feature_mode_from_name(const std::string& name);

// Distance a type's feature column falls back to when the type has no POIs.
inline constexpr double kEmptyTypeDistanceKm = 50.0;

// F(i, g) = distance from station i to the nearest POI of type g.
// A type with no POIs yields the sentinel column; no POIs at all is an error.
Eigen::MatrixXd distance_features(const PointMatrix& stations,
                                  const std::vector<PointMatrix>& pois);

// F(i, g) = number of type-g POIs strictly closer than dmax[g].
Eigen::MatrixXd density_features(const PointMatrix& stations,
                                 const std::vector<PointMatrix>& pois,
                                 const std::vector<double>& dmax);

// Columns appended to the covariates for a given mode: distance columns,
// then density columns.
Eigen::MatrixXd engineered_features(const PointMatrix& stations,
                                    const std::vector<PointMatrix>& pois,
                                    FeatureMode mode,
                                    const std::vector<double>& dmax);

std::string features_csv(const Eigen::MatrixXd& features,
                         const std::vector<std::string>& column_names,
                         const std::vector<std::string>& row_ids);

std::vector<double> default_dmax_grid();  // {0.1, 0.2, ..., 1.0} km

// --- baseline models ---------------------------------------------------------

enum class BaselineKind { kGwr, kLinearKriging, kRfKriging, kNeuralNet };

std::string baseline_kind_name(BaselineKind kind);
BaselineKind baseline_kind_from_name(const std::string& name);

struct BaselinePrediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
};

// Geographically weighted regression: local ridge-stabilized weighted least
// squares at each query point with Gaussian distance weights.
struct GwrModel {
  Eigen::MatrixXd x;  // training features (no intercept column)
  PointMatrix loc;
  Eigen::VectorXd y;
  double bandwidth = 0.0;
  bool trained = false;
};

GwrModel fit_gwr(const Eigen::MatrixXd& x, const PointMatrix& loc,
                 const Eigen::VectorXd& y, double bandwidth);
BaselinePrediction predict_gwr(const GwrModel& model, const Eigen::MatrixXd& x,
                               const PointMatrix& loc);

std::vector<double> default_gwr_bandwidth_grid();  // km
double select_gwr_bandwidth(const Eigen::MatrixXd& x, const PointMatrix& loc,
                            const Eigen::VectorXd& y,
                            const std::vector<double>& grid,
                            std::uint64_t seed);

// Shared settings for the residual Gaussian process used by both kriging
// baselines. When `fixed` is set the marginal-likelihood fit is skipped.
struct KrigingParams {
  double var = 0.5;
  double len = 1.0;
  double noise_sd = 0.5;
};

struct KrigingGp {
  PointMatrix loc;
  Eigen::VectorXd residuals;
  KrigingParams params;
  Eigen::VectorXd alpha;  // (K + noise^2 I)^-1 residuals
};

// Zero-mean Matern-3/2 GP on residuals; parameters maximize the exact log
// marginal likelihood with Adam unless fixed values are supplied.
KrigingGp fit_residual_gp(const PointMatrix& loc,
                          const Eigen::VectorXd& residuals,
                          const std::optional<KrigingParams>& fixed,
                          int iterations = 500, double step = 0.05);
BaselinePrediction predict_residual_gp(const KrigingGp& gp,
                                       const PointMatrix& query);

struct LinearKrigingModel {
  Eigen::VectorXd beta;  // [intercept, coefficients]
  KrigingGp gp;
  bool trained = false;
};

LinearKrigingModel fit_linear_kriging(
    const Eigen::MatrixXd& x, const PointMatrix& loc, const Eigen::VectorXd& y,
    const std::optional<KrigingParams>& fixed = std::nullopt);
BaselinePrediction predict_linear_kriging(const LinearKrigingModel& model,
                                          const Eigen::MatrixXd& x,
                                          const PointMatrix& loc);

struct RfConfig {
  int trees = 200;
  int max_depth = 8;
  int min_leaf = 5;
  int mtry = 0;  // 0 = ceil(sqrt(feature count))
  bool bootstrap = true;
  std::uint64_t seed = 0;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  double value = 0.0;  // leaf mean
  int left = -1;
  int right = -1;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;
  double predict_row(const Eigen::RowVectorXd& row) const;
};

RegressionTree fit_tree(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                        const std::vector<int>& rows, const RfConfig& config,
                        Rng& rng);

struct RfKrigingModel {
  std::vector<RegressionTree> forest;
  RfConfig config;
  KrigingGp gp;  // fit on out-of-bag residuals
  bool trained = false;
};

RfKrigingModel fit_rf_kriging(
    const Eigen::MatrixXd& x, const PointMatrix& loc, const Eigen::VectorXd& y,
    const RfConfig& config,
    const std::optional<KrigingParams>& fixed = std::nullopt);
Eigen::VectorXd forest_predict(const std::vector<RegressionTree>& forest,
                               const Eigen::MatrixXd& x);
BaselinePrediction predict_rf_kriging(const RfKrigingModel& model,
                                      const Eigen::MatrixXd& x,
                                      const PointMatrix& loc);

struct NnConfig {
  std::vector<int> hidden = {16, 16};
  int iterations = 3000;
  double step = 0.01;
  double val_fraction = 0.1;
  int patience = 30;  // validation checks (one per 10 iterations)
  double weight_sd = 0.3;
  std::uint64_t seed = 0;
};

struct NnModel {
  Mlp net;
  double variance = 1.0;  // homoskedastic, from validation residuals
  bool trained = false;
};

NnModel fit_nn_baseline(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                        const NnConfig& config);
BaselinePrediction predict_nn_baseline(const NnModel& model,
                                       const Eigen::MatrixXd& x);

// --- uniform driver ----------------------------------------------------------

// Everything needed to fit any baseline on (covariates, locations, target)
// plus the POI geometry that feeds the engineered features.
struct BaselineConfig {
  BaselineKind kind = BaselineKind::kGwr;
  FeatureMode mode = FeatureMode::kNone;
  std::vector<double> dmax;          // per type; required for density modes
  double gwr_bandwidth = 0.0;        // 0 = select by cross-validation
  RfConfig rf;
  NnConfig nn;
  bool nn_use_coords = true;
  std::uint64_t seed = 0;
};

struct FittedBaseline {
  BaselineConfig config;
  std::vector<PointMatrix> pois;  // per-type locations, kept for features
  std::variant<GwrModel, LinearKrigingModel, RfKrigingModel, NnModel> impl;
};

FittedBaseline fit_baseline(const BaselineConfig& config,
                            const Eigen::MatrixXd& covariates,
                            const PointMatrix& loc, const Eigen::VectorXd& y,
                            const std::vector<PointMatrix>& pois);
BaselinePrediction predict_baseline(const FittedBaseline& model,
                                    const Eigen::MatrixXd& covariates,
                                    const PointMatrix& loc);

// Per-type density radius by grid search: one coordinate-descent pass in
// type order, scoring 5-fold cross-validated RMSE of the requested baseline;
// ties break toward the smaller radius.
std::vector<double> tune_dmax(const BaselineConfig& config,
                              const Eigen::MatrixXd& covariates,
                              const PointMatrix& loc, const Eigen::VectorXd& y,
                              const std::vector<PointMatrix>& pois,
                              const std::vector<double>& grid,
                              std::uint64_t seed);

}  // namespace poigp

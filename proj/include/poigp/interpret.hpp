#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "poigp/model.hpp"

namespace poigp {

// Posterior of one POI's scaling factor alpha, recovered from the
// variational state by Gaussian conditioning (see recover_alphas).
struct PoiEffect {
  std::string id;
  int type = 0;  // index into FittedModel::poi_types
  double alpha_mean = 0.0;
  double alpha_sd = 0.0;
};

// One row of the per-type summary table.
struct TypeSummary {
  std::string type;
  double cutoff_km = 0.0;
  double avg_magnitude = 0.0;  // mean |alpha_mean| over the type's POIs
  double magnitude_sd = 0.0;   // sample sd of |alpha_mean|
  int poi_count = 0;
};

struct RasterBounds {
  double x_min = 0.0;
  double x_max = 0.0;
  double y_min = 0.0;
  double y_max = 0.0;
};

// Regular grid of posterior marginals for a single latent process.
// Cell centers sit at (x_min + (i + 0.5) cell, y_min + (j + 0.5) cell);
// mean/variance are ny x nx with row j = one south-to-north band.
struct Raster {
  RasterBounds bounds;
  double cell_km = 0.0;
  int nx = 0;
  int ny = 0;
  Eigen::MatrixXd mean;
  Eigen::MatrixXd variance;
  std::string label;

  double cell_x(int i) const { return bounds.x_min + (i + 0.5) * cell_km; }
  double cell_y(int j) const { return bounds.y_min + (j + 0.5) * cell_km; }
};

// Learned kernel range per POI type, keyed by type name. For the
// triangular kernel this is the distance at which influence reaches zero;
// for the Gaussian kernel it is the bump width.
std::map<std::string, double> cutoff_distances(const FittedModel& model);

// Posterior mean and sd of each POI's alpha. The latent type surface is
// h(s) = sum_rho alpha_rho k(s, omega_rho) with prior alpha ~ N(0, av I),
// so alpha and the inducing values u are jointly Gaussian with
// Cov(alpha, u) = av * K_wu. Conditioning that joint on q(u) = N(m, S)
// gives mean = av K_wu Kuu^-1 m and
// cov = av I - C Kuu^-1 C' + (C Kuu^-1) S (Kuu^-1 C') with C = av K_wu.
// This is a derived estimator: the model itself never materializes alpha.
//
// `data` supplies POI ids; its POIs must match the model's (same types,
// same per-type order and coordinates), otherwise an artifact error.
std::vector<PoiEffect> recover_alphas(const FittedModel& model,
                                      const Dataset& data);

// Mean and sample sd of |alpha_mean| over POIs of one type.
std::pair<double, double> average_magnitude(
    const std::vector<PoiEffect>& effects, int type);

std::vector<TypeSummary> type_summaries(const FittedModel& model,
                                        const std::vector<PoiEffect>& effects);

// Posterior surface of one process on a regular grid. `process` indexes
// POI types 0..G-1; FittedModel::spatial_process() selects the residual
// spatial surface.
Raster spatial_grid(const FittedModel& model, int process,
                    const RasterBounds& bounds, double cell_km);

// Writers. CSV columns: summaries "type,cutoff_km,avg_effect,sd";
// effects "id,type,alpha_mean,alpha_sd"; raster "x_km,y_km,mean,variance".
std::string type_summaries_csv(const std::vector<TypeSummary>& rows);
std::string poi_effects_csv(const std::vector<PoiEffect>& effects,
                            const FittedModel& model);
std::string raster_csv(const Raster& raster);

// GeoJSON FeatureCollection of cell polygons with mean/variance
// properties, corners back-projected to lon/lat around `reference`.
std::string raster_geojson(const Raster& raster, const GeoPoint& reference);

void write_text_file(const std::string& path, const std::string& text);

}  // namespace poigp

#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "poigp/geometry.hpp"

namespace poigp {

struct Station {
  std::string id;
  Eigen::Vector2d location;   // km east/north of the dataset reference
  double utilization = 0.0;   // fraction of occupied time, in [0, 1]
  Eigen::VectorXd covariates; // length K, raw scale (income already logged)
};

struct Poi {
  std::string id;
  Eigen::Vector2d location;
  int type = 0;  // index into Dataset::poi_types
};

struct TargetStats {
  double mean = 0.0;
  double sd = 1.0;
};

struct VectorStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;  // 0 marks a constant column (standardizes to zero)
};

struct Dataset {
  std::vector<Station> stations;
  std::vector<Poi> pois;
  std::vector<std::string> poi_types;  // registry, sorted alphabetically
  GeoPoint reference;                  // projection origin (lon/lat)
  int covariate_count = 0;
  std::vector<std::string> covariate_names;
  std::optional<TargetStats> target_stats;     // set once standardized
  std::optional<VectorStats> covariate_stats;

  PointMatrix station_locations() const;
  PointMatrix poi_locations(int type) const;
  Eigen::MatrixXd covariate_matrix() const;
  Eigen::VectorXd utilization_vector() const;
  int type_index(const std::string& name) const;  // -1 if absent
  std::vector<int> poi_counts_by_type() const;
  void validate() const;
};

// --- standardization ------------------------------------------------------

struct StandardizedTarget {
  Eigen::VectorXd z;
  double mean;
  double sd;  // sample sd (n-1 denominator)
};

StandardizedTarget standardize_target(const Eigen::VectorXd& y);

inline double unstandardize(double z, const TargetStats& s) {
  return z * s.sd + s.mean;
}

// Column-wise z-scoring; constant columns map to zeros and are flagged by
// sd == 0 in the returned stats.
VectorStats column_stats(const Eigen::MatrixXd& x);
Eigen::MatrixXd apply_column_stats(const Eigen::MatrixXd& x,
                                   const VectorStats& stats);

// --- station CSV ----------------------------------------------------------

enum class UtilizationScale { kAuto, kFraction, kPercent };

struct StationSchema {
  UtilizationScale scale = UtilizationScale::kAuto;
};

struct StationLoadReport {
  int rows = 0;
  bool percent_scale = false;
};

// CSV columns: id, lon, lat, utilization, pop_density, income, car_density,
// major_road. Income is log-transformed on ingest. Throws input_error with
// line-numbered diagnostics on malformed data.
std::vector<Station> load_stations(const std::string& path,
                                   const StationSchema& schema,
                                   const GeoPoint& reference,
                                   StationLoadReport* report = nullptr);

// --- POI ingestion --------------------------------------------------------

struct TagRule {
  std::string key;
  std::string value;
  std::string type_name;
};

// One rule per line: "osm_key=osm_value -> TypeName", '#' comments.
std::vector<TagRule> parse_tag_map(const std::string& text);
std::vector<TagRule> load_tag_map(const std::string& path);
std::vector<TagRule> default_tag_map();
std::string default_tag_map_text();

struct PoiLoadReport {
  int loaded = 0;
  int skipped_unmapped = 0;
  int skipped_geometry = 0;
};

// GeoJSON point features with OSM-style tags, or CSV with an explicit type
// column (id, lon, lat, type). Fills the dataset type registry.
struct PoiLoadResult {
  std::vector<Poi> pois;
  std::vector<std::string> poi_types;
  PoiLoadReport report;
};

PoiLoadResult load_pois(const std::string& path,
                        const std::vector<TagRule>& tag_map,
                        const GeoPoint& reference);

// --- dataset bundle -------------------------------------------------------

std::string bundle_to_json(const Dataset& ds);
Dataset bundle_from_json(const std::string& text);
void save_bundle(const Dataset& ds, const std::string& path);
Dataset load_bundle(const std::string& path);

// Reference point picked as the centroid of station lon/lats rounded to
// 1e-3 degrees so reruns on the same inputs reproduce the same frame.
GeoPoint pick_reference(const std::vector<GeoPoint>& station_geo);

// Reference derived from a station CSV alone (centroid of valid lon/lat
// rows), so ingestion can project before the full load.
GeoPoint reference_from_stations_csv(const std::string& path);

}  // namespace poigp

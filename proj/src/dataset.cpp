#include "poigp/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace poigp {

using nlohmann::json;

PointMatrix Dataset::station_locations() const {
  PointMatrix out(static_cast<Eigen::Index>(stations.size()), 2);
  for (std::size_t i = 0; i < stations.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = stations[i].location;
  }
  return out;
}

PointMatrix Dataset::poi_locations(int type) const {
  std::vector<const Poi*> sel;
  for (const auto& p : pois) {
    if (p.type == type) sel.push_back(&p);
  }
  PointMatrix out(static_cast<Eigen::Index>(sel.size()), 2);
  for (std::size_t i = 0; i < sel.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = sel[i]->location;
  }
  return out;
}

Eigen::MatrixXd Dataset::covariate_matrix() const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(stations.size()),
                      covariate_count);
  for (std::size_t i = 0; i < stations.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = stations[i].covariates;
  }
  return out;
}

Eigen::VectorXd Dataset::utilization_vector() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(stations.size()));
  for (std::size_t i = 0; i < stations.size(); ++i) {
    out(static_cast<Eigen::Index>(i)) = stations[i].utilization;
  }
  return out;
}

int Dataset::type_index(const std::string& name) const {
  for (std::size_t i = 0; i < poi_types.size(); ++i) {
    if (poi_types[i] == name) return static_cast<int>(i);
  }
  return -1;
}

std::vector<int> Dataset::poi_counts_by_type() const {
  std::vector<int> counts(poi_types.size(), 0);
  for (const auto& p : pois) {
    counts[static_cast<std::size_t>(p.type)]++;
  }
  return counts;
}

void Dataset::validate() const {
  std::set<std::string> ids;
  for (const auto& s : stations) {
    if (!ids.insert(s.id).second) {
      throw input_error("duplicate station id: " + s.id);
    }
    if (!(s.utilization >= 0.0 && s.utilization <= 1.0)) {
      throw input_error("station " + s.id + ": utilization outside [0,1]");
    }
    if (s.covariates.size() != covariate_count) {
      throw input_error("station " + s.id + ": covariate length mismatch");
    }
    if (!s.location.allFinite()) {
      throw input_error("station " + s.id + ": non-finite location");
    }
  }
  for (const auto& p : pois) {
    if (p.type < 0 || p.type >= static_cast<int>(poi_types.size())) {
      throw input_error("poi " + p.id + ": type outside registry");
    }
    if (!p.location.allFinite()) {
      throw input_error("poi " + p.id + ": non-finite location");
    }
  }
  if (target_stats && !(target_stats->sd > 0.0)) {
    throw input_error("target stats: sd must be positive");
  }
}

StandardizedTarget standardize_target(const Eigen::VectorXd& y) {
  const Eigen::Index n = y.size();
  if (n < 2) throw input_error("standardize_target: need at least 2 values");
  const double mean = y.mean();
  const double ss = (y.array() - mean).square().sum();
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  // Relative threshold: a numerically constant vector still accumulates
  // rounding noise of order eps * |mean|.
  if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
    throw input_error("standardize_target: constant target (zero variance)");
  }
  StandardizedTarget out;
  out.z = (y.array() - mean) / sd;
  out.mean = mean;
  out.sd = sd;
  return out;
}

VectorStats column_stats(const Eigen::MatrixXd& x) {
  VectorStats s;
  const Eigen::Index k = x.cols();
  const Eigen::Index n = x.rows();
  s.mean.resize(k);
  s.sd.resize(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const double mean = x.col(j).mean();
    const double ss = (x.col(j).array() - mean).square().sum();
    const double sd =
        n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    s.mean(j) = mean;
    s.sd(j) = sd > 1e-12 ? sd : 0.0;
  }
  return s;
}

Eigen::MatrixXd apply_column_stats(const Eigen::MatrixXd& x,
                                   const VectorStats& stats) {
  if (x.cols() != stats.mean.size()) {
    throw input_error("apply_column_stats: column count mismatch");
  }
  Eigen::MatrixXd z(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (stats.sd(j) == 0.0) {
      z.col(j).setZero();
    } else {
      z.col(j) = (x.col(j).array() - stats.mean(j)) / stats.sd(j);
    }
  }
  return z;
}

// --- CSV helpers ------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  cells.push_back(trim(cur));
  return cells;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw input_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> line_numbers;  // 1-based source line per row

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (lower(header[i]) == lower(name)) return static_cast<int>(i);
    }
    return -1;
  }
};

CsvTable parse_csv(const std::string& text, const std::string& path) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (t.header.empty()) {
      t.header = cells;
    } else {
      t.rows.push_back(cells);
      t.line_numbers.push_back(line_no);
    }
  }
  if (t.header.empty()) throw input_error("empty CSV file: " + path);
  return t;
}

class RowErrors {
 public:
  void add(int line, const std::string& msg) {
    if (messages_.size() < 50) {
      messages_.push_back("line " + std::to_string(line) + ": " + msg);
    }
    ++count_;
  }
  bool any() const { return count_ > 0; }
  void throw_if_any(const std::string& path) const {
    if (!any()) return;
    std::string out = path + ": " + std::to_string(count_) + " row error(s)";
    for (const auto& m : messages_) out += "\n  " + m;
    if (count_ > static_cast<int>(messages_.size())) out += "\n  ...";
    throw input_error(out);
  }

 private:
  std::vector<std::string> messages_;
  int count_ = 0;
};

}  // namespace

std::vector<Station> load_stations(const std::string& path,
                                   const StationSchema& schema,
                                   const GeoPoint& reference,
                                   StationLoadReport* report) {
  const CsvTable t = parse_csv(read_file(path), path);
  const char* required[] = {"id",          "lon",    "lat",
                            "utilization", "pop_density", "income",
                            "car_density", "major_road"};
  std::map<std::string, int> col;
  for (const char* name : required) {
    int c = t.column(name);
    if (c < 0) {
      throw input_error(path + ": missing required column '" +
                        std::string(name) + "'");
    }
    col[name] = c;
  }

  RowErrors errors;
  struct RawRow {
    std::string id;
    GeoPoint geo;
    double util, pop, income, car, road;
    int line;
  };
  std::vector<RawRow> raw;
  std::set<std::string> seen_ids;

  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& cells = t.rows[r];
    const int line = t.line_numbers[r];
    if (cells.size() < t.header.size()) {
      errors.add(line, "expected " + std::to_string(t.header.size()) +
                           " cells, got " + std::to_string(cells.size()));
      continue;
    }
    RawRow row;
    row.line = line;
    row.id = cells[static_cast<std::size_t>(col["id"])];
    bool ok = true;
    auto num = [&](const char* name, double& out) {
      const std::string& cell = cells[static_cast<std::size_t>(col[name])];
      if (!parse_double(cell, out)) {
        errors.add(line, std::string("non-numeric ") + name + ": '" + cell +
                             "'");
        ok = false;
      }
    };
    num("lon", row.geo.lon);
    num("lat", row.geo.lat);
    num("utilization", row.util);
    num("pop_density", row.pop);
    num("income", row.income);
    num("car_density", row.car);
    num("major_road", row.road);
    if (!ok) continue;

    if (row.id.empty()) {
      errors.add(line, "empty id");
      continue;
    }
    if (!seen_ids.insert(row.id).second) {
      errors.add(line, "duplicate station id: " + row.id);
      continue;
    }
    if (!(row.util >= 0.0 && row.util <= 100.0)) {
      errors.add(line, "utilization outside [0,100]: " +
                           format_double(row.util));
      continue;
    }
    if (!(row.income > 0.0)) {
      errors.add(line, "income must be positive for log transform: " +
                           format_double(row.income));
      continue;
    }
    if (row.road != 0.0 && row.road != 1.0) {
      errors.add(line, "major_road must be 0 or 1: " + format_double(row.road));
      continue;
    }
    raw.push_back(row);
  }
  errors.throw_if_any(path);
  if (raw.empty()) throw input_error(path + ": no station rows");

  bool percent = false;
  switch (schema.scale) {
    case UtilizationScale::kPercent:
      percent = true;
      break;
    case UtilizationScale::kFraction:
      percent = false;
      break;
    case UtilizationScale::kAuto:
      for (const auto& r : raw) {
        if (r.util > 1.0) percent = true;
      }
      break;
  }
  if (!percent) {
    for (const auto& r : raw) {
      if (r.util > 1.0) {
        errors.add(r.line, "utilization > 1 in fraction scale: " +
                               format_double(r.util));
      }
    }
    errors.throw_if_any(path);
  }

  std::vector<Station> stations;
  stations.reserve(raw.size());
  for (const auto& r : raw) {
    Station s;
    s.id = r.id;
    try {
      s.location = geo::project_one(r.geo, reference);
    } catch (const input_error& e) {
      errors.add(r.line, e.what());
      continue;
    }
    s.utilization = percent ? r.util / 100.0 : r.util;
    s.covariates.resize(4);
    s.covariates << r.pop, std::log(r.income), r.car, r.road;
    stations.push_back(std::move(s));
  }
  errors.throw_if_any(path);

  if (report) {
    report->rows = static_cast<int>(stations.size());
    report->percent_scale = percent;
  }
  return stations;
}

// --- tag map ----------------------------------------------------------------

std::vector<TagRule> parse_tag_map(const std::string& text) {
  std::vector<TagRule> rules;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string s = trim(line);
    auto hash = s.find('#');
    if (hash != std::string::npos) s = trim(s.substr(0, hash));
    if (s.empty()) continue;
    auto arrow = s.find("->");
    auto eq = s.find('=');
    if (arrow == std::string::npos || eq == std::string::npos || eq > arrow) {
      throw input_error("tag map line " + std::to_string(line_no) +
                        ": expected 'key=value -> TypeName', got '" + s + "'");
    }
    TagRule r;
    r.key = trim(s.substr(0, eq));
    r.value = trim(s.substr(eq + 1, arrow - eq - 1));
    r.type_name = trim(s.substr(arrow + 2));
    if (r.key.empty() || r.value.empty() || r.type_name.empty()) {
      throw input_error("tag map line " + std::to_string(line_no) +
                        ": empty field in '" + s + "'");
    }
    rules.push_back(std::move(r));
  }
  return rules;
}

std::vector<TagRule> load_tag_map(const std::string& path) {
  return parse_tag_map(read_file(path));
}

std::string default_tag_map_text() {
  return
      "# OSM tag -> POI type\n"
      "amenity=restaurant -> Restaurant\n"
      "shop=clothes -> Store\n"
      "shop=department_store -> Store\n"
      "shop=supermarket -> Store\n"
      "shop=mall -> Store\n"
      "shop=convenience -> Store\n"
      "building=retail -> Store\n"
      "amenity=school -> Education\n"
      "amenity=university -> Education\n"
      "highway=bus_stop -> PublicTransport\n"
      "railway=station -> PublicTransport\n"
      "railway=subway_entrance -> PublicTransport\n"
      "public_transport=station -> PublicTransport\n";
}

std::vector<TagRule> default_tag_map() {
  return parse_tag_map(default_tag_map_text());
}

// --- POI loading ------------------------------------------------------------

namespace {

struct TypeRegistryBuilder {
  std::map<std::string, std::string> lower_to_canonical;

  explicit TypeRegistryBuilder(const std::vector<TagRule>& rules) {
    for (const auto& r : rules) {
      lower_to_canonical.emplace(lower(r.type_name), r.type_name);
    }
  }

  std::string canonical(const std::string& name) {
    auto it = lower_to_canonical.find(lower(name));
    if (it != lower_to_canonical.end()) return it->second;
    lower_to_canonical.emplace(lower(name), name);
    return name;
  }
};

PoiLoadResult finalize_pois(std::vector<std::pair<Poi, std::string>>&& items,
                            PoiLoadReport report) {
  std::set<std::string> names;
  for (const auto& it : items) names.insert(it.second);
  PoiLoadResult out;
  out.poi_types.assign(names.begin(), names.end());  // sorted, deterministic
  for (auto& it : items) {
    it.first.type = static_cast<int>(
        std::lower_bound(out.poi_types.begin(), out.poi_types.end(),
                         it.second) -
        out.poi_types.begin());
    out.pois.push_back(std::move(it.first));
  }
  report.loaded = static_cast<int>(out.pois.size());
  out.report = report;
  return out;
}

PoiLoadResult load_pois_geojson(const std::string& text,
                                const std::vector<TagRule>& tag_map,
                                const GeoPoint& reference,
                                const std::string& path) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw input_error(path + ": malformed GeoJSON: " + e.what());
  }
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" ||
      !doc.contains("features") || !doc["features"].is_array()) {
    throw input_error(path + ": expected a GeoJSON FeatureCollection");
  }

  TypeRegistryBuilder registry(tag_map);
  PoiLoadReport report;
  std::vector<std::pair<Poi, std::string>> items;
  int index = 0;
  for (const auto& feature : doc["features"]) {
    ++index;
    if (!feature.is_object()) {
      report.skipped_geometry++;
      continue;
    }
    const auto geom = feature.value("geometry", json());
    if (!geom.is_object() || geom.value("type", "") != "Point" ||
        !geom.contains("coordinates") || !geom["coordinates"].is_array() ||
        geom["coordinates"].size() < 2) {
      report.skipped_geometry++;
      continue;
    }
    const auto props = feature.value("properties", json::object());

    std::string matched_type;
    for (const auto& rule : tag_map) {
      if (!props.contains(rule.key)) continue;
      const auto& v = props[rule.key];
      std::string sval;
      if (v.is_string()) {
        sval = v.get<std::string>();
      } else {
        sval = v.dump();
      }
      if (sval == rule.value) {
        matched_type = rule.type_name;
        break;
      }
    }
    if (matched_type.empty()) {
      report.skipped_unmapped++;
      continue;
    }

    Poi p;
    if (feature.contains("id")) {
      p.id = feature["id"].is_string() ? feature["id"].get<std::string>()
                                       : feature["id"].dump();
    } else if (props.contains("id") && props["id"].is_string()) {
      p.id = props["id"].get<std::string>();
    } else {
      p.id = "poi" + std::to_string(index);
    }
    GeoPoint g;
    g.lon = geom["coordinates"][0].get<double>();
    g.lat = geom["coordinates"][1].get<double>();
    p.location = geo::project_one(g, reference);
    items.emplace_back(std::move(p), registry.canonical(matched_type));
  }
  return finalize_pois(std::move(items), report);
}

PoiLoadResult load_pois_csv(const std::string& text,
                            const std::vector<TagRule>& tag_map,
                            const GeoPoint& reference,
                            const std::string& path) {
  const CsvTable t = parse_csv(text, path);
  const int c_id = t.column("id");
  const int c_lon = t.column("lon");
  const int c_lat = t.column("lat");
  const int c_type = t.column("type");
  if (c_id < 0 || c_lon < 0 || c_lat < 0 || c_type < 0) {
    throw input_error(path + ": POI CSV needs columns id, lon, lat, type");
  }

  TypeRegistryBuilder registry(tag_map);
  RowErrors errors;
  PoiLoadReport report;
  std::vector<std::pair<Poi, std::string>> items;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& cells = t.rows[r];
    const int line = t.line_numbers[r];
    if (cells.size() < t.header.size()) {
      errors.add(line, "short row");
      continue;
    }
    GeoPoint g;
    if (!parse_double(cells[static_cast<std::size_t>(c_lon)], g.lon) ||
        !parse_double(cells[static_cast<std::size_t>(c_lat)], g.lat)) {
      errors.add(line, "non-numeric coordinate");
      continue;
    }
    Poi p;
    p.id = cells[static_cast<std::size_t>(c_id)];
    try {
      p.location = geo::project_one(g, reference);
    } catch (const input_error& e) {
      errors.add(line, e.what());
      continue;
    }
    const std::string type_name = cells[static_cast<std::size_t>(c_type)];
    if (type_name.empty()) {
      errors.add(line, "empty type");
      continue;
    }
    items.emplace_back(std::move(p), registry.canonical(type_name));
  }
  errors.throw_if_any(path);
  return finalize_pois(std::move(items), report);
}

}  // namespace

PoiLoadResult load_pois(const std::string& path,
                        const std::vector<TagRule>& tag_map,
                        const GeoPoint& reference) {
  const std::string text = read_file(path);
  std::size_t first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) throw input_error(path + ": empty POI file");
  if (text[first] == '{') {
    return load_pois_geojson(text, tag_map, reference, path);
  }
  return load_pois_csv(text, tag_map, reference, path);
}

// --- bundle -----------------------------------------------------------------

std::string bundle_to_json(const Dataset& ds) {
  json doc;
  doc["format"] = "poigp_bundle";
  doc["format_version"] = 1;
  doc["reference"] = {{"lon", ds.reference.lon}, {"lat", ds.reference.lat}};
  doc["poi_types"] = ds.poi_types;
  doc["covariate_names"] = ds.covariate_names;
  doc["covariate_count"] = ds.covariate_count;

  json stations = json::array();
  for (const auto& s : ds.stations) {
    const GeoPoint g = geo::unproject_one(s.location, ds.reference);
    json row;
    row["id"] = s.id;
    row["x_km"] = s.location.x();
    row["y_km"] = s.location.y();
    row["lon"] = g.lon;
    row["lat"] = g.lat;
    row["utilization"] = s.utilization;
    row["covariates"] = std::vector<double>(
        s.covariates.data(), s.covariates.data() + s.covariates.size());
    stations.push_back(std::move(row));
  }
  doc["stations"] = std::move(stations);

  json pois = json::array();
  for (const auto& p : ds.pois) {
    const GeoPoint g = geo::unproject_one(p.location, ds.reference);
    json row;
    row["id"] = p.id;
    row["x_km"] = p.location.x();
    row["y_km"] = p.location.y();
    row["lon"] = g.lon;
    row["lat"] = g.lat;
    row["type"] = ds.poi_types[static_cast<std::size_t>(p.type)];
    pois.push_back(std::move(row));
  }
  doc["pois"] = std::move(pois);
  return doc.dump(1);
}

Dataset bundle_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw artifact_error(std::string("malformed bundle JSON: ") + e.what());
  }
  if (doc.value("format", "") != "poigp_bundle") {
    throw artifact_error("not a poigp dataset bundle");
  }
  if (doc.value("format_version", 0) != 1) {
    throw artifact_error("unsupported bundle format version");
  }
  Dataset ds;
  ds.reference.lon = doc["reference"]["lon"].get<double>();
  ds.reference.lat = doc["reference"]["lat"].get<double>();
  ds.poi_types = doc["poi_types"].get<std::vector<std::string>>();
  ds.covariate_names =
      doc.value("covariate_names", std::vector<std::string>{});
  ds.covariate_count = doc["covariate_count"].get<int>();
  for (const auto& row : doc["stations"]) {
    Station s;
    s.id = row["id"].get<std::string>();
    s.location = {row["x_km"].get<double>(), row["y_km"].get<double>()};
    s.utilization = row["utilization"].get<double>();
    const auto cov = row["covariates"].get<std::vector<double>>();
    s.covariates = Eigen::Map<const Eigen::VectorXd>(
        cov.data(), static_cast<Eigen::Index>(cov.size()));
    ds.stations.push_back(std::move(s));
  }
  for (const auto& row : doc["pois"]) {
    Poi p;
    p.id = row["id"].get<std::string>();
    p.location = {row["x_km"].get<double>(), row["y_km"].get<double>()};
    const std::string type = row["type"].get<std::string>();
    p.type = ds.type_index(type);
    if (p.type < 0) {
      throw artifact_error("bundle poi type not in registry: " + type);
    }
    ds.pois.push_back(std::move(p));
  }
  ds.validate();
  return ds;
}

void save_bundle(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw input_error("cannot write file: " + path);
  out << bundle_to_json(ds) << "\n";
}

Dataset load_bundle(const std::string& path) {
  return bundle_from_json(read_file(path));
}

GeoPoint pick_reference(const std::vector<GeoPoint>& station_geo) {
  if (station_geo.empty()) throw input_error("no stations for reference");
  double lon = 0.0, lat = 0.0;
  for (const auto& g : station_geo) {
    lon += g.lon;
    lat += g.lat;
  }
  lon /= static_cast<double>(station_geo.size());
  lat /= static_cast<double>(station_geo.size());
  GeoPoint ref;
  ref.lon = std::round(lon * 1000.0) / 1000.0;
  ref.lat = std::round(lat * 1000.0) / 1000.0;
  return ref;
}

GeoPoint reference_from_stations_csv(const std::string& path) {
  const CsvTable t = parse_csv(read_file(path), path);
  const int lon_col = t.column("lon");
  const int lat_col = t.column("lat");
  if (lon_col < 0 || lat_col < 0) {
    throw input_error(path + ": missing lon/lat columns");
  }
  std::vector<GeoPoint> geo;
  for (const auto& cells : t.rows) {
    if (cells.size() < t.header.size()) continue;
    GeoPoint g;
    if (parse_double(cells[static_cast<std::size_t>(lon_col)], g.lon) &&
        parse_double(cells[static_cast<std::size_t>(lat_col)], g.lat) &&
        std::abs(g.lat) <= 90.0 && std::abs(g.lon) <= 180.0) {
      geo.push_back(g);
    }
  }
  return pick_reference(geo);
}

}  // namespace poigp

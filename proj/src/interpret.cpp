#include "poigp/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "poigp/geometry.hpp"

namespace poigp {

std::map<std::string, double> cutoff_distances(const FittedModel& model) {
  model.require_trained();
  std::map<std::string, double> out;
  for (std::size_t g = 0; g < model.poi_types.size(); ++g) {
    out[model.poi_types[g]] = model.theta[g];
  }
  return out;
}

std::vector<PoiEffect> recover_alphas(const FittedModel& model,
                                      const Dataset& data) {
  model.require_trained();

  std::vector<PoiEffect> out;
  for (std::size_t g = 0; g < model.poi_types.size(); ++g) {
    const std::string& type_name = model.poi_types[g];
    const auto reg = std::find(data.poi_types.begin(), data.poi_types.end(),
                               type_name);
    if (reg == data.poi_types.end()) {
      throw artifact_error("poi list does not match the model: type " +
                           type_name + " missing from the dataset");
    }
    const int reg_idx = static_cast<int>(reg - data.poi_types.begin());

    std::vector<const Poi*> members;
    for (const Poi& p : data.pois) {
      if (p.type == reg_idx) members.push_back(&p);
    }
    const PointMatrix& omega = model.poi_locations[g];
    if (static_cast<Eigen::Index>(members.size()) != omega.rows()) {
      throw artifact_error("poi list does not match the model: type " +
                           type_name + " has " +
                           std::to_string(members.size()) + " pois, model " +
                           std::to_string(omega.rows()));
    }
    for (Eigen::Index r = 0; r < omega.rows(); ++r) {
      if ((members[static_cast<std::size_t>(r)]->location - omega.row(r).transpose())
              .cwiseAbs()
              .maxCoeff() > 1e-9) {
        throw artifact_error(
            "poi list does not match the model: coordinates differ for type " +
            type_name);
      }
    }

    const double av = model.alpha_var[g];
    const Eigen::MatrixXd d_uw = geo::pairwise_distances(model.inducing, omega);
    const Eigen::MatrixXd phi_u =
        point_kernel_matrix(d_uw, model.spec.kernel, model.theta[g]);
    // K_wu row rho, column m = k(z_m, omega_rho).
    const Eigen::MatrixXd k_wu = phi_u.transpose();
    const Eigen::MatrixXd k_uu = av * phi_u * phi_u.transpose();
    const CholResult chol =
        chol_with_jitter(k_uu, "K_uu[" + type_name + "]");

    const VariationalProcess& q = model.processes[g];
    // B = Kuu^-1 (av K_wu)' computed once; every posterior quantity is a
    // linear image of it.
    Eigen::MatrixXd b = chol.l.triangularView<Eigen::Lower>().solve(
        av * k_wu.transpose());
    b = chol.l.transpose().triangularView<Eigen::Upper>().solve(b);

    const Eigen::VectorXd mean = b.transpose() * q.m;
    const Eigen::MatrixXd sb = q.l.transpose() * b;  // L' Kuu^-1 C'
    // diag(C Kuu^-1 C') and diag(C Kuu^-1 S Kuu^-1 C').
    const Eigen::VectorXd drop =
        (b.array() * (av * k_wu.transpose()).array()).colwise().sum();
    const Eigen::VectorXd gain = sb.array().square().colwise().sum();
    for (Eigen::Index r = 0; r < omega.rows(); ++r) {
      PoiEffect e;
      e.id = members[static_cast<std::size_t>(r)]->id;
      e.type = static_cast<int>(g);
      e.alpha_mean = mean(r);
      const double var = std::max(0.0, av - drop(r) + gain(r));
      e.alpha_sd = std::sqrt(var);
      out.push_back(e);
    }
  }
  return out;
}

std::pair<double, double> average_magnitude(
    const std::vector<PoiEffect>& effects, int type) {
  std::vector<double> mags;
  for (const PoiEffect& e : effects) {
    if (e.type == type) mags.push_back(std::abs(e.alpha_mean));
  }
  if (mags.empty()) {
    throw input_error("average_magnitude: no pois of type index " +
                      std::to_string(type));
  }
  double mean = 0.0;
  for (double m : mags) mean += m;
  mean /= static_cast<double>(mags.size());
  double ss = 0.0;
  for (double m : mags) ss += (m - mean) * (m - mean);
  const double sd =
      mags.size() > 1 ? std::sqrt(ss / static_cast<double>(mags.size() - 1))
                      : 0.0;
  return {mean, sd};
}

std::vector<TypeSummary> type_summaries(
    const FittedModel& model, const std::vector<PoiEffect>& effects) {
  model.require_trained();
  std::vector<TypeSummary> out;
  for (std::size_t g = 0; g < model.poi_types.size(); ++g) {
    TypeSummary row;
    row.type = model.poi_types[g];
    row.cutoff_km = model.theta[g];
    const auto [mean, sd] = average_magnitude(effects, static_cast<int>(g));
    row.avg_magnitude = mean;
    row.magnitude_sd = sd;
    row.poi_count = static_cast<int>(
        std::count_if(effects.begin(), effects.end(), [&](const PoiEffect& e) {
          return e.type == static_cast<int>(g);
        }));
    out.push_back(row);
  }
  return out;
}

Raster spatial_grid(const FittedModel& model, int process,
                    const RasterBounds& bounds, double cell_km) {
  model.require_trained();
  if (!(cell_km > 0.0)) throw parameter_error("cell_km must be positive");
  if (!(bounds.x_max > bounds.x_min) || !(bounds.y_max > bounds.y_min)) {
    throw parameter_error("raster bounds are degenerate");
  }
  if (process < 0 || process >= model.process_count()) {
    throw parameter_error("process index out of range");
  }

  Raster r;
  r.bounds = bounds;
  r.cell_km = cell_km;
  r.nx = static_cast<int>(std::ceil((bounds.x_max - bounds.x_min) / cell_km));
  r.ny = static_cast<int>(std::ceil((bounds.y_max - bounds.y_min) / cell_km));
  r.label = process == model.spatial_process()
                ? "h0"
                : model.poi_types[static_cast<std::size_t>(process)];

  PointMatrix centers(r.nx * r.ny, 2);
  for (int j = 0; j < r.ny; ++j) {
    for (int i = 0; i < r.nx; ++i) {
      centers(j * r.nx + i, 0) = r.cell_x(i);
      centers(j * r.nx + i, 1) = r.cell_y(j);
    }
  }
  const PosteriorMarginals m = posterior_component(model, process, centers);
  r.mean.resize(r.ny, r.nx);
  r.variance.resize(r.ny, r.nx);
  for (int j = 0; j < r.ny; ++j) {
    for (int i = 0; i < r.nx; ++i) {
      r.mean(j, i) = m.mean(j * r.nx + i);
      r.variance(j, i) = m.variance(j * r.nx + i);
    }
  }
  return r;
}

std::string type_summaries_csv(const std::vector<TypeSummary>& rows) {
  std::string out = "type,cutoff_km,avg_effect,sd\n";
  for (const TypeSummary& r : rows) {
    out += r.type + "," + format_double(r.cutoff_km) + "," +
           format_double(r.avg_magnitude) + "," + format_double(r.magnitude_sd) +
           "\n";
  }
  return out;
}

std::string poi_effects_csv(const std::vector<PoiEffect>& effects,
                            const FittedModel& model) {
  std::string out = "id,type,alpha_mean,alpha_sd\n";
  for (const PoiEffect& e : effects) {
    out += e.id + "," + model.poi_types[static_cast<std::size_t>(e.type)] +
           "," + format_double(e.alpha_mean) + "," + format_double(e.alpha_sd) +
           "\n";
  }
  return out;
}

std::string raster_csv(const Raster& raster) {
  std::string out = "x_km,y_km,mean,variance\n";
  for (int j = 0; j < raster.ny; ++j) {
    for (int i = 0; i < raster.nx; ++i) {
      out += format_double(raster.cell_x(i)) + "," +
             format_double(raster.cell_y(j)) + "," +
             format_double(raster.mean(j, i)) + "," +
             format_double(raster.variance(j, i)) + "\n";
    }
  }
  return out;
}

std::string raster_geojson(const Raster& raster, const GeoPoint& reference) {
  nlohmann::ordered_json fc;
  fc["type"] = "FeatureCollection";
  fc["features"] = nlohmann::ordered_json::array();
  for (int j = 0; j < raster.ny; ++j) {
    for (int i = 0; i < raster.nx; ++i) {
      const double x0 = raster.bounds.x_min + i * raster.cell_km;
      const double y0 = raster.bounds.y_min + j * raster.cell_km;
      const double x1 = x0 + raster.cell_km;
      const double y1 = y0 + raster.cell_km;
      nlohmann::ordered_json ring = nlohmann::ordered_json::array();
      for (const auto& [cx, cy] : std::vector<std::pair<double, double>>{
               {x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}, {x0, y0}}) {
        const GeoPoint ll = geo::unproject_one({cx, cy}, reference);
        ring.push_back({ll.lon, ll.lat});
      }
      nlohmann::ordered_json feature;
      feature["type"] = "Feature";
      feature["geometry"] = {{"type", "Polygon"},
                             {"coordinates",
                              nlohmann::ordered_json::array({ring})}};
      feature["properties"] = {{"label", raster.label},
                               {"mean", raster.mean(j, i)},
                               {"variance", raster.variance(j, i)}};
      fc["features"].push_back(feature);
    }
  }
  return fc.dump(1);
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw artifact_error("cannot open for writing: " + path);
  out << text;
  if (!out) throw artifact_error("write failed: " + path);
}

}  // namespace poigp

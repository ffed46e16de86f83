#include "poigp/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "poigp/svi.hpp"

namespace poigp {

using nlohmann::json;

namespace {
constexpr double kLn2Pi = 1.8378770664093453;
}

Eigen::VectorXd charger_influence(const FittedModel& model,
                                  const Eigen::MatrixXd& x_std) {
  return model.charger.forward(x_std);
}

PosteriorMarginals posterior_component(const FittedModel& model, int process,
                                       const PointMatrix& query) {
  const int g = static_cast<int>(model.poi_types.size());
  if (process < 0 || process > g) {
    throw parameter_error("process index out of range");
  }
  if (process < g) {
    const auto& pl = model.poi_locations[static_cast<std::size_t>(process)];
    const double th = model.theta[static_cast<std::size_t>(process)];
    const double av = model.alpha_var[static_cast<std::size_t>(process)];
    const Eigen::MatrixXd phi_u = point_kernel_matrix(
        geo::pairwise_distances(model.inducing, pl), model.spec.kernel, th);
    const Eigen::MatrixXd phi_q = point_kernel_matrix(
        geo::pairwise_distances(query, pl), model.spec.kernel, th);
    const Eigen::MatrixXd k_uu = av * phi_u * phi_u.transpose();
    const Eigen::MatrixXd k_uq = av * phi_u * phi_q.transpose();
    const Eigen::VectorXd k_diag =
        av * phi_q.array().square().rowwise().sum().matrix();
    return posterior_marginals(
        "K_uu[" + model.poi_types[static_cast<std::size_t>(process)] + "]",
        k_uu, k_uq, k_diag,
        model.processes[static_cast<std::size_t>(process)]);
  }
  const Eigen::MatrixXd k_uu =
      matern32_matrix(geo::pairwise_distances(model.inducing, model.inducing),
                      model.matern_var, model.matern_len);
  const Eigen::MatrixXd k_uq =
      matern32_matrix(geo::pairwise_distances(model.inducing, query),
                      model.matern_var, model.matern_len);
  const Eigen::VectorXd k_diag =
      Eigen::VectorXd::Constant(query.rows(), model.matern_var);
  return posterior_marginals("K_uu[spatial]", k_uu, k_uq, k_diag,
                             model.processes.back());
}

Prediction predict(const FittedModel& model, const Eigen::MatrixXd& x_raw,
                   const PointMatrix& locations) {
  model.require_trained();
  if (x_raw.rows() != locations.rows()) {
    throw parameter_error("predict: covariate/location row mismatch");
  }
  const Eigen::MatrixXd x_std = apply_column_stats(x_raw, model.covariate_stats);

  Prediction out;
  out.mean = model.charger.forward(x_std);
  out.variance = Eigen::VectorXd::Constant(locations.rows(),
                                           model.noise_sd * model.noise_sd);
  for (int p = 0; p < model.process_count(); ++p) {
    const PosteriorMarginals pm = posterior_component(model, p, locations);
    out.mean += pm.mean;
    out.variance += pm.variance;
  }
  out.utilization =
      out.mean.unaryExpr([&](double z) {
        const double u = unstandardize(z, model.target_stats);
        return std::min(1.0, std::max(0.0, u));
      });
  return out;
}

double gaussian_loglik(double y, double mean, double variance) {
  if (!(variance > 0.0)) {
    throw input_error("gaussian_loglik: variance must be positive");
  }
  const double r = y - mean;
  return -0.5 * (kLn2Pi + std::log(variance)) - r * r / (2.0 * variance);
}

LogDensityResult log_predictive_density(const FittedModel& model,
                                        const Eigen::MatrixXd& x_raw,
                                        const PointMatrix& locations,
                                        const Eigen::VectorXd& y_std) {
  if (y_std.size() != locations.rows()) {
    throw parameter_error("log_predictive_density: target length mismatch");
  }
  const Prediction pred = predict(model, x_raw, locations);
  LogDensityResult out;
  out.per_point.resize(y_std.size());
  for (Eigen::Index i = 0; i < y_std.size(); ++i) {
    out.per_point(i) = gaussian_loglik(y_std(i), pred.mean(i), pred.variance(i));
  }
  out.sum = out.per_point.sum();
  return out;
}

// --- persistence ------------------------------------------------------------

namespace {

json points_to_json(const PointMatrix& p) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    rows.push_back({p(i, 0), p(i, 1)});
  }
  return rows;
}

PointMatrix points_from_json(const json& rows) {
  PointMatrix p(static_cast<Eigen::Index>(rows.size()), 2);
  Eigen::Index i = 0;
  for (const auto& row : rows) {
    p(i, 0) = row[0].get<double>();
    p(i, 1) = row[1].get<double>();
    ++i;
  }
  return p;
}

json vector_to_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vector_from_json(const json& arr) {
  const auto vals = arr.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(
      vals.data(), static_cast<Eigen::Index>(vals.size()));
}

}  // namespace

std::string model_to_json(const FittedModel& model) {
  model.require_trained();
  json doc;
  doc["format"] = "poigp_model";
  doc["format_version"] = 1;

  json spec;
  spec["charger"] = charger_kind_name(model.spec.charger);
  spec["kernel"] = point_kernel_name(model.spec.kernel);
  spec["charger_hidden"] = model.spec.charger_hidden;
  spec["poi_types"] = model.spec.poi_types;
  spec["inducing_count"] = model.spec.inducing_count;
  spec["seed"] = model.spec.seed;
  spec["iterations"] = model.spec.opt.iterations;
  spec["step"] = model.spec.opt.step;
  spec["cosine_decay"] = model.spec.opt.cosine_decay;
  spec["init_theta"] = model.spec.init_theta;
  spec["init_matern_var"] = model.spec.init_matern_var;
  spec["init_matern_len"] = model.spec.init_matern_len;
  spec["init_noise_sd"] = model.spec.init_noise_sd;
  spec["init_alpha_var"] = model.spec.init_alpha_var;
  spec["charger_weight_sd"] = model.spec.charger_weight_sd;
  spec["train_kernel_params"] = model.spec.train_kernel_params;
  spec["train_charger"] = model.spec.train_charger;
  spec["fixed_noise_sd"] = model.spec.fixed_noise_sd
                               ? json(*model.spec.fixed_noise_sd)
                               : json(nullptr);
  doc["spec"] = std::move(spec);

  doc["reference"] = {{"lon", model.reference.lon},
                      {"lat", model.reference.lat}};
  doc["poi_types"] = model.poi_types;
  json locs = json::array();
  for (const auto& pl : model.poi_locations) locs.push_back(points_to_json(pl));
  doc["poi_locations"] = std::move(locs);
  doc["inducing"] = points_to_json(model.inducing);

  doc["theta"] = model.theta;
  doc["alpha_var"] = model.alpha_var;
  doc["matern_var"] = model.matern_var;
  doc["matern_len"] = model.matern_len;
  doc["noise_sd"] = model.noise_sd;

  json charger;
  charger["input_dim"] = model.charger.input_dim();
  charger["hidden"] = model.charger.hidden();
  charger["params"] = vector_to_json(model.charger.pack());
  doc["charger"] = std::move(charger);

  json procs = json::array();
  for (const auto& q : model.processes) {
    json proc;
    proc["m"] = vector_to_json(q.m);
    json l_rows = json::array();
    for (Eigen::Index i = 0; i < q.l.rows(); ++i) {
      std::vector<double> row;
      for (Eigen::Index j = 0; j <= i; ++j) row.push_back(q.l(i, j));
      l_rows.push_back(row);
    }
    proc["l_rows"] = std::move(l_rows);
    procs.push_back(std::move(proc));
  }
  doc["processes"] = std::move(procs);

  doc["target_stats"] = {{"mean", model.target_stats.mean},
                         {"sd", model.target_stats.sd}};
  doc["covariate_stats"] = {{"mean", vector_to_json(model.covariate_stats.mean)},
                            {"sd", vector_to_json(model.covariate_stats.sd)}};
  doc["covariate_names"] = model.covariate_names;
  return doc.dump(1);
}

FittedModel model_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw artifact_error(std::string("malformed model JSON: ") + e.what());
  }
  if (doc.value("format", "") != "poigp_model") {
    throw artifact_error("not a poigp model file");
  }
  if (doc.value("format_version", 0) != 1) {
    throw artifact_error("unsupported model format version " +
                         std::to_string(doc.value("format_version", 0)));
  }

  FittedModel model;
  const json& spec = doc.at("spec");
  model.spec.charger = charger_kind_from_name(spec.at("charger"));
  model.spec.kernel = point_kernel_from_name(spec.at("kernel"));
  model.spec.charger_hidden = spec.at("charger_hidden").get<std::vector<int>>();
  model.spec.poi_types = spec.at("poi_types").get<std::vector<std::string>>();
  model.spec.inducing_count = spec.at("inducing_count").get<int>();
  model.spec.seed = spec.at("seed").get<std::uint64_t>();
  model.spec.opt.iterations = spec.at("iterations").get<int>();
  model.spec.opt.step = spec.at("step").get<double>();
  model.spec.opt.cosine_decay = spec.at("cosine_decay").get<bool>();
  model.spec.init_theta = spec.at("init_theta").get<double>();
  model.spec.init_matern_var = spec.at("init_matern_var").get<double>();
  model.spec.init_matern_len = spec.at("init_matern_len").get<double>();
  model.spec.init_noise_sd = spec.at("init_noise_sd").get<double>();
  model.spec.init_alpha_var = spec.at("init_alpha_var").get<double>();
  model.spec.charger_weight_sd = spec.at("charger_weight_sd").get<double>();
  model.spec.train_kernel_params = spec.at("train_kernel_params").get<bool>();
  model.spec.train_charger = spec.at("train_charger").get<bool>();
  if (!spec.at("fixed_noise_sd").is_null()) {
    model.spec.fixed_noise_sd = spec.at("fixed_noise_sd").get<double>();
  }

  model.reference.lon = doc.at("reference").at("lon").get<double>();
  model.reference.lat = doc.at("reference").at("lat").get<double>();
  model.poi_types = doc.at("poi_types").get<std::vector<std::string>>();
  for (const auto& pl : doc.at("poi_locations")) {
    model.poi_locations.push_back(points_from_json(pl));
  }
  model.inducing = points_from_json(doc.at("inducing"));

  model.theta = doc.at("theta").get<std::vector<double>>();
  model.alpha_var = doc.at("alpha_var").get<std::vector<double>>();
  model.matern_var = doc.at("matern_var").get<double>();
  model.matern_len = doc.at("matern_len").get<double>();
  model.noise_sd = doc.at("noise_sd").get<double>();

  const json& charger = doc.at("charger");
  Rng dummy(0);
  model.charger = Mlp(charger.at("input_dim").get<int>(),
                      charger.at("hidden").get<std::vector<int>>(), dummy,
                      0.0);
  model.charger.unpack(vector_from_json(charger.at("params")));

  for (const auto& proc : doc.at("processes")) {
    VariationalProcess q;
    q.m = vector_from_json(proc.at("m"));
    const auto& l_rows = proc.at("l_rows");
    const Eigen::Index mm = static_cast<Eigen::Index>(l_rows.size());
    q.l = Eigen::MatrixXd::Zero(mm, mm);
    for (Eigen::Index i = 0; i < mm; ++i) {
      const auto row = l_rows[static_cast<std::size_t>(i)]
                           .get<std::vector<double>>();
      for (Eigen::Index j = 0; j <= i; ++j) {
        q.l(i, j) = row[static_cast<std::size_t>(j)];
      }
    }
    model.processes.push_back(std::move(q));
  }

  model.target_stats.mean = doc.at("target_stats").at("mean").get<double>();
  model.target_stats.sd = doc.at("target_stats").at("sd").get<double>();
  model.covariate_stats.mean =
      vector_from_json(doc.at("covariate_stats").at("mean"));
  model.covariate_stats.sd =
      vector_from_json(doc.at("covariate_stats").at("sd"));
  model.covariate_names =
      doc.at("covariate_names").get<std::vector<std::string>>();

  if (model.poi_locations.size() != model.poi_types.size() ||
      model.theta.size() != model.poi_types.size() ||
      model.alpha_var.size() != model.poi_types.size() ||
      model.processes.size() != model.poi_types.size() + 1) {
    throw artifact_error("model file is internally inconsistent");
  }
  model.trained = true;
  return model;
}

void save_model(const FittedModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw input_error("cannot write file: " + path);
  out << model_to_json(model) << "\n";
}

FittedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw input_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

void write_trace_csv(const std::vector<TraceRow>& trace,
                     const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw input_error("cannot write file: " + path);
  out << "iteration,elbo,grad_variational,grad_kernel,grad_charger,"
         "grad_noise\n";
  for (const auto& row : trace) {
    out << row.iteration << "," << format_double(row.elbo) << ","
        << format_double(row.grad_variational) << ","
        << format_double(row.grad_kernel) << ","
        << format_double(row.grad_charger) << ","
        << format_double(row.grad_noise) << "\n";
  }
}

}  // namespace poigp

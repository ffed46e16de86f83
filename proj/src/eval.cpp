#include "poigp/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

#include <json.hpp>

#include "poigp/svi.hpp"

namespace poigp {

// --- split ----------------------------------------------------------------

SplitResult split(const Dataset& data, const SplitConfig& config) {
  const std::size_t n = data.stations.size();
  if (n < 5) throw input_error("split: need at least 5 stations");
  if (!(config.ratio > 0.0) || !(config.ratio < 1.0)) {
    throw parameter_error("split ratio must be in (0, 1)");
  }
  const auto n_train = static_cast<std::size_t>(
      std::floor(config.ratio * static_cast<double>(n)));
  if (n_train == 0 || n_train == n) {
    throw input_error("split: one side would be empty");
  }

  Rng rng(Rng::mix(config.seed, 0x5197));
  const std::vector<std::size_t> perm = rng.permutation(n);

  SplitResult out;
  out.train_index.assign(perm.begin(), perm.begin() + static_cast<long>(n_train));
  out.test_index.assign(perm.begin() + static_cast<long>(n_train), perm.end());
  // Ascending order inside each side keeps downstream station order stable.
  std::sort(out.train_index.begin(), out.train_index.end());
  std::sort(out.test_index.begin(), out.test_index.end());

  auto subset = [&](const std::vector<std::size_t>& idx) {
    Dataset d;
    d.pois = data.pois;
    d.poi_types = data.poi_types;
    d.reference = data.reference;
    d.covariate_count = data.covariate_count;
    d.covariate_names = data.covariate_names;
    for (std::size_t i : idx) d.stations.push_back(data.stations[i]);
    return d;
  };
  out.train = subset(out.train_index);
  out.test = subset(out.test_index);

  const StandardizedTarget st =
      standardize_target(out.train.utilization_vector());
  out.target_stats = {st.mean, st.sd};
  out.covariate_stats = column_stats(out.train.covariate_matrix());
  out.train.target_stats = out.target_stats;
  out.test.target_stats = out.target_stats;
  out.train.covariate_stats = out.covariate_stats;
  out.test.covariate_stats = out.covariate_stats;
  return out;
}

// --- metrics ----------------------------------------------------------------

double rmse(const Eigen::VectorXd& pred, const Eigen::VectorXd& actual) {
  if (pred.size() != actual.size() || pred.size() == 0) {
    throw input_error("rmse: length mismatch or empty input");
  }
  return std::sqrt((pred - actual).squaredNorm() /
                   static_cast<double>(pred.size()));
}

double test_loglik(const Eigen::VectorXd& means,
                   const Eigen::VectorXd& variances,
                   const Eigen::VectorXd& actual) {
  if (means.size() != actual.size() || variances.size() != actual.size() ||
      means.size() == 0) {
    throw input_error("test_loglik: length mismatch or empty input");
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i < means.size(); ++i) {
    sum += gaussian_loglik(actual(i), means(i), variances(i));
  }
  return sum;
}

// --- synthetic generator -------------------------------------------------------

void SynthConfig::validate() const {
  if (stations < 5) throw parameter_error("synth: need at least 5 stations");
  const std::size_t g = poi_counts.size();
  if (theta.size() != g || sigma_alpha.size() != g) {
    throw parameter_error("synth: poi_counts, theta, sigma_alpha sizes differ");
  }
  if (!type_names.empty() && type_names.size() != g) {
    throw parameter_error("synth: type_names size mismatch");
  }
  if (!std::is_sorted(type_names.begin(), type_names.end()) ||
      std::adjacent_find(type_names.begin(), type_names.end()) !=
          type_names.end()) {
    throw parameter_error("synth: type_names must be sorted and unique");
  }
  for (std::size_t i = 0; i < g; ++i) {
    if (poi_counts[i] < 1) throw parameter_error("synth: poi count < 1");
    if (!(theta[i] > 0.0)) throw parameter_error("synth: theta must be > 0");
    if (sigma_alpha[i] < 0.0) {
      throw parameter_error("synth: sigma_alpha must be >= 0");
    }
  }
  if (matern_var < 0.0 || !(matern_len > 0.0) || !(noise_sd > 0.0)) {
    throw parameter_error("synth: invalid spatial or noise parameters");
  }
  if (covariate_count < 0) throw parameter_error("synth: covariate_count < 0");
  if (charger_weights.size() != 0 &&
      charger_weights.size() != covariate_count) {
    throw parameter_error("synth: charger_weights size mismatch");
  }
  if (!(bounds.x_max > bounds.x_min) || !(bounds.y_max > bounds.y_min)) {
    throw parameter_error("synth: degenerate bounds");
  }
  geo::validate_geo(reference);
}

std::string SynthConfig::canonical_text() const {
  std::map<std::string, std::string> kv;
  kv["stations"] = std::to_string(stations);
  kv["kernel"] = point_kernel_name(kernel);
  kv["matern_var"] = format_double(matern_var);
  kv["matern_len"] = format_double(matern_len);
  kv["noise_sd"] = format_double(noise_sd);
  kv["covariates"] = std::to_string(covariate_count);
  kv["charger_bias"] = format_double(charger_bias);
  kv["seed"] = std::to_string(seed);
  kv["bounds"] = format_double(bounds.x_min) + ":" +
                 format_double(bounds.x_max) + ":" +
                 format_double(bounds.y_min) + ":" +
                 format_double(bounds.y_max);
  kv["reference"] = format_double(reference.lon) + ":" +
                    format_double(reference.lat);
  for (std::size_t i = 0; i < poi_counts.size(); ++i) {
    const std::string name =
        type_names.empty() ? "Type" + std::to_string(i) : type_names[i];
    kv["type." + name] = std::to_string(poi_counts[i]) + ":" +
                         format_double(theta[i]) + ":" +
                         format_double(sigma_alpha[i]);
  }
  std::string w;
  for (Eigen::Index i = 0; i < charger_weights.size(); ++i) {
    if (i) w += ":";
    w += format_double(charger_weights(i));
  }
  kv["charger_weights"] = w;
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

SynthResult synth_generate(const SynthConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const int n = config.stations;
  const auto types = config.poi_counts.size();

  SynthResult out;
  GroundTruth& truth = out.truth;
  Dataset& data = out.data;

  PointMatrix stations(n, 2);
  for (int i = 0; i < n; ++i) {
    stations(i, 0) = rng.uniform(config.bounds.x_min, config.bounds.x_max);
    stations(i, 1) = rng.uniform(config.bounds.y_min, config.bounds.y_max);
  }
  Eigen::MatrixXd x(n, config.covariate_count);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < config.covariate_count; ++j) x(i, j) = rng.normal();
  }

  truth.g_values = Eigen::VectorXd::Constant(n, config.charger_bias);
  if (config.charger_weights.size() > 0) {
    truth.g_values += x * config.charger_weights;
  }

  truth.theta = config.theta;
  truth.sigma_alpha = config.sigma_alpha;
  truth.h_poi = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(types));
  data.poi_types.resize(types);
  for (std::size_t g = 0; g < types; ++g) {
    data.poi_types[g] = config.type_names.empty()
                            ? "Type" + std::to_string(g)
                            : config.type_names[g];
    const int count = config.poi_counts[g];
    PointMatrix omega(count, 2);
    for (int r = 0; r < count; ++r) {
      omega(r, 0) = rng.uniform(config.bounds.x_min, config.bounds.x_max);
      omega(r, 1) = rng.uniform(config.bounds.y_min, config.bounds.y_max);
    }
    Eigen::VectorXd alpha(count);
    for (int r = 0; r < count; ++r) {
      alpha(r) = config.sigma_alpha[g] > 0.0
                     ? rng.normal(0.0, config.sigma_alpha[g])
                     : 0.0;
    }
    truth.alphas.push_back(alpha);

    const Eigen::MatrixXd phi = point_kernel_matrix(
        geo::pairwise_distances(stations, omega), config.kernel,
        config.theta[g]);
    truth.h_poi.col(static_cast<Eigen::Index>(g)) = phi * alpha;

    for (int r = 0; r < count; ++r) {
      Poi p;
      p.id = "p" + std::to_string(g) + "_" + std::to_string(r);
      p.location = omega.row(r);
      p.type = static_cast<int>(g);
      data.pois.push_back(p);
    }
  }

  if (config.matern_var > 0.0) {
    const Eigen::MatrixXd k = matern32_matrix(
        geo::pairwise_distances(stations, stations), config.matern_var,
        config.matern_len);
    const CholResult chol = chol_with_jitter(k, "synthetic spatial surface");
    Eigen::VectorXd eps(n);
    for (int i = 0; i < n; ++i) eps(i) = rng.normal();
    truth.h0 = chol.l * eps;
  } else {
    truth.h0 = Eigen::VectorXd::Zero(n);
  }

  truth.y_raw = truth.g_values + truth.h_poi.rowwise().sum() + truth.h0;
  for (int i = 0; i < n; ++i) {
    truth.y_raw(i) += rng.normal(0.0, config.noise_sd);
  }

  const double lo = truth.y_raw.minCoeff();
  const double hi = truth.y_raw.maxCoeff();
  if (hi - lo > 1e-9) {
    truth.offset = lo;
    truth.scale = 1.0 / (hi - lo);
  } else {
    truth.offset = lo - 0.5;
    truth.scale = 1.0;
  }

  data.reference = config.reference;
  data.covariate_count = config.covariate_count;
  for (int j = 0; j < config.covariate_count; ++j) {
    data.covariate_names.push_back("x" + std::to_string(j));
  }
  for (int i = 0; i < n; ++i) {
    Station s;
    s.id = "s" + std::to_string(i);
    s.location = stations.row(i);
    s.utilization = (truth.y_raw(i) - truth.offset) * truth.scale;
    s.covariates = x.row(i);
    data.stations.push_back(s);
  }
  data.validate();
  return out;
}

std::string ground_truth_json(const GroundTruth& truth) {
  nlohmann::ordered_json j;
  j["format"] = "poigp_ground_truth";
  j["version"] = 1;
  j["theta"] = truth.theta;
  j["sigma_alpha"] = truth.sigma_alpha;
  j["offset"] = truth.offset;
  j["scale"] = truth.scale;
  j["alphas"] = nlohmann::ordered_json::array();
  for (const Eigen::VectorXd& a : truth.alphas) {
    std::vector<double> v(a.data(), a.data() + a.size());
    j["alphas"].push_back(v);
  }
  auto vec = [](const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  j["g_values"] = vec(truth.g_values);
  j["h0"] = vec(truth.h0);
  j["h_poi"] = nlohmann::ordered_json::array();
  for (Eigen::Index g = 0; g < truth.h_poi.cols(); ++g) {
    j["h_poi"].push_back(vec(truth.h_poi.col(g)));
  }
  j["y_raw"] = vec(truth.y_raw);
  return j.dump(1);
}

// --- benchmark ---------------------------------------------------------------

std::string BenchmarkConfig::canonical_text() const {
  std::map<std::string, std::string> kv;
  kv["split.ratio"] = format_double(split.ratio);
  kv["split.seed"] = std::to_string(split.seed);
  kv["model.charger"] = charger_kind_name(model.charger);
  kv["model.kernel"] = point_kernel_name(model.kernel);
  std::string hidden;
  for (std::size_t i = 0; i < model.charger_hidden.size(); ++i) {
    if (i) hidden += ":";
    hidden += std::to_string(model.charger_hidden[i]);
  }
  kv["model.hidden"] = hidden;
  kv["model.inducing"] = std::to_string(model.inducing_count);
  kv["model.seed"] = std::to_string(model.seed);
  kv["model.iterations"] = std::to_string(model.opt.iterations);
  kv["model.step"] = format_double(model.opt.step);
  kv["model.cosine_decay"] = model.opt.cosine_decay ? "1" : "0";
  std::string radii;
  for (std::size_t i = 0; i < dmax.size(); ++i) {
    if (i) radii += ":";
    radii += format_double(dmax[i]);
  }
  kv["features.dmax"] = radii;
  kv["gwr.bandwidth"] = format_double(gwr_bandwidth);
  kv["rf.trees"] = std::to_string(rf.trees);
  kv["rf.max_depth"] = std::to_string(rf.max_depth);
  kv["rf.min_leaf"] = std::to_string(rf.min_leaf);
  kv["rf.mtry"] = std::to_string(rf.mtry);
  kv["nn.iterations"] = std::to_string(nn.iterations);
  kv["nn.step"] = format_double(nn.step);
  kv["nn.use_coords"] = nn_use_coords ? "1" : "0";
  kv["repeats"] = std::to_string(repeats);
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

std::string BenchmarkConfig::hash_hex_id() const {
  return hash_hex(fnv1a64(canonical_text()));
}

namespace {

struct PreparedSplit {
  SplitResult sp;
  Eigen::MatrixXd x_train_std, x_test_std;
  Eigen::VectorXd y_train_std, y_test_std;
  PointMatrix loc_train, loc_test;
  std::vector<PointMatrix> pois;
};

PreparedSplit prepare(const Dataset& data, const SplitConfig& config) {
  PreparedSplit p;
  p.sp = split(data, config);
  p.loc_train = p.sp.train.station_locations();
  p.loc_test = p.sp.test.station_locations();
  p.x_train_std =
      apply_column_stats(p.sp.train.covariate_matrix(), p.sp.covariate_stats);
  p.x_test_std =
      apply_column_stats(p.sp.test.covariate_matrix(), p.sp.covariate_stats);
  auto std_y = [&](const Eigen::VectorXd& u) {
    return ((u.array() - p.sp.target_stats.mean) / p.sp.target_stats.sd)
        .matrix()
        .eval();
  };
  p.y_train_std = std_y(p.sp.train.utilization_vector());
  p.y_test_std = std_y(p.sp.test.utilization_vector());
  for (std::size_t g = 0; g < data.poi_types.size(); ++g) {
    p.pois.push_back(data.poi_locations(static_cast<int>(g)));
  }
  return p;
}

EvalRow run_row(const std::string& label, const std::string& mode,
                const std::function<std::pair<double, double>()>& body) {
  EvalRow row;
  row.label = label;
  row.mode = mode;
  const auto start = std::chrono::steady_clock::now();
  try {
    const auto [r, ll] = body();
    row.rmse = r;
    row.loglik = ll;
  } catch (const std::exception& e) {
    row.failed = true;
    row.error = e.what();
  }
  row.train_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return row;
}

EvalRow model_row(const std::string& label, const std::string& mode,
                  const PreparedSplit& p, const ModelSpec& spec) {
  return run_row(label, mode, [&]() {
    const FittedModel model = train_model(p.sp.train, spec);
    const Prediction pred =
        predict(model, p.sp.test.covariate_matrix(), p.loc_test);
    const double r = rmse(pred.mean, p.y_test_std);
    const double ll = test_loglik(pred.mean, pred.variance, p.y_test_std);
    return std::make_pair(r, ll);
  });
}

}  // namespace

EvalReport run_benchmark(const Dataset& data, const BenchmarkConfig& config) {
  const PreparedSplit p = prepare(data, config.split);

  std::vector<double> dmax = config.dmax;
  if (dmax.empty()) dmax.assign(data.poi_types.size(), 0.3);
  if (dmax.size() != data.poi_types.size()) {
    throw parameter_error("benchmark: dmax size must match the type count");
  }

  EvalReport report;
  report.train_count = static_cast<int>(p.sp.train.stations.size());
  report.test_count = static_cast<int>(p.sp.test.stations.size());
  report.ratio = config.split.ratio;
  report.seed = config.split.seed;
  report.config_hash = config.hash_hex_id();

  const std::vector<std::pair<BaselineKind, std::string>> kinds = {
      {BaselineKind::kGwr, "GWR"},
      {BaselineKind::kLinearKriging, "Linear kriging"},
      {BaselineKind::kRfKriging, "RF kriging"},
      {BaselineKind::kNeuralNet, "Neural network"},
  };
  for (const auto& [kind, label] : kinds) {
    for (const FeatureMode mode : {FeatureMode::kNone, FeatureMode::kBoth}) {
      BaselineConfig bc;
      bc.kind = kind;
      bc.mode = mode;
      bc.dmax = dmax;
      bc.gwr_bandwidth = config.gwr_bandwidth;
      bc.rf = config.rf;
      bc.nn = config.nn;
      bc.nn_use_coords = config.nn_use_coords;
      bc.seed = Rng::mix(config.split.seed, fnv1a64(label));
      const std::string mode_label =
          mode == FeatureMode::kNone ? "[none]" : "[both]";
      report.rows.push_back(run_row(label, mode_label, [&]() {
        const FittedBaseline m = fit_baseline(bc, p.x_train_std, p.loc_train,
                                              p.y_train_std, p.pois);
        const BaselinePrediction pred =
            predict_baseline(m, p.x_test_std, p.loc_test);
        const double r = rmse(pred.mean, p.y_test_std);
        const double ll = test_loglik(pred.mean, pred.variance, p.y_test_std);
        return std::make_pair(r, ll);
      }));
    }
  }
  report.rows.push_back(model_row("POI model (ours)", "", p, config.model));
  return report;
}

std::vector<EvalReport> run_benchmark_repeats(const Dataset& data,
                                              const BenchmarkConfig& config) {
  if (config.repeats < 1) throw parameter_error("repeats must be >= 1");
  std::vector<EvalReport> reports;
  for (int rep = 0; rep < config.repeats; ++rep) {
    BenchmarkConfig c = config;
    c.split.seed = Rng::mix(config.split.seed, static_cast<std::uint64_t>(rep));
    c.model.seed = Rng::mix(config.model.seed, static_cast<std::uint64_t>(rep));
    reports.push_back(run_benchmark(data, c));
  }
  return reports;
}

EvalReport sensitivity(const Dataset& data, const BenchmarkConfig& config) {
  const PreparedSplit p = prepare(data, config.split);

  EvalReport report;
  report.train_count = static_cast<int>(p.sp.train.stations.size());
  report.test_count = static_cast<int>(p.sp.test.stations.size());
  report.ratio = config.split.ratio;
  report.seed = config.split.seed;
  report.config_hash = config.hash_hex_id();

  const std::vector<std::pair<ChargerKind, PointKernel>> cells = {
      {ChargerKind::kNeuralNet, PointKernel::kRelu},
      {ChargerKind::kLinear, PointKernel::kRelu},
      {ChargerKind::kNeuralNet, PointKernel::kGaussian},
      {ChargerKind::kLinear, PointKernel::kGaussian},
  };
  for (const auto& [charger, kernel] : cells) {
    ModelSpec spec = config.model;
    spec.charger = charger;
    spec.kernel = kernel;
    const std::string label = "POI model (" + charger_kind_name(charger) +
                              ", " + point_kernel_name(kernel) + ")";
    report.rows.push_back(model_row(label, "", p, spec));
  }
  return report;
}

// --- report writers -------------------------------------------------------------

std::string report_csv(const EvalReport& report) {
  std::string out = "label,mode,rmse,loglik,status,error\n";
  for (const EvalRow& r : report.rows) {
    out += r.label + "," + r.mode + ",";
    if (r.failed) {
      std::string msg = r.error;
      for (char& c : msg) {
        if (c == ',' || c == '\n') c = ';';
      }
      out += ",,failed," + msg + "\n";
    } else {
      out += format_double(r.rmse) + "," + format_double(r.loglik) + ",ok,\n";
    }
  }
  return out;
}

std::string report_text(const EvalReport& report) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "split: %d train / %d test (ratio %.2f, seed %llu)\n",
                report.train_count, report.test_count, report.ratio,
                static_cast<unsigned long long>(report.seed));
  std::string out = buf;
  out += "config: " + report.config_hash + "\n\n";
  std::snprintf(buf, sizeof(buf), "%-28s %-8s %10s %12s\n", "model", "mode",
                "RMSE", "log-lik");
  out += buf;
  out += std::string(60, '-') + "\n";
  for (const EvalRow& r : report.rows) {
    if (r.failed) {
      std::snprintf(buf, sizeof(buf), "%-28s %-8s     failed: %s\n",
                    r.label.c_str(), r.mode.c_str(), r.error.c_str());
    } else {
      std::snprintf(buf, sizeof(buf), "%-28s %-8s %10.4f %12.3f\n",
                    r.label.c_str(), r.mode.c_str(), r.rmse, r.loglik);
    }
    out += buf;
  }
  return out;
}

std::string report_timings_text(const EvalReport& report) {
  std::string out;
  char buf[160];
  for (const EvalRow& r : report.rows) {
    std::snprintf(buf, sizeof(buf), "%-28s %-8s %10.3f s\n", r.label.c_str(),
                  r.mode.c_str(), r.train_seconds);
    out += buf;
  }
  return out;
}

std::string repeats_csv(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw input_error("repeats_csv: no reports");
  std::string out = "label,mode,rmse_mean,rmse_sd,loglik_mean,loglik_sd,failures,runs\n";
  const std::size_t rows = reports.front().rows.size();
  for (std::size_t i = 0; i < rows; ++i) {
    const EvalRow& head = reports.front().rows[i];
    std::vector<double> rs, lls;
    int failures = 0;
    for (const EvalReport& rep : reports) {
      const EvalRow& row = rep.rows.at(i);
      if (row.label != head.label || row.mode != head.mode) {
        throw input_error("repeats_csv: reports have mismatched rows");
      }
      if (row.failed) {
        ++failures;
      } else {
        rs.push_back(row.rmse);
        lls.push_back(row.loglik);
      }
    }
    auto mean_sd = [](const std::vector<double>& v) {
      if (v.empty()) return std::make_pair(0.0, 0.0);
      double m = 0.0;
      for (double x : v) m += x;
      m /= static_cast<double>(v.size());
      double ss = 0.0;
      for (double x : v) ss += (x - m) * (x - m);
      const double sd =
          v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1))
                       : 0.0;
      return std::make_pair(m, sd);
    };
    const auto [rm, rsd] = mean_sd(rs);
    const auto [lm, lsd] = mean_sd(lls);
    out += head.label + "," + head.mode + "," + format_double(rm) + "," +
           format_double(rsd) + "," + format_double(lm) + "," +
           format_double(lsd) + "," + std::to_string(failures) + "," +
           std::to_string(reports.size()) + "\n";
  }
  return out;
}

}  // namespace poigp

// poigp: command-line front end for the POI influence model.
//
// Subcommands: ingest, train, interpret, predict, benchmark, sensitivity,
// synth. Every command writes into a hash-named run directory derived from
// its resolved settings, so reruns with identical inputs land in the same
// place with byte-identical files. Exit codes: 0 ok, 2 input problem,
// 3 training abort, 4 artifact problem.

#include <CLI11.hpp>

#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "poigp/baselines.hpp"
#include "poigp/dataset.hpp"
#include "poigp/eval.hpp"
#include "poigp/interpret.hpp"
#include "poigp/model.hpp"
#include "poigp/svi.hpp"

namespace fs = std::filesystem;
using namespace poigp;

namespace {

// --- small parsing helpers --------------------------------------------------

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  for (char c : s) {
    if (c == sep) {
      out.push_back(item);
      item.clear();
    } else {
      item += c;
    }
  }
  out.push_back(item);
  for (std::string& v : out) {
    while (!v.empty() && (v.front() == ' ' || v.front() == '\t')) v.erase(0, 1);
    while (!v.empty() && (v.back() == ' ' || v.back() == '\t')) v.pop_back();
  }
  if (out.size() == 1 && out[0].empty()) out.clear();
  return out;
}

double parse_double_or_throw(const std::string& s, const std::string& what) {
  double v = 0.0;
  if (!parse_double(s, v)) {
    throw input_error("not a number for " + what + ": '" + s + "'");
  }
  return v;
}

long long parse_int_or_throw(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw input_error("not an integer for " + what + ": '" + s + "'");
  }
}

bool parse_bool_or_throw(const std::string& s, const std::string& what) {
  if (s == "1" || s == "true") return true;
  if (s == "0" || s == "false") return false;
  throw input_error("not a boolean for " + what + ": '" + s + "'");
}

std::vector<double> parse_double_list(const std::string& s,
                                      const std::string& what) {
  std::vector<double> out;
  for (const std::string& item : split_list(s, ',')) {
    out.push_back(parse_double_or_throw(item, what));
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& s,
                                const std::string& what) {
  std::vector<int> out;
  for (const std::string& item : split_list(s, ',')) {
    out.push_back(static_cast<int>(parse_int_or_throw(item, what)));
  }
  return out;
}

// --- config-file override plumbing --------------------------------------------

// A config file holds "key = value" lines ('#' comments); keys are the long
// option names without dashes. Values override whatever the flags said.
struct Overrides {
  std::map<std::string, std::function<void(const std::string&)>> setters;
  std::set<std::string> applied;

  void apply_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open config file: " + path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      std::string trimmed;
      for (char c : line) {
        if (c != '\r') trimmed += c;
      }
      while (!trimmed.empty() && (trimmed.back() == ' ' || trimmed.back() == '\t')) {
        trimmed.pop_back();
      }
      std::size_t start = 0;
      while (start < trimmed.size() &&
             (trimmed[start] == ' ' || trimmed[start] == '\t')) {
        ++start;
      }
      trimmed.erase(0, start);
      if (trimmed.empty()) continue;
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos) {
        throw input_error(path + " line " + std::to_string(line_no) +
                          ": expected key = value");
      }
      std::string key = trimmed.substr(0, eq);
      std::string value = trimmed.substr(eq + 1);
      while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) {
        key.pop_back();
      }
      std::size_t vs = 0;
      while (vs < value.size() && (value[vs] == ' ' || value[vs] == '\t')) ++vs;
      value.erase(0, vs);
      const auto it = setters.find(key);
      if (it == setters.end()) {
        throw input_error(path + " line " + std::to_string(line_no) +
                          ": unknown config key '" + key + "'");
      }
      it->second(value);
      applied.insert(key);
    }
  }
};

std::string strip_dashes(const std::string& flag) {
  std::size_t i = 0;
  while (i < flag.size() && flag[i] == '-') ++i;
  return flag.substr(i);
}

void bind_string(CLI::App* cmd, Overrides& ov, const std::string& flag,
                 std::string& ref, const std::string& desc) {
  cmd->add_option(flag, ref, desc);
  ov.setters[strip_dashes(flag)] = [&ref](const std::string& v) { ref = v; };
}

void bind_double(CLI::App* cmd, Overrides& ov, const std::string& flag,
                 double& ref, const std::string& desc) {
  cmd->add_option(flag, ref, desc);
  const std::string key = strip_dashes(flag);
  ov.setters[key] = [&ref, key](const std::string& v) {
    ref = parse_double_or_throw(v, key);
  };
}

void bind_int(CLI::App* cmd, Overrides& ov, const std::string& flag, int& ref,
              const std::string& desc) {
  cmd->add_option(flag, ref, desc);
  const std::string key = strip_dashes(flag);
  ov.setters[key] = [&ref, key](const std::string& v) {
    ref = static_cast<int>(parse_int_or_throw(v, key));
  };
}

void bind_u64(CLI::App* cmd, Overrides& ov, const std::string& flag,
              std::uint64_t& ref, const std::string& desc) {
  cmd->add_option(flag, ref, desc);
  const std::string key = strip_dashes(flag);
  ov.setters[key] = [&ref, key](const std::string& v) {
    ref = static_cast<std::uint64_t>(parse_int_or_throw(v, key));
  };
}

void bind_flag(CLI::App* cmd, Overrides& ov, const std::string& flag,
               bool& ref, const std::string& desc) {
  cmd->add_flag(flag, ref, desc);
  const std::string key = strip_dashes(flag);
  ov.setters[key] = [&ref, key](const std::string& v) {
    ref = parse_bool_or_throw(v, key);
  };
}

// --- run directories -----------------------------------------------------------

std::string render_kv(const std::map<std::string, std::string>& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

fs::path make_run_dir(const std::string& out_root, const std::string& command,
                      const std::string& canonical_text) {
  const fs::path dir = fs::path(out_root) /
                       (command + "-" + hash_hex(fnv1a64(canonical_text)));
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw artifact_error("cannot create run directory: " + dir.string());
  write_text_file((dir / "config.txt").string(), canonical_text);
  return dir;
}

bool g_quiet = false;

void say(const std::string& line) {
  if (!g_quiet) std::cout << line << "\n";
}

// --- shared model flags ---------------------------------------------------------

struct ModelFlags {
  std::uint64_t seed = 0;
  int iterations = 5000;
  double step = 0.01;
  bool cosine_decay = false;
  std::string kernel = "relu";
  std::string charger = "neural";
  std::string hidden = "8,8";
  std::string types;  // comma list; empty = every registered type
  int inducing = 100;
  double init_theta = 0.3;
  double init_matern_var = 0.5;
  double init_matern_len = 1.0;
  double init_noise = 0.5;
  double init_alpha_var = 0.1;
  double charger_weight_sd = 0.1;
  double fixed_noise = 0.0;  // 0 = learn the noise
  bool freeze_kernel = false;
  bool freeze_charger = false;
};

void add_model_flags(CLI::App* cmd, Overrides& ov, ModelFlags& f,
                     bool with_seed = true) {
  if (with_seed) {
    bind_u64(cmd, ov, "--seed", f.seed,
             "Random seed for inducing points and charger init (required)");
  }
  bind_int(cmd, ov, "--iterations", f.iterations, "Optimizer iterations");
  bind_double(cmd, ov, "--step", f.step, "Optimizer step size");
  bind_flag(cmd, ov, "--cosine-decay", f.cosine_decay,
            "Stepped cosine decay of the step size");
  bind_string(cmd, ov, "--kernel", f.kernel,
              "POI kernel: relu or gaussian");
  bind_string(cmd, ov, "--charger", f.charger,
              "Covariate term: neural or linear");
  bind_string(cmd, ov, "--hidden", f.hidden,
              "Hidden layer widths for the neural covariate term, e.g. 8,8");
  bind_string(cmd, ov, "--types", f.types,
              "Comma list of POI types to model (default: all)");
  bind_int(cmd, ov, "--m", f.inducing,
           "Inducing point count (capped at the training size)");
  bind_double(cmd, ov, "--init-theta", f.init_theta,
              "Initial cut-off distance (km)");
  bind_double(cmd, ov, "--init-matern-var", f.init_matern_var,
              "Initial spatial variance");
  bind_double(cmd, ov, "--init-matern-len", f.init_matern_len,
              "Initial spatial lengthscale (km)");
  bind_double(cmd, ov, "--init-noise", f.init_noise, "Initial noise sd");
  bind_double(cmd, ov, "--init-alpha-var", f.init_alpha_var,
              "Initial per-POI effect variance");
  bind_double(cmd, ov, "--charger-weight-sd", f.charger_weight_sd,
              "Init sd of covariate-term weights");
  bind_double(cmd, ov, "--fixed-noise", f.fixed_noise,
              "Freeze the noise sd at this value (0 = learn it)");
  bind_flag(cmd, ov, "--freeze-kernel", f.freeze_kernel,
            "Keep kernel parameters at their initial values");
  bind_flag(cmd, ov, "--freeze-charger", f.freeze_charger,
            "Keep covariate-term weights at their initial values");
}

ModelSpec spec_from_flags(const ModelFlags& f) {
  ModelSpec spec;
  spec.charger = charger_kind_from_name(f.charger);
  spec.kernel = point_kernel_from_name(f.kernel);
  spec.charger_hidden = parse_int_list(f.hidden, "hidden");
  spec.poi_types = split_list(f.types, ',');
  spec.inducing_count = f.inducing;
  spec.seed = f.seed;
  spec.opt.iterations = f.iterations;
  spec.opt.step = f.step;
  spec.opt.cosine_decay = f.cosine_decay;
  spec.init_theta = f.init_theta;
  spec.init_matern_var = f.init_matern_var;
  spec.init_matern_len = f.init_matern_len;
  spec.init_noise_sd = f.init_noise;
  spec.init_alpha_var = f.init_alpha_var;
  spec.charger_weight_sd = f.charger_weight_sd;
  spec.train_kernel_params = !f.freeze_kernel;
  spec.train_charger = !f.freeze_charger;
  if (f.fixed_noise > 0.0) spec.fixed_noise_sd = f.fixed_noise;
  spec.validate();
  return spec;
}

void append_model_kv(std::map<std::string, std::string>& kv,
                     const ModelFlags& f) {
  kv["seed"] = std::to_string(f.seed);
  kv["iterations"] = std::to_string(f.iterations);
  kv["step"] = format_double(f.step);
  kv["cosine_decay"] = f.cosine_decay ? "1" : "0";
  kv["kernel"] = f.kernel;
  kv["charger"] = f.charger;
  kv["hidden"] = f.hidden;
  kv["types"] = f.types;
  kv["m"] = std::to_string(f.inducing);
  kv["init_theta"] = format_double(f.init_theta);
  kv["init_matern_var"] = format_double(f.init_matern_var);
  kv["init_matern_len"] = format_double(f.init_matern_len);
  kv["init_noise"] = format_double(f.init_noise);
  kv["init_alpha_var"] = format_double(f.init_alpha_var);
  kv["charger_weight_sd"] = format_double(f.charger_weight_sd);
  kv["fixed_noise"] = format_double(f.fixed_noise);
  kv["freeze_kernel"] = f.freeze_kernel ? "1" : "0";
  kv["freeze_charger"] = f.freeze_charger ? "1" : "0";
}

void require_seed(const CLI::App* cmd, const Overrides& ov) {
  if (cmd->count("--seed") == 0 && !ov.applied.count("seed")) {
    throw input_error("--seed is required (flag or config file)");
  }
}

// --- ingest -----------------------------------------------------------------

int cmd_ingest(const std::string& stations_path, const std::string& pois_path,
               const std::string& tagmap_path, const std::string& scale,
               const std::string& out_root) {
  StationSchema schema;
  if (scale == "auto") {
    schema.scale = UtilizationScale::kAuto;
  } else if (scale == "fraction") {
    schema.scale = UtilizationScale::kFraction;
  } else if (scale == "percent") {
    schema.scale = UtilizationScale::kPercent;
  } else {
    throw input_error("unknown --scale value: " + scale +
                      " (expected auto, fraction, percent)");
  }

  std::map<std::string, std::string> kv;
  kv["command"] = "ingest";
  kv["stations"] = stations_path;
  kv["pois"] = pois_path;
  kv["tagmap"] = tagmap_path;
  kv["scale"] = scale;
  const fs::path dir = make_run_dir(out_root, "ingest", render_kv(kv));

  const GeoPoint reference = reference_from_stations_csv(stations_path);
  StationLoadReport st_report;
  Dataset data;
  data.reference = reference;
  data.stations = load_stations(stations_path, schema, reference, &st_report);

  const std::vector<TagRule> rules =
      tagmap_path.empty() ? default_tag_map() : load_tag_map(tagmap_path);
  const PoiLoadResult pois = load_pois(pois_path, rules, reference);
  if (pois.pois.empty()) {
    throw input_error(pois_path + ": no usable POI records");
  }
  data.pois = pois.pois;
  data.poi_types = pois.poi_types;
  data.covariate_count = 4;
  data.covariate_names = {"pop_density", "ln_income", "car_density",
                          "major_road"};
  data.validate();
  save_bundle(data, (dir / "bundle.json").string());

  std::string report;
  report += "stations: " + std::to_string(st_report.rows) + "\n";
  report += "utilization scale: ";
  report += (st_report.percent_scale ? "percent" : "fraction");
  report += "\n";
  report += "reference: lon " + format_double(reference.lon) + ", lat " +
            format_double(reference.lat) + "\n";
  report += "pois loaded: " + std::to_string(pois.report.loaded) + "\n";
  report += "pois skipped (unmapped tags): " +
            std::to_string(pois.report.skipped_unmapped) + "\n";
  report += "pois skipped (non-point geometry): " +
            std::to_string(pois.report.skipped_geometry) + "\n";
  const std::vector<int> counts = data.poi_counts_by_type();
  for (std::size_t g = 0; g < data.poi_types.size(); ++g) {
    report += "  " + data.poi_types[g] + ": " + std::to_string(counts[g]) +
              "\n";
  }
  write_text_file((dir / "ingest_report.txt").string(), report);

  say("run directory: " + dir.string());
  say("stations: " + std::to_string(data.stations.size()) +
      ", poi types: " + std::to_string(data.poi_types.size()) +
      ", pois: " + std::to_string(data.pois.size()));
  return 0;
}

// --- train ------------------------------------------------------------------

int cmd_train(const std::string& bundle_path, const std::string& out_root,
              const ModelFlags& flags) {
  const ModelSpec spec = spec_from_flags(flags);

  std::map<std::string, std::string> kv;
  kv["command"] = "train";
  kv["bundle"] = bundle_path;
  append_model_kv(kv, flags);
  const fs::path dir = make_run_dir(out_root, "train", render_kv(kv));

  const Dataset data = load_bundle(bundle_path);
  const FittedModel model = train_model(data, spec);

  save_model(model, (dir / "model.json").string());
  write_trace_csv(model.trace, (dir / "trace.csv").string());

  std::string summary;
  summary += "final elbo = " + format_double(model.trace.back().elbo) + "\n";
  summary += "noise sd = " + format_double(model.noise_sd) + "\n";
  summary += "matern variance = " + format_double(model.matern_var) + "\n";
  summary += "matern lengthscale = " + format_double(model.matern_len) + "\n";
  for (std::size_t g = 0; g < model.poi_types.size(); ++g) {
    summary += "theta[" + model.poi_types[g] +
               "] = " + format_double(model.theta[g]) + " km\n";
  }
  summary += "inducing points = " + std::to_string(model.inducing.rows()) +
             "\n";
  write_text_file((dir / "summary.txt").string(), summary);

  say("run directory: " + dir.string());
  say("final elbo: " + format_double(model.trace.back().elbo));
  return 0;
}

// --- interpret --------------------------------------------------------------

std::string safe_label(const std::string& label) {
  std::string out;
  for (char c : label) {
    out += (std::isalnum(static_cast<unsigned char>(c)) != 0) ? c : '_';
  }
  return out;
}

int cmd_interpret(const std::string& model_path, const std::string& bundle_path,
                  const std::string& out_root, const std::string& components,
                  double cell_km, const std::string& bbox, double pad_km) {
  std::map<std::string, std::string> kv;
  kv["command"] = "interpret";
  kv["model"] = model_path;
  kv["bundle"] = bundle_path;
  kv["components"] = components;
  kv["cell"] = format_double(cell_km);
  kv["bbox"] = bbox;
  kv["pad"] = format_double(pad_km);
  const fs::path dir = make_run_dir(out_root, "interpret", render_kv(kv));

  const FittedModel model = load_model(model_path);
  const Dataset data = load_bundle(bundle_path);

  const std::vector<PoiEffect> effects = recover_alphas(model, data);
  const std::vector<TypeSummary> summaries = type_summaries(model, effects);
  write_text_file((dir / "type_summary.csv").string(),
                  type_summaries_csv(summaries));
  write_text_file((dir / "poi_effects.csv").string(),
                  poi_effects_csv(effects, model));

  RasterBounds bounds;
  if (!bbox.empty()) {
    const std::vector<double> b = parse_double_list(bbox, "bbox");
    if (b.size() != 4) {
      throw input_error("--bbox expects x_min,x_max,y_min,y_max in km");
    }
    bounds = {b[0], b[1], b[2], b[3]};
  } else {
    const PointMatrix loc = data.station_locations();
    bounds.x_min = loc.col(0).minCoeff() - pad_km;
    bounds.x_max = loc.col(0).maxCoeff() + pad_km;
    bounds.y_min = loc.col(1).minCoeff() - pad_km;
    bounds.y_max = loc.col(1).maxCoeff() + pad_km;
  }

  std::vector<std::string> wanted = split_list(components, ',');
  if (wanted.size() == 1 && wanted[0] == "all") {
    wanted.clear();
    wanted.push_back("h0");
    for (const std::string& t : model.poi_types) wanted.push_back(t);
  }
  for (const std::string& comp : wanted) {
    int process = -1;
    if (comp == "h0") {
      process = model.spatial_process();
    } else {
      for (std::size_t g = 0; g < model.poi_types.size(); ++g) {
        if (model.poi_types[g] == comp) process = static_cast<int>(g);
      }
    }
    if (process < 0) {
      throw input_error("unknown component: " + comp +
                        " (expected h0 or a modeled POI type)");
    }
    const Raster raster = spatial_grid(model, process, bounds, cell_km);
    const std::string base = "raster_" + safe_label(raster.label);
    write_text_file((dir / (base + ".csv")).string(), raster_csv(raster));
    write_text_file((dir / (base + ".geojson")).string(),
                    raster_geojson(raster, model.reference));
  }

  say("run directory: " + dir.string());
  for (const TypeSummary& s : summaries) {
    say(s.type + ": cutoff " + format_double(s.cutoff_km) + " km, avg effect " +
        format_double(s.avg_magnitude));
  }
  return 0;
}

// --- predict ----------------------------------------------------------------

int cmd_predict(const std::string& model_path, const std::string& bundle_path,
                const std::string& out_root) {
  std::map<std::string, std::string> kv;
  kv["command"] = "predict";
  kv["model"] = model_path;
  kv["bundle"] = bundle_path;
  const fs::path dir = make_run_dir(out_root, "predict", render_kv(kv));

  const FittedModel model = load_model(model_path);
  const Dataset data = load_bundle(bundle_path);
  const PointMatrix loc = data.station_locations();
  const Eigen::MatrixXd x = data.covariate_matrix();
  const Prediction pred = predict(model, x, loc);

  std::string csv = "id,x_km,y_km,mean,variance,utilization\n";
  for (std::size_t i = 0; i < data.stations.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    csv += data.stations[i].id + "," + format_double(loc(r, 0)) + "," +
           format_double(loc(r, 1)) + "," + format_double(pred.mean(r)) + "," +
           format_double(pred.variance(r)) + "," +
           format_double(pred.utilization(r)) + "\n";
  }
  write_text_file((dir / "predictions.csv").string(), csv);

  const Eigen::VectorXd y_std =
      ((data.utilization_vector().array() - model.target_stats.mean) /
       model.target_stats.sd)
          .matrix();
  std::string metrics;
  metrics += "points = " + std::to_string(data.stations.size()) + "\n";
  metrics += "rmse (standardized) = " + format_double(rmse(pred.mean, y_std)) +
             "\n";
  metrics += "log-likelihood (standardized) = " +
             format_double(test_loglik(pred.mean, pred.variance, y_std)) + "\n";
  write_text_file((dir / "metrics.txt").string(), metrics);

  say("run directory: " + dir.string());
  say("rmse (standardized): " + format_double(rmse(pred.mean, y_std)));
  return 0;
}

// --- benchmark / sensitivity ---------------------------------------------------

struct BenchFlags {
  std::uint64_t split_seed = 0;
  double ratio = 0.8;
  int repeats = 1;
  std::string dmax;  // comma list or single value; empty = 0.3 km
  double gwr_bandwidth = 0.0;
  int rf_trees = 200;
  int rf_depth = 8;
  int rf_min_leaf = 5;
  int rf_mtry = 0;
  int nn_iterations = 3000;
  double nn_step = 0.01;
  bool nn_no_coords = false;
  std::string tune;  // baseline kind to tune density radii with; empty = off
};

void add_bench_flags(CLI::App* cmd, Overrides& ov, BenchFlags& f) {
  bind_u64(cmd, ov, "--seed", f.split_seed, "Split seed (required)");
  bind_double(cmd, ov, "--ratio", f.ratio, "Train fraction of the split");
  bind_int(cmd, ov, "--repeats", f.repeats,
           "Repeated-split runs with derived seeds (mean/sd aggregate)");
  bind_string(cmd, ov, "--dmax", f.dmax,
              "Density radii in km: one value or a per-type comma list");
  bind_double(cmd, ov, "--gwr-bandwidth", f.gwr_bandwidth,
              "GWR bandwidth in km (0 = cross-validated)");
  bind_int(cmd, ov, "--rf-trees", f.rf_trees, "Random forest tree count");
  bind_int(cmd, ov, "--rf-depth", f.rf_depth, "Random forest max depth");
  bind_int(cmd, ov, "--rf-min-leaf", f.rf_min_leaf,
           "Random forest minimum leaf size");
  bind_int(cmd, ov, "--rf-mtry", f.rf_mtry,
           "Features per split (0 = ceil(sqrt(p)))");
  bind_int(cmd, ov, "--nn-iterations", f.nn_iterations,
           "Neural baseline iterations");
  bind_double(cmd, ov, "--nn-step", f.nn_step, "Neural baseline step size");
  bind_flag(cmd, ov, "--nn-no-coords", f.nn_no_coords,
            "Exclude planar coordinates from the neural baseline features");
  bind_string(cmd, ov, "--tune-dmax", f.tune,
              "Tune density radii by cross-validation with this baseline "
              "(gwr, linear_kriging, rf_kriging, neural_net); empty = off");
}

BenchmarkConfig bench_config(const Dataset& data, const BenchFlags& bf,
                             const ModelFlags& mf) {
  BenchmarkConfig config;
  config.split.seed = bf.split_seed;
  config.split.ratio = bf.ratio;
  config.model = spec_from_flags(mf);
  config.repeats = bf.repeats;
  config.gwr_bandwidth = bf.gwr_bandwidth;
  config.rf.trees = bf.rf_trees;
  config.rf.max_depth = bf.rf_depth;
  config.rf.min_leaf = bf.rf_min_leaf;
  config.rf.mtry = bf.rf_mtry;
  config.nn.iterations = bf.nn_iterations;
  config.nn.step = bf.nn_step;
  config.nn_use_coords = !bf.nn_no_coords;

  std::vector<double> dmax;
  if (!bf.dmax.empty()) dmax = parse_double_list(bf.dmax, "dmax");
  if (dmax.empty()) dmax.assign(data.poi_types.size(), 0.3);
  if (dmax.size() == 1 && data.poi_types.size() > 1) {
    dmax.assign(data.poi_types.size(), dmax[0]);
  }
  config.dmax = dmax;

  if (!bf.tune.empty()) {
    // Resolve radii before hashing so the run directory reflects them.
    const SplitResult sp = split(data, config.split);
    const Eigen::MatrixXd x_std =
        apply_column_stats(sp.train.covariate_matrix(), sp.covariate_stats);
    const Eigen::VectorXd y_std =
        ((sp.train.utilization_vector().array() - sp.target_stats.mean) /
         sp.target_stats.sd)
            .matrix();
    std::vector<PointMatrix> pois;
    for (std::size_t g = 0; g < data.poi_types.size(); ++g) {
      pois.push_back(data.poi_locations(static_cast<int>(g)));
    }
    BaselineConfig bc;
    bc.kind = baseline_kind_from_name(bf.tune);
    bc.mode = FeatureMode::kBoth;
    bc.dmax = config.dmax;
    bc.gwr_bandwidth = config.gwr_bandwidth > 0.0 ? config.gwr_bandwidth : 2.0;
    bc.rf = config.rf;
    bc.nn = config.nn;
    bc.nn_use_coords = config.nn_use_coords;
    config.dmax = tune_dmax(bc, x_std, sp.train.station_locations(), y_std,
                            pois, default_dmax_grid(), bf.split_seed);
  }
  return config;
}

int finish_report(const fs::path& dir, const EvalReport& report,
                  const std::string& stem) {
  write_text_file((dir / (stem + ".csv")).string(), report_csv(report));
  write_text_file((dir / (stem + ".txt")).string(), report_text(report));
  write_text_file((dir / "timings.txt").string(),
                  report_timings_text(report));
  say("run directory: " + dir.string());
  if (!g_quiet) std::cout << report_text(report);
  const bool all_failed =
      std::all_of(report.rows.begin(), report.rows.end(),
                  [](const EvalRow& r) { return r.failed; });
  return all_failed ? 3 : 0;
}

int cmd_benchmark(const std::string& bundle_path, const std::string& out_root,
                  const BenchFlags& bf, const ModelFlags& mf) {
  const Dataset data = load_bundle(bundle_path);
  const BenchmarkConfig config = bench_config(data, bf, mf);

  std::map<std::string, std::string> kv;
  kv["command"] = "benchmark";
  kv["bundle"] = bundle_path;
  kv["config_hash"] = config.hash_hex_id();
  const fs::path dir =
      make_run_dir(out_root, "benchmark",
                   render_kv(kv) + config.canonical_text());

  if (config.repeats > 1) {
    const std::vector<EvalReport> reports =
        run_benchmark_repeats(data, config);
    write_text_file((dir / "repeats.csv").string(), repeats_csv(reports));
    std::string timings;
    for (std::size_t i = 0; i < reports.size(); ++i) {
      write_text_file(
          (dir / ("report_rep" + std::to_string(i) + ".csv")).string(),
          report_csv(reports[i]));
      timings += "repeat " + std::to_string(i) + "\n" +
                 report_timings_text(reports[i]);
    }
    write_text_file((dir / "timings.txt").string(), timings);
    say("run directory: " + dir.string());
    return 0;
  }
  return finish_report(dir, run_benchmark(data, config), "report");
}

int cmd_sensitivity(const std::string& bundle_path, const std::string& out_root,
                    const BenchFlags& bf, const ModelFlags& mf) {
  const Dataset data = load_bundle(bundle_path);
  const BenchmarkConfig config = bench_config(data, bf, mf);

  std::map<std::string, std::string> kv;
  kv["command"] = "sensitivity";
  kv["bundle"] = bundle_path;
  kv["config_hash"] = config.hash_hex_id();
  const fs::path dir =
      make_run_dir(out_root, "sensitivity",
                   render_kv(kv) + config.canonical_text());
  return finish_report(dir, sensitivity(data, config), "sensitivity");
}

// --- synth ------------------------------------------------------------------

struct SynthFlags {
  std::uint64_t seed = 0;
  int stations = 300;
  std::string types =
      "Education:60:0.64:0.12,PublicTransport:80:0.35:0.05,"
      "Restaurant:120:0.3:0.05,Store:100:0.28:0.04";
  std::string kernel = "relu";
  double matern_var = 0.5;
  double matern_len = 1.0;
  double noise = 0.1;
  int covariates = 4;
  std::string weights = "0.4,-0.2,0.3,0.1";
  double bias = 0.0;
  double extent = 5.0;
};

int cmd_synth(const std::string& out_root, const SynthFlags& f) {
  SynthConfig config;
  config.seed = f.seed;
  config.stations = f.stations;
  config.kernel = point_kernel_from_name(f.kernel);
  config.matern_var = f.matern_var;
  config.matern_len = f.matern_len;
  config.noise_sd = f.noise;
  config.covariate_count = f.covariates;
  config.charger_bias = f.bias;
  config.bounds = {0.0, f.extent, 0.0, f.extent};
  if (!f.weights.empty()) {
    const std::vector<double> w = parse_double_list(f.weights, "weights");
    config.charger_weights =
        Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<long>(w.size()));
  }
  for (const std::string& quad : split_list(f.types, ',')) {
    const std::vector<std::string> parts = split_list(quad, ':');
    if (parts.size() != 4) {
      throw input_error("--types entries must be name:count:theta:sigma_alpha");
    }
    config.type_names.push_back(parts[0]);
    config.poi_counts.push_back(
        static_cast<int>(parse_int_or_throw(parts[1], "poi count")));
    config.theta.push_back(parse_double_or_throw(parts[2], "theta"));
    config.sigma_alpha.push_back(parse_double_or_throw(parts[3], "sigma_alpha"));
  }

  const fs::path dir =
      make_run_dir(out_root, "synth", config.canonical_text());
  const SynthResult result = synth_generate(config);
  save_bundle(result.data, (dir / "bundle.json").string());
  write_text_file((dir / "truth.json").string(),
                  ground_truth_json(result.truth));

  say("run directory: " + dir.string());
  say("stations: " + std::to_string(result.data.stations.size()) +
      ", pois: " + std::to_string(result.data.pois.size()));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"POI influence model for charging-station utilization"};
  app.require_subcommand(1);
  app.add_flag("--quiet", g_quiet, "Suppress progress output");

  // ingest
  auto* ingest = app.add_subcommand(
      "ingest", "Validate and bundle station/POI inputs");
  Overrides ingest_ov;
  std::string in_stations, in_pois, in_tagmap, in_scale = "auto",
              in_out = "runs", in_config;
  ingest->add_option("--stations", in_stations,
                     "Station CSV (id, lon, lat, utilization, covariates)")
      ->required();
  ingest_ov.setters["stations"] = [&](const std::string& v) { in_stations = v; };
  ingest->add_option("--pois", in_pois, "POI GeoJSON or CSV")->required();
  ingest_ov.setters["pois"] = [&](const std::string& v) { in_pois = v; };
  bind_string(ingest, ingest_ov, "--tagmap", in_tagmap,
              "Tag-to-type mapping file (default: built-in map)");
  bind_string(ingest, ingest_ov, "--scale", in_scale,
              "Utilization scale: auto, fraction, percent");
  bind_string(ingest, ingest_ov, "--out", in_out, "Output root directory");
  ingest->add_option("--config", in_config,
                     "key = value file; entries override flags");

  // train
  auto* train = app.add_subcommand("train", "Fit the POI influence model");
  Overrides train_ov;
  std::string tr_bundle, tr_out = "runs", tr_config;
  ModelFlags tr_flags;
  train->add_option("--bundle", tr_bundle, "Dataset bundle from ingest/synth")
      ->required();
  train_ov.setters["bundle"] = [&](const std::string& v) { tr_bundle = v; };
  bind_string(train, train_ov, "--out", tr_out, "Output root directory");
  add_model_flags(train, train_ov, tr_flags);
  train->add_option("--config", tr_config,
                    "key = value file; entries override flags");

  // interpret
  auto* interp = app.add_subcommand(
      "interpret", "Cut-off distances, POI effects, latent-surface rasters");
  Overrides interp_ov;
  std::string it_model, it_bundle, it_out = "runs", it_components = "all",
              it_bbox, it_config;
  double it_cell = 0.1, it_pad = 0.5;
  interp->add_option("--model", it_model, "Model file from train")->required();
  interp_ov.setters["model"] = [&](const std::string& v) { it_model = v; };
  interp->add_option("--bundle", it_bundle, "Bundle the model was trained on")
      ->required();
  interp_ov.setters["bundle"] = [&](const std::string& v) { it_bundle = v; };
  bind_string(interp, interp_ov, "--out", it_out, "Output root directory");
  bind_string(interp, interp_ov, "--components", it_components,
              "Comma list of h0 and/or POI type names, or 'all'");
  bind_double(interp, interp_ov, "--cell", it_cell, "Raster cell size in km");
  bind_string(interp, interp_ov, "--bbox", it_bbox,
              "Raster bounds x_min,x_max,y_min,y_max in km "
              "(default: station extent plus padding)");
  bind_double(interp, interp_ov, "--pad", it_pad,
              "Padding around the station extent for the default bounds (km)");
  interp->add_option("--config", it_config,
                     "key = value file; entries override flags");

  // predict
  auto* pred = app.add_subcommand(
      "predict", "Predict utilization at a bundle's stations");
  Overrides pred_ov;
  std::string pr_model, pr_bundle, pr_out = "runs", pr_config;
  pred->add_option("--model", pr_model, "Model file from train")->required();
  pred_ov.setters["model"] = [&](const std::string& v) { pr_model = v; };
  pred->add_option("--bundle", pr_bundle, "Bundle with query stations")
      ->required();
  pred_ov.setters["bundle"] = [&](const std::string& v) { pr_bundle = v; };
  bind_string(pred, pred_ov, "--out", pr_out, "Output root directory");
  pred->add_option("--config", pr_config,
                   "key = value file; entries override flags");

  // benchmark
  auto* bench = app.add_subcommand(
      "benchmark", "Out-of-sample comparison against the four baselines");
  Overrides bench_ov;
  std::string be_bundle, be_out = "runs", be_config;
  BenchFlags be_flags;
  ModelFlags be_model;
  bench->add_option("--bundle", be_bundle, "Dataset bundle")->required();
  bench_ov.setters["bundle"] = [&](const std::string& v) { be_bundle = v; };
  bind_string(bench, bench_ov, "--out", be_out, "Output root directory");
  add_bench_flags(bench, bench_ov, be_flags);
  add_model_flags(bench, bench_ov, be_model, false);
  bind_u64(bench, bench_ov, "--model-seed", be_model.seed,
           "Seed for the model row (default 0)");
  bench->add_option("--config", be_config,
                    "key = value file; entries override flags");

  // sensitivity
  auto* sens = app.add_subcommand(
      "sensitivity", "Charger/kernel grid on one shared split");
  Overrides sens_ov;
  std::string se_bundle, se_out = "runs", se_config;
  BenchFlags se_flags;
  ModelFlags se_model;
  sens->add_option("--bundle", se_bundle, "Dataset bundle")->required();
  sens_ov.setters["bundle"] = [&](const std::string& v) { se_bundle = v; };
  bind_string(sens, sens_ov, "--out", se_out, "Output root directory");
  add_bench_flags(sens, sens_ov, se_flags);
  add_model_flags(sens, sens_ov, se_model, false);
  bind_u64(sens, sens_ov, "--model-seed", se_model.seed,
           "Seed for the model rows (default 0)");
  sens->add_option("--config", se_config,
                   "key = value file; entries override flags");

  // synth
  auto* synth = app.add_subcommand(
      "synth", "Generate a synthetic dataset with known ground truth");
  Overrides synth_ov;
  std::string sy_out = "runs", sy_config;
  SynthFlags sy_flags;
  bind_string(synth, synth_ov, "--out", sy_out, "Output root directory");
  bind_u64(synth, synth_ov, "--seed", sy_flags.seed,
           "Generator seed (required)");
  bind_int(synth, synth_ov, "--stations", sy_flags.stations, "Station count");
  bind_string(synth, synth_ov, "--types", sy_flags.types,
              "Per-type spec name:count:theta:sigma_alpha, comma separated "
              "(names must be sorted)");
  bind_string(synth, synth_ov, "--kernel", sy_flags.kernel,
              "POI kernel: relu or gaussian");
  bind_double(synth, synth_ov, "--matern-var", sy_flags.matern_var,
              "Spatial surface variance (0 = off)");
  bind_double(synth, synth_ov, "--matern-len", sy_flags.matern_len,
              "Spatial surface lengthscale (km)");
  bind_double(synth, synth_ov, "--noise", sy_flags.noise, "Noise sd");
  bind_int(synth, synth_ov, "--covariates", sy_flags.covariates,
           "Covariate count");
  bind_string(synth, synth_ov, "--weights", sy_flags.weights,
              "True covariate weights, comma separated");
  bind_double(synth, synth_ov, "--bias", sy_flags.bias,
              "True covariate-term bias");
  bind_double(synth, synth_ov, "--extent", sy_flags.extent,
              "Square region side length (km)");
  synth->add_option("--config", sy_config,
                    "key = value file; entries override flags");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*ingest) {
      if (!in_config.empty()) ingest_ov.apply_file(in_config);
      return cmd_ingest(in_stations, in_pois, in_tagmap, in_scale, in_out);
    }
    if (*train) {
      if (!tr_config.empty()) train_ov.apply_file(tr_config);
      require_seed(train, train_ov);
      return cmd_train(tr_bundle, tr_out, tr_flags);
    }
    if (*interp) {
      if (!it_config.empty()) interp_ov.apply_file(it_config);
      return cmd_interpret(it_model, it_bundle, it_out, it_components, it_cell,
                           it_bbox, it_pad);
    }
    if (*pred) {
      if (!pr_config.empty()) pred_ov.apply_file(pr_config);
      return cmd_predict(pr_model, pr_bundle, pr_out);
    }
    if (*bench) {
      if (!be_config.empty()) bench_ov.apply_file(be_config);
      require_seed(bench, bench_ov);
      return cmd_benchmark(be_bundle, be_out, be_flags, be_model);
    }
    if (*sens) {
      if (!se_config.empty()) sens_ov.apply_file(se_config);
      require_seed(sens, sens_ov);
      return cmd_sensitivity(se_bundle, se_out, se_flags, se_model);
    }
    if (*synth) {
      if (!sy_config.empty()) synth_ov.apply_file(sy_config);
      require_seed(synth, synth_ov);
      return cmd_synth(sy_out, sy_flags);
    }
  } catch (const artifact_error& e) {
    std::cerr << "artifact error: " << e.what() << "\n";
    return 4;
  } catch (const training_error& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return 3;
  } catch (const input_error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

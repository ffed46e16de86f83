// Acceptance gate: one line per criterion, [PASS]/[FAIL]/[SKIP].
// Run a single criterion with `acceptance <n>`. Exit code 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "poigp/baselines.hpp"
#include "poigp/dataset.hpp"
#include "poigp/eval.hpp"
#include "poigp/geometry.hpp"
#include "poigp/interpret.hpp"
#include "poigp/kernels.hpp"
#include "poigp/model.hpp"
#include "poigp/svi.hpp"

namespace fs = std::filesystem;
using namespace poigp;

namespace {

struct Outcome {
  bool pass = false;
  bool skip = false;
  std::string detail;
};

Outcome pass(const std::string& d) { return {true, false, d}; }
Outcome fail(const std::string& d) { return {false, false, d}; }
Outcome skip(const std::string& d) { return {false, true, d}; }

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

PointMatrix random_points(Rng& rng, int n, double extent) {
  PointMatrix p(n, 2);
  for (int i = 0; i < n; ++i) {
    p(i, 0) = rng.uniform(-extent, extent);
    p(i, 1) = rng.uniform(-extent, extent);
  }
  return p;
}

double gaussian_lml(const Eigen::VectorXd& y, const Eigen::MatrixXd& cov) {
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const Eigen::VectorXd alpha = llt.solve(y);
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < cov.rows(); ++i) {
    logdet += 2.0 * std::log(llt.matrixL()(i, i));
  }
  return -0.5 * (y.dot(alpha) + logdet +
                 y.size() * std::log(2.0 * std::numbers::pi));
}

// The four-type synthetic family used for recovery and benchmarking. The
// planted cut-offs follow the real-data ordering: education reaches to
// 0.64 km and dominates in magnitude. Education is sparse and strong so its
// broad bumps read as individual craters rather than a smooth surface, and
// the planted spatial field is tiny so it cannot absorb them.
SynthConfig recovery_config(std::uint64_t seed, PointKernel kind) {
  SynthConfig sc;
  sc.seed = seed;
  sc.stations = 300;
  sc.kernel = kind;
  sc.type_names = {"Education", "PublicTransport", "Restaurant", "Store"};
  sc.poi_counts = {15, 20, 22, 22};
  sc.theta = {0.64, 0.35, 0.30, 0.28};
  sc.sigma_alpha = {1.0, 0.40, 0.40, 0.40};
  sc.matern_var = 0.01;
  sc.matern_len = 1.0;
  sc.noise_sd = 0.04;
  sc.charger_weights = Eigen::Vector4d(0.4, -0.2, 0.3, 0.1);
  return sc;
}

// Training setup that recovers planted parameters: the spatial process
// starts tiny and short so the POI processes claim their own variance
// first, and theta starts mid-range between the planted scales.
ModelSpec recovery_spec(PointKernel kind, int iterations, int inducing) {
  ModelSpec spec;
  spec.charger = ChargerKind::kLinear;
  spec.kernel = kind;
  spec.inducing_count = inducing;
  spec.seed = 1;
  spec.opt.iterations = iterations;
  spec.opt.step = 0.03;
  spec.opt.cosine_decay = true;
  spec.init_theta = 0.45;
  spec.init_alpha_var = 0.2;
  spec.init_matern_var = 0.01;
  spec.init_matern_len = 0.3;
  spec.init_noise_sd = 0.1;
  return spec;
}

// --- criterion 1: paper-number reproduction (needs the original data) -------

Outcome criterion1() {
  const fs::path dir = fs::path(POIGP_DATA_DIR) / "amsterdam";
  const fs::path stations = dir / "stations.csv";
  const fs::path pois = dir / "pois.geojson";
  if (!fs::exists(stations) || !fs::exists(pois)) {
    return skip("original station/POI data not present under " +
                dir.string() + "; synthetic criteria 2-8 govern acceptance");
  }

  const GeoPoint reference = reference_from_stations_csv(stations.string());
  Dataset data;
  data.reference = reference;
  data.stations = load_stations(stations.string(), StationSchema{}, reference);
  const PoiLoadResult loaded =
      load_pois(pois.string(), default_tag_map(), reference);
  data.pois = loaded.pois;
  data.poi_types = loaded.poi_types;
  data.covariate_count = 4;
  data.covariate_names = {"pop_density", "ln_income", "car_density",
                          "major_road"};
  data.validate();

  BenchmarkConfig config;
  config.split.seed = 1;
  config.model.seed = 1;
  const EvalReport report = run_benchmark(data, config);
  const EvalRow& ours = report.rows.back();
  if (ours.failed) return fail("model row failed: " + ours.error);
  for (std::size_t i = 0; i + 1 < report.rows.size(); ++i) {
    if (!report.rows[i].failed && report.rows[i].rmse <= ours.rmse) {
      return fail(report.rows[i].label + " " + report.rows[i].mode +
                  " beats the model on rmse");
    }
  }
  if (std::abs(ours.rmse - 1.066) > 0.05) {
    return fail("rmse " + num(ours.rmse) + " outside 1.066 +/- 0.05");
  }
  if (std::abs(ours.loglik - (-81.561)) > 2.0) {
    return fail("loglik " + num(ours.loglik) + " outside -81.561 +/- 2.0");
  }
  return pass("rmse " + num(ours.rmse) + ", loglik " + num(ours.loglik));
}

// --- criterion 2: synthetic parameter recovery ------------------------------

Outcome criterion2() {
  const std::vector<double> truth = {0.64, 0.35, 0.30, 0.28};
  int ok = 0;
  double worst_seconds = 0.0;
  std::string notes;
  for (int s = 0; s < 10; ++s) {
    const auto t0 = std::chrono::steady_clock::now();
    const SynthResult r = synth_generate(recovery_config(
        100 + static_cast<std::uint64_t>(s), PointKernel::kGaussian));
    ModelSpec spec = recovery_spec(PointKernel::kGaussian, 15000, 75);
    spec.seed = 100 + static_cast<std::uint64_t>(s);
    const FittedModel model = train_model(r.data, spec);

    bool theta_ok = true;
    for (int g = 0; g < 4; ++g) {
      const double rel = std::abs(model.theta[static_cast<std::size_t>(g)] -
                                  truth[static_cast<std::size_t>(g)]) /
                         truth[static_cast<std::size_t>(g)];
      if (rel > 0.30) theta_ok = false;
    }

    const std::vector<PoiEffect> effects = recover_alphas(model, r.data);
    double edu = 0.0;
    double best_other = -1.0;
    for (int g = 0; g < 4; ++g) {
      const double mag = average_magnitude(effects, g).first;
      if (g == 0) {
        edu = mag;
      } else {
        best_other = std::max(best_other, mag);
      }
    }
    const bool rank_ok = edu > best_other;

    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    worst_seconds = std::max(worst_seconds, seconds);
    if (theta_ok && rank_ok) {
      ++ok;
    } else {
      notes += " seed" + std::to_string(s) + (theta_ok ? "" : ":theta") +
               (rank_ok ? "" : ":rank");
    }
  }
  const std::string detail = std::to_string(ok) +
                             "/10 seeds recovered (cutoffs within 30%, "
                             "education magnitude first); slowest seed " +
                             num(worst_seconds) + " s" + notes;
  if (ok < 8) return fail(detail);
  if (worst_seconds > 300.0) return fail(detail + "; over 5 min per seed");
  return pass(detail);
}

// --- criterion 3: exact-gp oracle -------------------------------------------

Outcome criterion3() {
  // Spatial-only instance with every training point inducing and the kernel
  // frozen: the optimized bound must reach the exact marginal likelihood.
  const int n = 16;
  Rng rng(301);
  const PointMatrix s = random_points(rng, n, 2.0);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y(i) = rng.normal(0.0, 0.8);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, 1);

  ModelSpec spec;
  spec.charger = ChargerKind::kLinear;
  spec.poi_types = {};
  spec.inducing_count = n;
  spec.seed = 3;
  spec.opt.iterations = 20000;
  spec.opt.step = 0.02;
  spec.opt.cosine_decay = true;
  spec.train_kernel_params = false;
  spec.train_charger = false;
  spec.charger_weight_sd = 0.0;
  spec.init_matern_var = 1.0;
  spec.init_matern_len = 0.7;
  spec.fixed_noise_sd = 0.4;

  SviEngine engine(x, s, y, {}, s, spec, Mlp(1, {}, rng, 0.0));
  engine.run_adam();
  const double elbo = engine.elbo();

  const Eigen::MatrixXd k_raw =
      matern32_matrix(geo::pairwise_distances(s, s), 1.0, 0.7);
  Eigen::MatrixXd k = k_raw;
  k.diagonal().array() += kJitterStart;  // same prior jitter as the engine
  Eigen::MatrixXd cov = k;
  cov.diagonal().array() += 0.16;
  const double lml = gaussian_lml(y, cov);
  const double gap = std::abs(elbo - lml);
  if (!(gap < 1e-3)) {
    return fail("optimized elbo " + num(elbo) + " vs lml " + num(lml) +
                ", gap " + num(gap));
  }

  // Posterior marginals against direct Gaussian conditioning at the
  // analytic optimum of the variational family.
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
  const Eigen::VectorXd m_star = k * ldlt.solve(y);
  const Eigen::MatrixXd s_star = k - k * ldlt.solve(k);
  const Eigen::MatrixXd s_sym = 0.5 * (s_star + s_star.transpose());
  VariationalProcess q;
  q.m = m_star;
  q.l = Eigen::LLT<Eigen::MatrixXd>(s_sym).matrixL();

  Rng qrng(302);
  const PointMatrix query = random_points(qrng, 12, 2.5);
  const Eigen::MatrixXd k_uq =
      matern32_matrix(geo::pairwise_distances(s, query), 1.0, 0.7);
  const PosteriorMarginals pm = posterior_marginals(
      "oracle", k_raw, k_uq, Eigen::VectorXd::Constant(12, 1.0), q);

  const Eigen::VectorXd direct_mean = k_uq.transpose() * ldlt.solve(y);
  double max_diff = 0.0;
  for (int i = 0; i < 12; ++i) {
    const Eigen::VectorXd ki = k_uq.col(i);
    const double direct_var = 1.0 - ki.dot(ldlt.solve(ki));
    max_diff = std::max(max_diff, std::abs(pm.mean(i) - direct_mean(i)));
    max_diff = std::max(max_diff, std::abs(pm.variance(i) - direct_var));
  }
  if (!(max_diff < 1e-6)) {
    return fail("posterior vs direct conditioning differs by " +
                num(max_diff));
  }
  return pass("elbo gap " + num(gap) + " nats; conditioning diff " +
              num(max_diff));
}

// --- criterion 4: gradient correctness --------------------------------------

Outcome criterion4() {
  const int n = 10;
  Rng rng(401);
  const PointMatrix s = random_points(rng, n, 1.5);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y(i) = rng.normal(0.0, 1.0);
  Eigen::MatrixXd x(n, 2);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = rng.normal();
    x(i, 1) = rng.normal();
  }

  ModelSpec spec;
  spec.poi_types = {"A", "B"};
  spec.charger_hidden = {3};
  spec.inducing_count = 5;
  spec.seed = 5;

  const std::vector<PointMatrix> pois = {random_points(rng, 6, 1.5),
                                         random_points(rng, 4, 1.5)};
  const InducingSet inducing = sample_inducing(s, 5, spec.seed);
  Rng mlp_rng(7);
  SviEngine engine(x, s, y, pois, inducing.locations, spec,
                   Mlp(2, {3}, mlp_rng, 0.4));

  const Eigen::VectorXd base = engine.params();
  const double h = 1e-5;
  int accepted = 0;
  int attempts = 0;
  double worst = 0.0;
  Rng draw_rng(402);
  while (accepted < 20 && attempts < 200) {
    ++attempts;
    Eigen::VectorXd p = base;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      p(i) += draw_rng.normal(0.0, 0.3);
    }
    engine.set_params(p);

    // Skip configurations that sit on a ReLU kink of either distance set.
    bool near_kink = false;
    for (int g = 0; g < 2 && !near_kink; ++g) {
      const double theta = engine.theta(g);
      for (const auto& d :
           {geo::pairwise_distances(inducing.locations, pois[g]),
            geo::pairwise_distances(s, pois[g])}) {
        if (((d.array() - theta).abs() < 1e-3).any()) near_kink = true;
      }
    }
    if (near_kink) continue;
    ++accepted;

    const Eigen::VectorXd grad = engine.evaluate(true).grad;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      Eigen::VectorXd lo = p, hi = p;
      lo(i) -= h;
      hi(i) += h;
      engine.set_params(hi);
      const double f_hi = engine.elbo();
      engine.set_params(lo);
      const double f_lo = engine.elbo();
      engine.set_params(p);
      const double fd = (f_hi - f_lo) / (2.0 * h);
      const double rel = std::abs(fd - grad(i)) /
                         std::max({1.0, std::abs(fd), std::abs(grad(i))});
      worst = std::max(worst, rel);
    }
  }
  if (accepted < 20) {
    return fail("only " + std::to_string(accepted) +
                " kink-free draws out of 200 attempts");
  }
  if (!(worst < 1e-4)) {
    return fail("worst relative gradient error " + num(worst));
  }
  return pass("20 draws, worst relative error " + num(worst));
}

// --- criterion 5: kernel psd suite ------------------------------------------

Outcome criterion5() {
  Rng rng(501);
  double min_eig = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    const int n = 2 + static_cast<int>(rng.bounded(24));
    const PointMatrix s = random_points(rng, n, 3.0);
    const int n_poi = 1 + static_cast<int>(rng.bounded(20));
    const PointMatrix omega = random_points(rng, n_poi, 3.0);
    const Eigen::MatrixXd d = geo::pairwise_distances(s, omega);
    const double theta = rng.uniform(0.05, 1.5);
    const double av = rng.uniform(0.01, 2.0);

    for (const auto kind : {PointKernel::kRelu, PointKernel::kGaussian}) {
      const Eigen::MatrixXd c = poi_cov(d, d, kind, theta, av);
      min_eig = std::min(
          min_eig,
          Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(c)
              .eigenvalues()
              .minCoeff());
    }
    const Eigen::MatrixXd c_mat =
        matern32_matrix(geo::pairwise_distances(s, s), rng.uniform(0.1, 2.0),
                        rng.uniform(0.1, 2.0));
    min_eig = std::min(
        min_eig, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(c_mat)
                     .eigenvalues()
                     .minCoeff());
  }
  if (!(min_eig >= -1e-8)) {
    return fail("gram matrix with eigenvalue " + num(min_eig));
  }

  // Monte-carlo covariance oracle for the finite-rank POI kernel.
  Rng orng(502);
  const PointMatrix omega = random_points(orng, 8, 0.6);
  PointMatrix s(3, 2);
  s << 0.1, 0.0, -0.2, 0.3, 0.4, -0.1;
  const Eigen::MatrixXd d = geo::pairwise_distances(s, omega);
  const Eigen::MatrixXd analytic =
      poi_cov(d, d, PointKernel::kRelu, 0.55, 0.8);
  const Eigen::MatrixXd phi =
      point_kernel_matrix(d, PointKernel::kRelu, 0.55);

  const int draws = 100000;
  Eigen::MatrixXd emp = Eigen::MatrixXd::Zero(3, 3);
  Rng sampler(503);
  const double sd = std::sqrt(0.8);
  for (int t = 0; t < draws; ++t) {
    Eigen::VectorXd alpha(omega.rows());
    for (Eigen::Index j = 0; j < alpha.size(); ++j) {
      alpha(j) = sampler.normal(0.0, sd);
    }
    const Eigen::Vector3d hv = phi * alpha;
    emp += hv * hv.transpose();
  }
  emp /= draws;
  double worst_z = 0.0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const double se = std::sqrt((analytic(i, i) * analytic(j, j) +
                                   analytic(i, j) * analytic(i, j)) /
                                  draws);
      worst_z = std::max(worst_z, std::abs(emp(i, j) - analytic(i, j)) / se);
    }
  }
  if (!(worst_z < 3.0)) {
    return fail("monte-carlo covariance off by " + num(worst_z) +
                " standard errors");
  }
  return pass("min eigenvalue " + num(min_eig) + "; mc oracle within " +
              num(worst_z) + " se");
}

// --- criterion 6: well-specified benchmark ordering --------------------------

BenchmarkConfig ordering_config(std::uint64_t seed, PointKernel kind) {
  BenchmarkConfig config;
  config.split.seed = seed;
  config.model = recovery_spec(kind, 6000, 60);
  return config;
}

Outcome criterion6() {
  int best = 0;
  std::string notes;
  for (int s = 0; s < 10; ++s) {
    const Dataset data =
        synth_generate(recovery_config(200 + static_cast<std::uint64_t>(s),
                                       PointKernel::kGaussian))
            .data;
    const EvalReport report = run_benchmark(
        data, ordering_config(static_cast<std::uint64_t>(s),
                              PointKernel::kGaussian));
    const EvalRow& ours = report.rows.back();
    bool strict = !ours.failed;
    for (std::size_t i = 0; i + 1 < report.rows.size(); ++i) {
      if (report.rows[i].failed || report.rows[i].rmse <= ours.rmse) {
        strict = false;
      }
    }
    if (strict) {
      ++best;
    } else {
      notes += " seed" + std::to_string(s);
    }
  }
  if (best < 8) {
    return fail(std::to_string(best) +
                "/10 seeds rank the model strictly best;" + notes);
  }

  // Kernel sensitivity: data generated with the relu bump should favor the
  // relu variants over the gaussian ones.
  int relu_wins = 0;
  for (int s = 0; s < 3; ++s) {
    const Dataset data =
        synth_generate(recovery_config(250 + static_cast<std::uint64_t>(s),
                                       PointKernel::kRelu))
            .data;
    const EvalReport grid = sensitivity(
        data, ordering_config(300 + static_cast<std::uint64_t>(s),
                              PointKernel::kRelu));
    // Rows: neural+relu, linear+relu, neural+gaussian, linear+gaussian.
    if (!grid.rows[0].failed && !grid.rows[2].failed &&
        grid.rows[0].rmse < grid.rows[2].rmse &&
        grid.rows[1].rmse < grid.rows[3].rmse) {
      ++relu_wins;
    }
  }
  if (relu_wins < 2) {
    return fail("relu beat gaussian on only " + std::to_string(relu_wins) +
                "/3 sensitivity seeds");
  }
  return pass(std::to_string(best) + "/10 seeds strictly best; relu beat "
              "gaussian on " + std::to_string(relu_wins) + "/3 grids");
}

// --- criterion 7: baseline oracles ------------------------------------------

Outcome criterion7() {
  // Depth-one tree vs brute force.
  Rng rng(701);
  const int n = 40;
  Eigen::MatrixXd x(n, 3);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 3; ++j) x(i, j) = rng.uniform(0.0, 1.0);
    y(i) = (x(i, 1) > 0.6 ? 1.0 : -1.0) + 0.2 * rng.normal();
  }
  RfConfig config;
  config.max_depth = 1;
  config.min_leaf = 3;
  config.bootstrap = false;
  config.mtry = 3;
  std::vector<int> rows(n);
  for (int i = 0; i < n; ++i) rows[i] = i;
  Rng tree_rng(1);
  const RegressionTree tree = fit_tree(x, y, rows, config, tree_rng);
  double tree_sse = 0.0;
  for (int i = 0; i < n; ++i) {
    const double p = tree.predict_row(x.row(i));
    tree_sse += (y(i) - p) * (y(i) - p);
  }
  double best_sse = std::numeric_limits<double>::infinity();
  for (int f = 0; f < 3; ++f) {
    std::vector<int> order(rows);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return x(a, f) < x(b, f); });
    for (int cut = config.min_leaf; cut <= n - config.min_leaf; ++cut) {
      if (x(order[static_cast<std::size_t>(cut - 1)], f) ==
          x(order[static_cast<std::size_t>(cut)], f)) {
        continue;
      }
      double sum_l = 0.0, sum_r = 0.0;
      for (int k = 0; k < cut; ++k) sum_l += y(order[static_cast<std::size_t>(k)]);
      for (int k = cut; k < n; ++k) sum_r += y(order[static_cast<std::size_t>(k)]);
      const double mean_l = sum_l / cut;
      const double mean_r = sum_r / (n - cut);
      double sse = 0.0;
      for (int k = 0; k < cut; ++k) {
        const double e = y(order[static_cast<std::size_t>(k)]) - mean_l;
        sse += e * e;
      }
      for (int k = cut; k < n; ++k) {
        const double e = y(order[static_cast<std::size_t>(k)]) - mean_r;
        sse += e * e;
      }
      best_sse = std::min(best_sse, sse);
    }
  }
  if (std::abs(tree_sse - best_sse) > 1e-9 * std::max(1.0, best_sse)) {
    return fail("tree sse " + num(tree_sse) + " vs brute force " +
                num(best_sse));
  }

  // GWR with an enormous bandwidth equals ridge-stabilized global OLS.
  Rng grng(702);
  const PointMatrix loc = random_points(grng, 35, 2.0);
  Eigen::MatrixXd gx(35, 3);
  Eigen::VectorXd gy(35);
  for (int i = 0; i < 35; ++i) {
    for (int j = 0; j < 3; ++j) gx(i, j) = grng.normal();
    gy(i) = 0.5 * gx(i, 0) - 0.2 * gx(i, 1) + 0.1 * grng.normal();
  }
  const GwrModel gwr = fit_gwr(gx, loc, gy, 1.0e9);
  const BaselinePrediction gp = predict_gwr(gwr, gx, loc);
  Eigen::MatrixXd design(35, 4);
  design.col(0).setOnes();
  design.rightCols(3) = gx;
  const Eigen::MatrixXd gram =
      design.transpose() * design + 1e-6 * Eigen::MatrixXd::Identity(4, 4);
  const Eigen::VectorXd ols =
      design * gram.ldlt().solve(design.transpose() * gy);
  const double gwr_diff = (gp.mean - ols).cwiseAbs().maxCoeff();
  if (!(gwr_diff < 1e-6)) {
    return fail("gwr vs ols differs by " + num(gwr_diff));
  }

  // Noise-free kriging interpolates its residuals.
  Rng krng(703);
  const PointMatrix kloc = random_points(krng, 12, 2.0);
  Eigen::VectorXd resid(12);
  for (int i = 0; i < 12; ++i) resid(i) = 0.3 * krng.normal();
  const KrigingGp gp_fit =
      fit_residual_gp(kloc, resid, KrigingParams{0.5, 1.0, 1e-5});
  const double krig_diff =
      (predict_residual_gp(gp_fit, kloc).mean - resid).cwiseAbs().maxCoeff();
  if (!(krig_diff < 1e-4)) {
    return fail("noise-free kriging misses training residuals by " +
                num(krig_diff));
  }
  return pass("tree split exact; gwr vs ols " + num(gwr_diff) +
              "; kriging interpolation " + num(krig_diff));
}

// --- criterion 8: command determinism ----------------------------------------

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_cli(const std::string& args) {
  const std::string cmd =
      std::string(POIGP_BIN) + " --quiet " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
#ifdef WEXITSTATUS
  return status < 0 ? -1 : WEXITSTATUS(status);
#else
  return status;
#endif
}

// Snapshot every file of every run directory, excluding the timing sidecar.
std::map<std::string, std::string> snapshot(const std::string& root) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    if (entry.path().filename() == "timings.txt") continue;
    out[entry.path().string()] = slurp(entry.path());
  }
  return out;
}

Outcome criterion8() {
  const std::string root = "acceptance_ws";
  fs::remove_all(root);
  fs::create_directories(root);

  const std::string example = POIGP_EXAMPLE_DIR;
  const std::string types =
      "Education:20:0.64:0.2,PublicTransport:25:0.35:0.1,"
      "Restaurant:30:0.3:0.09,Store:25:0.28:0.08";
  std::vector<std::string> commands;
  commands.push_back("synth --seed 5 --stations 70 --types " + types +
                     " --out " + root);
  commands.push_back("ingest --stations " + example + "/stations.csv" +
                     " --pois " + example + "/pois.geojson --out " + root);

  for (const std::string& cmd : commands) {
    if (run_cli(cmd) != 0) return fail("command failed: " + cmd);
  }

  std::string bundle;
  std::string model;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.path().filename().string().rfind("synth-", 0) == 0) {
      bundle = (entry.path() / "bundle.json").string();
    }
  }
  if (bundle.empty()) return fail("synth bundle not found");

  const std::string shared = " --iterations 80 --m 20 --hidden 4 --step 0.02";
  commands.push_back("train --bundle " + bundle + " --seed 2" + shared +
                     " --out " + root);
  if (run_cli(commands.back()) != 0) return fail("train failed");
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.path().filename().string().rfind("train-", 0) == 0) {
      model = (entry.path() / "model.json").string();
    }
  }
  if (model.empty()) return fail("trained model not found");

  commands.push_back("interpret --model " + model + " --bundle " + bundle +
                     " --cell 0.5 --out " + root);
  commands.push_back("predict --model " + model + " --bundle " + bundle +
                     " --out " + root);
  commands.push_back("benchmark --bundle " + bundle + " --seed 3" + shared +
                     " --gwr-bandwidth 2 --rf-trees 25 --nn-iterations 150" +
                     " --out " + root);
  commands.push_back("sensitivity --bundle " + bundle + " --seed 3" + shared +
                     " --gwr-bandwidth 2 --rf-trees 25 --nn-iterations 150" +
                     " --out " + root);
  for (std::size_t i = 3; i < commands.size(); ++i) {
    if (run_cli(commands[i]) != 0) return fail("command failed: " + commands[i]);
  }

  const std::map<std::string, std::string> before = snapshot(root);
  for (const std::string& cmd : commands) {
    if (run_cli(cmd) != 0) return fail("rerun failed: " + cmd);
  }
  const std::map<std::string, std::string> after = snapshot(root);

  if (before.size() != after.size()) {
    return fail("rerun changed the file inventory");
  }
  int files = 0;
  for (const auto& [path, content] : before) {
    const auto it = after.find(path);
    if (it == after.end()) return fail("file vanished on rerun: " + path);
    if (it->second != content) {
      return fail("file changed on rerun: " + path);
    }
    ++files;
  }
  fs::remove_all(root);
  return pass("all 7 commands byte-identical across reruns (" +
              std::to_string(files) + " files compared)");
}

}  // namespace

int main(int argc, char** argv) {
  const int only = argc > 1 ? std::atoi(argv[1]) : 0;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> checks =
      {
          {"paper-number reproduction on the original data", criterion1},
          {"synthetic cut-off and magnitude recovery", criterion2},
          {"optimized bound reaches the exact marginal likelihood",
           criterion3},
          {"analytic gradients match finite differences", criterion4},
          {"covariance families are positive semidefinite", criterion5},
          {"benchmark ranks the model best on well-specified data",
           criterion6},
          {"baseline implementations match closed-form oracles", criterion7},
          {"seeded commands are byte-for-byte reproducible", criterion8},
      };

  bool any_fail = false;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (only != 0 && only != id) continue;
    Outcome out;
    try {
      out = checks[i].second();
    } catch (const std::exception& e) {
      out = fail(std::string("exception: ") + e.what());
    }
    const char* tag = out.skip ? "SKIP" : (out.pass ? "PASS" : "FAIL");
    std::printf("[%s] criterion %d: %s (%s)\n", tag, id,
                checks[i].first.c_str(), out.detail.c_str());
    std::fflush(stdout);
    if (!out.pass && !out.skip) any_fail = true;
  }
  return any_fail ? 1 : 0;
}

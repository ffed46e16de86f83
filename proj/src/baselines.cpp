#include "poigp/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "poigp/optim.hpp"

namespace poigp {

// --- engineered POI features ------------------------------------------------

std::string feature_mode_name(FeatureMode mode) {
  switch (mode) {
    case FeatureMode::kNone: return "none";
    case FeatureMode::kDistance: return "distance";
    case FeatureMode::kDensity: return "density";
    case FeatureMode::kBoth: return "both";
  }
  throw parameter_error("unknown feature mode");
}

FeatureMode feature_mode_from_name(const std::string& name) {
  if (name == "none") return FeatureMode::kNone;
  if (name == "distance") return FeatureMode::kDistance;
  if (name == "density") return FeatureMode::kDensity;
  if (name == "both") return FeatureMode::kBoth;
  throw parameter_error("unknown feature mode: " + name);
}

Eigen::MatrixXd distance_features(const PointMatrix& stations,
                                  const std::vector<PointMatrix>& pois) {
  const Eigen::Index n = stations.rows();
  const auto types = static_cast<Eigen::Index>(pois.size());
  Eigen::Index total = 0;
  for (const PointMatrix& p : pois) total += p.rows();
  if (total == 0) {
    throw input_error("distance features need at least one poi");
  }
  Eigen::MatrixXd f(n, types);
  for (Eigen::Index g = 0; g < types; ++g) {
    const PointMatrix& p = pois[static_cast<std::size_t>(g)];
    if (p.rows() == 0) {
      f.col(g).setConstant(kEmptyTypeDistanceKm);
      continue;
    }
    const Eigen::MatrixXd d = geo::pairwise_distances(stations, p);
    f.col(g) = d.rowwise().minCoeff();
  }
  return f;
}

Eigen::MatrixXd density_features(const PointMatrix& stations,
                                 const std::vector<PointMatrix>& pois,
                                 const std::vector<double>& dmax) {
  if (dmax.size() != pois.size()) {
    throw parameter_error("density features: need one radius per poi type");
  }
  for (double r : dmax) {
    if (!(r > 0.0)) throw parameter_error("density radius must be positive");
  }
  const Eigen::Index n = stations.rows();
  const auto types = static_cast<Eigen::Index>(pois.size());
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(n, types);
  for (Eigen::Index g = 0; g < types; ++g) {
    const PointMatrix& p = pois[static_cast<std::size_t>(g)];
    if (p.rows() == 0) continue;
    const Eigen::MatrixXd d = geo::pairwise_distances(stations, p);
    const double radius = dmax[static_cast<std::size_t>(g)];
    // Strict inequality: a poi exactly on the radius does not count.
    f.col(g) =
        (d.array() < radius).rowwise().count().cast<double>().matrix();
  }
  return f;
}

Eigen::MatrixXd engineered_features(const PointMatrix& stations,
                                    const std::vector<PointMatrix>& pois,
                                    FeatureMode mode,
                                    const std::vector<double>& dmax) {
  const Eigen::Index n = stations.rows();
  if (mode == FeatureMode::kNone) return Eigen::MatrixXd(n, 0);
  if (mode == FeatureMode::kDistance) {
    return distance_features(stations, pois);
  }
  if (mode == FeatureMode::kDensity) {
    return density_features(stations, pois, dmax);
  }
  const Eigen::MatrixXd dist = distance_features(stations, pois);
  const Eigen::MatrixXd dens = density_features(stations, pois, dmax);
  Eigen::MatrixXd both(n, dist.cols() + dens.cols());
  both << dist, dens;
  return both;
}

std::string features_csv(const Eigen::MatrixXd& features,
                         const std::vector<std::string>& column_names,
                         const std::vector<std::string>& row_ids) {
  if (static_cast<Eigen::Index>(column_names.size()) != features.cols() ||
      static_cast<Eigen::Index>(row_ids.size()) != features.rows()) {
    throw input_error("features_csv: name counts do not match the matrix");
  }
  std::string out = "id";
  for (const std::string& c : column_names) out += "," + c;
  out += "\n";
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    out += row_ids[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < features.cols(); ++j) {
      out += "," + format_double(features(i, j));
    }
    out += "\n";
  }
  return out;
}

std::vector<double> default_dmax_grid() {
  std::vector<double> grid;
  for (int i = 1; i <= 10; ++i) grid.push_back(0.1 * i);
  return grid;
}

// --- GWR ---------------------------------------------------------------------

std::string baseline_kind_name(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::kGwr: return "gwr";
    case BaselineKind::kLinearKriging: return "linear_kriging";
    case BaselineKind::kRfKriging: return "rf_kriging";
    case BaselineKind::kNeuralNet: return "neural_net";
  }
  throw parameter_error("unknown baseline kind");
}

BaselineKind baseline_kind_from_name(const std::string& name) {
  if (name == "gwr") return BaselineKind::kGwr;
  if (name == "linear_kriging") return BaselineKind::kLinearKriging;
  if (name == "rf_kriging") return BaselineKind::kRfKriging;
  if (name == "neural_net") return BaselineKind::kNeuralNet;
  throw parameter_error("unknown baseline kind: " + name);
}

GwrModel fit_gwr(const Eigen::MatrixXd& x, const PointMatrix& loc,
                 const Eigen::VectorXd& y, double bandwidth) {
  if (!(bandwidth > 0.0)) throw parameter_error("gwr bandwidth must be > 0");
  if (x.rows() != loc.rows() || x.rows() != y.size() || x.rows() < 2) {
    throw input_error("gwr: inconsistent or too-small training data");
  }
  GwrModel m;
  m.x = x;
  m.loc = loc;
  m.y = y;
  m.bandwidth = bandwidth;
  m.trained = true;
  return m;
}

BaselinePrediction predict_gwr(const GwrModel& model, const Eigen::MatrixXd& x,
                               const PointMatrix& loc) {
  if (!model.trained) throw state_error("gwr model is not trained");
  if (x.cols() != model.x.cols()) {
    throw input_error("gwr: feature count mismatch");
  }
  const Eigen::Index n = model.x.rows();
  const Eigen::Index p = model.x.cols() + 1;
  Eigen::MatrixXd design(n, p);
  design.col(0).setOnes();
  design.rightCols(model.x.cols()) = model.x;

  BaselinePrediction out;
  out.mean.resize(x.rows());
  out.variance.resize(x.rows());
  const double two_bw2 = 2.0 * model.bandwidth * model.bandwidth;
  for (Eigen::Index q = 0; q < x.rows(); ++q) {
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double dx = model.loc(i, 0) - loc(q, 0);
      const double dy = model.loc(i, 1) - loc(q, 1);
      w(i) = std::exp(-(dx * dx + dy * dy) / two_bw2);
    }
    const Eigen::MatrixXd wa = w.asDiagonal() * design;
    Eigen::MatrixXd gram = design.transpose() * wa;
    gram.diagonal().array() += 1e-6;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    const Eigen::VectorXd beta = ldlt.solve(design.transpose() * (w.cwiseProduct(model.y)));
    if (ldlt.info() != Eigen::Success || !beta.allFinite()) {
      throw numeric_error("gwr: singular local system at (" +
                          format_double(loc(q, 0)) + ", " +
                          format_double(loc(q, 1)) + ") km");
    }
    Eigen::VectorXd row(p);
    row(0) = 1.0;
    row.tail(model.x.cols()) = x.row(q).transpose();
    out.mean(q) = row.dot(beta);
    const Eigen::VectorXd resid = model.y - design * beta;
    const double wsum = w.sum();
    out.variance(q) = std::max(
        1e-12, w.dot(resid.cwiseAbs2()) / std::max(wsum, 1e-300));
  }
  return out;
}

std::vector<double> default_gwr_bandwidth_grid() {
  return {0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0};
}

namespace {

// fold_of[i] in [0, k): round-robin over a seeded permutation.
std::vector<int> make_folds(Eigen::Index n, int k, std::uint64_t seed) {
  if (n < k) throw input_error("cross-validation: fewer rows than folds");
  Rng rng(Rng::mix(seed, 0x0f01d));
  const std::vector<std::size_t> perm =
      rng.permutation(static_cast<std::size_t>(n));
  std::vector<int> fold(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < perm.size(); ++i) {
    fold[perm[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  }
  return fold;
}

template <typename FitPredict>
double kfold_rmse(Eigen::Index n, const std::vector<int>& fold, int k,
                  FitPredict&& fit_predict) {
  double sse = 0.0;
  Eigen::Index total = 0;
  for (int f = 0; f < k; ++f) {
    std::vector<Eigen::Index> train, test;
    for (Eigen::Index i = 0; i < n; ++i) {
      (fold[static_cast<std::size_t>(i)] == f ? test : train).push_back(i);
    }
    if (train.empty() || test.empty()) {
      throw input_error("cross-validation: degenerate fold");
    }
    sse += fit_predict(train, test);
    total += static_cast<Eigen::Index>(test.size());
  }
  return std::sqrt(sse / static_cast<double>(total));
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& x,
                          const std::vector<Eigen::Index>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
  }
  return out;
}

Eigen::VectorXd take_rows(const Eigen::VectorXd& y,
                          const std::vector<Eigen::Index>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out(static_cast<Eigen::Index>(i)) = y(rows[i]);
  }
  return out;
}

PointMatrix take_rows(const PointMatrix& p,
                      const std::vector<Eigen::Index>& rows) {
  PointMatrix out(static_cast<Eigen::Index>(rows.size()), 2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = p.row(rows[i]);
  }
  return out;
}

}  // namespace

double select_gwr_bandwidth(const Eigen::MatrixXd& x, const PointMatrix& loc,
                            const Eigen::VectorXd& y,
                            const std::vector<double>& grid,
                            std::uint64_t seed) {
  if (grid.empty()) throw parameter_error("bandwidth grid is empty");
  std::vector<double> sorted = grid;
  std::sort(sorted.begin(), sorted.end());
  const std::vector<int> fold = make_folds(x.rows(), 5, seed);
  double best_bw = sorted.front();
  double best_rmse = std::numeric_limits<double>::infinity();
  for (double bw : sorted) {
    const double score = kfold_rmse(
        x.rows(), fold, 5,
        [&](const std::vector<Eigen::Index>& train,
            const std::vector<Eigen::Index>& test) {
          const GwrModel m = fit_gwr(take_rows(x, train),
                                     take_rows(loc, train),
                                     take_rows(y, train), bw);
          const BaselinePrediction p = predict_gwr(
              m, take_rows(x, test), take_rows(loc, test));
          return (p.mean - take_rows(y, test)).squaredNorm();
        });
    if (score < best_rmse - 1e-12) {
      best_rmse = score;
      best_bw = bw;
    }
  }
  return best_bw;
}

// --- residual Gaussian process -------------------------------------------------

namespace {

Eigen::MatrixXd covariance_of(const PointMatrix& loc,
                              const KrigingParams& p) {
  Eigen::MatrixXd c =
      matern32_matrix(geo::pairwise_distances(loc, loc), p.var, p.len);
  c.diagonal().array() += p.noise_sd * p.noise_sd;
  return c;
}

Eigen::LLT<Eigen::MatrixXd> chol_observed(const Eigen::MatrixXd& c) {
  Eigen::LLT<Eigen::MatrixXd> llt(c);
  if (llt.info() == Eigen::Success) return llt;
  Eigen::MatrixXd bumped = c;
  bumped.diagonal().array() += kJitterStart;
  llt.compute(bumped);
  if (llt.info() == Eigen::Success) return llt;
  throw numeric_error("residual gp: covariance not positive definite");
}

}  // namespace

KrigingGp fit_residual_gp(const PointMatrix& loc,
                          const Eigen::VectorXd& residuals,
                          const std::optional<KrigingParams>& fixed,
                          int iterations, double step) {
  if (loc.rows() != residuals.size() || loc.rows() < 2) {
    throw input_error("residual gp: inconsistent or too-small data");
  }
  KrigingGp gp;
  gp.loc = loc;
  gp.residuals = residuals;

  if (fixed) {
    gp.params = *fixed;
  } else {
    const Eigen::Index n = loc.rows();
    const double sample_var =
        (residuals.array() - residuals.mean()).square().sum() /
        std::max<double>(1.0, static_cast<double>(n - 1));
    KrigingParams init;
    init.var = std::max(1e-4, 0.5 * sample_var);
    init.len = 1.0;
    init.noise_sd = std::max(1e-3, 0.5 * std::sqrt(sample_var));

    // Maximize the exact log marginal likelihood over softplus-transformed
    // parameters with the same optimizer the main model uses.
    Eigen::VectorXd raw(3);
    raw << softplus_inv(init.var), softplus_inv(init.len),
        softplus_inv(init.noise_sd);
    Adam adam(3);
    const Eigen::MatrixXd d = geo::pairwise_distances(loc, loc);
    for (int it = 0; it < iterations; ++it) {
      const double var = softplus(raw(0));
      const double len = softplus(raw(1));
      const double sigma = softplus(raw(2));
      Eigen::MatrixXd c = matern32_matrix(d, var, len);
      c.diagonal().array() += sigma * sigma;
      const Eigen::LLT<Eigen::MatrixXd> llt = chol_observed(c);
      const Eigen::VectorXd alpha = llt.solve(residuals);
      const Eigen::MatrixXd cinv =
          llt.solve(Eigen::MatrixXd::Identity(n, n));
      // dL/dC for L = log N(r | 0, C).
      const Eigen::MatrixXd dldc =
          0.5 * (alpha * alpha.transpose() - cinv);
      const double g_var =
          (dldc.array() * matern32_matrix(d, 1.0, len).array()).sum();
      const double g_len =
          (dldc.array() * matern32_dlen_matrix(d, var, len).array()).sum();
      const double g_sigma = 2.0 * sigma * dldc.trace();
      Eigen::VectorXd grad(3);
      grad << g_var * sigmoid(raw(0)), g_len * sigmoid(raw(1)),
          g_sigma * sigmoid(raw(2));
      if (!grad.allFinite()) {
        throw numeric_error("residual gp: non-finite gradient");
      }
      adam.step(raw, -grad, step);  // ascent
    }
    gp.params = {softplus(raw(0)), softplus(raw(1)), softplus(raw(2))};
  }

  const Eigen::LLT<Eigen::MatrixXd> llt =
      chol_observed(covariance_of(loc, gp.params));
  gp.alpha = llt.solve(residuals);
  return gp;
}

BaselinePrediction predict_residual_gp(const KrigingGp& gp,
                                       const PointMatrix& query) {
  const Eigen::MatrixXd k_q = matern32_matrix(
      geo::pairwise_distances(gp.loc, query), gp.params.var, gp.params.len);
  const Eigen::LLT<Eigen::MatrixXd> llt =
      chol_observed(covariance_of(gp.loc, gp.params));
  BaselinePrediction out;
  out.mean = k_q.transpose() * gp.alpha;
  const Eigen::MatrixXd solved = llt.solve(k_q);
  out.variance =
      (gp.params.var + gp.params.noise_sd * gp.params.noise_sd -
       (k_q.array() * solved.array()).colwise().sum().transpose())
          .cwiseMax(1e-12)
          .matrix();
  return out;
}

// --- linear kriging ------------------------------------------------------------

namespace {

Eigen::VectorXd ols_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  const Eigen::Index p = x.cols() + 1;
  Eigen::MatrixXd design(x.rows(), p);
  design.col(0).setOnes();
  design.rightCols(x.cols()) = x;
  Eigen::MatrixXd gram = design.transpose() * design;
  gram.diagonal().array() += 1e-6;
  return Eigen::LDLT<Eigen::MatrixXd>(gram).solve(design.transpose() * y);
}

Eigen::VectorXd ols_predict(const Eigen::VectorXd& beta,
                            const Eigen::MatrixXd& x) {
  return Eigen::VectorXd::Constant(x.rows(), beta(0)) +
         x * beta.tail(x.cols());
}

}  // namespace

LinearKrigingModel fit_linear_kriging(
    const Eigen::MatrixXd& x, const PointMatrix& loc, const Eigen::VectorXd& y,
    const std::optional<KrigingParams>& fixed) {
  LinearKrigingModel m;
  m.beta = ols_fit(x, y);
  const Eigen::VectorXd resid = y - ols_predict(m.beta, x);
  m.gp = fit_residual_gp(loc, resid, fixed);
  m.trained = true;
  return m;
}

BaselinePrediction predict_linear_kriging(const LinearKrigingModel& model,
                                          const Eigen::MatrixXd& x,
                                          const PointMatrix& loc) {
  if (!model.trained) throw state_error("linear kriging model is not trained");
  BaselinePrediction out = predict_residual_gp(model.gp, loc);
  out.mean += ols_predict(model.beta, x);
  return out;
}

// --- random forest kriging -------------------------------------------------------

double RegressionTree::predict_row(const Eigen::RowVectorXd& row) const {
  int node = 0;
  while (nodes[static_cast<std::size_t>(node)].feature >= 0) {
    const TreeNode& t = nodes[static_cast<std::size_t>(node)];
    node = row(t.feature) <= t.threshold ? t.left : t.right;
  }
  return nodes[static_cast<std::size_t>(node)].value;
}

namespace {

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

SplitChoice best_split(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       const std::vector<int>& rows,
                       const std::vector<int>& features, int min_leaf) {
  SplitChoice best;
  const auto n = static_cast<int>(rows.size());
  double total = 0.0;
  for (int r : rows) total += y(r);
  const double parent_score = total * total / n;

  std::vector<int> order(rows);
  for (int f : features) {
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return x(a, f) < x(b, f);
    });
    double left_sum = 0.0;
    for (int i = 0; i + 1 < n; ++i) {
      left_sum += y(order[static_cast<std::size_t>(i)]);
      const int left_n = i + 1;
      const int right_n = n - left_n;
      if (left_n < min_leaf || right_n < min_leaf) continue;
      const double a = x(order[static_cast<std::size_t>(i)], f);
      const double b = x(order[static_cast<std::size_t>(i + 1)], f);
      if (!(b > a)) continue;  // need distinct values to place a threshold
      const double right_sum = total - left_sum;
      const double gain = left_sum * left_sum / left_n +
                          right_sum * right_sum / right_n - parent_score;
      if (gain > best.gain + 1e-12) {
        best.gain = gain;
        best.feature = f;
        best.threshold = 0.5 * (a + b);
      }
    }
  }
  return best;
}

int build_tree(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
               std::vector<int>&& rows, int depth, const RfConfig& config,
               int mtry, Rng& rng, std::vector<TreeNode>& nodes) {
  TreeNode node;
  double sum = 0.0;
  for (int r : rows) sum += y(r);
  node.value = sum / static_cast<double>(rows.size());

  const int index = static_cast<int>(nodes.size());
  nodes.push_back(node);
  if (depth >= config.max_depth ||
      static_cast<int>(rows.size()) < 2 * config.min_leaf) {
    return index;
  }

  const auto p = static_cast<std::size_t>(x.cols());
  std::vector<int> features;
  if (mtry >= static_cast<int>(p)) {
    for (std::size_t f = 0; f < p; ++f) features.push_back(static_cast<int>(f));
  } else {
    for (std::size_t f :
         rng.sample_without_replacement(p, static_cast<std::size_t>(mtry))) {
      features.push_back(static_cast<int>(f));
    }
    std::sort(features.begin(), features.end());
  }

  const SplitChoice split =
      best_split(x, y, rows, features, config.min_leaf);
  if (split.feature < 0) return index;

  std::vector<int> left, right;
  for (int r : rows) {
    (x(r, split.feature) <= split.threshold ? left : right).push_back(r);
  }
  rows.clear();
  nodes[static_cast<std::size_t>(index)].feature = split.feature;
  nodes[static_cast<std::size_t>(index)].threshold = split.threshold;
  const int l = build_tree(x, y, std::move(left), depth + 1, config, mtry,
                           rng, nodes);
  const int r = build_tree(x, y, std::move(right), depth + 1, config, mtry,
                           rng, nodes);
  nodes[static_cast<std::size_t>(index)].left = l;
  nodes[static_cast<std::size_t>(index)].right = r;
  return index;
}

}  // namespace

RegressionTree fit_tree(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                        const std::vector<int>& rows, const RfConfig& config,
                        Rng& rng) {
  if (rows.empty()) throw input_error("fit_tree: no rows");
  const int mtry =
      config.mtry > 0
          ? config.mtry
          : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(x.cols()))));
  RegressionTree tree;
  build_tree(x, y, std::vector<int>(rows), 0, config, mtry, rng, tree.nodes);
  return tree;
}

Eigen::VectorXd forest_predict(const std::vector<RegressionTree>& forest,
                               const Eigen::MatrixXd& x) {
  if (forest.empty()) throw state_error("empty forest");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(x.rows());
  for (const RegressionTree& t : forest) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      out(i) += t.predict_row(x.row(i));
    }
  }
  return out / static_cast<double>(forest.size());
}

RfKrigingModel fit_rf_kriging(const Eigen::MatrixXd& x, const PointMatrix& loc,
                              const Eigen::VectorXd& y, const RfConfig& config,
                              const std::optional<KrigingParams>& fixed) {
  if (config.trees < 1 || config.max_depth < 1 || config.min_leaf < 1) {
    throw parameter_error("random forest configuration must be positive");
  }
  const auto n = static_cast<int>(x.rows());
  RfKrigingModel m;
  m.config = config;

  Eigen::VectorXd oob_sum = Eigen::VectorXd::Zero(n);
  Eigen::VectorXi oob_count = Eigen::VectorXi::Zero(n);
  for (int t = 0; t < config.trees; ++t) {
    Rng rng(Rng::mix(config.seed, static_cast<std::uint64_t>(t) + 1));
    std::vector<int> rows;
    std::vector<bool> inbag(static_cast<std::size_t>(n), false);
    if (config.bootstrap) {
      for (int i = 0; i < n; ++i) {
        const int r = static_cast<int>(
            rng.bounded(static_cast<std::uint64_t>(n)));
        rows.push_back(r);
        inbag[static_cast<std::size_t>(r)] = true;
      }
    } else {
      for (int i = 0; i < n; ++i) {
        rows.push_back(i);
        inbag[static_cast<std::size_t>(i)] = true;
      }
    }
    m.forest.push_back(fit_tree(x, y, rows, config, rng));
    const RegressionTree& tree = m.forest.back();
    for (int i = 0; i < n; ++i) {
      if (!inbag[static_cast<std::size_t>(i)]) {
        oob_sum(i) += tree.predict_row(x.row(i));
        oob_count(i) += 1;
      }
    }
  }

  Eigen::VectorXd oob_pred(n);
  Eigen::VectorXd full;  // computed lazily for never-out-of-bag rows
  for (int i = 0; i < n; ++i) {
    if (oob_count(i) > 0) {
      oob_pred(i) = oob_sum(i) / oob_count(i);
    } else {
      if (full.size() == 0) full = forest_predict(m.forest, x);
      oob_pred(i) = full(i);
    }
  }
  m.gp = fit_residual_gp(loc, y - oob_pred, fixed);
  m.trained = true;
  return m;
}

BaselinePrediction predict_rf_kriging(const RfKrigingModel& model,
                                      const Eigen::MatrixXd& x,
                                      const PointMatrix& loc) {
  if (!model.trained) throw state_error("rf kriging model is not trained");
  BaselinePrediction out = predict_residual_gp(model.gp, loc);
  out.mean += forest_predict(model.forest, x);
  return out;
}

// --- neural-network baseline ----------------------------------------------------

NnModel fit_nn_baseline(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                        const NnConfig& config) {
  const Eigen::Index n = x.rows();
  if (n < 3) throw input_error("nn baseline: need at least 3 rows");
  if (!(config.val_fraction > 0.0) || config.val_fraction >= 1.0) {
    throw parameter_error("nn baseline: val_fraction must be in (0, 1)");
  }

  Rng split_rng(Rng::mix(config.seed, 0));
  const std::vector<std::size_t> perm =
      split_rng.permutation(static_cast<std::size_t>(n));
  const auto n_val = std::max<Eigen::Index>(
      1, static_cast<Eigen::Index>(
             std::llround(config.val_fraction * static_cast<double>(n))));
  if (n_val >= n) throw input_error("nn baseline: validation slice too large");

  std::vector<Eigen::Index> val_rows, train_rows;
  for (Eigen::Index i = 0; i < n; ++i) {
    (i < n_val ? val_rows : train_rows)
        .push_back(static_cast<Eigen::Index>(perm[static_cast<std::size_t>(i)]));
  }
  const Eigen::MatrixXd x_train = take_rows(x, train_rows);
  const Eigen::VectorXd y_train = take_rows(y, train_rows);
  const Eigen::MatrixXd x_val = take_rows(x, val_rows);
  const Eigen::VectorXd y_val = take_rows(y, val_rows);

  Rng init_rng(Rng::mix(config.seed, 1));
  NnModel model{Mlp(static_cast<int>(x.cols()), config.hidden, init_rng,
                    config.weight_sd),
                1.0, false};
  Adam adam(model.net.param_count());
  Eigen::VectorXd params = model.net.pack();

  auto val_mse = [&]() {
    return (model.net.forward(x_val) - y_val).squaredNorm() /
           static_cast<double>(y_val.size());
  };
  double best_mse = val_mse();
  Eigen::VectorXd best_params = params;
  int bad_checks = 0;

  const double inv_n = 1.0 / static_cast<double>(y_train.size());
  for (int it = 1; it <= config.iterations; ++it) {
    const Eigen::VectorXd pred = model.net.forward(x_train);
    const Eigen::VectorXd err = pred - y_train;
    const double loss = err.squaredNorm() * inv_n;
    if (!std::isfinite(loss)) {
      throw training_error("nn baseline: non-finite loss at iteration " +
                           std::to_string(it));
    }
    const Eigen::VectorXd grad =
        model.net.backward(x_train, 2.0 * inv_n * err);
    adam.step(params, grad, config.step);
    model.net.unpack(params);

    if (it % 10 == 0 || it == config.iterations) {
      const double mse = val_mse();
      if (mse < best_mse - 1e-12) {
        best_mse = mse;
        best_params = params;
        bad_checks = 0;
      } else if (++bad_checks >= config.patience) {
        break;
      }
    }
  }

  model.net.unpack(best_params);
  model.variance = std::max(1e-8, best_mse);
  model.trained = true;
  return model;
}

BaselinePrediction predict_nn_baseline(const NnModel& model,
                                       const Eigen::MatrixXd& x) {
  if (!model.trained) throw state_error("nn baseline is not trained");
  BaselinePrediction out;
  out.mean = model.net.forward(x);
  out.variance = Eigen::VectorXd::Constant(x.rows(), model.variance);
  return out;
}

// --- uniform driver ----------------------------------------------------------

namespace {

Eigen::MatrixXd assemble_features(const BaselineConfig& config,
                                  const Eigen::MatrixXd& covariates,
                                  const PointMatrix& loc,
                                  const std::vector<PointMatrix>& pois) {
  const Eigen::MatrixXd eng =
      engineered_features(loc, pois, config.mode, config.dmax);
  const bool coords =
      config.kind == BaselineKind::kNeuralNet && config.nn_use_coords;
  Eigen::MatrixXd x(covariates.rows(),
                    covariates.cols() + eng.cols() + (coords ? 2 : 0));
  x.leftCols(covariates.cols()) = covariates;
  x.middleCols(covariates.cols(), eng.cols()) = eng;
  if (coords) x.rightCols(2) = loc;
  return x;
}

}  // namespace

FittedBaseline fit_baseline(const BaselineConfig& config,
                            const Eigen::MatrixXd& covariates,
                            const PointMatrix& loc, const Eigen::VectorXd& y,
                            const std::vector<PointMatrix>& pois) {
  FittedBaseline out{config, pois, {}};
  const Eigen::MatrixXd x = assemble_features(config, covariates, loc, pois);
  switch (config.kind) {
    case BaselineKind::kGwr: {
      const double bw =
          config.gwr_bandwidth > 0.0
              ? config.gwr_bandwidth
              : select_gwr_bandwidth(x, loc, y, default_gwr_bandwidth_grid(),
                                     config.seed);
      out.impl = fit_gwr(x, loc, y, bw);
      break;
    }
    case BaselineKind::kLinearKriging:
      out.impl = fit_linear_kriging(x, loc, y);
      break;
    case BaselineKind::kRfKriging: {
      RfConfig rf = config.rf;
      rf.seed = Rng::mix(config.seed, 0x7ee5);
      out.impl = fit_rf_kriging(x, loc, y, rf);
      break;
    }
    case BaselineKind::kNeuralNet: {
      NnConfig nn = config.nn;
      nn.seed = Rng::mix(config.seed, 0x4e4e);
      out.impl = fit_nn_baseline(x, y, nn);
      break;
    }
  }
  return out;
}

BaselinePrediction predict_baseline(const FittedBaseline& model,
                                    const Eigen::MatrixXd& covariates,
                                    const PointMatrix& loc) {
  const Eigen::MatrixXd x =
      assemble_features(model.config, covariates, loc, model.pois);
  if (std::holds_alternative<GwrModel>(model.impl)) {
    return predict_gwr(std::get<GwrModel>(model.impl), x, loc);
  }
  if (std::holds_alternative<LinearKrigingModel>(model.impl)) {
    return predict_linear_kriging(std::get<LinearKrigingModel>(model.impl), x,
                                  loc);
  }
  if (std::holds_alternative<RfKrigingModel>(model.impl)) {
    return predict_rf_kriging(std::get<RfKrigingModel>(model.impl), x, loc);
  }
  return predict_nn_baseline(std::get<NnModel>(model.impl), x);
}

std::vector<double> tune_dmax(const BaselineConfig& config,
                              const Eigen::MatrixXd& covariates,
                              const PointMatrix& loc, const Eigen::VectorXd& y,
                              const std::vector<PointMatrix>& pois,
                              const std::vector<double>& grid,
                              std::uint64_t seed) {
  if (grid.empty()) throw parameter_error("tune_dmax: empty grid");
  std::vector<double> sorted = grid;
  std::sort(sorted.begin(), sorted.end());

  const std::vector<int> fold = make_folds(covariates.rows(), 5, seed);
  std::vector<double> dmax(pois.size(), sorted.front());

  auto cv_score = [&](const std::vector<double>& candidate) {
    BaselineConfig c = config;
    c.dmax = candidate;
    c.seed = seed;
    return kfold_rmse(
        covariates.rows(), fold, 5,
        [&](const std::vector<Eigen::Index>& train,
            const std::vector<Eigen::Index>& test) {
          const FittedBaseline m = fit_baseline(
              c, take_rows(covariates, train),
              take_rows(loc, train), take_rows(y, train), pois);
          const BaselinePrediction p =
              predict_baseline(m, take_rows(covariates, test),
                               take_rows(loc, test));
          return (p.mean - take_rows(y, test)).squaredNorm();
        });
  };

  // One coordinate-descent pass in type order; the grid is ascending, so a
  // strict improvement rule breaks ties toward the smaller radius.
  for (std::size_t g = 0; g < pois.size(); ++g) {
    double best_rmse = std::numeric_limits<double>::infinity();
    double best_radius = sorted.front();
    for (double candidate : sorted) {
      std::vector<double> trial = dmax;
      trial[g] = candidate;
      const double score = cv_score(trial);
      if (score < best_rmse - 1e-12) {
        best_rmse = score;
        best_radius = candidate;
      }
    }
    dmax[g] = best_radius;
  }
  return dmax;
}

}  // namespace poigp

#include "poigp/svi.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "poigp/optim.hpp"

namespace poigp {

namespace {
constexpr double kLn2Pi = 1.8378770664093453;

std::string process_name(int p, int g) {
  if (p < g) return "K_uu[poi process " + std::to_string(p) + "]";
  return "K_uu[spatial process]";
}
}  // namespace

InducingSet sample_inducing(const PointMatrix& train_locations, int m,
                            std::uint64_t seed) {
  const int n = static_cast<int>(train_locations.rows());
  if (m < 1) throw parameter_error("inducing count must be >= 1");
  if (m > n) {
    throw parameter_error("inducing count " + std::to_string(m) +
                          " exceeds training size " + std::to_string(n));
  }
  Rng rng(seed);
  const auto idx = rng.sample_without_replacement(
      static_cast<std::size_t>(n), static_cast<std::size_t>(m));
  InducingSet out;
  out.seed = seed;
  out.indices.assign(idx.begin(), idx.end());
  out.locations.resize(m, 2);
  for (int i = 0; i < m; ++i) {
    out.locations.row(i) = train_locations.row(out.indices[i]);
  }
  return out;
}

double kl_term(const Eigen::VectorXd& m, const Eigen::MatrixXd& l_s,
               const Eigen::MatrixXd& k_uu) {
  const Eigen::Index mm = m.size();
  if (l_s.rows() != mm || l_s.cols() != mm || k_uu.rows() != mm ||
      k_uu.cols() != mm) {
    throw parameter_error("kl_term: dimension mismatch");
  }
  const CholResult c = chol_with_jitter(k_uu, "K_uu");
  const auto lower = c.l.triangularView<Eigen::Lower>();
  const Eigen::MatrixXd w = lower.solve(l_s);
  const Eigen::VectorXd b = lower.solve(m);
  const double logdet_k = 2.0 * c.l.diagonal().array().log().sum();
  const double logdet_s = 2.0 * l_s.diagonal().array().log().sum();
  return 0.5 * (w.squaredNorm() + b.squaredNorm() -
                static_cast<double>(mm) + logdet_k - logdet_s);
}

PosteriorMarginals posterior_marginals(const std::string& name,
                                       const Eigen::MatrixXd& k_uu,
                                       const Eigen::MatrixXd& k_uq,
                                       const Eigen::VectorXd& k_qq_diag,
                                       const VariationalProcess& q) {
  const Eigen::Index m = k_uu.rows();
  if (q.m.size() != m || q.l.rows() != m || k_uq.rows() != m ||
      k_qq_diag.size() != k_uq.cols()) {
    throw parameter_error(name + ": posterior dimension mismatch");
  }
  const CholResult c = chol_with_jitter(k_uu, name);
  const auto lower = c.l.triangularView<Eigen::Lower>();
  Eigen::MatrixXd a = lower.solve(k_uq);
  a = c.l.transpose().triangularView<Eigen::Upper>().solve(a);
  PosteriorMarginals out;
  out.mean = a.transpose() * q.m;
  const Eigen::MatrixXd lta = q.l.transpose() * a;
  out.variance = (k_qq_diag.array() -
                  (k_uq.array() * a.array()).colwise().sum().transpose() +
                  lta.array().square().colwise().sum().transpose())
                     .max(0.0)
                     .matrix();
  return out;
}

SviEngine::SviEngine(const Eigen::MatrixXd& x_std, const PointMatrix& stations,
                     const Eigen::VectorXd& y_std,
                     const std::vector<PointMatrix>& poi_locations,
                     const PointMatrix& inducing, const ModelSpec& spec,
                     const Mlp& charger_init)
    : x_(x_std),
      s_(stations),
      y_(y_std),
      z_(inducing),
      spec_(spec),
      charger_(charger_init) {
  spec_.validate();
  n_ = static_cast<int>(s_.rows());
  m_ = static_cast<int>(z_.rows());
  g_ = static_cast<int>(poi_locations.size());
  if (n_ < 1) throw parameter_error("svi: no stations");
  if (m_ < 1 || m_ > n_) {
    throw parameter_error("svi: inducing count out of range");
  }
  if (x_.rows() != n_ || y_.size() != n_) {
    throw parameter_error("svi: data dimension mismatch");
  }
  if (charger_.input_dim() != x_.cols()) {
    throw parameter_error("svi: charger input dimension mismatch");
  }

  d_zz_ = geo::pairwise_distances(z_, z_);
  d_zs_ = geo::pairwise_distances(z_, s_);
  d_zp_.reserve(poi_locations.size());
  d_sp_.reserve(poi_locations.size());
  for (const auto& pl : poi_locations) {
    d_zp_.push_back(geo::pairwise_distances(z_, pl));
    d_sp_.push_back(geo::pairwise_distances(s_, pl));
  }

  const Eigen::Index var_size =
      m_ + static_cast<Eigen::Index>(m_) * (m_ + 1) / 2;
  Eigen::Index at = 0;
  for (int p = 0; p <= g_; ++p) {
    var_blocks_.push_back({at, var_size});
    at += var_size;
  }
  kernel_block_ = {at, 2 * g_ + 2};
  at += kernel_block_.size;
  charger_block_ = {at, charger_.param_count()};
  at += charger_block_.size;
  noise_block_ = {at, 1};
  at += 1;
  params_ = Eigen::VectorXd::Zero(at);

  // m = 0, L = 0.1 I: a deliberately shrunk start so the KL terms do not
  // dominate the first optimizer steps.
  const double raw_l_diag = softplus_inv(0.1);
  for (int p = 0; p <= g_; ++p) {
    Eigen::Index k = var_blocks_[p].at + m_;
    for (int j = 0; j < m_; ++j) {
      params_(k) = raw_l_diag;
      k += m_ - j;
    }
  }
  for (int g = 0; g < g_; ++g) {
    params_(kernel_block_.at + g) = softplus_inv(spec_.init_theta);
    params_(kernel_block_.at + g_ + g) = softplus_inv(spec_.init_alpha_var);
  }
  params_(kernel_block_.at + 2 * g_) = softplus_inv(spec_.init_matern_var);
  params_(kernel_block_.at + 2 * g_ + 1) = softplus_inv(spec_.init_matern_len);
  params_.segment(charger_block_.at, charger_block_.size) = charger_.pack();
  params_(noise_block_.at) =
      softplus_inv(spec_.fixed_noise_sd.value_or(spec_.init_noise_sd));
}

void SviEngine::set_params(const Eigen::VectorXd& p) {
  if (p.size() != params_.size()) {
    throw parameter_error("svi: parameter vector size mismatch");
  }
  params_ = p;
}

Eigen::VectorXd SviEngine::unpack_m(int process) const {
  return params_.segment(var_blocks_[static_cast<std::size_t>(process)].at,
                         m_);
}

Eigen::MatrixXd SviEngine::unpack_l(int process) const {
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(m_, m_);
  Eigen::Index k = var_blocks_[static_cast<std::size_t>(process)].at + m_;
  for (int j = 0; j < m_; ++j) {
    l(j, j) = softplus(params_(k++));
    for (int i = j + 1; i < m_; ++i) l(i, j) = params_(k++);
  }
  return l;
}

double SviEngine::theta(int g) const {
  return softplus(params_(kernel_block_.at + g));
}
double SviEngine::alpha_var(int g) const {
  return softplus(params_(kernel_block_.at + g_ + g));
}
double SviEngine::matern_var() const {
  return softplus(params_(kernel_block_.at + 2 * g_));
}
double SviEngine::matern_len() const {
  return softplus(params_(kernel_block_.at + 2 * g_ + 1));
}
double SviEngine::noise_sd() const {
  return softplus(params_(noise_block_.at));
}

Mlp SviEngine::charger() const {
  Mlp c = charger_;
  c.unpack(params_.segment(charger_block_.at, charger_block_.size));
  return c;
}

VariationalProcess SviEngine::variational(int process) const {
  return {unpack_m(process), unpack_l(process)};
}

void SviEngine::set_variational(int process, const Eigen::VectorXd& m,
                                const Eigen::MatrixXd& l) {
  if (m.size() != m_ || l.rows() != m_ || l.cols() != m_) {
    throw parameter_error("set_variational: dimension mismatch");
  }
  const auto& b = var_blocks_[static_cast<std::size_t>(process)];
  params_.segment(b.at, m_) = m;
  Eigen::Index k = b.at + m_;
  for (int j = 0; j < m_; ++j) {
    if (!(l(j, j) > 0.0)) {
      throw parameter_error("set_variational: diagonal must be positive");
    }
    params_(k++) = softplus_inv(l(j, j));
    for (int i = j + 1; i < m_; ++i) params_(k++) = l(i, j);
  }
}

void SviEngine::set_theta(int g, double v) {
  params_(kernel_block_.at + g) = softplus_inv(v);
}
void SviEngine::set_alpha_var(int g, double v) {
  params_(kernel_block_.at + g_ + g) = softplus_inv(v);
}
void SviEngine::set_matern(double var, double len) {
  params_(kernel_block_.at + 2 * g_) = softplus_inv(var);
  params_(kernel_block_.at + 2 * g_ + 1) = softplus_inv(len);
}
void SviEngine::set_noise_sd(double v) {
  params_(noise_block_.at) = softplus_inv(v);
}

void SviEngine::check_finite_block(const Eigen::VectorXd& grad, const Block& b,
                                   const std::string& name) const {
  if (!grad.segment(b.at, b.size).allFinite()) {
    throw numeric_error("non-finite gradient in block: " + name);
  }
}

SviEngine::Eval SviEngine::evaluate(bool with_grad) const {
  Mlp charger = charger_;
  charger.unpack(params_.segment(charger_block_.at, charger_block_.size));
  const double sigma = softplus(params_(noise_block_.at));
  const double sig2 = sigma * sigma;

  Eigen::VectorXd mu = charger.forward(x_);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(n_);
  double kl_sum = 0.0;

  // Per-process intermediates kept for the backward pass.
  struct Stash {
    Eigen::MatrixXd phi_u, phi_f;  // POI processes only
    Eigen::MatrixXd u_uu, u_uf;    // unit-scale Gram pieces
    Eigen::VectorXd ud;
    double scale = 1.0;            // alpha_var or matern variance
    Eigen::MatrixXd chol_l;
    Eigen::MatrixXd p;             // K_uf
    Eigen::VectorXd kd;
    Eigen::MatrixXd a;             // K_uu^-1 K_uf
    Eigen::MatrixXd lta;           // L' A
    Eigen::VectorXd m;
    Eigen::MatrixXd l;
  };
  std::vector<Stash> st(static_cast<std::size_t>(g_ + 1));

  for (int p = 0; p <= g_; ++p) {
    Stash& t = st[static_cast<std::size_t>(p)];
    if (p < g_) {
      const double th = theta(p);
      t.scale = alpha_var(p);
      t.phi_u = point_kernel_matrix(d_zp_[static_cast<std::size_t>(p)],
                                    spec_.kernel, th);
      t.phi_f = point_kernel_matrix(d_sp_[static_cast<std::size_t>(p)],
                                    spec_.kernel, th);
      t.u_uu.noalias() = t.phi_u * t.phi_u.transpose();
      t.u_uf.noalias() = t.phi_u * t.phi_f.transpose();
      t.ud = t.phi_f.array().square().rowwise().sum();
    } else {
      t.scale = matern_var();
      const double ml = matern_len();
      t.u_uu = matern32_matrix(d_zz_, 1.0, ml);
      t.u_uf = matern32_matrix(d_zs_, 1.0, ml);
      t.ud = Eigen::VectorXd::Ones(n_);
    }
    const CholResult c =
        chol_with_jitter(t.scale * t.u_uu, process_name(p, g_));
    t.chol_l = c.l;
    t.p = t.scale * t.u_uf;
    t.kd = t.scale * t.ud;
    t.m = unpack_m(p);
    t.l = unpack_l(p);

    const auto lower = t.chol_l.triangularView<Eigen::Lower>();
    const auto upper_t = t.chol_l.transpose().triangularView<Eigen::Upper>();
    t.a = upper_t.solve(lower.solve(t.p));
    mu.noalias() += t.a.transpose() * t.m;
    t.lta.noalias() = t.l.transpose() * t.a;
    v += t.kd -
         (t.p.array() * t.a.array()).colwise().sum().matrix().transpose() +
         t.lta.array().square().colwise().sum().matrix().transpose();

    const Eigen::MatrixXd w = lower.solve(t.l);
    const Eigen::VectorXd b = lower.solve(t.m);
    const double logdet_k = 2.0 * t.chol_l.diagonal().array().log().sum();
    const double logdet_s = 2.0 * t.l.diagonal().array().log().sum();
    kl_sum += 0.5 * (w.squaredNorm() + b.squaredNorm() - m_ + logdet_k -
                     logdet_s);
  }

  const Eigen::VectorXd r = y_ - mu;
  const double sq = r.squaredNorm() + v.sum();
  const double ell =
      -0.5 * n_ * kLn2Pi - n_ * std::log(sigma) - sq / (2.0 * sig2);

  Eval out;
  out.expected_loglik = ell;
  out.kl_sum = kl_sum;
  out.elbo = ell - kl_sum;
  if (!with_grad) return out;

  out.grad = Eigen::VectorXd::Zero(params_.size());
  const Eigen::VectorXd rt = r / sig2;
  const double wv = -0.5 / sig2;

  if (spec_.train_charger) {
    out.grad.segment(charger_block_.at, charger_block_.size) =
        charger.backward(x_, rt);
  }
  if (!spec_.fixed_noise_sd) {
    out.grad(noise_block_.at) = (-n_ / sigma + sq / (sig2 * sigma)) *
                                sigmoid(params_(noise_block_.at));
  }

  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(m_, m_);
  for (int p = 0; p <= g_; ++p) {
    const Stash& t = st[static_cast<std::size_t>(p)];
    const auto lower = t.chol_l.triangularView<Eigen::Lower>();
    const auto upper_t = t.chol_l.transpose().triangularView<Eigen::Upper>();
    const Eigen::MatrixXd bmat = upper_t.solve(lower.solve(eye));
    const Eigen::VectorXd bm = bmat * t.m;
    const Eigen::VectorXd ar = t.a * rt;
    Eigen::MatrixXd sa;
    sa.noalias() = t.l * t.lta;  // S A with S = L L'
    Eigen::MatrixXd bsa;
    bsa.noalias() = bmat * sa;

    // Unconstrained-parameter gradients of the ELBO; see the matching
    // finite-difference suite for the verification of every term.
    const Eigen::VectorXd gm = ar - bm;
    const Eigen::MatrixXd linv = t.l.triangularView<Eigen::Lower>().solve(eye);
    Eigen::MatrixXd gl;
    gl.noalias() = 2.0 * wv * (t.a * t.lta.transpose());
    gl.noalias() -= bmat * t.l;
    gl += linv.transpose();

    Eigen::MatrixXd gp = bm * rt.transpose();
    gp += (t.a - bsa) / sig2;

    const Eigen::MatrixXd smm = t.l * t.l.transpose() + t.m * t.m.transpose();
    Eigen::MatrixXd gk;
    gk.noalias() = -(ar * bm.transpose());
    gk.noalias() += wv * (t.a * t.a.transpose());
    gk.noalias() -= wv * (t.a * bsa.transpose());
    gk.noalias() -= wv * (bsa * t.a.transpose());
    gk.noalias() += 0.5 * (bmat * smm * bmat);
    gk -= 0.5 * bmat;

    const auto& vb = var_blocks_[static_cast<std::size_t>(p)];
    out.grad.segment(vb.at, m_) = gm;
    Eigen::Index k = vb.at + m_;
    for (int j = 0; j < m_; ++j) {
      out.grad(k) = gl(j, j) * sigmoid(params_(k));
      ++k;
      for (int i = j + 1; i < m_; ++i) out.grad(k++) = gl(i, j);
    }

    if (spec_.train_kernel_params) {
      if (p < g_) {
        const double th = theta(p);
        const double g_av = gk.cwiseProduct(t.u_uu).sum() +
                            gp.cwiseProduct(t.u_uf).sum() + wv * t.ud.sum();
        const Eigen::MatrixXd dphi_u = point_kernel_dtheta(
            d_zp_[static_cast<std::size_t>(p)], spec_.kernel, th);
        const Eigen::MatrixXd dphi_f = point_kernel_dtheta(
            d_sp_[static_cast<std::size_t>(p)], spec_.kernel, th);
        const double g_th =
            t.scale *
            (((gk + gk.transpose()) * t.phi_u).cwiseProduct(dphi_u).sum() +
             (gp * t.phi_f).cwiseProduct(dphi_u).sum() +
             (gp.transpose() * t.phi_u).cwiseProduct(dphi_f).sum() +
             2.0 * wv * t.phi_f.cwiseProduct(dphi_f).sum());
        out.grad(kernel_block_.at + p) =
            g_th * sigmoid(params_(kernel_block_.at + p));
        out.grad(kernel_block_.at + g_ + p) =
            g_av * sigmoid(params_(kernel_block_.at + g_ + p));
      } else {
        const double ml = matern_len();
        const double g_var = gk.cwiseProduct(t.u_uu).sum() +
                             gp.cwiseProduct(t.u_uf).sum() + wv * n_;
        const Eigen::MatrixXd dk_len = matern32_dlen_matrix(d_zz_, 1.0, ml);
        const Eigen::MatrixXd dp_len = matern32_dlen_matrix(d_zs_, 1.0, ml);
        const double g_len = t.scale * (gk.cwiseProduct(dk_len).sum() +
                                        gp.cwiseProduct(dp_len).sum());
        out.grad(kernel_block_.at + 2 * g_) =
            g_var * sigmoid(params_(kernel_block_.at + 2 * g_));
        out.grad(kernel_block_.at + 2 * g_ + 1) =
            g_len * sigmoid(params_(kernel_block_.at + 2 * g_ + 1));
      }
    }
  }

  for (int p = 0; p <= g_; ++p) {
    const auto& vb = var_blocks_[static_cast<std::size_t>(p)];
    check_finite_block(out.grad, vb, "variational " + process_name(p, g_));
    out.grad_variational += out.grad.segment(vb.at, vb.size).squaredNorm();
  }
  out.grad_variational = std::sqrt(out.grad_variational);
  check_finite_block(out.grad, kernel_block_, "kernel parameters");
  check_finite_block(out.grad, charger_block_, "charger parameters");
  check_finite_block(out.grad, noise_block_, "noise parameter");
  out.grad_kernel =
      out.grad.segment(kernel_block_.at, kernel_block_.size).norm();
  out.grad_charger =
      out.grad.segment(charger_block_.at, charger_block_.size).norm();
  out.grad_noise = std::abs(out.grad(noise_block_.at));
  return out;
}

std::vector<TraceRow> SviEngine::run_adam() {
  const int iters = spec_.opt.iterations;
  std::vector<TraceRow> trace;
  trace.reserve(static_cast<std::size_t>(iters) + 1);
  Adam opt(params_.size());
  for (int it = 0; it <= iters; ++it) {
    const Eval e = evaluate(true);
    TraceRow row;
    row.iteration = it;
    row.elbo = e.elbo;
    row.grad_variational = e.grad_variational;
    row.grad_kernel = e.grad_kernel;
    row.grad_charger = e.grad_charger;
    row.grad_noise = e.grad_noise;
    trace.push_back(row);
    if (!std::isfinite(e.elbo)) {
      std::string recent;
      const std::size_t from = trace.size() > 5 ? trace.size() - 5 : 0;
      for (std::size_t i = from; i < trace.size(); ++i) {
        recent += " " + format_double(trace[i].elbo);
      }
      throw training_error("ELBO non-finite at iteration " +
                           std::to_string(it) + "; recent trace:" + recent);
    }
    if (it == iters) break;
    const double lr = spec_.opt.cosine_decay
                          ? cosine_stepped_lr(spec_.opt.step, it, iters)
                          : spec_.opt.step;
    opt.step(params_, -e.grad, lr);
  }
  return trace;
}

FittedModel train_model(const Dataset& train_data, const ModelSpec& spec) {
  spec.validate();
  train_data.validate();
  const int n = static_cast<int>(train_data.stations.size());
  if (n < 2) throw input_error("training needs at least 2 stations");

  // Scope: requested POI types, kept in registry order.
  std::vector<std::string> scope;
  if (spec.poi_types.empty()) {
    scope = train_data.poi_types;
  } else {
    for (const auto& name : spec.poi_types) {
      if (train_data.type_index(name) < 0) {
        throw parameter_error("poi type not in dataset registry: " + name);
      }
    }
    for (const auto& name : train_data.poi_types) {
      if (std::find(spec.poi_types.begin(), spec.poi_types.end(), name) !=
          spec.poi_types.end()) {
        scope.push_back(name);
      }
    }
  }

  const Eigen::VectorXd y_raw = train_data.utilization_vector();
  const StandardizedTarget stz = standardize_target(y_raw);
  const Eigen::MatrixXd x_raw = train_data.covariate_matrix();
  const VectorStats cstats = column_stats(x_raw);
  const Eigen::MatrixXd x_std = apply_column_stats(x_raw, cstats);
  const PointMatrix s = train_data.station_locations();

  std::vector<PointMatrix> poi_locs;
  poi_locs.reserve(scope.size());
  for (const auto& name : scope) {
    poi_locs.push_back(train_data.poi_locations(train_data.type_index(name)));
  }

  const int m = std::min(spec.inducing_count, n);
  const InducingSet inducing =
      sample_inducing(s, m, Rng::mix(spec.seed, 1));

  Rng charger_rng(Rng::mix(spec.seed, 2));
  const std::vector<int> hidden = spec.charger == ChargerKind::kLinear
                                      ? std::vector<int>{}
                                      : spec.charger_hidden;
  const Mlp charger_init(static_cast<int>(x_std.cols()), hidden, charger_rng,
                         spec.charger_weight_sd);

  SviEngine engine(x_std, s, stz.z, poi_locs, inducing.locations, spec,
                   charger_init);
  std::vector<TraceRow> trace = engine.run_adam();

  FittedModel model;
  model.spec = spec;
  model.reference = train_data.reference;
  model.poi_types = scope;
  model.poi_locations = std::move(poi_locs);
  model.inducing = inducing.locations;
  model.theta.resize(scope.size());
  model.alpha_var.resize(scope.size());
  for (int g = 0; g < static_cast<int>(scope.size()); ++g) {
    model.theta[static_cast<std::size_t>(g)] = engine.theta(g);
    model.alpha_var[static_cast<std::size_t>(g)] = engine.alpha_var(g);
  }
  model.matern_var = engine.matern_var();
  model.matern_len = engine.matern_len();
  model.noise_sd = engine.noise_sd();
  model.charger = engine.charger();
  for (int p = 0; p < engine.process_count(); ++p) {
    model.processes.push_back(engine.variational(p));
  }
  model.target_stats = {stz.mean, stz.sd};
  model.covariate_stats = cstats;
  model.covariate_names = train_data.covariate_names;
  model.trace = std::move(trace);
  model.trained = true;
  return model;
}

}  // namespace poigp

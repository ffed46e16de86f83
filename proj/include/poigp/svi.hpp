#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "poigp/dataset.hpp"
#include "poigp/model.hpp"
#include "poigp/rng.hpp"

namespace poigp {

struct InducingSet {
  PointMatrix locations;
  std::vector<int> indices;  // rows of the training set that were chosen
  std::uint64_t seed = 0;
};

// Uniform sample without replacement from the training locations.
InducingSet sample_inducing(const PointMatrix& train_locations, int m,
                            std::uint64_t seed);

// KL(N(m, l_s l_s') || N(0, k_uu)) with the standard jitter policy on k_uu.
double kl_term(const Eigen::VectorXd& m, const Eigen::MatrixXd& l_s,
               const Eigen::MatrixXd& k_uu);

// Marginals of int p(f* | u) q(u) du for one process, given the prior Gram
// pieces. Variances are floored at zero after an internal -1e-10 sanity
// check.
PosteriorMarginals posterior_marginals(const std::string& name,
                                       const Eigen::MatrixXd& k_uu,
                                       const Eigen::MatrixXd& k_uq,
                                       const Eigen::VectorXd& k_qq_diag,
                                       const VariationalProcess& q);

// Evidence-lower-bound machinery for the additive model
//   y_i = g(x_i) + sum_g h_g(s_i) + h_0(s_i) + eps_i
// with one variational process per POI type plus one spatial process, all
// sharing the inducing locations. Parameters live in a single unconstrained
// vector; positive quantities are softplus-reparameterized.
class SviEngine {
 public:
  SviEngine(const Eigen::MatrixXd& x_std, const PointMatrix& stations,
            const Eigen::VectorXd& y_std,
            const std::vector<PointMatrix>& poi_locations,
            const PointMatrix& inducing, const ModelSpec& spec,
            const Mlp& charger_init);

  int process_count() const { return g_ + 1; }
  int inducing_count() const { return m_; }
  Eigen::Index param_count() const { return params_.size(); }
  const Eigen::VectorXd& params() const { return params_; }
  void set_params(const Eigen::VectorXd& p);

  struct Eval {
    double elbo = 0.0;
    double expected_loglik = 0.0;
    double kl_sum = 0.0;
    Eigen::VectorXd grad;  // empty unless gradients requested
    double grad_variational = 0.0;
    double grad_kernel = 0.0;
    double grad_charger = 0.0;
    double grad_noise = 0.0;
  };
  Eval evaluate(bool with_grad) const;
  double elbo() const { return evaluate(false).elbo; }

  // Adam ascent on the ELBO. Returns the trace (iteration 0 = initial
  // state, one row per iteration, final row after the last step).
  std::vector<TraceRow> run_adam();

  // Constrained views of the current parameters.
  double theta(int g) const;
  double alpha_var(int g) const;
  double matern_var() const;
  double matern_len() const;
  double noise_sd() const;
  Mlp charger() const;
  VariationalProcess variational(int process) const;

  // Named setters for oracle tests (values are constrained-scale).
  void set_variational(int process, const Eigen::VectorXd& m,
                       const Eigen::MatrixXd& l);
  void set_theta(int g, double v);
  void set_alpha_var(int g, double v);
  void set_matern(double var, double len);
  void set_noise_sd(double v);

 private:
  struct Block {
    Eigen::Index at = 0;
    Eigen::Index size = 0;
  };

  Eigen::MatrixXd build_k_uu(int process) const;   // without jitter
  Eigen::MatrixXd build_k_uf(int process) const;   // inducing x stations
  Eigen::VectorXd build_k_ff_diag(int process) const;

  void check_finite_block(const Eigen::VectorXd& grad, const Block& b,
                          const std::string& name) const;

  Eigen::VectorXd unpack_m(int process) const;
  Eigen::MatrixXd unpack_l(int process) const;

  // Data, fixed over training.
  Eigen::MatrixXd x_;
  PointMatrix s_;
  Eigen::VectorXd y_;
  PointMatrix z_;
  ModelSpec spec_;
  int n_ = 0, m_ = 0, g_ = 0;

  // Precomputed distances.
  Eigen::MatrixXd d_zz_, d_zs_;
  std::vector<Eigen::MatrixXd> d_zp_, d_sp_;

  Mlp charger_;

  // Parameter layout.
  std::vector<Block> var_blocks_;  // per process: [m, packed lower L]
  Block kernel_block_;             // [theta_g..., alphavar_g..., mvar, mlen]
  Block charger_block_;
  Block noise_block_;
  Eigen::VectorXd params_;

  friend class SviEngineTestAccess;
};

// Binds spec to a training dataset: standardizes, samples inducing points,
// trains, and assembles the model. The dataset passed here should be the
// training split; its statistics are stored for prediction on new data.
FittedModel train_model(const Dataset& train_data, const ModelSpec& spec);

}  // namespace poigp

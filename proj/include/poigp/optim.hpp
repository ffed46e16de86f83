#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "poigp/common.hpp"

namespace poigp {

// Adam in minimization convention. Callers maximizing an objective pass the
// negated gradient.
class Adam {
 public:
  Adam(Eigen::Index n, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : m_(Eigen::VectorXd::Zero(n)),
        v_(Eigen::VectorXd::Zero(n)),
        beta1_(beta1),
        beta2_(beta2),
        eps_(eps) {}

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr) {
    if (params.size() != m_.size() || grad.size() != m_.size()) {
      throw parameter_error("adam: parameter size mismatch");
    }
    ++t_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.array().square().matrix();
    const double c1 = 1.0 - std::pow(beta1_, t_);
    const double c2 = 1.0 - std::pow(beta2_, t_);
    params.array() -=
        lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
  }

 private:
  Eigen::VectorXd m_, v_;
  double beta1_, beta2_, eps_;
  int t_ = 0;
};

// Stepped cosine schedule: the base rate decays over 10 plateaus, reaching
// ~2.4% of base in the last stage (never exactly zero mid-run).
inline double cosine_stepped_lr(double base, int iter, int total_iters) {
  if (total_iters <= 0) return base;
  int stage = iter * 10 / total_iters;
  if (stage > 9) stage = 9;
  constexpr double kPi = 3.14159265358979323846;
  return base * 0.5 * (1.0 + std::cos(kPi * static_cast<double>(stage) / 10.0));
}

}  // namespace poigp

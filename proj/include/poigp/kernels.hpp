#pragma once

#include <cmath>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "poigp/common.hpp"
#include "poigp/geometry.hpp"

namespace poigp {

// Scalar kernels of distance. All are valid (positive semidefinite)
// correlation functions on the plane.

// Triangular bump: 1 at d=0, linear decay, exactly zero beyond theta.
template <typename T>
T relu_kernel(T d, T theta) {
  const T v = T(1) - d / theta;
  return v > T(0) ? v : T(0);
}

// d/dtheta of relu_kernel. Zero outside the support, including at the kink
// d == theta (right-sided choice; optimizers never probe the kink exactly).
template <typename T>
T relu_kernel_dtheta(T d, T theta) {
  return d < theta ? d / (theta * theta) : T(0);
}

template <typename T>
T gaussian_kernel(T d, T theta) {
  return std::exp(-d * d / (T(2) * theta * theta));
}

template <typename T>
T gaussian_kernel_dtheta(T d, T theta) {
  return gaussian_kernel(d, theta) * d * d / (theta * theta * theta);
}

template <typename T>
T matern32(T d, T var, T len) {
  const T a = std::sqrt(T(3)) * d / len;
  return var * (T(1) + a) * std::exp(-a);
}

template <typename T>
T matern32_dvar(T d, T var, T len) {
  return matern32(d, T(1), len);
}

template <typename T>
T matern32_dlen(T d, T var, T len) {
  const T a = std::sqrt(T(3)) * d / len;
  return var * a * a * std::exp(-a) / len;
}

enum class PointKernel { kRelu, kGaussian };

inline std::string point_kernel_name(PointKernel k) {
  return k == PointKernel::kRelu ? "relu" : "gaussian";
}

inline PointKernel point_kernel_from_name(const std::string& name) {
  if (name == "relu") return PointKernel::kRelu;
  if (name == "gaussian") return PointKernel::kGaussian;
  throw parameter_error("unknown point kernel: " + name +
                        " (expected relu or gaussian)");
}

// Elementwise kernel over a precomputed distance matrix.
inline Eigen::MatrixXd point_kernel_matrix(const Eigen::MatrixXd& dist,
                                           PointKernel kind, double theta) {
  if (!(theta > 0.0)) throw parameter_error("kernel width must be positive");
  if (kind == PointKernel::kRelu) {
    return (1.0 - dist.array() / theta).max(0.0).matrix();
  }
  return (-dist.array().square() / (2.0 * theta * theta)).exp().matrix();
}

inline Eigen::MatrixXd point_kernel_dtheta(const Eigen::MatrixXd& dist,
                                           PointKernel kind, double theta) {
  if (kind == PointKernel::kRelu) {
    return ((dist.array() < theta).cast<double>() * dist.array() /
            (theta * theta))
        .matrix();
  }
  return ((-dist.array().square() / (2.0 * theta * theta)).exp() *
          dist.array().square() / (theta * theta * theta))
      .matrix();
}

inline Eigen::MatrixXd matern32_matrix(const Eigen::MatrixXd& dist, double var,
                                       double len) {
  if (!(var > 0.0) || !(len > 0.0)) {
    throw parameter_error("matern parameters must be positive");
  }
  const auto a = std::sqrt(3.0) * dist.array() / len;
  return (var * (1.0 + a) * (-a).exp()).matrix();
}

inline Eigen::MatrixXd matern32_dlen_matrix(const Eigen::MatrixXd& dist,
                                            double var, double len) {
  const auto a = std::sqrt(3.0) * dist.array() / len;
  return (var * a.square() * (-a).exp() / len).matrix();
}

// Finite-rank covariance induced by a set of influence points: each point
// contributes a bump k(.;theta), and the process is a random linear
// combination with iid N(0, sigma_a2) weights, so
//   cov(s, s') = sigma_a2 * sum_w k(|s-w|) k(|s'-w|).
// dist_a, dist_b are distances from the two evaluation sets to the points.
inline Eigen::MatrixXd poi_cov(const Eigen::MatrixXd& dist_a,
                               const Eigen::MatrixXd& dist_b, PointKernel kind,
                               double theta, double sigma_a2) {
  if (!(sigma_a2 >= 0.0)) {
    throw parameter_error("weight variance must be nonnegative");
  }
  if (dist_a.cols() != dist_b.cols()) {
    throw parameter_error("poi_cov: influence point count mismatch");
  }
  const Eigen::MatrixXd phi_a = point_kernel_matrix(dist_a, kind, theta);
  const Eigen::MatrixXd phi_b = point_kernel_matrix(dist_b, kind, theta);
  return sigma_a2 * phi_a * phi_b.transpose();
}

// Diagonal of poi_cov(dist, dist, ...) without the full product.
inline Eigen::VectorXd poi_cov_diag(const Eigen::MatrixXd& dist,
                                    PointKernel kind, double theta,
                                    double sigma_a2) {
  const Eigen::MatrixXd phi = point_kernel_matrix(dist, kind, theta);
  return sigma_a2 * phi.array().square().rowwise().sum().matrix();
}

inline constexpr double kJitterStart = 1e-6;
inline constexpr double kJitterMax = 1e-4;

struct CholResult {
  Eigen::MatrixXd l;      // lower factor of K + jitter*I
  double jitter = 0.0;    // jitter actually used
};

// Cholesky with escalating diagonal jitter. Fails loudly with the matrix
// name rather than silently inflating the diagonal past kJitterMax.
inline CholResult chol_with_jitter(const Eigen::MatrixXd& k,
                                   const std::string& name) {
  if (k.rows() != k.cols()) {
    throw parameter_error(name + ": cholesky needs a square matrix");
  }
  double jitter = kJitterStart;
  while (jitter <= kJitterMax * (1.0 + 1e-12)) {
    Eigen::MatrixXd kj = k;
    kj.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(kj);
    if (llt.info() == Eigen::Success) {
      CholResult out;
      out.l = llt.matrixL();
      out.jitter = jitter;
      return out;
    }
    jitter *= 10.0;
  }
  throw numeric_error(name + ": not positive definite even with jitter " +
                      format_double(kJitterMax));
}

}  // namespace poigp

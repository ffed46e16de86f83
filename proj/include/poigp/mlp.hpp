#pragma once

#include <vector>

#include <Eigen/Dense>

#include "poigp/common.hpp"
#include "poigp/rng.hpp"

namespace poigp {

// Dense feed-forward net with tanh hidden layers and a scalar linear head.
// With no hidden layers this degenerates to an affine map w'x + b, which is
// how the linear charger function is realized.
class Mlp {
 public:
  Mlp() = default;

  Mlp(int input_dim, std::vector<int> hidden, Rng& rng, double weight_sd)
      : input_dim_(input_dim), hidden_(std::move(hidden)) {
    if (input_dim_ < 1) throw parameter_error("mlp: input_dim must be >= 1");
    for (int h : hidden_) {
      if (h < 1) throw parameter_error("mlp: hidden width must be >= 1");
    }
    int prev = input_dim_;
    for (std::size_t l = 0; l <= hidden_.size(); ++l) {
      const int out = l < hidden_.size() ? hidden_[l] : 1;
      Eigen::MatrixXd w(out, prev);
      for (Eigen::Index i = 0; i < w.rows(); ++i) {
        for (Eigen::Index j = 0; j < w.cols(); ++j) {
          w(i, j) = rng.normal(0.0, weight_sd);
        }
      }
      weights_.push_back(std::move(w));
      biases_.push_back(Eigen::VectorXd::Zero(out));
      prev = out;
    }
  }

  int input_dim() const { return input_dim_; }
  const std::vector<int>& hidden() const { return hidden_; }
  std::size_t layer_count() const { return weights_.size(); }
  const Eigen::MatrixXd& weight(std::size_t l) const { return weights_[l]; }
  const Eigen::VectorXd& bias(std::size_t l) const { return biases_[l]; }

  Eigen::Index param_count() const {
    Eigen::Index n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      n += weights_[l].size() + biases_[l].size();
    }
    return n;
  }

  Eigen::VectorXd pack() const {
    Eigen::VectorXd out(param_count());
    Eigen::Index at = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      const auto& w = weights_[l];
      out.segment(at, w.size()) =
          Eigen::Map<const Eigen::VectorXd>(w.data(), w.size());
      at += w.size();
      out.segment(at, biases_[l].size()) = biases_[l];
      at += biases_[l].size();
    }
    return out;
  }

  void unpack(const Eigen::VectorXd& flat) {
    if (flat.size() != param_count()) {
      throw parameter_error("mlp: flat parameter size mismatch");
    }
    Eigen::Index at = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      auto& w = weights_[l];
      w = Eigen::Map<const Eigen::MatrixXd>(flat.data() + at, w.rows(),
                                            w.cols());
      at += w.size();
      biases_[l] = flat.segment(at, biases_[l].size());
      at += biases_[l].size();
    }
  }

  // x: rows are inputs. Returns one output per row.
  Eigen::VectorXd forward(const Eigen::MatrixXd& x) const {
    check_input(x);
    Eigen::MatrixXd a = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Eigen::MatrixXd z =
          (a * weights_[l].transpose()).rowwise() + biases_[l].transpose();
      if (l + 1 < weights_.size()) {
        a = z.array().tanh().matrix();
      } else {
        a = std::move(z);
      }
    }
    return a.col(0);
  }

  // Gradient of sum_i upstream(i) * output(i) with respect to the packed
  // parameters (same layout as pack()).
  Eigen::VectorXd backward(const Eigen::MatrixXd& x,
                           const Eigen::VectorXd& upstream) const {
    check_input(x);
    if (upstream.size() != x.rows()) {
      throw parameter_error("mlp: upstream size mismatch");
    }
    // Forward with cached activations per layer.
    std::vector<Eigen::MatrixXd> acts;
    acts.reserve(weights_.size() + 1);
    acts.push_back(x);
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Eigen::MatrixXd z = (acts.back() * weights_[l].transpose()).rowwise() +
                          biases_[l].transpose();
      if (l + 1 < weights_.size()) z = z.array().tanh().matrix();
      acts.push_back(std::move(z));
    }

    Eigen::VectorXd grad(param_count());
    Eigen::MatrixXd delta = upstream;  // N x 1 at the head
    for (std::size_t li = weights_.size(); li-- > 0;) {
      if (li + 1 < weights_.size()) {
        // act = tanh(z) was cached, so tanh' = 1 - act^2.
        delta = (delta.array() * (1.0 - acts[li + 1].array().square()))
                    .matrix();
      }
      const Eigen::MatrixXd gw = delta.transpose() * acts[li];
      const Eigen::VectorXd gb = delta.colwise().sum();
      Eigen::Index at = 0;
      for (std::size_t l = 0; l < li; ++l) {
        at += weights_[l].size() + biases_[l].size();
      }
      grad.segment(at, gw.size()) =
          Eigen::Map<const Eigen::VectorXd>(gw.data(), gw.size());
      grad.segment(at + gw.size(), gb.size()) = gb;
      if (li > 0) delta = (delta * weights_[li]).eval();
    }
    return grad;
  }

 private:
  void check_input(const Eigen::MatrixXd& x) const {
    if (x.cols() != input_dim_) {
      throw parameter_error("mlp: input has " + std::to_string(x.cols()) +
                            " columns, expected " +
                            std::to_string(input_dim_));
    }
  }

  int input_dim_ = 0;
  std::vector<int> hidden_;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
};

}  // namespace poigp

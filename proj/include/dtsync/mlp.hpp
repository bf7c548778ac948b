#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

#include "dtsync/rng.hpp"

namespace dtsync {

// Fully connected network with tanh hidden layers and a linear output.
// Samples are columns. Parameters live in one flat vector so optimizers and
// gradient accumulation can treat them uniformly.
class Mlp {
 public:
  struct Cache {
    std::vector<Eigen::MatrixXd> activations;  // input, then each hidden layer output
  };

  Mlp() = default;
  // widths = {inputs, hidden..., outputs}. Output layer weights are scaled by
  // `output_gain` at initialization.
  Mlp(std::vector<int> widths, Rng& rng, double output_gain = 0.1);

  int inputs() const { return widths_.front(); }
  int outputs() const { return widths_.back(); }
  std::size_t num_params() const { return static_cast<std::size_t>(params_.size()); }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache* cache = nullptr) const;
  // Adds d(loss)/d(params) to `grad` given d(loss)/d(output) for the batch
  // cached by forward().
  void backward(const Cache& cache, const Eigen::MatrixXd& grad_out, Eigen::VectorXd& grad) const;

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }
  const std::vector<int>& widths() const { return widths_; }

 private:
  struct Layer {
    Eigen::Index weight_offset;
    Eigen::Index bias_offset;
    int rows;
    int cols;
  };
  Eigen::Map<const Eigen::MatrixXd> weight(std::size_t l) const;
  Eigen::Map<const Eigen::VectorXd> bias(std::size_t l) const;

  std::vector<int> widths_;
  std::vector<Layer> layers_;
  Eigen::VectorXd params_;
};

class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
  double learning_rate() const { return lr_; }

 private:
  double lr_ = 1e-3;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long t_ = 0;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
};

// Rescales grad in place so that its 2-norm is at most max_norm.
void clip_norm(Eigen::VectorXd& grad, double max_norm);

}  // namespace dtsync

#include "dtsync/mlp.hpp"

#include <cmath>

#include "dtsync/errors.hpp"

namespace dtsync {

Mlp::Mlp(std::vector<int> widths, Rng& rng, double output_gain) : widths_(std::move(widths)) {
  if (widths_.size() < 2) throw InvalidParameter("network needs at least an input and an output width");
  for (int w : widths_)
    if (w < 1) throw InvalidParameter("network widths must be positive");
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    Layer layer{offset, offset + widths_[l + 1] * widths_[l], widths_[l + 1], widths_[l]};
    offset = layer.bias_offset + layer.rows;
    layers_.push_back(layer);
  }
  params_ = Eigen::VectorXd::Zero(offset);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    // Glorot uniform.
    double limit = std::sqrt(6.0 / (layer.rows + layer.cols));
    if (l + 1 == layers_.size()) limit *= output_gain;
    std::uniform_real_distribution<double> init(-limit, limit);
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(layer.rows) * layer.cols; ++i)
      params_(layer.weight_offset + i) = init(rng);
  }
}

Eigen::Map<const Eigen::MatrixXd> Mlp::weight(std::size_t l) const {
  const Layer& layer = layers_[l];
  return {params_.data() + layer.weight_offset, layer.rows, layer.cols};
}

Eigen::Map<const Eigen::VectorXd> Mlp::bias(std::size_t l) const {
  const Layer& layer = layers_[l];
  return {params_.data() + layer.bias_offset, layer.rows};
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Cache* cache) const {
  if (x.rows() != inputs()) throw InvalidParameter("network input has the wrong width");
  if (cache) {
    cache->activations.clear();
    cache->activations.push_back(x);
  }
  Eigen::MatrixXd h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = weight(l) * h;
    z.colwise() += bias(l);
    if (l + 1 < layers_.size()) {
      h = z.array().tanh().matrix();
      if (cache) cache->activations.push_back(h);
    } else {
      h = std::move(z);
    }
  }
  return h;
}

void Mlp::backward(const Cache& cache, const Eigen::MatrixXd& grad_out, Eigen::VectorXd& grad) const {
  if (grad.size() != params_.size()) grad = Eigen::VectorXd::Zero(params_.size());
  Eigen::MatrixXd delta = grad_out;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const Layer& layer = layers_[l];
    const Eigen::MatrixXd& input = cache.activations[l];
    Eigen::Map<Eigen::MatrixXd> gw(grad.data() + layer.weight_offset, layer.rows, layer.cols);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + layer.bias_offset, layer.rows);
    gw.noalias() += delta * input.transpose();
    gb += delta.rowwise().sum();
    if (l == 0) break;
    Eigen::MatrixXd back = weight(l).transpose() * delta;
    // tanh' = 1 - tanh^2, with tanh stored as the layer input.
    delta = back.array() * (1.0 - input.array().square());
  }
}

Adam::Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps),
      m_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))),
      v_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))) {
  if (!(lr > 0.0)) throw InvalidParameter("learning rate must be > 0");
}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

void clip_norm(Eigen::VectorXd& grad, double max_norm) {
  const double n = grad.norm();
  if (n > max_norm && n > 0.0) grad *= max_norm / n;
}

}  // namespace dtsync

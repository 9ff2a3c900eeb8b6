#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace gridcal {

/// Activations: one row per pixel (sample-major, then row-major pixels), one
/// column per feature.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Parameter {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> value;
  std::vector<double> grad;

  Parameter() = default;
  Parameter(std::string name, std::vector<std::size_t> shape);
  std::size_t size() const { return value.size(); }
  void zero_grad();
};

/// Square "same"-padded convolution with stride 1. Weights are laid out as
/// (kh, kw, in, out).
class Conv2d {
public:
  Conv2d() = default;
  Conv2d(const std::string& name, std::size_t kernel, std::size_t in_features, std::size_t out_features);

  // Uniform in +-sqrt(1/fan_in) for weights and biases.
  template <typename Rng> void initialize(Rng& uniform01);

  std::size_t kernel() const { return kernel_; }
  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }

  Matrix forward(const Matrix& x, std::size_t batch, std::size_t height, std::size_t width) const;
  // Accumulates weight/bias gradients; returns dL/dx when `need_input_grad`.
  Matrix backward(const Matrix& x, const Matrix& dy, std::size_t batch, std::size_t height,
                  std::size_t width, bool need_input_grad);

  Parameter weight;
  Parameter bias;

private:
  Matrix im2col(const Matrix& x, std::size_t sample, std::size_t height, std::size_t width) const;

  std::size_t kernel_ = 1;
  std::size_t in_ = 0;
  std::size_t out_ = 0;
};

enum class BnMode { Train, TestRunning, TestStochastic };

struct BatchStatistics {
  std::vector<double> mean;
  std::vector<double> var;  // biased (1/n) variance
};

/// Per-feature batch normalization over all rows of the activation matrix:
/// y = (x - mu) / sqrt(var + eps) * gamma + beta.
class BatchNormLayer {
public:
  BatchNormLayer() = default;
  BatchNormLayer(const std::string& name, std::size_t features, double epsilon = 1e-5,
                 double momentum = 0.1);

  std::size_t features() const { return gamma.size(); }

  static BatchStatistics statistics(const Matrix& x);

  // Normalizes with the batch's own statistics and caches what backward needs.
  // Running statistics move towards the batch statistics by `momentum`.
  Matrix forward_train(const Matrix& x, bool update_running);
  // Inference: TestRunning uses the stored statistics, TestStochastic the
  // supplied reference statistics.
  Matrix forward(const Matrix& x, BnMode mode, const BatchStatistics* reference = nullptr) const;
  Matrix backward(const Matrix& dy);

  BatchStatistics running_statistics() const;
  void set_running_statistics(const BatchStatistics& stats);

  Parameter gamma;
  Parameter beta;
  Parameter running_mean;
  Parameter running_var;
  double epsilon = 1e-5;
  double momentum = 0.1;

private:
  Matrix normalize(const Matrix& x, const BatchStatistics& stats) const;

  Matrix xhat_;
  std::vector<double> inv_std_;
};

void relu_inplace(Matrix& x);
// dy zeroed where the forward input was <= 0.
void relu_backward_inplace(Matrix& dy, const Matrix& forward_input);

template <typename Rng> void Conv2d::initialize(Rng& uniform01) {
  const double bound = std::sqrt(1.0 / static_cast<double>(kernel_ * kernel_ * in_));
  for (double& w : weight.value) w = (2.0 * uniform01() - 1.0) * bound;
  for (double& b : bias.value) b = (2.0 * uniform01() - 1.0) * bound;
}

} // namespace gridcal

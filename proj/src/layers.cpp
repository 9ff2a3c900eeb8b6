#include "gridcal/layers.hpp"

#include "gridcal/error.hpp"

#include <algorithm>
#include <numeric>

namespace gridcal {

Parameter::Parameter(std::string n, std::vector<std::size_t> s) : name(std::move(n)), shape(std::move(s)) {
  const std::size_t count =
      std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  value.assign(count, 0.0);
  grad.assign(count, 0.0);
}

void Parameter::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

Conv2d::Conv2d(const std::string& name, std::size_t kernel, std::size_t in_features,
               std::size_t out_features)
    : weight(name + ".weight", {kernel, kernel, in_features, out_features}),
      bias(name + ".bias", {out_features}),
      kernel_(kernel),
      in_(in_features),
      out_(out_features) {
  if (kernel % 2 == 0) throw InvalidArgument("conv kernel size must be odd");
}

Matrix Conv2d::im2col(const Matrix& x, std::size_t sample, std::size_t height, std::size_t width) const {
  const std::size_t pixels = height * width;
  const auto pad = static_cast<std::ptrdiff_t>(kernel_ / 2);
  Matrix cols = Matrix::Zero(static_cast<Eigen::Index>(pixels), static_cast<Eigen::Index>(kernel_ * kernel_ * in_));
  const std::size_t base = sample * pixels;
  for (std::size_t h = 0; h < height; ++h) {
    for (std::size_t w = 0; w < width; ++w) {
      const auto row = static_cast<Eigen::Index>(h * width + w);
      for (std::size_t kh = 0; kh < kernel_; ++kh) {
        const auto sh = static_cast<std::ptrdiff_t>(h + kh) - pad;
        if (sh < 0 || sh >= static_cast<std::ptrdiff_t>(height)) continue;
        for (std::size_t kw = 0; kw < kernel_; ++kw) {
          const auto sw = static_cast<std::ptrdiff_t>(w + kw) - pad;
          if (sw < 0 || sw >= static_cast<std::ptrdiff_t>(width)) continue;
          const auto src = static_cast<Eigen::Index>(base + static_cast<std::size_t>(sh) * width +
                                                     static_cast<std::size_t>(sw));
          cols.row(row).segment(static_cast<Eigen::Index>((kh * kernel_ + kw) * in_),
                                static_cast<Eigen::Index>(in_)) = x.row(src);
        }
      }
    }
  }
  return cols;
}

Matrix Conv2d::forward(const Matrix& x, std::size_t batch, std::size_t height, std::size_t width) const {
  const auto pixels = static_cast<Eigen::Index>(height * width);
  if (x.rows() != static_cast<Eigen::Index>(batch) * pixels || x.cols() != static_cast<Eigen::Index>(in_)) {
    throw ShapeError("conv input has wrong dimensions");
  }
  const Eigen::Map<const Matrix> w(weight.value.data(), static_cast<Eigen::Index>(kernel_ * kernel_ * in_),
                                   static_cast<Eigen::Index>(out_));
  const Eigen::Map<const Eigen::RowVectorXd> b(bias.value.data(), static_cast<Eigen::Index>(out_));
  Matrix y(x.rows(), static_cast<Eigen::Index>(out_));
  if (kernel_ == 1) {
    y.noalias() = x * w;
  } else {
    for (std::size_t n = 0; n < batch; ++n) {
      const Matrix cols = im2col(x, n, height, width);
      y.middleRows(static_cast<Eigen::Index>(n) * pixels, pixels).noalias() = cols * w;
    }
  }
  y.rowwise() += b;
  return y;
}

Matrix Conv2d::backward(const Matrix& x, const Matrix& dy, std::size_t batch, std::size_t height,
                        std::size_t width, bool need_input_grad) {
  const auto pixels = static_cast<Eigen::Index>(height * width);
  const auto k2in = static_cast<Eigen::Index>(kernel_ * kernel_ * in_);
  const Eigen::Map<const Matrix> w(weight.value.data(), k2in, static_cast<Eigen::Index>(out_));
  Eigen::Map<Matrix> dw(weight.grad.data(), k2in, static_cast<Eigen::Index>(out_));
  Eigen::Map<Eigen::RowVectorXd> db(bias.grad.data(), static_cast<Eigen::Index>(out_));
  db += dy.colwise().sum();

  Matrix dx;
  if (need_input_grad) dx = Matrix::Zero(x.rows(), x.cols());
  if (kernel_ == 1) {
    dw.noalias() += x.transpose() * dy;
    if (need_input_grad) dx.noalias() = dy * w.transpose();
    return dx;
  }
  const auto pad = static_cast<std::ptrdiff_t>(kernel_ / 2);
  for (std::size_t n = 0; n < batch; ++n) {
    const Matrix cols = im2col(x, n, height, width);
    const auto dyn = dy.middleRows(static_cast<Eigen::Index>(n) * pixels, pixels);
    dw.noalias() += cols.transpose() * dyn;
    if (!need_input_grad) continue;
    const Matrix dcols = dyn * w.transpose();
    const std::size_t base = n * static_cast<std::size_t>(pixels);
    for (std::size_t h = 0; h < height; ++h) {
      for (std::size_t ww = 0; ww < width; ++ww) {
        const auto row = static_cast<Eigen::Index>(h * width + ww);
        for (std::size_t kh = 0; kh < kernel_; ++kh) {
          const auto sh = static_cast<std::ptrdiff_t>(h + kh) - pad;
          if (sh < 0 || sh >= static_cast<std::ptrdiff_t>(height)) continue;
          for (std::size_t kw = 0; kw < kernel_; ++kw) {
            const auto sw = static_cast<std::ptrdiff_t>(ww + kw) - pad;
            if (sw < 0 || sw >= static_cast<std::ptrdiff_t>(width)) continue;
            const auto dst = static_cast<Eigen::Index>(base + static_cast<std::size_t>(sh) * width +
                                                       static_cast<std::size_t>(sw));
            dx.row(dst) += dcols.row(row).segment(static_cast<Eigen::Index>((kh * kernel_ + kw) * in_),
                                                  static_cast<Eigen::Index>(in_));
          }
        }
      }
    }
  }
  return dx;
}

BatchNormLayer::BatchNormLayer(const std::string& name, std::size_t features, double eps, double mom)
    : gamma(name + ".gamma", {features}),
      beta(name + ".beta", {features}),
      running_mean(name + ".running_mean", {features}),
      running_var(name + ".running_var", {features}),
      epsilon(eps),
      momentum(mom) {
  std::fill(gamma.value.begin(), gamma.value.end(), 1.0);
  std::fill(running_var.value.begin(), running_var.value.end(), 1.0);
}

BatchStatistics BatchNormLayer::statistics(const Matrix& x) {
  if (x.rows() == 0) throw InvalidArgument("batch statistics of an empty batch");
  BatchStatistics s;
  const auto n = static_cast<double>(x.rows());
  const Eigen::RowVectorXd mean = x.colwise().sum() / n;
  const Eigen::RowVectorXd var = (x.rowwise() - mean).array().square().colwise().sum() / n;
  s.mean.assign(mean.data(), mean.data() + mean.size());
  s.var.assign(var.data(), var.data() + var.size());
  return s;
}

Matrix BatchNormLayer::normalize(const Matrix& x, const BatchStatistics& stats) const {
  const auto f = static_cast<Eigen::Index>(features());
  if (x.cols() != f || stats.mean.size() != features() || stats.var.size() != features()) {
    throw ShapeError("batch norm feature count mismatch");
  }
  Eigen::RowVectorXd scale(f), shift(f);
  for (Eigen::Index j = 0; j < f; ++j) {
    const auto u = static_cast<std::size_t>(j);
    const double inv = 1.0 / std::sqrt(stats.var[u] + epsilon);
    scale[j] = gamma.value[u] * inv;
    shift[j] = beta.value[u] - stats.mean[u] * scale[j];
  }
  Matrix y = x.array().rowwise() * scale.array();
  y.rowwise() += shift;
  return y;
}

Matrix BatchNormLayer::forward_train(const Matrix& x, bool update_running) {
  const BatchStatistics stats = statistics(x);
  const auto f = static_cast<Eigen::Index>(features());
  inv_std_.resize(features());
  Eigen::RowVectorXd mean(f), inv(f);
  for (Eigen::Index j = 0; j < f; ++j) {
    const auto u = static_cast<std::size_t>(j);
    inv_std_[u] = 1.0 / std::sqrt(stats.var[u] + epsilon);
    mean[j] = stats.mean[u];
    inv[j] = inv_std_[u];
  }
  xhat_ = (x.rowwise() - mean).array().rowwise() * inv.array();
  if (update_running) {
    for (std::size_t j = 0; j < features(); ++j) {
      running_mean.value[j] = (1.0 - momentum) * running_mean.value[j] + momentum * stats.mean[j];
      running_var.value[j] =
          std::max((1.0 - momentum) * running_var.value[j] + momentum * stats.var[j], 1e-12);
    }
  }
  const Eigen::Map<const Eigen::RowVectorXd> g(gamma.value.data(), f);
  const Eigen::Map<const Eigen::RowVectorXd> b(beta.value.data(), f);
  Matrix y = xhat_.array().rowwise() * g.array();
  y.rowwise() += b;
  return y;
}

Matrix BatchNormLayer::forward(const Matrix& x, BnMode mode, const BatchStatistics* reference) const {
  switch (mode) {
  case BnMode::TestRunning:
    return normalize(x, running_statistics());
  case BnMode::TestStochastic:
    if (!reference) throw InvalidArgument("stochastic batch norm needs reference statistics");
    return normalize(x, *reference);
  case BnMode::Train:
    return normalize(x, statistics(x));
  }
  return {};
}

Matrix BatchNormLayer::backward(const Matrix& dy) {
  if (dy.rows() != xhat_.rows()) throw ShapeError("batch norm backward without matching forward");
  const auto f = static_cast<Eigen::Index>(features());
  const auto n = static_cast<double>(dy.rows());
  Eigen::Map<Eigen::RowVectorXd> dg(gamma.grad.data(), f);
  Eigen::Map<Eigen::RowVectorXd> db(beta.grad.data(), f);
  dg += (dy.array() * xhat_.array()).colwise().sum().matrix();
  db += dy.colwise().sum();

  const Eigen::Map<const Eigen::RowVectorXd> g(gamma.value.data(), f);
  const Matrix dxhat = dy.array().rowwise() * g.array();
  const Eigen::RowVectorXd sum_dxhat = dxhat.colwise().sum();
  const Eigen::RowVectorXd sum_dxhat_xhat = (dxhat.array() * xhat_.array()).colwise().sum();
  Matrix dx = (dxhat * n).rowwise() - sum_dxhat;
  dx -= (xhat_.array().rowwise() * sum_dxhat_xhat.array()).matrix();
  Eigen::RowVectorXd scale(f);
  for (Eigen::Index j = 0; j < f; ++j) scale[j] = inv_std_[static_cast<std::size_t>(j)] / n;
  return dx.array().rowwise() * scale.array();
}

BatchStatistics BatchNormLayer::running_statistics() const {
  return {running_mean.value, running_var.value};
}

void BatchNormLayer::set_running_statistics(const BatchStatistics& stats) {
  if (stats.mean.size() != features() || stats.var.size() != features()) {
    throw ShapeError("running statistics feature count mismatch");
  }
  running_mean.value = stats.mean;
  running_var.value = stats.var;
}

void relu_inplace(Matrix& x) { x = x.cwiseMax(0.0); }

void relu_backward_inplace(Matrix& dy, const Matrix& forward_input) {
  dy = (forward_input.array() > 0.0).select(dy, 0.0);
}

} // namespace gridcal

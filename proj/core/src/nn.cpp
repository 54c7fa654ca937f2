#include "reland/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "reland/errors.hpp"

namespace reland {

double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double relu(double z) { return z > 0.0 ? z : 0.0; }

Vec sparsemax(const Vec& z) {
  const std::size_t d = z.size();
  if (d == 0) throw dimension_error("sparsemax on empty vector");
  for (double v : z) {
    if (std::isnan(v)) throw domain_error("NaN input to sparsemax");
  }
  Vec sorted = z;
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  double cumsum = 0.0;
  double tau = 0.0;
  std::size_t support = 0;
  for (std::size_t k = 1; k <= d; ++k) {
    cumsum += sorted[k - 1];
    // strict threshold rule: 1 + k z_(k) > sum_{j<=k} z_(j)
    if (1.0 + static_cast<double>(k) * sorted[k - 1] > cumsum) {
      support = k;
      tau = (cumsum - 1.0) / static_cast<double>(k);
    } else {
      cumsum -= sorted[k - 1];
      break;
    }
  }
  Vec p(d);
  for (std::size_t i = 0; i < d; ++i) p[i] = std::max(z[i] - tau, 0.0);
  return p;
}

Vec sparsemax_backward(const Vec& p, const Vec& upstream) {
  if (p.size() != upstream.size()) throw dimension_error("sparsemax_backward size mismatch");
  double sum_support = 0.0;
  std::size_t support = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) {
      sum_support += upstream[i];
      ++support;
    }
  }
  Vec out(p.size(), 0.0);
  if (support == 0) return out;  // unreachable for valid sparsemax outputs
  const double mean_support = sum_support / static_cast<double>(support);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) out[i] = upstream[i] - mean_support;
  }
  return out;
}

DenseLayer::DenseLayer(std::size_t d_out, std::size_t d_in)
    : weights(d_out, d_in),
      bias(d_out, 0.0),
      grad_weights(d_out, d_in),
      grad_bias(d_out, 0.0) {}

void DenseLayer::init_glorot(std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(weights.rows + weights.cols));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (double& w : weights.data) w = u(rng);
  std::fill(bias.begin(), bias.end(), 0.0);
}

void DenseLayer::zero_grad() {
  std::fill(grad_weights.data.begin(), grad_weights.data.end(), 0.0);
  std::fill(grad_bias.begin(), grad_bias.end(), 0.0);
}

Matrix DenseLayer::forward(const Matrix& x) const {
  if (x.cols != weights.cols) throw dimension_error("dense_forward input dim mismatch");
  Matrix y(x.rows, weights.rows);
  for (std::size_t n = 0; n < x.rows; ++n) {
    const double* xr = x.row(n);
    double* yr = y.row(n);
    for (std::size_t o = 0; o < weights.rows; ++o) {
      double acc = bias[o];
      const double* wr = weights.row(o);
      for (std::size_t i = 0; i < weights.cols; ++i) acc += wr[i] * xr[i];
      yr[o] = acc;
    }
  }
  return y;
}

Matrix DenseLayer::backward(const Matrix& x, const Matrix& upstream) {
  if (upstream.rows != x.rows || upstream.cols != weights.rows) {
    throw dimension_error("dense_backward shape mismatch");
  }
  Matrix dx(x.rows, weights.cols);
  for (std::size_t n = 0; n < x.rows; ++n) {
    const double* xr = x.row(n);
    const double* ur = upstream.row(n);
    double* dxr = dx.row(n);
    for (std::size_t o = 0; o < weights.rows; ++o) {
      const double u = ur[o];
      grad_bias[o] += u;
      double* gwr = grad_weights.row(o);
      const double* wr = weights.row(o);
      for (std::size_t i = 0; i < weights.cols; ++i) {
        gwr[i] += u * xr[i];
        dxr[i] += u * wr[i];
      }
    }
  }
  return dx;
}

void DenseLayer::visit(const std::function<void(double&, double&)>& fn) {
  for (std::size_t i = 0; i < weights.data.size(); ++i) fn(weights.data[i], grad_weights.data[i]);
  for (std::size_t i = 0; i < bias.size(); ++i) fn(bias[i], grad_bias[i]);
}

BatchNormLayer::BatchNormLayer(std::size_t dim)
    : scale(dim, 1.0),
      shift(dim, 0.0),
      running_mean(dim, 0.0),
      running_var(dim, 1.0),
      grad_scale(dim, 0.0),
      grad_shift(dim, 0.0) {}

void BatchNormLayer::zero_grad() {
  std::fill(grad_scale.begin(), grad_scale.end(), 0.0);
  std::fill(grad_shift.begin(), grad_shift.end(), 0.0);
}

Matrix BatchNormLayer::forward(const Matrix& x, bool training) {
  if (x.cols != scale.size()) throw dimension_error("bn_forward input dim mismatch");
  const std::size_t n = x.rows;
  const std::size_t d = x.cols;
  Matrix y(n, d);
  if (!training) {
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < d; ++c) {
        const double xhat = (x(r, c) - running_mean[c]) / std::sqrt(running_var[c] + epsilon);
        y(r, c) = scale[c] * xhat + shift[c];
      }
    }
    return y;
  }
  if (n < 2) throw domain_error("bn_forward training mode needs batch size >= 2");
  cached_mean.assign(d, 0.0);
  cached_var.assign(d, 0.0);
  cached_istd.assign(d, 0.0);
  cached_xhat = Matrix(n, d);
  for (std::size_t c = 0; c < d; ++c) {
    double m = 0.0;
    for (std::size_t r = 0; r < n; ++r) m += x(r, c);
    m /= static_cast<double>(n);
    double v = 0.0;
    for (std::size_t r = 0; r < n; ++r) v += (x(r, c) - m) * (x(r, c) - m);
    v /= static_cast<double>(n);
    cached_mean[c] = m;
    cached_var[c] = v;
    cached_istd[c] = 1.0 / std::sqrt(v + epsilon);
    running_mean[c] = momentum * running_mean[c] + (1.0 - momentum) * m;
    running_var[c] = momentum * running_var[c] + (1.0 - momentum) * v;
    for (std::size_t r = 0; r < n; ++r) {
      cached_xhat(r, c) = (x(r, c) - m) * cached_istd[c];
      y(r, c) = scale[c] * cached_xhat(r, c) + shift[c];
    }
  }
  return y;
}

Matrix BatchNormLayer::backward(const Matrix& x, const Matrix& upstream) {
  const std::size_t n = x.rows;
  const std::size_t d = x.cols;
  if (cached_xhat.rows != n || cached_xhat.cols != d) {
    throw state_error("bn_backward without matching forward cache");
  }
  Matrix dx(n, d);
  for (std::size_t c = 0; c < d; ++c) {
    double sum_u = 0.0;
    double sum_u_xhat = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      sum_u += upstream(r, c);
      sum_u_xhat += upstream(r, c) * cached_xhat(r, c);
    }
    grad_shift[c] += sum_u;
    grad_scale[c] += sum_u_xhat;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) {
      dx(r, c) = scale[c] * cached_istd[c] *
                 (upstream(r, c) - inv_n * sum_u - cached_xhat(r, c) * inv_n * sum_u_xhat);
    }
  }
  return dx;
}

void BatchNormLayer::visit(const std::function<void(double&, double&)>& fn) {
  for (std::size_t i = 0; i < scale.size(); ++i) fn(scale[i], grad_scale[i]);
  for (std::size_t i = 0; i < shift.size(); ++i) fn(shift[i], grad_shift[i]);
}

Matrix relu_forward(const Matrix& x) {
  Matrix y = x;
  for (double& v : y.data) v = relu(v);
  return y;
}

Matrix relu_backward(const Matrix& x, const Matrix& upstream) {
  if (x.rows != upstream.rows || x.cols != upstream.cols) {
    throw dimension_error("relu_backward shape mismatch");
  }
  Matrix dx(x.rows, x.cols);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    dx.data[i] = x.data[i] > 0.0 ? upstream.data[i] : 0.0;
  }
  return dx;
}

double AdamState::lr_at(std::size_t epoch) const {
  return base_lr * std::pow(decay_factor, static_cast<double>(epoch / decay_every));
}

void AdamState::step_update(
    const std::function<void(const std::function<void(double&, double&)>&)>& visit_all,
    std::size_t epoch) {
  ++step;
  const double lr = lr_at(epoch);
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  std::size_t idx = 0;
  visit_all([&](double& param, double& grad) {
    if (!std::isfinite(grad)) throw optimizer_error("non-finite gradient");
    if (idx >= m.size()) throw optimizer_error("Adam state smaller than parameter count");
    m[idx] = beta1 * m[idx] + (1.0 - beta1) * grad;
    v[idx] = beta2 * v[idx] + (1.0 - beta2) * grad * grad;
    const double mhat = m[idx] / bc1;
    const double vhat = v[idx] / bc2;
    param -= lr * mhat / (std::sqrt(vhat) + epsilon);
    if (weight_decay != 0.0) param -= lr * weight_decay * param;
    ++idx;
  });
}

}  // namespace reland

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace reland {

using Vec = std::vector<double>;

// Row-major dense matrix; rows are samples for batch tensors.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vec data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }
};

double sigmoid(double z);
double relu(double z);

// Euclidean projection of z onto the probability simplex via the
// sort-threshold rule, O(d log d).
Vec sparsemax(const Vec& z);

// Jacobian-vector product of sparsemax at output p:
// J = diag(s) - s s^T / |S| with s the support indicator of p.
Vec sparsemax_backward(const Vec& p, const Vec& upstream);

struct DenseLayer {
  Matrix weights;  // d_out x d_in
  Vec bias;        // d_out
  Matrix grad_weights;
  Vec grad_bias;

  DenseLayer() = default;
  DenseLayer(std::size_t d_out, std::size_t d_in);

  void init_glorot(std::mt19937_64& rng);
  void zero_grad();

  // y = W x + b, per batch row.
  Matrix forward(const Matrix& x) const;
  // Accumulates parameter gradients; returns gradient w.r.t. x.
  Matrix backward(const Matrix& x, const Matrix& upstream);

  void visit(const std::function<void(double&, double&)>& fn);
};

struct BatchNormLayer {
  Vec scale;  // gamma
  Vec shift;  // beta
  Vec running_mean;
  Vec running_var;
  double momentum = 0.9;
  double epsilon = 1e-5;

  Vec grad_scale;
  Vec grad_shift;

  // backward cache (training mode)
  Vec cached_mean, cached_var, cached_istd;
  Matrix cached_xhat;

  BatchNormLayer() = default;
  explicit BatchNormLayer(std::size_t dim);

  void zero_grad();
  Matrix forward(const Matrix& x, bool training);
  Matrix backward(const Matrix& x, const Matrix& upstream);
  void visit(const std::function<void(double&, double&)>& fn);
};

Matrix relu_forward(const Matrix& x);
Matrix relu_backward(const Matrix& x, const Matrix& upstream);

// Adam with step-decay schedule and decoupled weight decay.
struct AdamState {
  Vec m;
  Vec v;
  std::uint64_t step = 0;
  double base_lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double decay_factor = 0.1;
  std::size_t decay_every = 75;
  double weight_decay = 0.0005;

  explicit AdamState(std::size_t n_params = 0) : m(n_params, 0.0), v(n_params, 0.0) {}

  double lr_at(std::size_t epoch) const;

  // Applies one update over the flattened (param, grad) pairs produced by
  // `visit`; index order must be stable across calls.
  void step_update(const std::function<void(const std::function<void(double&, double&)>&)>& visit_all,
                   std::size_t epoch);
};

}  // namespace reland

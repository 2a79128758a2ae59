#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "accpred/error.hpp"

namespace accpred::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Gate rows are stacked in the order input, forget, cell candidate, output:
///   i = sigmoid(W_i x + U_i h + b_i)     f = sigmoid(W_f x + U_f h + b_f)
///   g = tanh(W_g x + U_g h + b_g)        o = sigmoid(W_o x + U_o h + b_o)
///   c' = f * c + i * g                   h' = o * tanh(c')
struct LstmParams {
  Matrix W;  // [4H x D]
  Matrix U;  // [4H x H]
  Vector b;  // [4H]

  static LstmParams zeros(Eigen::Index input_dim, Eigen::Index hidden);
  Eigen::Index hidden() const { return U.cols(); }
  Eigen::Index input_dim() const { return W.cols(); }
  bool consistent() const;
};

struct DenseParams {
  RowVector w;  // [1 x D]
  double b = 0.0;
};

/// Two stacked LSTMs whose final hidden state, extended with one side input
/// (the dataset difficulty), feeds a sigmoid unit.
struct StackedParams {
  LstmParams lstm1;
  LstmParams lstm2;
  DenseParams head;

  static StackedParams zeros(Eigen::Index input_dim, Eigen::Index hidden1, Eigen::Index hidden2);
  /// Same shapes, all zero.
  StackedParams zeros_like() const;
  std::size_t parameter_count() const;
  bool consistent() const;

  /// Every parameter tensor as a flat view, in a fixed order.
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;
};

struct LstmStep {
  Matrix x, h_prev, c_prev;
  Matrix i, f, g, o;  // post-activation gates
  Matrix c, tanh_c;
};

struct LstmForward {
  std::vector<Matrix> h;  // hidden state after each step, [H x B]
  Matrix c_final;
  std::vector<LstmStep> cache;
};

/// Runs the recurrence over `sequence` (each element [D x B]). Throws
/// Error(DimensionMismatch).
LstmForward lstm_forward(const LstmParams& p, std::span<const Matrix> sequence, const Matrix& h0,
                         const Matrix& c0);

struct LstmGrads {
  Matrix dW, dU;
  Vector db;
  std::vector<Matrix> dx;
  Matrix dh0, dc0;
};

/// Exact backpropagation through time. `dh` holds the loss gradient arriving
/// at each step's hidden output from above.
LstmGrads lstm_backward(const LstmParams& p, std::span<const LstmStep> cache,
                        std::span<const Matrix> dh);

/// i.i.d. N(0, 2 / cols), filled row-major from SplitMix64(seed).
Matrix he_normal_init(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed);

class StackedLstmRegressor {
 public:
  StackedLstmRegressor(Eigen::Index input_dim, Eigen::Index hidden1, Eigen::Index hidden2);
  explicit StackedLstmRegressor(StackedParams params);
  StackedLstmRegressor(const StackedLstmRegressor& other);
  StackedLstmRegressor& operator=(const StackedLstmRegressor& other);

  /// HeNormal weights, zero biases (forget gate included).
  static StackedLstmRegressor he_normal(Eigen::Index input_dim, Eigen::Index hidden1,
                                        Eigen::Index hidden2, std::uint64_t seed);

  struct Cache {
    LstmForward lstm1, lstm2;
    Matrix head_input;  // [(H2 + 1) x B]
    RowVector output;   // sigmoid outputs
    std::uint64_t owner = 0;
    std::uint64_t generation = 0;
  };

  /// steps: each [D x B] (one column per sample); side: [1 x B].
  Cache forward(std::span<const Matrix> steps, const RowVector& side) const;
  RowVector predict(std::span<const Matrix> steps, const RowVector& side) const;

  /// Gradients of a scalar loss given dLoss/dOutput. Throws Error(StaleCache)
  /// if the parameters changed since `cache` was produced.
  StackedParams backward(const Cache& cache, const RowVector& d_output) const;

  const StackedParams& params() const { return params_; }
  /// Mutable access invalidates outstanding caches.
  StackedParams& mutable_params() {
    ++generation_;
    return params_;
  }

  Eigen::Index input_dim() const { return params_.lstm1.input_dim(); }
  Eigen::Index hidden1() const { return params_.lstm1.hidden(); }
  Eigen::Index hidden2() const { return params_.lstm2.hidden(); }

 private:
  static std::uint64_t next_id();

  StackedParams params_;
  std::uint64_t id_;
  std::uint64_t generation_ = 0;
};

struct RmspropConfig {
  double learning_rate = 1e-3;
  double rho = 0.9;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

/// acc <- rho acc + (1 - rho) g^2;  p <- p - lr (g + wd p) / (sqrt(acc) + eps).
/// Throws Error(DimensionMismatch).
void rmsprop_step(std::span<double> params, std::span<const double> grads,
                  std::span<double> accumulators, const RmspropConfig& cfg);

struct RmspropState {
  RmspropConfig config;
  StackedParams accumulators;

  RmspropState(RmspropConfig cfg, const StackedParams& like)
      : config(cfg), accumulators(like.zeros_like()) {}
};

void rmsprop_step(StackedParams& params, const StackedParams& grads, RmspropState& state);

}  // namespace accpred::nn

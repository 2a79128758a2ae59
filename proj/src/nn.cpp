#include "accpred/nn.hpp"

#include <atomic>
#include <cmath>
#include <string>

#include "accpred/rng.hpp"

namespace accpred::nn {
namespace {

Matrix sigmoid(const Matrix& z) {
  return (1.0 + (-z.array()).exp()).inverse().matrix();
}

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::DimensionMismatch, what);
}

std::span<double> view(Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<double> view(Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }
std::span<double> view(RowVector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

}  // namespace

LstmParams LstmParams::zeros(Eigen::Index input_dim, Eigen::Index hidden) {
  return {Matrix::Zero(4 * hidden, input_dim), Matrix::Zero(4 * hidden, hidden),
          Vector::Zero(4 * hidden)};
}

bool LstmParams::consistent() const {
  const auto h = U.cols();
  return h >= 1 && U.rows() == 4 * h && W.rows() == 4 * h && W.cols() >= 1 && b.size() == 4 * h &&
         W.allFinite() && U.allFinite() && b.allFinite();
}

StackedParams StackedParams::zeros(Eigen::Index input_dim, Eigen::Index hidden1,
                                   Eigen::Index hidden2) {
  StackedParams p;
  p.lstm1 = LstmParams::zeros(input_dim, hidden1);
  p.lstm2 = LstmParams::zeros(hidden1, hidden2);
  p.head.w = RowVector::Zero(hidden2 + 1);
  p.head.b = 0.0;
  return p;
}

StackedParams StackedParams::zeros_like() const {
  return zeros(lstm1.input_dim(), lstm1.hidden(), lstm2.hidden());
}

std::size_t StackedParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += t.size();
  return n;
}

bool StackedParams::consistent() const {
  return lstm1.consistent() && lstm2.consistent() && lstm2.input_dim() == lstm1.hidden() &&
         head.w.size() == lstm2.hidden() + 1 && head.w.allFinite() && std::isfinite(head.b);
}

std::vector<std::span<double>> StackedParams::tensors() {
  return {view(lstm1.W), view(lstm1.U), view(lstm1.b), view(lstm2.W), view(lstm2.U),
          view(lstm2.b), view(head.w),  std::span<double>(&head.b, 1)};
}

std::vector<std::span<const double>> StackedParams::tensors() const {
  auto mut = const_cast<StackedParams*>(this)->tensors();
  return {mut.begin(), mut.end()};
}

LstmForward lstm_forward(const LstmParams& p, std::span<const Matrix> sequence, const Matrix& h0,
                         const Matrix& c0) {
  const auto H = p.hidden();
  require(h0.rows() == H && c0.rows() == H && h0.cols() == c0.cols(), "initial state shape");
  const auto B = h0.cols();
  LstmForward out;
  out.h.reserve(sequence.size());
  out.cache.reserve(sequence.size());
  Matrix h = h0, c = c0;
  for (const Matrix& x : sequence) {
    require(x.rows() == p.input_dim() && x.cols() == B,
            "input step is " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
                ", expected " + std::to_string(p.input_dim()) + "x" + std::to_string(B));
    Matrix pre = p.W * x + p.U * h;
    pre.colwise() += p.b;
    LstmStep s;
    s.x = x;
    s.h_prev = h;
    s.c_prev = c;
    s.i = sigmoid(pre.topRows(H));
    s.f = sigmoid(pre.middleRows(H, H));
    s.g = pre.middleRows(2 * H, H).array().tanh().matrix();
    s.o = sigmoid(pre.bottomRows(H));
    s.c = (s.f.array() * c.array() + s.i.array() * s.g.array()).matrix();
    s.tanh_c = s.c.array().tanh().matrix();
    h = (s.o.array() * s.tanh_c.array()).matrix();
    c = s.c;
    out.h.push_back(h);
    out.cache.push_back(std::move(s));
  }
  out.c_final = c;
  return out;
}

LstmGrads lstm_backward(const LstmParams& p, std::span<const LstmStep> cache,
                        std::span<const Matrix> dh) {
  require(dh.size() == cache.size(), "one hidden-state gradient per step is required");
  const auto H = p.hidden();
  LstmGrads g;
  g.dW = Matrix::Zero(p.W.rows(), p.W.cols());
  g.dU = Matrix::Zero(p.U.rows(), p.U.cols());
  g.db = Vector::Zero(p.b.size());
  g.dx.resize(cache.size());
  if (cache.empty()) return g;
  const auto B = cache.front().x.cols();
  Matrix dh_next = Matrix::Zero(H, B);
  Matrix dc_next = Matrix::Zero(H, B);
  Matrix d_pre(4 * H, B);
  for (std::size_t t = cache.size(); t-- > 0;) {
    const LstmStep& s = cache[t];
    require(dh[t].rows() == H && dh[t].cols() == B, "hidden-state gradient shape");
    const Matrix d_h = dh[t] + dh_next;
    const auto tc = s.tanh_c.array();
    const Matrix d_c =
        (dc_next.array() + d_h.array() * s.o.array() * (1.0 - tc * tc)).matrix();
    d_pre.topRows(H) = (d_c.array() * s.g.array() * s.i.array() * (1.0 - s.i.array())).matrix();
    d_pre.middleRows(H, H) =
        (d_c.array() * s.c_prev.array() * s.f.array() * (1.0 - s.f.array())).matrix();
    d_pre.middleRows(2 * H, H) =
        (d_c.array() * s.i.array() * (1.0 - s.g.array() * s.g.array())).matrix();
    d_pre.bottomRows(H) = (d_h.array() * tc * s.o.array() * (1.0 - s.o.array())).matrix();
    g.dW.noalias() += d_pre * s.x.transpose();
    g.dU.noalias() += d_pre * s.h_prev.transpose();
    g.db += d_pre.rowwise().sum();
    g.dx[t].noalias() = p.W.transpose() * d_pre;
    dh_next.noalias() = p.U.transpose() * d_pre;
    dc_next = (d_c.array() * s.f.array()).matrix();
  }
  g.dh0 = dh_next;
  g.dc0 = dc_next;
  return g;
}

Matrix he_normal_init(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  if (rows < 1 || cols < 1) throw Error(ErrorCode::DimensionMismatch, "he_normal_init needs rows, cols >= 1");
  SplitMix64 rng(seed);
  const double sd = std::sqrt(2.0 / static_cast<double>(cols));
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = sd * rng.normal();
  return m;
}

std::uint64_t StackedLstmRegressor::next_id() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

StackedLstmRegressor::StackedLstmRegressor(Eigen::Index input_dim, Eigen::Index hidden1,
                                           Eigen::Index hidden2)
    : StackedLstmRegressor(StackedParams::zeros(input_dim, hidden1, hidden2)) {}

StackedLstmRegressor::StackedLstmRegressor(StackedParams params)
    : params_(std::move(params)), id_(next_id()) {
  if (!params_.consistent())
    throw Error(ErrorCode::ModelDimensionMismatch, "inconsistent stacked LSTM parameters");
}

StackedLstmRegressor::StackedLstmRegressor(const StackedLstmRegressor& other)
    : params_(other.params_), id_(next_id()) {}

StackedLstmRegressor& StackedLstmRegressor::operator=(const StackedLstmRegressor& other) {
  params_ = other.params_;
  ++generation_;
  return *this;
}

StackedLstmRegressor StackedLstmRegressor::he_normal(Eigen::Index input_dim, Eigen::Index hidden1,
                                                     Eigen::Index hidden2, std::uint64_t seed) {
  StackedParams p = StackedParams::zeros(input_dim, hidden1, hidden2);
  p.lstm1.W = he_normal_init(4 * hidden1, input_dim, derive_seed(seed, 0));
  p.lstm1.U = he_normal_init(4 * hidden1, hidden1, derive_seed(seed, 1));
  p.lstm2.W = he_normal_init(4 * hidden2, hidden1, derive_seed(seed, 2));
  p.lstm2.U = he_normal_init(4 * hidden2, hidden2, derive_seed(seed, 3));
  p.head.w = he_normal_init(1, hidden2 + 1, derive_seed(seed, 4));
  return StackedLstmRegressor(std::move(p));
}

StackedLstmRegressor::Cache StackedLstmRegressor::forward(std::span<const Matrix> steps,
                                                          const RowVector& side) const {
  if (steps.empty()) throw Error(ErrorCode::DimensionMismatch, "empty input sequence");
  const auto B = steps.front().cols();
  require(side.size() == B, "side input must have one value per sample");
  Cache cache;
  cache.owner = id_;
  cache.generation = generation_;
  const auto H1 = hidden1(), H2 = hidden2();
  cache.lstm1 = lstm_forward(params_.lstm1, steps, Matrix::Zero(H1, B), Matrix::Zero(H1, B));
  cache.lstm2 =
      lstm_forward(params_.lstm2, cache.lstm1.h, Matrix::Zero(H2, B), Matrix::Zero(H2, B));
  cache.head_input.resize(H2 + 1, B);
  cache.head_input.topRows(H2) = cache.lstm2.h.back();
  cache.head_input.bottomRows(1) = side;
  RowVector z = params_.head.w * cache.head_input;
  z.array() += params_.head.b;
  cache.output = (1.0 + (-z.array()).exp()).inverse().matrix();
  return cache;
}

RowVector StackedLstmRegressor::predict(std::span<const Matrix> steps,
                                        const RowVector& side) const {
  return forward(steps, side).output;
}

StackedParams StackedLstmRegressor::backward(const Cache& cache, const RowVector& d_output) const {
  if (cache.owner != id_ || cache.generation != generation_)
    throw Error(ErrorCode::StaleCache, "cache does not belong to the current parameters");
  require(d_output.size() == cache.output.size(), "output gradient shape");
  const auto H2 = hidden2();
  const auto B = d_output.size();
  StackedParams grads;

  const RowVector dz =
      (d_output.array() * cache.output.array() * (1.0 - cache.output.array())).matrix();
  grads.head.w = dz * cache.head_input.transpose();
  grads.head.b = dz.sum();
  const Matrix dh2_final = params_.head.w.head(H2).transpose() * dz;

  std::vector<Matrix> dh2(cache.lstm2.cache.size(), Matrix::Zero(H2, B));
  dh2.back() = dh2_final;
  LstmGrads g2 = lstm_backward(params_.lstm2, cache.lstm2.cache, dh2);
  LstmGrads g1 = lstm_backward(params_.lstm1, cache.lstm1.cache, g2.dx);

  grads.lstm1 = {std::move(g1.dW), std::move(g1.dU), std::move(g1.db)};
  grads.lstm2 = {std::move(g2.dW), std::move(g2.dU), std::move(g2.db)};
  return grads;
}

void rmsprop_step(std::span<double> params, std::span<const double> grads,
                  std::span<double> acc, const RmspropConfig& cfg) {
  if (params.size() != grads.size() || params.size() != acc.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                "rmsprop: " + std::to_string(params.size()) + " params, " +
                    std::to_string(grads.size()) + " grads, " + std::to_string(acc.size()) +
                    " accumulators");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double g = grads[k];
    acc[k] = cfg.rho * acc[k] + (1.0 - cfg.rho) * g * g;
    params[k] -= cfg.learning_rate * (g + cfg.weight_decay * params[k]) /
                 (std::sqrt(acc[k]) + cfg.epsilon);
  }
}

void rmsprop_step(StackedParams& params, const StackedParams& grads, RmspropState& state) {
  auto p = params.tensors();
  const auto g = grads.tensors();
  auto a = state.accumulators.tensors();
  if (p.size() != g.size() || p.size() != a.size())
    throw Error(ErrorCode::DimensionMismatch, "rmsprop: tensor count mismatch");
  for (std::size_t t = 0; t < p.size(); ++t) rmsprop_step(p[t], g[t], a[t], state.config);
}

}  // namespace accpred::nn

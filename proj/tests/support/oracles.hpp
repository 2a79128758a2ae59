// Independent reference implementations the tests compare the library against.
// Nothing here calls into the code under test except for types and the RNG.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "accpred/archspace.hpp"
#include "accpred/expdb.hpp"
#include "accpred/nn.hpp"
#include "accpred/rng.hpp"

namespace oracle {

// ---------------------------------------------------------------- metrics

inline double mse(const std::vector<double>& p, const std::vector<double>& t) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - t[i]) * (p[i] - t[i]);
  return s / static_cast<double>(p.size());
}

inline int sign(double x) { return (x > 0) - (x < 0); }

/// Pairwise enumeration.
inline double kendall_tau_b(const std::vector<double>& p, const std::vector<double>& t) {
  long long conc = 0, disc = 0, tie_p = 0, tie_t = 0;
  const std::size_t n = p.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const int a = sign(p[i] - p[j]);
      const int b = sign(t[i] - t[j]);
      if (a == 0) ++tie_p;
      if (b == 0) ++tie_t;
      if (a * b > 0) ++conc;
      if (a * b < 0) ++disc;
    }
  }
  const double n0 = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  return static_cast<double>(conc - disc) /
         std::sqrt((n0 - static_cast<double>(tie_p)) * (n0 - static_cast<double>(tie_t)));
}

inline double r_squared(const std::vector<double>& p, const std::vector<double>& t) {
  double mean = 0.0;
  for (double v : t) mean += v;
  mean /= static_cast<double>(t.size());
  double res = 0.0, tot = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    res += (t[i] - p[i]) * (t[i] - p[i]);
    tot += (t[i] - mean) * (t[i] - mean);
  }
  return 1.0 - res / tot;
}

inline double rel_diff(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

// ---------------------------------------------------------------- filter

inline std::vector<std::size_t> filter_scan(const std::vector<accpred::ExperimentRecord>& records,
                                            const std::vector<accpred::DatasetMeta>& datasets,
                                            double query, double tau) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < records.size(); ++i) {
    for (const auto& d : datasets) {
      if (d.id == records[i].dataset_id && std::abs(query - d.dcn) <= tau) keep.push_back(i);
    }
  }
  return keep;
}

// ---------------------------------------------------------------- costs

struct Counts {
  std::int64_t params = 0;
  std::int64_t flops = 0;
};

/// Counts a convolution by walking every weight and every output tap.
inline Counts conv_loop_nest(int k, int c_in, int c_out, int h_out, int w_out, bool bn) {
  Counts c;
  for (int o = 0; o < c_out; ++o) {
    for (int i = 0; i < c_in; ++i)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) ++c.params;
    ++c.params;  // bias
    if (bn) c.params += 2;
  }
  for (int y = 0; y < h_out; ++y)
    for (int x = 0; x < w_out; ++x)
      for (int o = 0; o < c_out; ++o) {
        for (int i = 0; i < c_in; ++i)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) c.flops += 2;  // multiply, add
        if (bn) c.flops += 2;                                 // scale, shift
      }
  return c;
}

inline Counts elementwise_loop(int h, int w, int ch, int per_element) {
  Counts c;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int o = 0; o < ch; ++o) c.flops += per_element;
  return c;
}

/// Expands a residual block into its convolutions, projection and additions.
inline Counts residual_loop_nest(const accpred::ResidualBlock& r, int c_in, int h_out, int w_out) {
  Counts total;
  int ch = c_in;
  for (int rep = 0; rep < r.repeat; ++rep) {
    const Counts a = conv_loop_nest(r.kernel_size, ch, r.out_channels, h_out, w_out, true);
    const Counts b = conv_loop_nest(r.kernel_size, r.out_channels, r.out_channels, h_out, w_out, true);
    total.params += a.params + b.params;
    total.flops += a.flops + b.flops;
    if (rep == 0 && (ch != r.out_channels || r.stride != 1)) {
      const Counts p = conv_loop_nest(1, ch, r.out_channels, h_out, w_out, false);
      total.params += p.params;
      total.flops += p.flops;
    }
    total.flops += elementwise_loop(h_out, w_out, r.out_channels, 1).flops;
    ch = r.out_channels;
  }
  return total;
}

// ---------------------------------------------------------------- LSTM

/// Plain-loop LSTM step on one column, gate rows ordered i, f, g, o.
inline void lstm_step_scalar(const accpred::nn::LstmParams& p, const std::vector<double>& x,
                             std::vector<double>& h, std::vector<double>& c) {
  const auto H = static_cast<std::size_t>(p.hidden());
  const auto D = static_cast<std::size_t>(p.input_dim());
  std::vector<double> pre(4 * H);
  for (std::size_t r = 0; r < 4 * H; ++r) {
    double s = p.b(static_cast<Eigen::Index>(r));
    for (std::size_t j = 0; j < D; ++j)
      s += p.W(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) * x[j];
    for (std::size_t j = 0; j < H; ++j)
      s += p.U(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) * h[j];
    pre[r] = s;
  }
  auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  for (std::size_t k = 0; k < H; ++k) {
    const double i = sig(pre[k]);
    const double f = sig(pre[H + k]);
    const double g = std::tanh(pre[2 * H + k]);
    const double o = sig(pre[3 * H + k]);
    c[k] = f * c[k] + i * g;
    h[k] = o * std::tanh(c[k]);
  }
}

/// Full stacked model on one sample, zero initial state.
inline double stacked_forward_scalar(const accpred::nn::StackedParams& p,
                                     const std::vector<std::vector<double>>& steps, double side) {
  const auto H1 = static_cast<std::size_t>(p.lstm1.hidden());
  const auto H2 = static_cast<std::size_t>(p.lstm2.hidden());
  std::vector<double> h1(H1, 0.0), c1(H1, 0.0), h2(H2, 0.0), c2(H2, 0.0);
  for (const auto& x : steps) {
    lstm_step_scalar(p.lstm1, x, h1, c1);
    lstm_step_scalar(p.lstm2, h1, h2, c2);
  }
  double z = p.head.b;
  for (std::size_t k = 0; k < H2; ++k) z += p.head.w(static_cast<Eigen::Index>(k)) * h2[k];
  z += p.head.w(static_cast<Eigen::Index>(H2)) * side;
  return 1.0 / (1.0 + std::exp(-z));
}

// ---------------------------------------------------------------- gradient check

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

/// Loss = sum over the batch of (output - target)^2. Compares backward()
/// against central differences on `per_tensor` coordinates of every tensor
/// (all coordinates when per_tensor is 0). Relative error uses
/// max(|analytic|, |numeric|, floor) as the denominator.
inline GradCheck gradient_check(accpred::nn::StackedLstmRegressor& net,
                                const std::vector<Eigen::MatrixXd>& steps,
                                const Eigen::RowVectorXd& side, const Eigen::RowVectorXd& target,
                                double step, double floor, std::size_t per_tensor,
                                accpred::SplitMix64& rng) {
  auto loss = [&](const accpred::nn::StackedLstmRegressor& m) {
    return (m.predict(steps, side) - target).squaredNorm();
  };
  const auto cache = net.forward(steps, side);
  const Eigen::RowVectorXd d_out = 2.0 * (cache.output - target);
  const accpred::nn::StackedParams grads = net.backward(cache, d_out);
  const auto g_tensors = grads.tensors();

  GradCheck out;
  const std::size_t n_tensors = g_tensors.size();
  for (std::size_t t = 0; t < n_tensors; ++t) {
    const std::size_t size = g_tensors[t].size();
    std::vector<std::size_t> coords;
    if (per_tensor == 0 || per_tensor >= size) {
      for (std::size_t k = 0; k < size; ++k) coords.push_back(k);
    } else {
      for (std::size_t k = 0; k < per_tensor; ++k) coords.push_back(rng.below(size));
    }
    for (std::size_t k : coords) {
      double& w = net.mutable_params().tensors()[t][k];
      const double saved = w;
      w = saved + step;
      const double up = loss(net);
      net.mutable_params().tensors()[t][k] = saved - step;
      const double down = loss(net);
      net.mutable_params().tensors()[t][k] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = g_tensors[t][k];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      out.max_rel_error = std::max(out.max_rel_error, std::abs(analytic - numeric) / denom);
      ++out.checked;
    }
  }
  return out;
}

// ---------------------------------------------------------------- files

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("accpred_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

/// Five datasets with difficulty 0.1, 0.3, ..., 0.9, ten classes each.
inline std::vector<accpred::DatasetMeta> five_datasets() {
  std::vector<accpred::DatasetMeta> d;
  const double dcns[] = {0.1, 0.3, 0.5, 0.7, 0.9};
  for (int k = 0; k < 5; ++k)
    d.push_back({"ds" + std::to_string(k), "synthetic-" + std::to_string(k), dcns[k], 10});
  return d;
}

}  // namespace oracle

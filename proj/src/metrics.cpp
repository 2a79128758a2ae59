#include "accpred/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "accpred/error.hpp"

namespace accpred::metrics {
namespace {

void check(PairedSeries s, std::size_t min_length) {
  if (s.predictions.size() != s.truths.size())
    throw Error(ErrorCode::LengthMismatch, "predictions and truths differ in length");
  if (s.predictions.size() < min_length)
    throw Error(ErrorCode::EmptyInput, "series too short");
}

// Pairs tied within runs of equal values of an already-sorted sequence.
template <typename Eq>
std::int64_t tied_pairs(std::size_t n, Eq equal_to_prev) {
  std::int64_t ties = 0, run = 1;
  for (std::size_t i = 1; i <= n; ++i) {
    if (i < n && equal_to_prev(i)) {
      ++run;
    } else {
      ties += run * (run - 1) / 2;
      run = 1;
    }
  }
  return ties;
}

// Sorts v by value with a bottom-up merge sort and returns the number of
// inversions (pairs i < j with v[i] > v[j]).
std::int64_t merge_count(std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<double> buf(n);
  std::int64_t swaps = 0;
  for (std::size_t width = 1; width < n; width *= 2) {
    for (std::size_t lo = 0; lo < n; lo += 2 * width) {
      const std::size_t mid = std::min(lo + width, n), hi = std::min(lo + 2 * width, n);
      std::size_t i = lo, j = mid, k = lo;
      while (i < mid && j < hi) {
        if (v[j] < v[i]) {
          swaps += static_cast<std::int64_t>(mid - i);
          buf[k++] = v[j++];
        } else {
          buf[k++] = v[i++];
        }
      }
      while (i < mid) buf[k++] = v[i++];
      while (j < hi) buf[k++] = v[j++];
    }
    v.swap(buf);
  }
  return swaps;
}

}  // namespace

double mse(PairedSeries s) {
  check(s, 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < s.truths.size(); ++i) {
    const double d = s.predictions[i] - s.truths[i];
    sum += d * d;
  }
  return sum / static_cast<double>(s.truths.size());
}

double kendall_tau(PairedSeries s) {
  check(s, 2);
  const std::size_t n = s.predictions.size();
  // Order by prediction, then truth.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (s.predictions[a] != s.predictions[b]) return s.predictions[a] < s.predictions[b];
    return s.truths[a] < s.truths[b];
  });
  const auto& p = s.predictions;
  const auto& t = s.truths;
  const std::int64_t tie_pred =
      tied_pairs(n, [&](std::size_t i) { return p[order[i]] == p[order[i - 1]]; });
  const std::int64_t tie_joint = tied_pairs(n, [&](std::size_t i) {
    return p[order[i]] == p[order[i - 1]] && t[order[i]] == t[order[i - 1]];
  });
  std::vector<double> truth_seq(n);
  for (std::size_t i = 0; i < n; ++i) truth_seq[i] = t[order[i]];
  const std::int64_t discordant = merge_count(truth_seq);  // truth_seq is now sorted
  const std::int64_t tie_truth =
      tied_pairs(n, [&](std::size_t i) { return truth_seq[i] == truth_seq[i - 1]; });

  const std::int64_t n0 = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
  if (tie_pred == n0 || tie_truth == n0)
    throw Error(ErrorCode::DegenerateInput, "a series is constant; tau-b is undefined");
  // Pairs neither tied in prediction nor in truth are concordant or discordant.
  const std::int64_t concordant_minus_discordant =
      n0 - tie_pred - tie_truth + tie_joint - 2 * discordant;
  return static_cast<double>(concordant_minus_discordant) /
         std::sqrt(static_cast<double>(n0 - tie_pred) * static_cast<double>(n0 - tie_truth));
}

double r_squared(PairedSeries s) {
  check(s, 1);
  const double n = static_cast<double>(s.truths.size());
  const double mean = std::accumulate(s.truths.begin(), s.truths.end(), 0.0) / n;
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < s.truths.size(); ++i) {
    ss_res += (s.truths[i] - s.predictions[i]) * (s.truths[i] - s.predictions[i]);
    ss_tot += (s.truths[i] - mean) * (s.truths[i] - mean);
  }
  if (!(ss_tot > 0.0)) throw Error(ErrorCode::DegenerateInput, "truths have zero variance");
  return 1.0 - ss_res / ss_tot;
}

}  // namespace accpred::metrics

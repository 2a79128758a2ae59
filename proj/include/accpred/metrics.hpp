#pragma once

#include <span>

namespace accpred::metrics {

/// Paired predictions and ground truths of equal, nonzero length.
struct PairedSeries {
  std::span<const double> predictions;
  std::span<const double> truths;
};

/// Throws Error(LengthMismatch) or Error(EmptyInput).
double mse(PairedSeries s);

/// Kendall's tau-b, O(n log n) (Knight's merge-sort algorithm):
///   (n_c - n_d) / sqrt((n0 - t_pred)(n0 - t_truth)),  n0 = n(n-1)/2,
/// where t_x counts pairs tied in x. Throws Error(DegenerateInput) when
/// either series is entirely tied.
double kendall_tau(PairedSeries s);

/// 1 - SS_res / SS_tot. Throws Error(DegenerateInput) when truths are constant.
double r_squared(PairedSeries s);

}  // namespace accpred::metrics

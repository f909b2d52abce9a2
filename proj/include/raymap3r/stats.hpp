#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "raymap3r/error.hpp"

namespace raymap3r::stats {

namespace detail {

/// Interpolated order statistic at position p * (n - 1) of `v`, reordering `v`.
inline double select_quantile(std::vector<double>& v, double p) {
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto lo_it = v.begin() + static_cast<std::ptrdiff_t>(lo);
  std::nth_element(v.begin(), lo_it, v.end());
  const double a = *lo_it;
  if (lo + 1 >= v.size()) return a;
  const double b = *std::min_element(lo_it + 1, v.end());
  return a + (pos - static_cast<double>(lo)) * (b - a);
}

}  // namespace detail

/// Quantile with linear interpolation between order statistics (position p * (n - 1)).
/// `values` must be non-empty.
inline double quantile(std::span<const double> values, double p) {
  if (values.empty()) throw Error("quantile: empty input");
  std::vector<double> v(values.begin(), values.end());
  return detail::select_quantile(v, p);
}

struct RobustSpread {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double iqr() const noexcept { return q3 - q1; }
};

/// Median and quartiles of one copy of the input.
inline RobustSpread robust_spread(std::span<const double> values) {
  if (values.empty()) throw Error("robust_spread: empty input");
  std::vector<double> v(values.begin(), values.end());
  RobustSpread r;
  r.median = detail::select_quantile(v, 0.5);
  r.q1 = detail::select_quantile(v, 0.25);
  r.q3 = detail::select_quantile(v, 0.75);
  return r;
}

inline double median(std::span<const double> values) { return quantile(values, 0.5); }

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double mean(std::span<const double> values) {
  if (values.empty()) throw Error("mean: empty input");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

/// 1-based fractional ranks; tied values share the average of their positions.
inline std::vector<double> fractional_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
    i = j;
  }
  return ranks;
}

/// Pearson correlation; nullopt when either input has zero variance.
inline std::optional<double> pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw ShapeError("pearson: lengths differ");
  if (xs.size() < 2) return std::nullopt;
  const double mx = mean(xs);
  const double my = mean(ys);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Otsu threshold over a histogram of `bins` equal bins spanning [lo, hi]; values
/// outside the range are clamped into the end bins. Returns the upper edge of the
/// last bin of the lower class.
inline double otsu_threshold(std::span<const double> values, double lo, double hi, int bins = 256) {
  if (values.empty() || !(hi > lo)) return lo;
  std::vector<double> hist(static_cast<std::size_t>(bins), 0.0);
  const double width = (hi - lo) / bins;
  for (double v : values) {
    int b = static_cast<int>(std::floor((v - lo) / width));
    b = std::clamp(b, 0, bins - 1);
    hist[static_cast<std::size_t>(b)] += 1.0;
  }
  const double total = static_cast<double>(values.size());
  double sum_all = 0.0;
  for (int b = 0; b < bins; ++b) sum_all += b * hist[static_cast<std::size_t>(b)];

  double w0 = 0.0, sum0 = 0.0, best = -1.0;
  int best_bin = 0;
  for (int b = 0; b < bins - 1; ++b) {
    w0 += hist[static_cast<std::size_t>(b)];
    sum0 += b * hist[static_cast<std::size_t>(b)];
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double m0 = sum0 / w0;
    const double m1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      best_bin = b;
    }
  }
  return lo + (best_bin + 1) * width;
}

}  // namespace raymap3r::stats

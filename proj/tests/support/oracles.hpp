#pragma once

// Independent reference computations used to freeze expected values. None of
// these call into the code paths they check.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <numbers>
#include <vector>

namespace avalign::oracle {

/// Maximum bipartite matching between two event lists where an edge exists
/// iff |a - b| <= window, by exhaustive search. Intended for <= 10 events.
inline std::size_t exhaustive_matching(const std::vector<double>& a, const std::vector<double>& b, double window) {
  std::vector<bool> used(b.size(), false);
  std::function<std::size_t(std::size_t)> best = [&](std::size_t i) -> std::size_t {
    if (i == a.size()) return 0;
    std::size_t result = best(i + 1);  // leave a[i] unmatched
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (used[j] || std::abs(a[i] - b[j]) > window + 1e-9) continue;
      used[j] = true;
      result = std::max(result, 1 + best(i + 1));
      used[j] = false;
    }
    return result;
  };
  return best(0);
}

inline double iou(std::size_t matched, std::size_t na, std::size_t nb) {
  if (na == 0 && nb == 0) return 1.0;
  if (na == 0 || nb == 0) return 0.0;
  return static_cast<double>(matched) / static_cast<double>(na + nb - matched);
}

/// Index of the largest-magnitude DFT bin in [1, n/2], by direct summation.
inline std::size_t dominant_dft_bin(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::size_t best = 1;
  double best_mag = -1.0;
  for (std::size_t k = 1; k <= n / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      acc += x[i] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * i % n) / n);
    if (std::abs(acc) > best_mag) {
      best_mag = std::abs(acc);
      best = k;
    }
  }
  return best;
}

/// Peak-picking rule applied literally, frame by frame.
inline std::vector<std::size_t> scan_peaks(const std::vector<double>& env, int pre_max, int post_max, int pre_avg,
                                           int post_avg, double offset, int wait) {
  std::vector<std::size_t> out;
  const int n = static_cast<int>(env.size());
  for (int t = 0; t < n; ++t) {
    if (env[t] <= 0.0) continue;
    bool is_max = true;
    for (int k = t - pre_max; k <= t + post_max; ++k)
      if (k >= 0 && k < n && env[k] > env[t]) is_max = false;
    double sum = 0.0;
    int cnt = 0;
    for (int k = t - pre_avg; k <= t + post_avg; ++k)
      if (k >= 0 && k < n) {
        sum += env[k];
        ++cnt;
      }
    const bool above = env[t] >= sum / cnt + offset;
    const bool waited = out.empty() || t - static_cast<int>(out.back()) >= wait;
    if (is_max && above && waited) out.push_back(static_cast<std::size_t>(t));
  }
  return out;
}

/// Bucket each event time into frames of width 1 / rate.
inline std::vector<unsigned char> bucket(const std::vector<double>& times, double rate, std::size_t frames) {
  std::vector<unsigned char> labels(frames, 0);
  for (double t : times)
    for (std::size_t i = 0; i < frames; ++i)
      if (t >= i / rate && t < (i + 1) / rate) labels[i] = 1;
  return labels;
}

}  // namespace avalign::oracle

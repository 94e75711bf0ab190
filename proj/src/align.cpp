#include "avalign/align.hpp"

#include <algorithm>
#include <sstream>

#include "avalign/error.hpp"
#include "avalign/format.hpp"

namespace avalign {

namespace {

// Absorbs representation error so that e.g. |1.1 - 1.0| <= 0.1 holds.
constexpr double kWindowSlack = 1e-9;

void check_window(double window) {
  if (!(window > 0.0)) throw Error(ErrorKind::invalid_argument, "alignment window must be > 0");
}

}  // namespace

std::size_t match_peaks(const PeakSet& a, const PeakSet& b, double window) {
  check_window(window);
  const auto ta = a.times();
  const auto tb = b.times();
  const double reach = window + kWindowSlack;
  std::size_t matched = 0;
  std::size_t next = 0;  // earliest b not yet matched or passed
  for (double t : ta) {
    while (next < tb.size() && tb[next] < t - reach) ++next;
    if (next < tb.size() && tb[next] <= t + reach) {
      ++matched;
      ++next;
    }
  }
  return matched;
}

std::size_t count_hits(const PeakSet& reference, const PeakSet& candidates, double window) {
  check_window(window);
  const auto ref = reference.times();
  const double reach = window + kWindowSlack;
  std::size_t hits = 0;
  for (double t : candidates.times()) {
    const auto it = std::lower_bound(ref.begin(), ref.end(), t - reach);
    if (it != ref.end() && *it <= t + reach) ++hits;
  }
  return hits;
}

AlignmentScore aa_align(const PeakSet& gt, const PeakSet& gen, const AlignConfig& cfg) {
  check_window(cfg.window_seconds);
  AlignmentScore s;
  s.window_seconds = cfg.window_seconds;
  s.matched = cfg.mode == MatchMode::one_to_one ? match_peaks(gt, gen, cfg.window_seconds)
                                                : count_hits(gt, gen, cfg.window_seconds);
  const std::size_t total = gt.size() + gen.size();
  s.union_size = total > s.matched ? total - s.matched : 0;
  if (gt.empty() && gen.empty()) {
    s.value = cfg.both_empty_score;
  } else if (gt.empty() || gen.empty()) {
    s.value = 0.0;
  } else {
    s.value = s.union_size == 0 ? 1.0
                                : std::min(1.0, static_cast<double>(s.matched) /
                                                    static_cast<double>(s.union_size));
  }
  return s;
}

AlignmentScore av_align(const PeakSet& audio, const PeakSet& motion, const AlignConfig& cfg) {
  return aa_align(motion, audio, cfg);
}

std::string to_json(const AlignmentScore& score) {
  std::ostringstream out;
  out << "{\"value\":" << fixed6(score.value) << ",\"matched\":" << score.matched
      << ",\"union_size\":" << score.union_size
      << ",\"window_seconds\":" << fixed6(score.window_seconds) << '}';
  return out.str();
}

std::string to_csv(const AlignmentScore& score) {
  std::ostringstream out;
  out << "value,matched,union_size,window_seconds\n"
      << fixed6(score.value) << ',' << score.matched << ',' << score.union_size << ','
      << fixed6(score.window_seconds) << '\n';
  return out.str();
}

}  // namespace avalign

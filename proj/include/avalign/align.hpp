#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>

#include "avalign/peaks.hpp"

namespace avalign {

inline constexpr double kDefaultAlignWindow = 0.1;

/// IoU-style agreement between two peak sets.
struct AlignmentScore {
  double value = 0.0;
  std::size_t matched = 0;
  std::size_t union_size = 0;
  double window_seconds = kDefaultAlignWindow;
};

enum class MatchMode {
  /// Each reference peak absorbs at most one candidate peak.
  one_to_one,
  /// Every candidate peak with any reference peak within the window counts.
  /// Can exceed the IoU semantics; the score is clamped to 1.
  many_to_one,
};

struct AlignConfig {
  double window_seconds = kDefaultAlignWindow;
  MatchMode mode = MatchMode::one_to_one;
  double both_empty_score = 1.0;
};

/// Greedy in-time one-to-one matching: each peak of `a` (ascending) takes the
/// earliest unmatched peak of `b` within +-window. On interval graphs this is a
/// maximum matching, so the count is symmetric in (a, b).
std::size_t match_peaks(const PeakSet& a, const PeakSet& b, double window);

/// Number of `candidates` with at least one `reference` peak within +-window.
std::size_t count_hits(const PeakSet& reference, const PeakSet& candidates, double window);

/// matched / (|gt| + |gen| - matched); both empty scores cfg.both_empty_score,
/// exactly one empty scores 0.
AlignmentScore aa_align(const PeakSet& gt, const PeakSet& gen, const AlignConfig& cfg = {});

/// Same formula with the motion peaks as reference and audio peaks as
/// candidates.
AlignmentScore av_align(const PeakSet& audio, const PeakSet& motion, const AlignConfig& cfg = {});

/// `{"value":...,"matched":...,"union_size":...,"window_seconds":...}`
std::string to_json(const AlignmentScore& score);
/// `value,matched,union_size,window_seconds` header plus one row.
std::string to_csv(const AlignmentScore& score);

}  // namespace avalign

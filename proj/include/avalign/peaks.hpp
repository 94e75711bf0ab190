#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace avalign {

/// Event times in seconds, strictly increasing, all in [0, duration).
class PeakSet {
 public:
  PeakSet() = default;
  /// Throws Error(invalid_argument) if the invariant does not hold.
  PeakSet(std::vector<double> times, double duration);

  std::span<const double> times() const noexcept { return times_; }
  double duration() const noexcept { return duration_; }
  std::size_t size() const noexcept { return times_.size(); }
  bool empty() const noexcept { return times_.empty(); }

  /// Same events shifted by `offset` seconds, with the duration extended so
  /// the invariant still holds. Offsets must keep every time non-negative.
  PeakSet shifted(double offset) const;

  friend bool operator==(const PeakSet&, const PeakSet&) = default;

 private:
  std::vector<double> times_;
  double duration_ = 0.0;
};

/// `index,seconds` records, LF-terminated, with a header line.
void write_peaks_csv(std::ostream& out, const PeakSet& peaks);
void write_peaks_csv(const std::filesystem::path& path, const PeakSet& peaks);

/// Reads `index,seconds` CSV. The header line is optional. The duration is
/// not stored in the file; it defaults to just past the last peak unless
/// given explicitly.
PeakSet read_peaks_csv(const std::filesystem::path& path, double duration = 0.0);

}  // namespace avalign

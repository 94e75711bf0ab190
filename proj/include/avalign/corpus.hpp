#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "avalign/align.hpp"
#include "avalign/onset.hpp"
#include "avalign/video.hpp"

namespace avalign::corpus {

struct ManifestEntry {
  std::string id;
  std::filesystem::path audio;
  std::filesystem::path frames;
  double fps = 0.0;
  std::optional<std::string> caption;
  std::optional<std::filesystem::path> ref_audio;
};

/// Parses JSON Lines. Relative paths are resolved against `base_dir`.
/// Throws Error(malformed_data) on unparseable lines, missing/duplicate ids
/// or non-positive fps.
std::vector<ManifestEntry> parse_manifest(std::istream& in, const std::filesystem::path& base_dir = {});
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

struct ScoreRecord {
  std::string id;
  bool ok = false;
  std::string reason;  ///< non-empty iff !ok
  double av_align = 0.0;
  std::optional<double> aa_align;
  std::size_t audio_peaks = 0;
  std::size_t motion_peaks = 0;
};

struct ScoringConfig {
  OnsetConfig onset;
  PeakConfig peaks;
  FlowConfig flow;
  AlignConfig align;
  double flow_threshold = kDefaultFlowThreshold;
  int motion_window = kDefaultMotionWindow;
  unsigned workers = 1;
};

/// Scores one clip. Failures are captured in the record, never thrown.
ScoreRecord score_entry(const ManifestEntry& entry, const ScoringConfig& cfg);

/// One record per entry, in manifest order, for any worker count.
std::vector<ScoreRecord> score_corpus(const std::vector<ManifestEntry>& manifest, const ScoringConfig& cfg);

inline constexpr double kDefaultFilterThreshold = 0.2;

struct FilterResult {
  std::vector<std::string> kept;
  std::vector<std::string> dropped;
};

/// Keeps ok records with av_align >= threshold. Failed records are dropped
/// unless keep_failed is set.
FilterResult filter_corpus(const std::vector<ScoreRecord>& records,
                           double threshold = kDefaultFilterThreshold, bool keep_failed = false);

inline constexpr std::size_t kHistogramBins = 20;

struct CorpusStats {
  std::size_t n = 0;
  double mean = 0.0;
  double stddev = 0.0;  ///< population standard deviation
  std::vector<std::size_t> histogram;  ///< kHistogramBins equal bins over [0, 1]
  double zero_peak_fraction = 0.0;
};

/// Statistics over ok records. Throws Error(invalid_argument) if none.
CorpusStats corpus_stats(const std::vector<ScoreRecord>& records);

std::string to_jsonl(const ScoreRecord& record);
void write_records(std::ostream& out, const std::vector<ScoreRecord>& records);
std::vector<ScoreRecord> read_records(std::istream& in);
std::vector<ScoreRecord> read_records(const std::filesystem::path& path);

/// `statistic,value` rows: n, mean, stddev, zero_peak_fraction, bin_00..bin_19.
void write_stats_csv(std::ostream& out, const CorpusStats& stats);

}  // namespace avalign::corpus

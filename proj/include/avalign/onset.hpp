#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "avalign/audio.hpp"
#include "avalign/peaks.hpp"

namespace avalign {

/// Front-end for the onset detector: log-mel spectral flux with a maximum
/// filter across neighbouring bands.
struct OnsetConfig {
  int sample_rate = kWorkingSampleRate;  ///< clips are resampled to this rate first
  double window_seconds = 0.025;
  double hop_seconds = 0.010;
  int fft_size = 1024;
  int bands = 64;
  double fmin = 0.0;
  double fmax = 0.0;  ///< 0 means Nyquist
  int max_filter_bands = 1;  ///< half-width of the frequency maximum filter

  int window_length() const;
  int hop_length() const;
};

class MelSpectrogram {
 public:
  MelSpectrogram(std::vector<double> values, std::size_t frames, std::size_t bands,
                 double hop_seconds);

  std::size_t frames() const noexcept { return frames_; }
  std::size_t bands() const noexcept { return bands_; }
  double hop_seconds() const noexcept { return hop_seconds_; }
  double at(std::size_t frame, std::size_t band) const { return values_[frame * bands_ + band]; }
  std::span<const double> frame(std::size_t t) const {
    return std::span<const double>(values_).subspan(t * bands_, bands_);
  }

 private:
  std::vector<double> values_;  // frames x bands, row-major
  std::size_t frames_;
  std::size_t bands_;
  double hop_seconds_;
};

/// Novelty curve. Entry j describes spectral frame j + 1; `origin_seconds`
/// is the time assigned to entry 0 (centre of spectral frame 1).
class OnsetEnvelope {
 public:
  OnsetEnvelope(std::vector<double> values, double hop_seconds, double origin_seconds = 0.0);

  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  double hop_seconds() const noexcept { return hop_seconds_; }
  double origin_seconds() const noexcept { return origin_seconds_; }
  double time_of(std::size_t frame) const {
    return origin_seconds_ + static_cast<double>(frame) * hop_seconds_;
  }

 private:
  std::vector<double> values_;
  double hop_seconds_;
  double origin_seconds_;
};

/// Frame count of the un-padded STFT: 1 + floor((n - win) / hop), or 0.
std::size_t stft_frame_count(std::size_t num_samples, int window_length, int hop_length);

/// Magnitude mel spectrogram (Hann window, no padding). The clip must
/// already be at cfg.sample_rate.
MelSpectrogram mel_spectrogram(const AudioClip& clip, const OnsetConfig& cfg = {});

/// Positive log-mel flux: sum over bands of max(0, L[t] - maxfilt(L[t-1])),
/// L = log(1 + mel). Resamples to cfg.sample_rate when needed.
/// Throws Error(too_short) when fewer than two STFT frames fit.
OnsetEnvelope onset_envelope(const AudioClip& clip, const OnsetConfig& cfg = {});
OnsetEnvelope onset_envelope(const MelSpectrogram& mel, const OnsetConfig& cfg = {});

enum class DeltaMode {
  absolute,           ///< threshold offset is `delta` as given
  relative_to_max,    ///< threshold offset is `delta` * max(envelope)
};

struct PeakConfig {
  int pre_max = 3;
  int post_max = 3;
  int pre_avg = 10;
  int post_avg = 10;
  double delta = 0.05;
  DeltaMode delta_mode = DeltaMode::relative_to_max;
  int wait = 3;
};

/// Frame t is a peak iff it is the maximum of [t-pre_max, t+post_max], exceeds
/// the local mean over [t-pre_avg, t+post_avg] by the delta offset, is
/// strictly positive, and is at least `wait` frames after the previous peak.
/// `duration` bounds the resulting PeakSet; peaks at or past it are dropped.
PeakSet pick_peaks(const OnsetEnvelope& env, double duration, const PeakConfig& cfg = {});

/// Same as pick_peaks but returns envelope frame indices.
std::vector<std::size_t> pick_peak_frames(std::span<const double> env, const PeakConfig& cfg = {});

/// Convenience pipeline: resample, envelope, peaks.
PeakSet detect_onsets(const AudioClip& clip, const OnsetConfig& onset_cfg = {},
                      const PeakConfig& peak_cfg = {});

class OnsetLabels {
 public:
  OnsetLabels(std::vector<unsigned char> labels, double frame_rate);

  std::span<const unsigned char> labels() const noexcept { return labels_; }
  std::size_t size() const noexcept { return labels_.size(); }
  double frame_rate() const noexcept { return frame_rate_; }
  std::size_t count() const;

  friend bool operator==(const OnsetLabels&, const OnsetLabels&) = default;

 private:
  std::vector<unsigned char> labels_;
  double frame_rate_;
};

/// Binary per-frame onset targets: label i is 1 iff a peak falls in
/// [i / frame_rate, (i + 1) / frame_rate). Requires
/// |duration * frame_rate - t_prime| <= 1.
OnsetLabels onset_labels(const PeakSet& peaks, std::size_t t_prime, double frame_rate);

/// Inverse view of onset_labels: one event at the centre of every active frame.
PeakSet labels_to_peaks(const OnsetLabels& labels);

void write_envelope_csv(std::ostream& out, const OnsetEnvelope& env);
void write_labels_csv(std::ostream& out, const OnsetLabels& labels);

}  // namespace avalign

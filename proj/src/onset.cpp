#include "avalign/onset.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <numeric>
#include <ostream>

#include <fftw3.h>

#include "avalign/error.hpp"
#include "avalign/format.hpp"

namespace avalign {

int OnsetConfig::window_length() const {
  return static_cast<int>(std::lround(window_seconds * sample_rate));
}

int OnsetConfig::hop_length() const {
  return static_cast<int>(std::lround(hop_seconds * sample_rate));
}

MelSpectrogram::MelSpectrogram(std::vector<double> values, std::size_t frames, std::size_t bands,
                               double hop_seconds)
    : values_(std::move(values)), frames_(frames), bands_(bands), hop_seconds_(hop_seconds) {
  if (values_.size() != frames_ * bands_)
    throw Error(ErrorKind::invalid_argument, "mel spectrogram size mismatch");
  if (bands_ == 0 || !(hop_seconds_ > 0.0))
    throw Error(ErrorKind::invalid_argument, "mel spectrogram needs bands > 0 and hop > 0");
  for (double v : values_)
    if (!std::isfinite(v) || v < 0.0)
      throw Error(ErrorKind::invalid_argument, "mel magnitude negative or non-finite");
}

OnsetEnvelope::OnsetEnvelope(std::vector<double> values, double hop_seconds, double origin_seconds)
    : values_(std::move(values)), hop_seconds_(hop_seconds), origin_seconds_(origin_seconds) {
  if (!(hop_seconds_ > 0.0)) throw Error(ErrorKind::invalid_argument, "envelope hop must be > 0");
  for (double v : values_)
    if (!std::isfinite(v) || v < 0.0)
      throw Error(ErrorKind::invalid_argument, "envelope value negative or non-finite");
}

std::size_t stft_frame_count(std::size_t num_samples, int window_length, int hop_length) {
  const auto win = static_cast<std::size_t>(window_length);
  if (num_samples < win) return 0;
  return 1 + (num_samples - win) / static_cast<std::size_t>(hop_length);
}

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular HTK-mel filters sampled at FFT bin frequencies; bands x bins.
std::vector<double> mel_filterbank(const OnsetConfig& cfg) {
  const int bins = cfg.fft_size / 2 + 1;
  const double nyquist = cfg.sample_rate / 2.0;
  const double fmax = cfg.fmax > 0.0 ? std::min(cfg.fmax, nyquist) : nyquist;
  const double mel_lo = hz_to_mel(cfg.fmin);
  const double mel_hi = hz_to_mel(fmax);
  std::vector<double> edges(static_cast<std::size_t>(cfg.bands) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / (cfg.bands + 1));

  std::vector<double> weights(static_cast<std::size_t>(cfg.bands) * bins, 0.0);
  for (int b = 0; b < cfg.bands; ++b) {
    const double lo = edges[b], mid = edges[b + 1], hi = edges[b + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / cfg.fft_size;
      double w = 0.0;
      if (f > lo && f <= mid) w = (f - lo) / (mid - lo);
      else if (f > mid && f < hi) w = (hi - f) / (hi - mid);
      weights[static_cast<std::size_t>(b) * bins + k] = w;
    }
  }
  return weights;
}

// Plan creation is not thread-safe in FFTW; execution with new-array
// functions is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  explicit RealFft(int size) : size_(size) {
    in_ = fftw_alloc_real(static_cast<std::size_t>(size));
    out_ = fftw_alloc_complex(static_cast<std::size_t>(size / 2 + 1));
    std::lock_guard lock(fftw_planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(size, in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard lock(fftw_planner_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::span<double> input() { return {in_, static_cast<std::size_t>(size_)}; }
  void execute() { fftw_execute(plan_); }
  double magnitude(int k) const { return std::hypot(out_[k][0], out_[k][1]); }

 private:
  int size_;
  double* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

void validate(const OnsetConfig& cfg) {
  if (cfg.sample_rate < kMinSampleRate)
    throw Error(ErrorKind::invalid_argument, "onset sample_rate below minimum");
  const int win = cfg.window_length();
  const int hop = cfg.hop_length();
  if (win < 2 || hop < 1) throw Error(ErrorKind::invalid_argument, "onset window/hop too small");
  if (cfg.fft_size < win) throw Error(ErrorKind::invalid_argument, "fft_size shorter than window");
  if (cfg.bands < 1) throw Error(ErrorKind::invalid_argument, "bands must be >= 1");
  if (cfg.max_filter_bands < 0) throw Error(ErrorKind::invalid_argument, "max_filter_bands must be >= 0");
}

}  // namespace

MelSpectrogram mel_spectrogram(const AudioClip& clip, const OnsetConfig& cfg) {
  validate(cfg);
  if (clip.sample_rate() != cfg.sample_rate)
    throw Error(ErrorKind::invalid_argument, "clip rate differs from onset sample_rate");
  const int win = cfg.window_length();
  const int hop = cfg.hop_length();
  const std::size_t frames = stft_frame_count(clip.size(), win, hop);
  const auto bands = static_cast<std::size_t>(cfg.bands);
  const int bins = cfg.fft_size / 2 + 1;

  std::vector<double> window(static_cast<std::size_t>(win));
  for (int n = 0; n < win; ++n)
    window[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / win);
  const std::vector<double> filters = mel_filterbank(cfg);

  RealFft fft(cfg.fft_size);
  std::vector<double> spectrum(static_cast<std::size_t>(bins));
  std::vector<double> values(frames * bands, 0.0);
  const auto samples = clip.samples();
  for (std::size_t t = 0; t < frames; ++t) {
    auto in = fft.input();
    std::fill(in.begin(), in.end(), 0.0);
    const std::size_t start = t * static_cast<std::size_t>(hop);
    for (int n = 0; n < win; ++n) in[n] = samples[start + n] * window[n];
    fft.execute();
    for (int k = 0; k < bins; ++k) spectrum[k] = fft.magnitude(k);
    for (std::size_t b = 0; b < bands; ++b) {
      const double* w = filters.data() + b * bins;
      values[t * bands + b] = std::inner_product(w, w + bins, spectrum.begin(), 0.0);
    }
  }
  return MelSpectrogram(std::move(values), frames, bands, cfg.hop_seconds);
}

OnsetEnvelope onset_envelope(const MelSpectrogram& mel, const OnsetConfig& cfg) {
  if (mel.frames() < 2)
    throw Error(ErrorKind::too_short, "need at least 2 STFT frames for one flux frame, got " +
                                          std::to_string(mel.frames()));
  const std::size_t bands = mel.bands();
  const auto reach = static_cast<std::size_t>(cfg.max_filter_bands);
  std::vector<double> prev(bands), cur(bands), prev_max(bands);
  const auto log_frame = [&](std::size_t t, std::vector<double>& dst) {
    for (std::size_t b = 0; b < bands; ++b) dst[b] = std::log1p(mel.at(t, b));
  };

  std::vector<double> env(mel.frames() - 1);
  log_frame(0, prev);
  for (std::size_t t = 1; t < mel.frames(); ++t) {
    log_frame(t, cur);
    for (std::size_t b = 0; b < bands; ++b) {
      const std::size_t lo = b >= reach ? b - reach : 0;
      const std::size_t hi = std::min(bands - 1, b + reach);
      prev_max[b] = *std::max_element(prev.begin() + lo, prev.begin() + hi + 1);
    }
    double flux = 0.0;
    for (std::size_t b = 0; b < bands; ++b) flux += std::max(0.0, cur[b] - prev_max[b]);
    env[t - 1] = flux;
    std::swap(prev, cur);
  }
  const double origin = mel.hop_seconds() + cfg.window_seconds / 2.0;
  return OnsetEnvelope(std::move(env), mel.hop_seconds(), origin);
}

OnsetEnvelope onset_envelope(const AudioClip& clip, const OnsetConfig& cfg) {
  validate(cfg);
  if (clip.sample_rate() != cfg.sample_rate)
    return onset_envelope(mel_spectrogram(resample(clip, cfg.sample_rate), cfg), cfg);
  return onset_envelope(mel_spectrogram(clip, cfg), cfg);
}

std::vector<std::size_t> pick_peak_frames(std::span<const double> env, const PeakConfig& cfg) {
  if (cfg.pre_max < 0 || cfg.post_max < 0 || cfg.pre_avg < 0 || cfg.post_avg < 0 || cfg.wait < 0)
    throw Error(ErrorKind::invalid_argument, "peak window sizes must be >= 0");
  std::vector<std::size_t> peaks;
  if (env.empty()) return peaks;
  const double global_max = *std::max_element(env.begin(), env.end());
  const double offset = cfg.delta_mode == DeltaMode::relative_to_max ? cfg.delta * global_max
                                                                     : cfg.delta;
  const auto n = static_cast<long>(env.size());
  long last = -1;
  for (long t = 0; t < n; ++t) {
    const double v = env[static_cast<std::size_t>(t)];
    if (!(v > 0.0)) continue;
    if (last >= 0 && t - last < cfg.wait) continue;

    const long max_lo = std::max(0L, t - cfg.pre_max);
    const long max_hi = std::min(n - 1, t + cfg.post_max);
    bool is_max = true;
    for (long k = max_lo; k <= max_hi && is_max; ++k) is_max = env[static_cast<std::size_t>(k)] <= v;
    if (!is_max) continue;

    const long avg_lo = std::max(0L, t - cfg.pre_avg);
    const long avg_hi = std::min(n - 1, t + cfg.post_avg);
    double sum = 0.0;
    for (long k = avg_lo; k <= avg_hi; ++k) sum += env[static_cast<std::size_t>(k)];
    const double mean = sum / static_cast<double>(avg_hi - avg_lo + 1);
    if (v < mean + offset) continue;

    peaks.push_back(static_cast<std::size_t>(t));
    last = t;
  }
  return peaks;
}

PeakSet pick_peaks(const OnsetEnvelope& env, double duration, const PeakConfig& cfg) {
  std::vector<double> times;
  for (std::size_t f : pick_peak_frames(env.values(), cfg)) {
    const double t = env.time_of(f);
    if (t < duration) times.push_back(t);
  }
  return PeakSet(std::move(times), duration);
}

PeakSet detect_onsets(const AudioClip& clip, const OnsetConfig& onset_cfg,
                      const PeakConfig& peak_cfg) {
  return pick_peaks(onset_envelope(clip, onset_cfg), clip.duration(), peak_cfg);
}

OnsetLabels::OnsetLabels(std::vector<unsigned char> labels, double frame_rate)
    : labels_(std::move(labels)), frame_rate_(frame_rate) {
  if (labels_.empty()) throw Error(ErrorKind::invalid_argument, "onset labels need length >= 1");
  if (!(frame_rate_ > 0.0) || !std::isfinite(frame_rate_))
    throw Error(ErrorKind::invalid_argument, "frame_rate must be > 0");
  for (unsigned char v : labels_)
    if (v > 1) throw Error(ErrorKind::invalid_argument, "onset labels must be 0 or 1");
}

std::size_t OnsetLabels::count() const {
  return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), 1));
}

OnsetLabels onset_labels(const PeakSet& peaks, std::size_t t_prime, double frame_rate) {
  if (t_prime < 1) throw Error(ErrorKind::invalid_argument, "t_prime must be >= 1");
  if (!(frame_rate > 0.0)) throw Error(ErrorKind::invalid_argument, "frame_rate must be > 0");
  const double expected = peaks.duration() * frame_rate;
  if (std::abs(expected - static_cast<double>(t_prime)) > 1.0 + 1e-9)
    throw Error(ErrorKind::invalid_argument,
                "duration " + fixed6(peaks.duration()) + " s at " + fixed6(frame_rate) +
                    " frames/s is inconsistent with t_prime " + std::to_string(t_prime));
  std::vector<unsigned char> labels(t_prime, 0);
  for (double t : peaks.times()) {
    const auto bucket = static_cast<std::size_t>(std::floor(t * frame_rate));
    if (bucket < t_prime) labels[bucket] = 1;
  }
  return OnsetLabels(std::move(labels), frame_rate);
}

PeakSet labels_to_peaks(const OnsetLabels& labels) {
  std::vector<double> times;
  const auto l = labels.labels();
  for (std::size_t i = 0; i < l.size(); ++i)
    if (l[i] == 1) times.push_back((static_cast<double>(i) + 0.5) / labels.frame_rate());
  return PeakSet(std::move(times), static_cast<double>(l.size()) / labels.frame_rate());
}

void write_envelope_csv(std::ostream& out, const OnsetEnvelope& env) {
  out << "frame,seconds,value\n";
  const auto v = env.values();
  for (std::size_t i = 0; i < v.size(); ++i)
    out << i << ',' << fixed6(env.time_of(i)) << ',' << fixed6(v[i]) << '\n';
}

void write_labels_csv(std::ostream& out, const OnsetLabels& labels) {
  out << "frame,seconds,label\n";
  const auto l = labels.labels();
  for (std::size_t i = 0; i < l.size(); ++i)
    out << i << ',' << fixed6(static_cast<double>(i) / labels.frame_rate()) << ','
        << static_cast<int>(l[i]) << '\n';
}

}  // namespace avalign

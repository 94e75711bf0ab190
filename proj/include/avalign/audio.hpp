#pragma once

#include <filesystem>
#include <span>
#include <vector>

namespace avalign {

inline constexpr int kMinSampleRate = 8000;
inline constexpr int kWorkingSampleRate = 16000;

/// Mono audio, samples in [-1, 1].
class AudioClip {
 public:
  /// Throws Error(invalid_argument) when samples are empty or non-finite, or
  /// when sample_rate < kMinSampleRate.
  AudioClip(std::vector<double> samples, int sample_rate);

  std::span<const double> samples() const noexcept { return samples_; }
  int sample_rate() const noexcept { return sample_rate_; }
  std::size_t size() const noexcept { return samples_.size(); }
  double duration() const noexcept {
    return static_cast<double>(samples_.size()) / sample_rate_;
  }

  friend bool operator==(const AudioClip&, const AudioClip&) = default;

 private:
  std::vector<double> samples_;
  int sample_rate_;
};

enum class WavEncoding { pcm16, float32 };

/// Reads a RIFF/WAVE file (PCM 16-bit or IEEE float 32-bit, mono or
/// stereo). Stereo is averaged down to mono.
AudioClip load_wav(const std::filesystem::path& path);

/// Writes a mono clip. PCM16 output is clipped to [-1, 1] and rounded.
void write_wav(const std::filesystem::path& path, const AudioClip& clip,
               WavEncoding encoding = WavEncoding::pcm16);

/// Lower-level writer used for multi-channel fixtures; `interleaved` holds
/// channels × frames values.
void write_wav(const std::filesystem::path& path, std::span<const double> interleaved,
               int channels, int sample_rate, WavEncoding encoding);

/// Band-limited (Kaiser-windowed sinc) sample-rate conversion. Output length
/// is round(n * target / source); matching rates return an identical clip.
AudioClip resample(const AudioClip& clip, int target_rate);

}  // namespace avalign

#include "avalign/audio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <optional>
#include <string>

#include "avalign/error.hpp"

namespace avalign {

AudioClip::AudioClip(std::vector<double> samples, int sample_rate)
    : samples_(std::move(samples)), sample_rate_(sample_rate) {
  if (samples_.empty()) throw Error(ErrorKind::invalid_argument, "audio clip has no samples");
  if (sample_rate_ < kMinSampleRate)
    throw Error(ErrorKind::invalid_argument,
                "sample_rate " + std::to_string(sample_rate_) + " below " +
                    std::to_string(kMinSampleRate));
  for (double s : samples_) {
    if (!std::isfinite(s) || s < -1.0 || s > 1.0)
      throw Error(ErrorKind::invalid_argument, "sample outside [-1, 1] or non-finite");
  }
}

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xFF));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

void put_tag(std::vector<unsigned char>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

struct WavFormat {
  std::uint16_t tag = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t block_align = 0;
  std::uint16_t bits = 0;
};

}  // namespace

AudioClip load_wav(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec))
    throw Error(ErrorKind::missing_file, path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());

  const auto header_error = [&](const std::string& field) {
    return Error(ErrorKind::malformed_header, path.string() + ": " + field);
  };
  if (bytes.size() < 12) throw header_error("truncated RIFF header");
  if (std::memcmp(bytes.data(), "RIFF", 4) != 0) throw header_error("missing RIFF tag");
  if (std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) throw header_error("missing WAVE tag");

  std::optional<WavFormat> format;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || body + 16 > bytes.size()) throw header_error("fmt chunk too short");
      WavFormat f;
      f.tag = read_u16(bytes.data() + body);
      f.channels = read_u16(bytes.data() + body + 2);
      f.sample_rate = read_u32(bytes.data() + body + 4);
      f.block_align = read_u16(bytes.data() + body + 12);
      f.bits = read_u16(bytes.data() + body + 14);
      if (f.tag == kFormatExtensible) {
        if (size < 40 || body + 26 > bytes.size()) throw header_error("extensible fmt chunk too short");
        f.tag = read_u16(bytes.data() + body + 24);
      }
      format = f;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      // Tolerate writers that leave the size field at 0 or oversized.
      data_size = std::min<std::size_t>(size == 0 ? bytes.size() - body : size,
                                        bytes.size() - body);
      if (format) break;
    }
    pos = body + size + (size & 1u);
  }
  if (!format) throw header_error("missing fmt chunk");
  if (data == nullptr) throw header_error("missing data chunk");

  const WavFormat& f = *format;
  if (f.channels != 1 && f.channels != 2)
    throw Error(ErrorKind::unsupported_encoding,
                path.string() + ": channels=" + std::to_string(f.channels));
  const bool pcm16 = f.tag == kFormatPcm && f.bits == 16;
  const bool float32 = f.tag == kFormatFloat && f.bits == 32;
  if (!pcm16 && !float32)
    throw Error(ErrorKind::unsupported_encoding,
                path.string() + ": format_tag=" + std::to_string(f.tag) +
                    " bits_per_sample=" + std::to_string(f.bits));
  const std::size_t sample_bytes = f.bits / 8;
  if (f.block_align != sample_bytes * f.channels) throw header_error("block_align");
  if (f.sample_rate == 0) throw header_error("sample_rate");

  const std::size_t frames = data_size / f.block_align;
  if (frames == 0) throw header_error("empty data chunk");
  std::vector<double> mono(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < f.channels; ++c) {
      const unsigned char* p = data + i * f.block_align + c * sample_bytes;
      if (pcm16) {
        acc += static_cast<std::int16_t>(read_u16(p)) / 32768.0;
      } else {
        const float v = std::bit_cast<float>(read_u32(p));
        acc += std::clamp(static_cast<double>(v), -1.0, 1.0);
      }
    }
    mono[i] = acc / f.channels;
    if (!std::isfinite(mono[i]))
      throw Error(ErrorKind::malformed_data, path.string() + ": non-finite sample");
  }
  if (f.sample_rate < static_cast<std::uint32_t>(kMinSampleRate))
    throw Error(ErrorKind::unsupported_encoding,
                path.string() + ": sample_rate=" + std::to_string(f.sample_rate));
  return AudioClip(std::move(mono), static_cast<int>(f.sample_rate));
}

void write_wav(const std::filesystem::path& path, std::span<const double> interleaved,
               int channels, int sample_rate, WavEncoding encoding) {
  if (channels < 1 || interleaved.size() % channels != 0)
    throw Error(ErrorKind::invalid_argument, "interleaved size not a multiple of channels");
  const std::uint16_t bits = encoding == WavEncoding::pcm16 ? 16 : 32;
  const std::uint16_t block_align = static_cast<std::uint16_t>(channels * bits / 8);
  const auto data_size = static_cast<std::uint32_t>(interleaved.size() * bits / 8);

  std::vector<unsigned char> out;
  out.reserve(44 + data_size);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_size);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, encoding == WavEncoding::pcm16 ? kFormatPcm : kFormatFloat);
  put_u16(out, static_cast<std::uint16_t>(channels));
  put_u32(out, static_cast<std::uint32_t>(sample_rate));
  put_u32(out, static_cast<std::uint32_t>(sample_rate) * block_align);
  put_u16(out, block_align);
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, data_size);
  for (double v : interleaved) {
    const double c = std::clamp(v, -1.0, 1.0);
    if (encoding == WavEncoding::pcm16) {
      const long q = std::lround(c * 32767.0);
      put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
    } else {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(c)));
    }
  }

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw Error(ErrorKind::io, "cannot write " + path.string());
  file.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!file) throw Error(ErrorKind::io, "short write to " + path.string());
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip, WavEncoding encoding) {
  write_wav(path, clip.samples(), 1, clip.sample_rate(), encoding);
}

namespace {

// Kaiser window sampled on [0, 1]; evaluated by linear interpolation.
class KaiserTable {
 public:
  explicit KaiserTable(double beta) : values_(kSize + 1) {
    const double norm = std::cyl_bessel_i(0.0, beta);
    for (std::size_t i = 0; i <= kSize; ++i) {
      const double x = static_cast<double>(i) / kSize;
      values_[i] = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - x * x))) / norm;
    }
  }

  double operator()(double x) const {
    x = std::abs(x);
    if (x >= 1.0) return 0.0;
    const double pos = x * kSize;
    const auto i = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    return values_[i] + frac * (values_[i + 1] - values_[i]);
  }

 private:
  static constexpr std::size_t kSize = 8192;
  std::vector<double> values_;
};

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace

AudioClip resample(const AudioClip& clip, int target_rate) {
  if (target_rate < kMinSampleRate)
    throw Error(ErrorKind::invalid_argument,
                "target_rate " + std::to_string(target_rate) + " below " +
                    std::to_string(kMinSampleRate));
  const int source_rate = clip.sample_rate();
  if (target_rate == source_rate) return clip;

  constexpr int kZeroCrossings = 16;
  static const KaiserTable window(8.6);
  // Cutoff slightly under the lower Nyquist to leave room for the transition band.
  const double cutoff = 0.95 * std::min(1.0, static_cast<double>(target_rate) / source_rate);
  const double half_width = kZeroCrossings / cutoff;
  const double step = static_cast<double>(source_rate) / target_rate;

  const auto in = clip.samples();
  const auto n_in = static_cast<long>(in.size());
  const auto n_out = static_cast<std::size_t>(
      std::llround(static_cast<double>(in.size()) * target_rate / source_rate));
  std::vector<double> out(std::max<std::size_t>(n_out, 1));
  for (std::size_t j = 0; j < out.size(); ++j) {
    const double center = static_cast<double>(j) * step;
    const long lo = std::max(0L, static_cast<long>(std::ceil(center - half_width)));
    const long hi = std::min(n_in - 1, static_cast<long>(std::floor(center + half_width)));
    double acc = 0.0;
    for (long k = lo; k <= hi; ++k) {
      const double x = static_cast<double>(k) - center;
      acc += in[static_cast<std::size_t>(k)] * cutoff * sinc(cutoff * x) * window(x / half_width);
    }
    out[j] = std::clamp(acc, -1.0, 1.0);
  }
  return AudioClip(std::move(out), target_rate);
}

}  // namespace avalign

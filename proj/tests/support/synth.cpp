#include "synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

namespace avalign::testing {

TempDir::TempDir(const std::string& tag) {
  static std::mt19937_64 rng(std::random_device{}());
  const auto base = std::filesystem::temp_directory_path();
  for (;;) {
    path_ = base / (tag + "-" + std::to_string(rng()));
    if (std::filesystem::create_directory(path_)) break;
  }
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

AudioClip click_train(const std::vector<double>& click_times, double duration, int rate, double amplitude,
                      double noise_floor, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  const auto n = static_cast<std::size_t>(std::llround(duration * rate));
  std::vector<double> s(n, 0.0);
  if (noise_floor > 0.0)
    for (double& v : s) v = noise_floor * uni(rng);
  const auto burst = static_cast<std::size_t>(0.005 * rate);
  for (double t : click_times) {
    const auto start = static_cast<std::size_t>(std::llround(t * rate));
    for (std::size_t k = 0; k < burst && start + k < n; ++k) {
      const double env = std::exp(-static_cast<double>(k) / (0.0015 * rate));
      s[start + k] = std::clamp(s[start + k] + amplitude * env * uni(rng), -1.0, 1.0);
    }
  }
  return AudioClip(std::move(s), rate);
}

AudioClip tone(double freq, double duration, int rate, double amplitude) {
  const auto n = static_cast<std::size_t>(std::llround(duration * rate));
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = amplitude * std::sin(2.0 * std::numbers::pi * freq * i / rate);
  return AudioClip(std::move(s), rate);
}

GrayImage periodic_texture(std::size_t width, std::size_t height, double shift_x, double shift_y) {
  GrayImage img(width, height);
  constexpr double tau = 2.0 * std::numbers::pi;
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const double u = static_cast<double>(x) - shift_x, v = static_cast<double>(y) - shift_y;
      img.at(x, y) = 0.5 + 0.18 * std::sin(tau * u / 32.0 + 0.4) + 0.12 * std::cos(tau * v / 32.0) +
                     0.12 * std::sin(tau * (u + v) / 16.0 + 1.1);
    }
  return img;
}

FrameSequence noisy_static_video(std::size_t count, double fps, double noise, std::uint64_t seed, std::size_t size) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-noise, noise);
  const GrayImage base = periodic_texture(size, size);
  std::vector<GrayImage> frames;
  for (std::size_t i = 0; i < count; ++i) {
    GrayImage f = base;
    for (double& p : f.pixels) p = std::clamp(p + uni(rng), 0.0, 1.0);
    frames.push_back(std::move(f));
  }
  return FrameSequence(std::move(frames), fps);
}

FrameSequence jump_video(std::size_t count, double fps, const std::vector<std::size_t>& move_after, double step,
                         std::size_t size) {
  std::vector<GrayImage> frames;
  double offset = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    if (i > 0 && std::find(move_after.begin(), move_after.end(), i - 1) != move_after.end()) offset += step;
    frames.push_back(periodic_texture(size, size, offset));
  }
  return FrameSequence(std::move(frames), fps);
}

void write_frames(const std::filesystem::path& dir, const FrameSequence& frames) {
  std::filesystem::create_directories(dir);
  const auto f = frames.frames();
  for (std::size_t i = 0; i < f.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%04zu.pgm", i);
    write_pgm(dir / name, f[i]);
  }
}

}  // namespace avalign::testing

namespace avalign::testing {

std::string write_av_clip(const std::filesystem::path& dir, const std::string& name,
                          const std::vector<double>& clicks, const std::vector<std::size_t>& move_after,
                          double seconds, double fps) {
  write_wav(dir / (name + ".wav"), click_train(clicks, seconds), WavEncoding::pcm16);
  const auto count = static_cast<std::size_t>(std::lround(seconds * fps));
  write_frames(dir / name, jump_video(count, fps, move_after, 2.0, 32));
  std::ostringstream line;
  line << R"({"id":")" << name << R"(","audio":")" << name << R"(.wav","frames":")" << name
       << R"(","fps":)" << fps << '}';
  return line.str();
}

}  // namespace avalign::testing

#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "avalign/peaks.hpp"

namespace avalign {

/// Grayscale image, row-major, intensities in [0, 1].
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;

  GrayImage() = default;
  GrayImage(std::size_t w, std::size_t h, double fill = 0.0)
      : width(w), height(h), pixels(w * h, fill) {}

  double& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  double at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

class FrameSequence {
 public:
  /// Throws Error(too_few_frames) for < 2 frames, Error(inconsistent_dimensions)
  /// for size mismatches, Error(invalid_argument) for bad fps or intensities.
  FrameSequence(std::vector<GrayImage> frames, double fps);

  std::span<const GrayImage> frames() const noexcept { return frames_; }
  std::size_t size() const noexcept { return frames_.size(); }
  double fps() const noexcept { return fps_; }
  double duration() const noexcept { return static_cast<double>(frames_.size()) / fps_; }
  std::size_t width() const noexcept { return frames_.front().width; }
  std::size_t height() const noexcept { return frames_.front().height; }

 private:
  std::vector<GrayImage> frames_;
  double fps_;
};

/// Reads an 8-bit binary PGM (P5).
GrayImage read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const GrayImage& image);

/// Loads either a directory of *.pgm files (lexicographic order) or a raw
/// 8-bit luma stream `clip.y` whose dimensions are given as `WIDTH HEIGHT` in
/// the sidecar `clip.y.dims`.
FrameSequence load_frames(const std::filesystem::path& path, double fps);

/// Writes a raw luma stream plus its `.dims` sidecar.
void write_luma_stream(const std::filesystem::path& path, const FrameSequence& frames);

struct FlowConfig {
  int block_size = 8;      ///< flow is estimated at the centre of every block
  int window_radius = 4;   ///< (2r+1)^2 support window per level
  int pyramid_levels = 3;
  int iterations = 3;      ///< Gauss-Newton refinements per level
  double min_eigenvalue = 1e-4;  ///< per-pixel structure-tensor floor; below it a block has no flow
};

/// Flow vector at one grid point, in pixels/frame at full resolution.
struct FlowVector {
  double dx = 0.0;
  double dy = 0.0;
};

/// Dense block-grid optical flow between two frames (coarse-to-fine
/// Lucas-Kanade). Returns one vector per block, row-major.
std::vector<FlowVector> block_flow(const GrayImage& from, const GrayImage& to,
                                   const FlowConfig& cfg = {});

class MotionSeries {
 public:
  MotionSeries(std::vector<double> magnitudes, double fps);

  std::span<const double> magnitudes() const noexcept { return magnitudes_; }
  std::size_t size() const noexcept { return magnitudes_.size(); }
  double fps() const noexcept { return fps_; }
  /// Duration of the source video: (pairs + 1) / fps.
  double duration() const noexcept { return static_cast<double>(magnitudes_.size() + 1) / fps_; }

 private:
  std::vector<double> magnitudes_;
  double fps_;
};

/// Mean flow magnitude per consecutive frame pair.
MotionSeries flow_magnitude(const FrameSequence& frames, const FlowConfig& cfg = {});

inline constexpr double kDefaultFlowThreshold = 0.1;
inline constexpr int kDefaultMotionWindow = 2;

/// Index i is a peak iff it is a strict maximum over [i - window, i + window]
/// and magnitudes[i] >= min_height. Peak time is (i + 0.5) / fps, the
/// midpoint of the frame pair.
PeakSet motion_peaks(const MotionSeries& series, double min_height = kDefaultFlowThreshold,
                     int window = kDefaultMotionWindow);

void write_motion_csv(std::ostream& out, const MotionSeries& series);

}  // namespace avalign

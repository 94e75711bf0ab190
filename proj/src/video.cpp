#include "avalign/video.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <ostream>
#include <string>

#include "avalign/error.hpp"
#include "avalign/format.hpp"

namespace avalign {

FrameSequence::FrameSequence(std::vector<GrayImage> frames, double fps)
    : frames_(std::move(frames)), fps_(fps) {
  if (frames_.size() < 2)
    throw Error(ErrorKind::too_few_frames, "need >= 2 frames, got " + std::to_string(frames_.size()));
  if (!(fps_ > 0.0) || !std::isfinite(fps_)) throw Error(ErrorKind::invalid_argument, "fps must be > 0");
  const auto w = frames_.front().width, h = frames_.front().height;
  if (w == 0 || h == 0) throw Error(ErrorKind::invalid_argument, "frames must be non-empty");
  for (std::size_t i = 0; i < frames_.size(); ++i) {
    const GrayImage& f = frames_[i];
    if (f.width != w || f.height != h || f.pixels.size() != w * h)
      throw Error(ErrorKind::inconsistent_dimensions,
                  "frame " + std::to_string(i) + " is " + std::to_string(f.width) + "x" +
                      std::to_string(f.height) + ", expected " + std::to_string(w) + "x" +
                      std::to_string(h));
    for (double v : f.pixels)
      if (!std::isfinite(v) || v < 0.0 || v > 1.0)
        throw Error(ErrorKind::invalid_argument, "frame intensity outside [0, 1]");
  }
}

namespace {

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) throw Error(ErrorKind::missing_file, path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

GrayImage read_pgm(const std::filesystem::path& path) {
  const std::vector<unsigned char> bytes = read_bytes(path);
  const auto bad = [&](const std::string& what) {
    return Error(ErrorKind::unreadable_image, path.string() + ": " + what);
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw bad("not a binary PGM (P5)");

  std::size_t pos = 2;
  const auto next_number = [&]() -> long {
    for (;;) {
      while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw bad("truncated header");
    long value = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      value = value * 10 + (bytes[pos] - '0');
      if (value > 1'000'000) throw bad("header value too large");
      ++pos;
    }
    return value;
  };
  const long width = next_number();
  const long height = next_number();
  const long maxval = next_number();
  if (width <= 0 || height <= 0) throw bad("zero dimension");
  if (maxval <= 0 || maxval > 255) throw bad("only 8-bit PGM supported (maxval " + std::to_string(maxval) + ")");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw bad("missing separator after header");
  ++pos;
  const auto count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (bytes.size() - pos < count) throw bad("truncated pixel data");

  GrayImage img(static_cast<std::size_t>(width), static_cast<std::size_t>(height));
  for (std::size_t i = 0; i < count; ++i)
    img.pixels[i] = std::min(1.0, bytes[pos + i] / static_cast<double>(maxval));
  return img;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  for (double v : image.pixels)
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
  if (!out) throw Error(ErrorKind::io, "short write to " + path.string());
}

namespace {

std::filesystem::path dims_path(const std::filesystem::path& stream) {
  auto p = stream;
  p += ".dims";
  return p;
}

FrameSequence load_luma_stream(const std::filesystem::path& path, double fps) {
  const auto sidecar = dims_path(path);
  std::error_code ec;
  if (!std::filesystem::is_regular_file(sidecar, ec))
    throw Error(ErrorKind::missing_file, sidecar.string());
  std::ifstream dims(sidecar);
  long width = 0, height = 0;
  if (!(dims >> width >> height) || width <= 0 || height <= 0)
    throw Error(ErrorKind::malformed_header, sidecar.string() + ": expected WIDTH HEIGHT");

  const std::vector<unsigned char> bytes = read_bytes(path);
  const auto frame_bytes = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (bytes.size() % frame_bytes != 0)
    throw Error(ErrorKind::inconsistent_dimensions,
                path.string() + ": stream size " + std::to_string(bytes.size()) +
                    " is not a multiple of " + std::to_string(frame_bytes));
  std::vector<GrayImage> frames;
  for (std::size_t off = 0; off < bytes.size(); off += frame_bytes) {
    GrayImage img(static_cast<std::size_t>(width), static_cast<std::size_t>(height));
    for (std::size_t i = 0; i < frame_bytes; ++i) img.pixels[i] = bytes[off + i] / 255.0;
    frames.push_back(std::move(img));
  }
  return FrameSequence(std::move(frames), fps);
}

}  // namespace

FrameSequence load_frames(const std::filesystem::path& path, double fps) {
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) throw Error(ErrorKind::missing_file, path.string());
  if (!std::filesystem::is_directory(path, ec)) return load_luma_stream(path, fps);

  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(path)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".pgm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
  if (files.size() < 2)
    throw Error(ErrorKind::too_few_frames,
                path.string() + ": found " + std::to_string(files.size()) + " PGM frames");
  std::vector<GrayImage> frames;
  frames.reserve(files.size());
  for (const auto& f : files) frames.push_back(read_pgm(f));
  return FrameSequence(std::move(frames), fps);
}

void write_luma_stream(const std::filesystem::path& path, const FrameSequence& frames) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  for (const GrayImage& f : frames.frames())
    for (double v : f.pixels)
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
  std::ofstream dims(dims_path(path), std::ios::trunc);
  dims << frames.width() << ' ' << frames.height() << '\n';
  if (!out || !dims) throw Error(ErrorKind::io, "short write to " + path.string());
}

namespace {

// 5-tap binomial blur followed by 2x decimation, clamped borders.
GrayImage downsample(const GrayImage& src) {
  static constexpr double kTaps[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
  const auto w = static_cast<long>(src.width), h = static_cast<long>(src.height);
  GrayImage tmp(src.width, src.height);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      double acc = 0.0;
      for (long k = -2; k <= 2; ++k) acc += kTaps[k + 2] * src.at(std::clamp(x + k, 0L, w - 1), y);
      tmp.at(x, y) = acc;
    }
  GrayImage dst((src.width + 1) / 2, (src.height + 1) / 2);
  for (long y = 0; y < static_cast<long>(dst.height); ++y)
    for (long x = 0; x < static_cast<long>(dst.width); ++x) {
      double acc = 0.0;
      for (long k = -2; k <= 2; ++k) acc += kTaps[k + 2] * tmp.at(2 * x, std::clamp(2 * y + k, 0L, h - 1));
      dst.at(x, y) = acc;
    }
  return dst;
}

struct Level {
  GrayImage image;
  GrayImage grad_x;
  GrayImage grad_y;
};

Level make_level(GrayImage image) {
  Level lv{std::move(image), {}, {}};
  const auto w = static_cast<long>(lv.image.width), h = static_cast<long>(lv.image.height);
  lv.grad_x = GrayImage(lv.image.width, lv.image.height);
  lv.grad_y = GrayImage(lv.image.width, lv.image.height);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      const long xl = std::max(0L, x - 1), xr = std::min(w - 1, x + 1);
      const long yu = std::max(0L, y - 1), yd = std::min(h - 1, y + 1);
      lv.grad_x.at(x, y) = xr > xl ? (lv.image.at(xr, y) - lv.image.at(xl, y)) / static_cast<double>(xr - xl) : 0.0;
      lv.grad_y.at(x, y) = yd > yu ? (lv.image.at(x, yd) - lv.image.at(x, yu)) / static_cast<double>(yd - yu) : 0.0;
    }
  return lv;
}

std::vector<GrayImage> pyramid(const GrayImage& base, int levels) {
  std::vector<GrayImage> out{base};
  for (int l = 1; l < levels; ++l) {
    if (out.back().width < 2 || out.back().height < 2) break;
    out.push_back(downsample(out.back()));
  }
  return out;
}

bool inside(const GrayImage& img, double x, double y) {
  return x >= 0.0 && y >= 0.0 && x <= static_cast<double>(img.width - 1) &&
         y <= static_cast<double>(img.height - 1);
}

double bilinear(const GrayImage& img, double x, double y) {
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const std::size_t x1 = std::min(x0 + 1, img.width - 1);
  const std::size_t y1 = std::min(y0 + 1, img.height - 1);
  const double fx = x - static_cast<double>(x0), fy = y - static_cast<double>(y0);
  const double top = img.at(x0, y0) + fx * (img.at(x1, y0) - img.at(x0, y0));
  const double bottom = img.at(x0, y1) + fx * (img.at(x1, y1) - img.at(x0, y1));
  return top + fy * (bottom - top);
}

// Lucas-Kanade refinement of `d` for one point at one pyramid level.
void refine(const Level& from, const GrayImage& to, double px, double py, const FlowConfig& cfg,
            double& dx, double& dy) {
  const int r = cfg.window_radius;
  double gxx = 0.0, gxy = 0.0, gyy = 0.0;
  int n = 0;
  for (int j = -r; j <= r; ++j)
    for (int i = -r; i <= r; ++i) {
      const double x = px + i, y = py + j;
      if (!inside(from.image, x, y)) continue;
      const double ix = bilinear(from.grad_x, x, y), iy = bilinear(from.grad_y, x, y);
      gxx += ix * ix;
      gxy += ix * iy;
      gyy += iy * iy;
      ++n;
    }
  if (n == 0) return;
  const double tr = gxx + gyy;
  const double det = gxx * gyy - gxy * gxy;
  const double min_eig = 0.5 * (tr - std::sqrt(std::max(0.0, tr * tr - 4.0 * det)));
  if (min_eig / n < cfg.min_eigenvalue) return;

  for (int it = 0; it < cfg.iterations; ++it) {
    double bx = 0.0, by = 0.0;
    for (int j = -r; j <= r; ++j)
      for (int i = -r; i <= r; ++i) {
        const double x = px + i, y = py + j;
        if (!inside(from.image, x, y) || !inside(to, x + dx, y + dy)) continue;
        const double e = bilinear(from.image, x, y) - bilinear(to, x + dx, y + dy);
        bx += bilinear(from.grad_x, x, y) * e;
        by += bilinear(from.grad_y, x, y) * e;
      }
    const double ux = (gyy * bx - gxy * by) / det;
    const double uy = (gxx * by - gxy * bx) / det;
    if (!std::isfinite(ux) || !std::isfinite(uy)) return;
    dx += ux;
    dy += uy;
    if (std::hypot(ux, uy) < 1e-4) break;
  }
}

}  // namespace

std::vector<FlowVector> block_flow(const GrayImage& from, const GrayImage& to, const FlowConfig& cfg) {
  if (from.width != to.width || from.height != to.height)
    throw Error(ErrorKind::inconsistent_dimensions, "flow frames differ in size");
  if (cfg.block_size < 1 || cfg.window_radius < 1 || cfg.pyramid_levels < 1 || cfg.iterations < 1)
    throw Error(ErrorKind::invalid_argument, "flow configuration values must be >= 1");

  const auto from_pyr = pyramid(from, cfg.pyramid_levels);
  const auto to_pyr = pyramid(to, cfg.pyramid_levels);
  std::vector<Level> levels;
  levels.reserve(from_pyr.size());
  for (const auto& img : from_pyr) levels.push_back(make_level(img));

  const auto block = static_cast<std::size_t>(cfg.block_size);
  const std::size_t nx = std::max<std::size_t>(1, from.width / block);
  const std::size_t ny = std::max<std::size_t>(1, from.height / block);
  std::vector<FlowVector> flow(nx * ny);
  for (std::size_t by = 0; by < ny; ++by)
    for (std::size_t bx = 0; bx < nx; ++bx) {
      const double cx = std::min<double>(bx * block + (block - 1) / 2.0, from.width - 1);
      const double cy = std::min<double>(by * block + (block - 1) / 2.0, from.height - 1);
      double dx = 0.0, dy = 0.0;
      for (auto l = static_cast<int>(levels.size()) - 1; l >= 0; --l) {
        const double scale = std::ldexp(1.0, -l);
        refine(levels[l], to_pyr[l], cx * scale, cy * scale, cfg, dx, dy);
        if (l > 0) {
          dx *= 2.0;
          dy *= 2.0;
        }
      }
      flow[by * nx + bx] = {dx, dy};
    }
  return flow;
}

MotionSeries::MotionSeries(std::vector<double> magnitudes, double fps)
    : magnitudes_(std::move(magnitudes)), fps_(fps) {
  if (!(fps_ > 0.0) || !std::isfinite(fps_)) throw Error(ErrorKind::invalid_argument, "fps must be > 0");
  for (double m : magnitudes_)
    if (!std::isfinite(m) || m < 0.0)
      throw Error(ErrorKind::invalid_argument, "motion magnitude negative or non-finite");
}

MotionSeries flow_magnitude(const FrameSequence& frames, const FlowConfig& cfg) {
  const auto f = frames.frames();
  std::vector<double> magnitudes(f.size() - 1);
  for (std::size_t i = 0; i + 1 < f.size(); ++i) {
    const auto flow = block_flow(f[i], f[i + 1], cfg);
    double sum = 0.0;
    for (const FlowVector& v : flow) sum += std::hypot(v.dx, v.dy);
    magnitudes[i] = sum / static_cast<double>(flow.size());
  }
  return MotionSeries(std::move(magnitudes), frames.fps());
}

PeakSet motion_peaks(const MotionSeries& series, double min_height, int window) {
  if (window < 1) throw Error(ErrorKind::invalid_argument, "motion peak window must be >= 1");
  const auto m = series.magnitudes();
  const auto n = static_cast<long>(m.size());
  std::vector<double> times;
  for (long i = 0; i < n; ++i) {
    const double v = m[static_cast<std::size_t>(i)];
    if (v < min_height) continue;
    bool strict_max = true;
    for (long k = std::max(0L, i - window); k <= std::min(n - 1, i + window) && strict_max; ++k)
      if (k != i && m[static_cast<std::size_t>(k)] >= v) strict_max = false;
    if (strict_max) times.push_back((static_cast<double>(i) + 0.5) / series.fps());
  }
  return PeakSet(std::move(times), series.duration());
}

void write_motion_csv(std::ostream& out, const MotionSeries& series) {
  out << "frame,seconds,magnitude\n";
  const auto m = series.magnitudes();
  for (std::size_t i = 0; i < m.size(); ++i)
    out << i << ',' << fixed6((static_cast<double>(i) + 0.5) / series.fps()) << ',' << fixed6(m[i]) << '\n';
}

}  // namespace avalign

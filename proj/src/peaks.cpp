#include "avalign/peaks.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <string>

#include "avalign/error.hpp"
#include "avalign/format.hpp"

namespace avalign {

PeakSet::PeakSet(std::vector<double> times, double duration)
    : times_(std::move(times)), duration_(duration) {
  if (!std::isfinite(duration_) || duration_ < 0.0)
    throw Error(ErrorKind::invalid_argument, "peak set duration must be finite and >= 0");
  for (std::size_t i = 0; i < times_.size(); ++i) {
    const double t = times_[i];
    if (!std::isfinite(t) || t < 0.0 || t >= duration_)
      throw Error(ErrorKind::invalid_argument,
                  "peak time " + fixed6(t) + " outside [0, " + fixed6(duration_) + ")");
    if (i > 0 && !(t > times_[i - 1]))
      throw Error(ErrorKind::invalid_argument, "peak times must be strictly increasing");
  }
}

PeakSet PeakSet::shifted(double offset) const {
  std::vector<double> moved(times_.begin(), times_.end());
  for (double& t : moved) t += offset;
  return PeakSet(std::move(moved), std::max(0.0, duration_ + offset));
}

void write_peaks_csv(std::ostream& out, const PeakSet& peaks) {
  out << "index,seconds\n";
  const auto times = peaks.times();
  for (std::size_t i = 0; i < times.size(); ++i) out << i << ',' << fixed6(times[i]) << '\n';
}

void write_peaks_csv(const std::filesystem::path& path, const PeakSet& peaks) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  write_peaks_csv(out, peaks);
}

PeakSet read_peaks_csv(const std::filesystem::path& path, double duration) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec))
    throw Error(ErrorKind::missing_file, path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());

  std::vector<double> times;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("index", 0) == 0) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw Error(ErrorKind::malformed_data, path.string() + ":" + std::to_string(line_no) + ": expected index,seconds");
    double t = 0.0;
    const char* first = line.data() + comma + 1;
    const char* last = line.data() + line.size();
    auto [ptr, err] = std::from_chars(first, last, t);
    if (err != std::errc{} || ptr != last)
      throw Error(ErrorKind::malformed_data, path.string() + ":" + std::to_string(line_no) + ": bad seconds field");
    times.push_back(t);
  }
  if (duration <= 0.0) duration = times.empty() ? 0.0 : times.back() + 1.0;
  try {
    return PeakSet(std::move(times), duration);
  } catch (const Error& e) {
    throw Error(ErrorKind::malformed_data, path.string() + ": " + e.what());
  }
}

}  // namespace avalign

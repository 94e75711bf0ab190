#include "avalign/corpus.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "avalign/error.hpp"
#include "avalign/format.hpp"

namespace avalign::corpus {

namespace {

using nlohmann::json;

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

Error manifest_error(std::size_t line_no, const std::string& what) {
  return Error(ErrorKind::malformed_data, "manifest line " + std::to_string(line_no) + ": " + what);
}

}  // namespace

std::vector<ManifestEntry> parse_manifest(std::istream& in, const std::filesystem::path& base_dir) {
  std::vector<ManifestEntry> entries;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw manifest_error(line_no, e.what());
    }
    if (!obj.is_object()) throw manifest_error(line_no, "expected a JSON object");
    const auto string_field = [&](const char* key, bool required) -> std::optional<std::string> {
      const auto it = obj.find(key);
      if (it == obj.end() || it->is_null()) {
        if (required) throw manifest_error(line_no, std::string("missing \"") + key + "\"");
        return std::nullopt;
      }
      if (!it->is_string()) throw manifest_error(line_no, std::string("\"") + key + "\" must be a string");
      return it->get<std::string>();
    };

    ManifestEntry e;
    e.id = *string_field("id", true);
    if (e.id.empty()) throw manifest_error(line_no, "empty id");
    if (!seen.insert(e.id).second) throw manifest_error(line_no, "duplicate id \"" + e.id + "\"");
    e.audio = resolve(base_dir, *string_field("audio", true));
    e.frames = resolve(base_dir, *string_field("frames", true));
    const auto fps = obj.find("fps");
    if (fps == obj.end() || !fps->is_number()) throw manifest_error(line_no, "missing numeric \"fps\"");
    e.fps = fps->get<double>();
    if (!(e.fps > 0.0) || !std::isfinite(e.fps)) throw manifest_error(line_no, "fps must be > 0");
    e.caption = string_field("caption", false);
    if (auto ref = string_field("ref_audio", false)) e.ref_audio = resolve(base_dir, *ref);
    entries.push_back(std::move(e));
  }
  if (in.bad()) throw Error(ErrorKind::io, "error reading manifest");
  return entries;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) throw Error(ErrorKind::missing_file, path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  return parse_manifest(in, path.parent_path());
}

namespace {

struct StageFailure {
  std::string reason;
};

template <typename F>
auto stage(const char* name, F&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw StageFailure{std::string(name) + ": " + std::string(to_string(e.kind()))};
  } catch (const std::exception& e) {
    throw StageFailure{std::string(name) + ": " + e.what()};
  }
}

PeakSet audio_peaks(const std::filesystem::path& path, const ScoringConfig& cfg) {
  return detect_onsets(load_wav(path), cfg.onset, cfg.peaks);
}

}  // namespace

ScoreRecord score_entry(const ManifestEntry& entry, const ScoringConfig& cfg) {
  ScoreRecord rec;
  rec.id = entry.id;
  try {
    const PeakSet audio = stage("audio", [&] { return audio_peaks(entry.audio, cfg); });
    const PeakSet motion = stage("frames", [&] {
      return motion_peaks(flow_magnitude(load_frames(entry.frames, entry.fps), cfg.flow),
                          cfg.flow_threshold, cfg.motion_window);
    });
    rec.audio_peaks = audio.size();
    rec.motion_peaks = motion.size();
    rec.av_align = av_align(audio, motion, cfg.align).value;
    if (entry.ref_audio) {
      const PeakSet ref = stage("ref_audio", [&] { return audio_peaks(*entry.ref_audio, cfg); });
      rec.aa_align = aa_align(ref, audio, cfg.align).value;
    }
    rec.ok = true;
  } catch (const StageFailure& f) {
    rec = ScoreRecord{};
    rec.id = entry.id;
    rec.reason = f.reason;
  } catch (const std::exception& e) {
    rec = ScoreRecord{};
    rec.id = entry.id;
    rec.reason = std::string("score: ") + e.what();
  }
  return rec;
}

std::vector<ScoreRecord> score_corpus(const std::vector<ManifestEntry>& manifest, const ScoringConfig& cfg) {
  std::vector<ScoreRecord> records(manifest.size());
  const std::size_t workers = std::clamp<std::size_t>(cfg.workers, 1, std::max<std::size_t>(1, manifest.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < manifest.size(); ++i) records[i] = score_entry(manifest[i], cfg);
    return records;
  }
  // Each slot is written by exactly one task; order comes from the index.
  std::atomic<std::size_t> next{0};
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < manifest.size(); i = next++) records[i] = score_entry(manifest[i], cfg);
      });
  }
  return records;
}

FilterResult filter_corpus(const std::vector<ScoreRecord>& records, double threshold, bool keep_failed) {
  if (!(threshold >= 0.0 && threshold <= 1.0))
    throw Error(ErrorKind::invalid_argument, "filter threshold must be in [0, 1]");
  FilterResult out;
  for (const auto& r : records) {
    const bool keep = r.ok ? r.av_align >= threshold : keep_failed;
    (keep ? out.kept : out.dropped).push_back(r.id);
  }
  return out;
}

CorpusStats corpus_stats(const std::vector<ScoreRecord>& records) {
  CorpusStats s;
  s.histogram.assign(kHistogramBins, 0);
  double sum = 0.0;
  std::size_t zero_peaks = 0;
  for (const auto& r : records) {
    if (!r.ok) continue;
    ++s.n;
    sum += r.av_align;
    if (r.audio_peaks == 0 || r.motion_peaks == 0) ++zero_peaks;
    const auto bin = static_cast<std::size_t>(std::floor(std::clamp(r.av_align, 0.0, 1.0) * kHistogramBins));
    ++s.histogram[std::min(bin, kHistogramBins - 1)];
  }
  if (s.n == 0) throw Error(ErrorKind::invalid_argument, "corpus_stats: no ok records");
  s.mean = sum / static_cast<double>(s.n);
  double sq = 0.0;
  for (const auto& r : records)
    if (r.ok) sq += (r.av_align - s.mean) * (r.av_align - s.mean);
  s.stddev = std::sqrt(sq / static_cast<double>(s.n));
  s.zero_peak_fraction = static_cast<double>(zero_peaks) / static_cast<double>(s.n);
  return s;
}

std::string to_jsonl(const ScoreRecord& r) {
  std::ostringstream out;
  out << "{\"id\":" << json_quote(r.id) << ",\"status\":" << (r.ok ? "\"ok\"" : "\"failed\"");
  if (!r.ok) out << ",\"reason\":" << json_quote(r.reason);
  out << ",\"av_align\":" << (r.ok ? fixed6(r.av_align) : "null")
      << ",\"aa_align\":" << (r.ok && r.aa_align ? fixed6(*r.aa_align) : "null")
      << ",\"audio_peaks\":" << r.audio_peaks << ",\"motion_peaks\":" << r.motion_peaks << '}';
  return out.str();
}

void write_records(std::ostream& out, const std::vector<ScoreRecord>& records) {
  for (const auto& r : records) out << to_jsonl(r) << '\n';
}

std::vector<ScoreRecord> read_records(std::istream& in) {
  std::vector<ScoreRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto bad = [&](const std::string& what) {
      return Error(ErrorKind::malformed_data, "records line " + std::to_string(line_no) + ": " + what);
    };
    try {
      const json obj = json::parse(line);
      ScoreRecord r;
      r.id = obj.at("id").get<std::string>();
      const std::string status = obj.at("status").get<std::string>();
      if (status != "ok" && status != "failed") throw bad("status must be ok or failed");
      r.ok = status == "ok";
      if (!r.ok) {
        r.reason = obj.value("reason", std::string("unspecified"));
        if (r.reason.empty()) r.reason = "unspecified";
      } else {
        r.av_align = obj.at("av_align").get<double>();
        if (!(r.av_align >= 0.0 && r.av_align <= 1.0)) throw bad("av_align outside [0, 1]");
        if (const auto it = obj.find("aa_align"); it != obj.end() && !it->is_null()) r.aa_align = it->get<double>();
      }
      r.audio_peaks = obj.value("audio_peaks", std::size_t{0});
      r.motion_peaks = obj.value("motion_peaks", std::size_t{0});
      records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw bad(e.what());
    }
  }
  return records;
}

std::vector<ScoreRecord> read_records(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) throw Error(ErrorKind::missing_file, path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  return read_records(in);
}

void write_stats_csv(std::ostream& out, const CorpusStats& s) {
  out << "statistic,value\n"
      << "n," << s.n << '\n'
      << "mean," << fixed6(s.mean) << '\n'
      << "stddev," << fixed6(s.stddev) << '\n'
      << "zero_peak_fraction," << fixed6(s.zero_peak_fraction) << '\n';
  for (std::size_t b = 0; b < s.histogram.size(); ++b)
    out << "bin_" << (b < 10 ? "0" : "") << b << ',' << s.histogram[b] << '\n';
}

}  // namespace avalign::corpus

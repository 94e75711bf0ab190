#include "cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "avalign/align.hpp"
#include "avalign/audio.hpp"
#include "avalign/corpus.hpp"
#include "avalign/error.hpp"
#include "avalign/format.hpp"
#include "avalign/onset.hpp"
#include "avalign/peaks.hpp"
#include "avalign/selftest.hpp"
#include "avalign/video.hpp"

namespace avalign::cli {

namespace fs = std::filesystem;

namespace {

enum class Format { json, csv };

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::inconsistent_dimensions:
    case ErrorKind::malformed_data:
      return kDataFormat;
    case ErrorKind::invalid_argument:
      return kUsage;
    default:
      return kIoError;
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw Error(ErrorKind::io, "cannot write " + path);
  file << text;
  if (!file) throw Error(ErrorKind::io, "short write to " + path);
}

// Writes to `path` when given, otherwise to `out`.
void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty()) out << text;
  else write_text(path, text);
}

bool is_csv(const fs::path& p) {
  auto ext = p.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext == ".csv";
}

PeakSet peaks_from(const fs::path& input) {
  if (is_csv(input)) return read_peaks_csv(input);
  return detect_onsets(load_wav(input));
}

std::string score_text(const AlignmentScore& s, Format format,
                       const std::vector<std::pair<std::string, std::size_t>>& extra = {}) {
  if (format == Format::csv) {
    std::string text = to_csv(s);
    if (extra.empty()) return text;
    const auto header_end = text.find('\n');
    std::string header = text.substr(0, header_end), row = text.substr(header_end + 1);
    row.pop_back();
    for (const auto& [key, value] : extra) {
      header += "," + key;
      row += "," + std::to_string(value);
    }
    return header + "\n" + row + "\n";
  }
  std::string text = to_json(s);
  text.pop_back();
  for (const auto& [key, value] : extra) text += ",\"" + key + "\":" + std::to_string(value);
  return text + "}\n";
}

struct Common {
  std::string format = "json";
  Format fmt() const { return format == "csv" ? Format::csv : Format::json; }
};

void add_format(CLI::App* cmd, Common& c) {
  cmd->add_option("--format", c.format, "Output format")->check(CLI::IsMember({"json", "csv"}));
}

MatchMode parse_match(const std::string& m) {
  return m == "many-to-one" ? MatchMode::many_to_one : MatchMode::one_to_one;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Onset, motion and temporal-alignment toolkit", "avalign"};
  app.require_subcommand(1);
  Common common;

  // onsets
  struct {
    std::string audio, peaks, labels, envelope;
    double frame_rate = 0.0;
    std::size_t t_prime = 0;
  } onsets;
  auto* c_onsets = app.add_subcommand("onsets", "Detect onsets and write peaks / pseudo-labels");
  c_onsets->add_option("audio", onsets.audio, "WAV file")->required();
  c_onsets->add_option("--peaks", onsets.peaks, "Peak CSV output (index,seconds)");
  c_onsets->add_option("--envelope", onsets.envelope, "Envelope CSV output (frame,seconds,value)");
  auto* o_labels = c_onsets->add_option("--labels", onsets.labels, "Label CSV output (frame,seconds,label)");
  auto* o_rate = c_onsets->add_option("--frame-rate", onsets.frame_rate, "Label frames per second")
                     ->check(CLI::PositiveNumber);
  c_onsets->add_option("--t-prime", onsets.t_prime, "Label count (default: round(duration * frame rate))")
      ->check(CLI::PositiveNumber);
  o_labels->needs(o_rate);

  // motion
  struct {
    std::string frames, out, peaks;
    double fps = 0.0, flow_threshold = kDefaultFlowThreshold;
    int window = kDefaultMotionWindow;
  } motion;
  auto* c_motion = app.add_subcommand("motion", "Per-frame optical-flow magnitude and motion peaks");
  c_motion->add_option("frames", motion.frames, "PGM directory or raw .y stream")->required();
  c_motion->add_option("--fps", motion.fps, "Frames per second")->required()->check(CLI::PositiveNumber);
  c_motion->add_option("--out", motion.out, "Motion CSV output (frame,seconds,magnitude)");
  c_motion->add_option("--peaks", motion.peaks, "Motion peak CSV output");
  c_motion->add_option("--flow-threshold", motion.flow_threshold, "Ignore flow maxima below this")
      ->check(CLI::NonNegativeNumber);
  c_motion->add_option("--motion-window", motion.window, "Peak neighbourhood in frames")
      ->check(CLI::PositiveNumber);

  // shared alignment flags
  struct AlignFlags {
    double window = kDefaultAlignWindow;
    std::string match = "one-to-one";
    double both_empty = 1.0;
    std::string out;
  };
  const auto add_align_flags = [&](CLI::App* cmd, AlignFlags& f) {
    cmd->add_option("--window", f.window, "Matching tolerance T in seconds")->check(CLI::PositiveNumber);
    cmd->add_option("--match", f.match, "Matching discipline")
        ->check(CLI::IsMember({"one-to-one", "many-to-one"}));
    cmd->add_option("--both-empty-score", f.both_empty, "Score when both peak sets are empty")
        ->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--out", f.out, "Write the score here instead of stdout");
    add_format(cmd, common);
  };
  const auto align_cfg = [](const AlignFlags& f) {
    AlignConfig cfg;
    cfg.window_seconds = f.window;
    cfg.mode = parse_match(f.match);
    cfg.both_empty_score = f.both_empty;
    return cfg;
  };

  struct {
    std::string gt, gen;
    AlignFlags flags;
  } aa;
  auto* c_aa = app.add_subcommand("aa-align", "Audio-audio alignment between reference and generated audio");
  c_aa->add_option("gt", aa.gt, "Reference WAV or peak CSV")->required();
  c_aa->add_option("gen", aa.gen, "Generated WAV or peak CSV")->required();
  add_align_flags(c_aa, aa.flags);

  struct {
    std::string audio, frames;
    double fps = 0.0, flow_threshold = kDefaultFlowThreshold;
    int motion_window = kDefaultMotionWindow;
    AlignFlags flags;
  } av;
  auto* c_av = app.add_subcommand("av-align", "Audio-video alignment against optical-flow peaks");
  c_av->add_option("audio", av.audio, "WAV file")->required();
  c_av->add_option("frames", av.frames, "PGM directory or raw .y stream")->required();
  c_av->add_option("--fps", av.fps, "Frames per second")->required()->check(CLI::PositiveNumber);
  c_av->add_option("--flow-threshold", av.flow_threshold, "Ignore flow maxima below this")
      ->check(CLI::NonNegativeNumber);
  c_av->add_option("--motion-window", av.motion_window, "Peak neighbourhood in frames")
      ->check(CLI::PositiveNumber);
  add_align_flags(c_av, av.flags);

  struct {
    std::string manifest, out, stats, kept;
    unsigned workers = 1;
    double threshold = corpus::kDefaultFilterThreshold;
    double window = kDefaultAlignWindow, flow_threshold = kDefaultFlowThreshold;
    bool allow_failures = false;
  } score;
  auto* c_score = app.add_subcommand("score", "Score a JSONL manifest of clips");
  c_score->add_option("manifest", score.manifest, "JSON Lines manifest")->required();
  c_score->add_option("--out", score.out, "Records JSONL output (default stdout)");
  c_score->add_option("--stats", score.stats, "Stats CSV output");
  c_score->add_option("--kept", score.kept, "Write ids passing --threshold here");
  c_score->add_option("--workers", score.workers, "Parallel workers")->check(CLI::Range(1u, 256u));
  c_score->add_option("--threshold", score.threshold, "AV-Align filter threshold")->check(CLI::Range(0.0, 1.0));
  c_score->add_option("--window", score.window, "Matching tolerance T in seconds")->check(CLI::PositiveNumber);
  c_score->add_option("--flow-threshold", score.flow_threshold, "Ignore flow maxima below this")
      ->check(CLI::NonNegativeNumber);
  c_score->add_flag("--allow-failures", score.allow_failures, "Exit 0 even if some clips failed");

  struct {
    std::string records, kept, dropped;
    double threshold = corpus::kDefaultFilterThreshold;
    bool keep_failed = false;
  } filter;
  auto* c_filter = app.add_subcommand("filter", "Split scored records at an AV-Align threshold");
  c_filter->add_option("records", filter.records, "Records JSONL")->required();
  c_filter->add_option("--threshold", filter.threshold, "Keep scores >= threshold")->check(CLI::Range(0.0, 1.0));
  c_filter->add_option("--kept", filter.kept, "Kept ids output");
  c_filter->add_option("--dropped", filter.dropped, "Dropped ids output");
  c_filter->add_flag("--keep-failed", filter.keep_failed, "Keep failed records instead of dropping them");
  add_format(c_filter, common);

  struct {
    std::string records, out;
  } stats;
  auto* c_stats = app.add_subcommand("stats", "Score distribution statistics");
  c_stats->add_option("records", stats.records, "Records JSONL")->required();
  c_stats->add_option("--out", stats.out, "Stats CSV output (default stdout)");

  struct {
    std::uint64_t seed = kernels::SelftestOptions{}.seed;
    bool break_gradient = false;
    std::string out;
  } selftest;
  auto* c_self = app.add_subcommand("selftest", "Check every kernel against closed forms and oracles");
  c_self->add_option("--seed", selftest.seed, "Seed for the random draws");
  c_self->add_option("--out", selftest.out, "Report JSONL output (default stdout)");
  c_self->add_flag("--break-gradient", selftest.break_gradient, "Test only: corrupt the analytic gradient")
      ->group("");

  std::vector<std::string> argv_storage{"avalign"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_storage) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (c_onsets->parsed()) {
      const AudioClip clip = load_wav(onsets.audio);
      const OnsetEnvelope env = onset_envelope(clip);
      const PeakSet peaks = pick_peaks(env, clip.duration());
      if (!onsets.peaks.empty()) {
        std::ostringstream csv;
        write_peaks_csv(csv, peaks);
        write_text(onsets.peaks, csv.str());
      }
      if (!onsets.envelope.empty()) {
        std::ostringstream csv;
        write_envelope_csv(csv, env);
        write_text(onsets.envelope, csv.str());
      }
      if (!onsets.labels.empty()) {
        const std::size_t t_prime = onsets.t_prime > 0
            ? onsets.t_prime
            : std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(clip.duration() * onsets.frame_rate)));
        std::ostringstream csv;
        write_labels_csv(csv, onset_labels(peaks, t_prime, onsets.frame_rate));
        write_text(onsets.labels, csv.str());
      }
      out << peaks.size() << " peaks\n";
      return kOk;
    }
    if (c_motion->parsed()) {
      const MotionSeries series = flow_magnitude(load_frames(motion.frames, motion.fps));
      const PeakSet peaks = motion_peaks(series, motion.flow_threshold, motion.window);
      std::ostringstream csv;
      write_motion_csv(csv, series);
      emit(motion.out, csv.str(), out);
      if (!motion.peaks.empty()) {
        std::ostringstream p;
        write_peaks_csv(p, peaks);
        write_text(motion.peaks, p.str());
      }
      if (!motion.out.empty()) out << peaks.size() << " motion peaks\n";
      return kOk;
    }
    if (c_aa->parsed()) {
      const AlignmentScore s = aa_align(peaks_from(aa.gt), peaks_from(aa.gen), align_cfg(aa.flags));
      emit(aa.flags.out, score_text(s, common.fmt()), out);
      return kOk;
    }
    if (c_av->parsed()) {
      const PeakSet audio = detect_onsets(load_wav(av.audio));
      const PeakSet motion_set = motion_peaks(flow_magnitude(load_frames(av.frames, av.fps)),
                                              av.flow_threshold, av.motion_window);
      const AlignmentScore s = av_align(audio, motion_set, align_cfg(av.flags));
      emit(av.flags.out,
           score_text(s, common.fmt(), {{"audio_peaks", audio.size()}, {"motion_peaks", motion_set.size()}}),
           out);
      return kOk;
    }
    if (c_score->parsed()) {
      const auto manifest = corpus::read_manifest(score.manifest);
      corpus::ScoringConfig cfg;
      cfg.workers = score.workers;
      cfg.align.window_seconds = score.window;
      cfg.flow_threshold = score.flow_threshold;
      const auto records = corpus::score_corpus(manifest, cfg);

      std::ostringstream jsonl;
      corpus::write_records(jsonl, records);
      emit(score.out, jsonl.str(), out);

      const auto split = corpus::filter_corpus(records, score.threshold);
      if (!score.kept.empty()) {
        std::string ids;
        for (const auto& id : split.kept) ids += id + "\n";
        write_text(score.kept, ids);
      }
      std::size_t failed = 0;
      for (const auto& r : records) failed += r.ok ? 0 : 1;
      if (!score.stats.empty()) {
        if (failed < records.size()) {
          std::ostringstream csv;
          corpus::write_stats_csv(csv, corpus::corpus_stats(records));
          write_text(score.stats, csv.str());
        } else {
          err << "no successfully scored clips; stats not written\n";
        }
      }
      err << records.size() << " clips scored, " << failed << " failed, " << split.kept.size()
          << " kept at threshold " << fixed6(score.threshold) << '\n';
      return failed > 0 && !score.allow_failures ? kClipFailures : kOk;
    }
    if (c_filter->parsed()) {
      const auto split = corpus::filter_corpus(corpus::read_records(filter.records), filter.threshold,
                                               filter.keep_failed);
      const auto lines = [](const std::vector<std::string>& ids) {
        std::string s;
        for (const auto& id : ids) s += id + "\n";
        return s;
      };
      if (!filter.kept.empty()) write_text(filter.kept, lines(split.kept));
      if (!filter.dropped.empty()) write_text(filter.dropped, lines(split.dropped));
      if (filter.kept.empty() && filter.dropped.empty()) {
        if (common.fmt() == Format::csv) {
          out << "id,decision\n";
          for (const auto& id : split.kept) out << id << ",kept\n";
          for (const auto& id : split.dropped) out << id << ",dropped\n";
        } else {
          const auto arr = [](const std::vector<std::string>& ids) {
            std::string s = "[";
            for (std::size_t i = 0; i < ids.size(); ++i) s += (i ? "," : "") + json_quote(ids[i]);
            return s + "]";
          };
          out << "{\"kept\":" << arr(split.kept) << ",\"dropped\":" << arr(split.dropped) << "}\n";
        }
      } else {
        out << split.kept.size() << " kept, " << split.dropped.size() << " dropped\n";
      }
      return kOk;
    }
    if (c_stats->parsed()) {
      std::ostringstream csv;
      corpus::write_stats_csv(csv, corpus::corpus_stats(corpus::read_records(stats.records)));
      emit(stats.out, csv.str(), out);
      return kOk;
    }
    if (c_self->parsed()) {
      kernels::SelftestOptions opt;
      opt.seed = selftest.seed;
      opt.break_gradient = selftest.break_gradient;
      const auto results = kernels::run_selftest(opt);
      std::ostringstream report;
      kernels::write_jsonl(report, results);
      emit(selftest.out, report.str(), out);
      return kernels::all_passed(results) ? kOk : kSelftestFailed;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  }
  return kUsage;
}

}  // namespace avalign::cli

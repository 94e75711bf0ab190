#include <doctest.h>

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "avalign/audio.hpp"
#include "avalign/peaks.hpp"
#include "cli.hpp"
#include "support/synth.hpp"

using namespace avalign;
namespace synth = avalign::testing;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("onsets") {
  synth::TempDir dir;
  SUBCASE("silence") {
    write_wav(dir / "silence.wav", AudioClip(std::vector<double>(16000, 0.0), 16000));
    const Run r = run({"onsets", (dir / "silence.wav").string(), "--peaks", (dir / "p.csv").string()});
    CHECK(r.code == 0);
    CHECK(r.out == "0 peaks\n");
    CHECK(slurp(dir / "p.csv") == "index,seconds\n");
  }
  SUBCASE("five clicks") {
    const std::vector<double> clicks{0.5, 1.0, 1.5, 2.0, 2.5};
    write_wav(dir / "clicks.wav", synth::click_train(clicks, 3.0));
    const Run r = run({"onsets", (dir / "clicks.wav").string(), "--peaks", (dir / "p.csv").string(), "--envelope",
                       (dir / "e.csv").string(), "--labels", (dir / "l.csv").string(), "--frame-rate", "25"});
    REQUIRE(r.code == 0);
    CHECK(r.out == "5 peaks\n");
    const PeakSet p = read_peaks_csv(dir / "p.csv");
    REQUIRE(p.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(p.times()[i] - clicks[i]) <= 0.010 + 1e-9);
    CHECK(slurp(dir / "e.csv").rfind("frame,seconds,value\n", 0) == 0);
    const std::string labels = slurp(dir / "l.csv");
    CHECK(std::count(labels.begin(), labels.end(), '\n') == 1 + 75);
  }
  SUBCASE("missing file") {
    const std::string path = (dir / "absent.wav").string();
    const Run r = run({"onsets", path});
    CHECK(r.code == 1);
    CHECK(r.err.find(path) != std::string::npos);
  }
  SUBCASE("labels need a frame rate") {
    write_wav(dir / "s.wav", AudioClip(std::vector<double>(16000, 0.0), 16000));
    CHECK(run({"onsets", (dir / "s.wav").string(), "--labels", (dir / "l.csv").string()}).code == 64);
  }
}

TEST_CASE("aa-align") {
  synth::TempDir dir;
  write_wav(dir / "a.wav", synth::click_train({0.4, 1.1, 1.7}, 2.0));
  {
    std::ofstream(dir / "gt.csv") << "index,seconds\n0,1.0\n1,2.0\n";
    std::ofstream(dir / "gen.csv") << "index,seconds\n0,1.05\n1,3.0\n";
  }
  const Run same = run({"aa-align", (dir / "a.wav").string(), (dir / "a.wav").string()});
  REQUIRE(same.code == 0);
  CHECK(nlohmann::json::parse(same.out)["value"].get<double>() == 1.0);

  const Run third = run({"aa-align", (dir / "gt.csv").string(), (dir / "gen.csv").string()});
  REQUIRE(third.code == 0);
  const auto j = nlohmann::json::parse(third.out);
  CHECK(std::abs(j["value"].get<double>() - 1.0 / 3.0) < 1e-6);
  CHECK(j["matched"] == 1);
  CHECK(j["union_size"] == 3);

  const Run csv = run({"aa-align", (dir / "gt.csv").string(), (dir / "gen.csv").string(), "--format", "csv"});
  CHECK(csv.out == "value,matched,union_size,window_seconds\n0.333333,1,3,0.100000\n");

  CHECK(run({"aa-align", (dir / "gt.csv").string(), (dir / "gen.csv").string(), "--window", "0"}).code == 64);
  CHECK(run({"aa-align", (dir / "gt.csv").string()}).code == 64);

  std::ofstream(dir / "bad.csv") << "index,seconds\n0,abc\n";
  CHECK(run({"aa-align", (dir / "gt.csv").string(), (dir / "bad.csv").string()}).code == 65);
}

TEST_CASE("av-align") {
  synth::TempDir dir;
  SUBCASE("static scene") {
    write_wav(dir / "a.wav", synth::click_train({0.5, 1.0}, 2.0));
    synth::write_frames(dir / "f", synth::noisy_static_video(50, 25.0, 0.0, 1, 32));
    const Run r = run({"av-align", (dir / "a.wav").string(), (dir / "f").string(), "--fps", "25"});
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j["value"].get<double>() == 0.0);
    CHECK(j["motion_peaks"] == 0);
  }
  SUBCASE("flash plus click at 1.0 s") {
    synth::write_av_clip(dir.path(), "pair", {1.0}, {24});
    const Run r = run({"av-align", (dir / "pair.wav").string(), (dir / "pair").string(), "--fps", "25"});
    REQUIRE(r.code == 0);
    CHECK(nlohmann::json::parse(r.out)["value"].get<double>() == 1.0);
  }
  SUBCASE("threshold disabled on noisy static video") {
    write_wav(dir / "a.wav", synth::click_train({0.5, 1.0}, 2.0));
    synth::write_frames(dir / "f", synth::noisy_static_video(50, 25.0, 0.01, 7));
    const Run fixed = run({"av-align", (dir / "a.wav").string(), (dir / "f").string(), "--fps", "25"});
    CHECK(nlohmann::json::parse(fixed.out)["motion_peaks"] == 0);
    const Run raw =
        run({"av-align", (dir / "a.wav").string(), (dir / "f").string(), "--fps", "25", "--flow-threshold", "0"});
    REQUIRE(raw.code == 0);
    CHECK(nlohmann::json::parse(raw.out)["motion_peaks"].get<int>() > 0);
  }
  SUBCASE("inconsistent dimensions") {
    write_wav(dir / "a.wav", synth::click_train({0.5}, 1.0));
    std::filesystem::create_directories(dir / "f");
    write_pgm(dir / "f" / "0000.pgm", GrayImage(8, 8));
    write_pgm(dir / "f" / "0001.pgm", GrayImage(16, 8));
    const Run r = run({"av-align", (dir / "a.wav").string(), (dir / "f").string(), "--fps", "25"});
    CHECK(r.code == 65);
    CHECK(r.err.find("inconsistent dimensions") != std::string::npos);
  }
  SUBCASE("fps is required") {
    CHECK(run({"av-align", "a.wav", "f"}).code == 64);
  }
}

TEST_CASE("motion") {
  synth::TempDir dir;
  synth::write_frames(dir / "f", synth::jump_video(20, 25.0, {9}, 2.0, 32));
  const Run r = run({"motion", (dir / "f").string(), "--fps", "25", "--out", (dir / "m.csv").string(), "--peaks",
                     (dir / "p.csv").string()});
  REQUIRE(r.code == 0);
  const std::string csv = slurp(dir / "m.csv");
  CHECK(csv.rfind("frame,seconds,magnitude\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 20);
  const PeakSet p = read_peaks_csv(dir / "p.csv");
  REQUIRE(p.size() == 1);
  CHECK(p.times()[0] == doctest::Approx(9.5 / 25.0));
}

TEST_CASE("score, filter and stats") {
  synth::TempDir dir;
  {
    std::ofstream m(dir / "manifest.jsonl");
    m << synth::write_av_clip(dir.path(), "c0", {1.0}, {24}) << '\n'
      << synth::write_av_clip(dir.path(), "c1", {0.5, 1.5}, {24}) << '\n'
      << synth::write_av_clip(dir.path(), "c2", {0.5, 1.0}, {24}) << '\n'
      << synth::write_av_clip(dir.path(), "c3", {0.3, 0.9, 1.6}, {7, 22, 39}) << '\n';
  }
  const Run r1 = run({"score", (dir / "manifest.jsonl").string(), "--out", (dir / "r1.jsonl").string(), "--stats",
                      (dir / "s.csv").string(), "--workers", "1"});
  REQUIRE(r1.code == 0);
  const std::string records = slurp(dir / "r1.jsonl");
  CHECK(std::count(records.begin(), records.end(), '\n') == 4);
  CHECK(slurp(dir / "s.csv").find("\nn,4\n") != std::string::npos);

  const Run r8 = run({"score", (dir / "manifest.jsonl").string(), "--out", (dir / "r8.jsonl").string(), "--workers", "8"});
  REQUIRE(r8.code == 0);
  CHECK(slurp(dir / "r8.jsonl") == records);

  const Run st = run({"stats", (dir / "r1.jsonl").string()});
  CHECK(st.code == 0);
  CHECK(st.out.rfind("statistic,value\nn,4\n", 0) == 0);

  std::ofstream(dir / "b.jsonl") << R"({"id":"low","status":"ok","av_align":0.19,"aa_align":null,"audio_peaks":1,"motion_peaks":1})" << '\n'
                                 << R"({"id":"edge","status":"ok","av_align":0.20,"aa_align":null,"audio_peaks":1,"motion_peaks":1})" << '\n';
  const Run f = run({"filter", (dir / "b.jsonl").string()});
  REQUIRE(f.code == 0);
  const auto j = nlohmann::json::parse(f.out);
  CHECK(j["kept"] == nlohmann::json::array({"edge"}));
  CHECK(j["dropped"] == nlohmann::json::array({"low"}));
  const Run to_file = run({"filter", (dir / "b.jsonl").string(), "--kept", (dir / "kept.txt").string()});
  CHECK(to_file.out == "1 kept, 1 dropped\n");
  CHECK(slurp(dir / "kept.txt") == "edge\n");
  CHECK(run({"filter", (dir / "b.jsonl").string(), "--format", "csv"}).out == "id,decision\nedge,kept\nlow,dropped\n");
}

TEST_CASE("score reports clip failures") {
  synth::TempDir dir;
  {
    std::ofstream m(dir / "manifest.jsonl");
    m << synth::write_av_clip(dir.path(), "c0", {1.0}, {24}) << '\n'
      << R"({"id":"gone","audio":"gone.wav","frames":"c0","fps":25})" << '\n';
  }
  const Run r = run({"score", (dir / "manifest.jsonl").string()});
  CHECK(r.code == 2);
  CHECK(r.out.find("audio: missing file") != std::string::npos);
  CHECK(run({"score", (dir / "manifest.jsonl").string(), "--allow-failures"}).code == 0);
  std::ofstream(dir / "broken.jsonl") << "{\"id\":\n";
  CHECK(run({"score", (dir / "broken.jsonl").string()}).code == 65);
  CHECK(run({"score", (dir / "none.jsonl").string()}).code == 1);
}

TEST_CASE("selftest") {
  const Run ok = run({"selftest"});
  CHECK(ok.code == 0);
  std::istringstream lines(ok.out);
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("kernel"));
    CHECK(j["pass"] == true);
    ++n;
  }
  CHECK(n > 10);
  CHECK(run({"selftest", "--break-gradient"}).code == 3);
}

TEST_CASE("usage errors") {
  CHECK(run({}).code == 64);
  CHECK(run({"no-such-command"}).code == 64);
  CHECK(run({"--help"}).code == 0);
}

TEST_CASE("re-running a subcommand gives byte-identical output") {
  synth::TempDir dir;
  write_wav(dir / "c.wav", synth::click_train({0.3, 0.8}, 1.2, 16000, 0.5, 0.001, 4));
  synth::write_frames(dir / "f", synth::jump_video(30, 25.0, {7, 19}, 2.0, 32));
  for (const std::vector<std::string>& args :
       {std::vector<std::string>{"onsets", (dir / "c.wav").string(), "--envelope", (dir / "e.csv").string()},
        std::vector<std::string>{"motion", (dir / "f").string(), "--fps", "25", "--out", (dir / "m.csv").string()}}) {
    REQUIRE(run(args).code == 0);
    const std::string first = slurp(args[0] == "onsets" ? dir / "e.csv" : dir / "m.csv");
    REQUIRE(run(args).code == 0);
    CHECK(slurp(args[0] == "onsets" ? dir / "e.csv" : dir / "m.csv") == first);
  }
  const Run a = run({"av-align", (dir / "c.wav").string(), (dir / "f").string(), "--fps", "25"});
  const Run b = run({"av-align", (dir / "c.wav").string(), (dir / "f").string(), "--fps", "25"});
  CHECK(a.out == b.out);
}

#include <catch2/catch_amalgamated.hpp>

#include "artinv/corpus.hpp"
#include "artinv/parallel.hpp"

#include <complex>
#include <filesystem>
#include <fstream>
#include <set>

using namespace artinv;
using namespace artinv::corpus;
namespace fs = std::filesystem;

namespace {

// Direct O(N^2) DFT energy split, independent of any FFT code.
double energy_fraction_above(const std::vector<double>& x, double rate, double cutoff) {
  const std::size_t n = x.size();
  double above = 0.0, total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) acc += x[t] * std::polar(1.0, -2.0 * kPi * double(k * t % n) / double(n));
    const double f = double(std::min(k, n - k)) * rate / double(n);
    total += std::norm(acc);
    if (f > cutoff) above += std::norm(acc);
  }
  return above / total;
}

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("artinv_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("synth_corpus is deterministic", "[corpus]") {
  const auto a = synth_corpus(2, 10, 1.0, 7);
  const auto b = synth_corpus(2, 10, 1.0, 7);
  REQUIRE(a == b);
  const auto c = synth_corpus(2, 10, 1.0, 8);
  REQUIRE_FALSE(a.utterances[0].waveform == c.utterances[0].waveform);
}

TEST_CASE("parallel and serial generation agree bit for bit", "[corpus]") {
  SynthOptions opt;
  opt.n_speakers = 3;
  opt.n_sentences = 10;
  opt.seed = 11;
  const auto serial = synth_corpus(opt);
  const auto threaded = synth_corpus(opt, ParallelFor{4});
  REQUIRE(serial == threaded);
}

TEST_CASE("generated shapes and durations", "[corpus]") {
  const auto c = synth_corpus(2, 10, 1.5, 3);
  REQUIRE(c.utterances.size() == 20);
  for (const auto& u : c.utterances) {
    REQUIRE(u.articulatory.samples.cols() == kNumArticulators);
    REQUIRE(u.articulatory.frames() == 375);
    REQUIRE(u.waveform.size() == 24000);
    REQUIRE(u.articulatory.samples.allFinite());
    const double dur_wav = double(u.waveform.size()) / u.sample_rate;
    const double dur_ema = double(u.articulatory.frames()) / u.articulatory.rate;
    REQUIRE(std::abs(dur_wav - dur_ema) <= 1.0 / u.articulatory.rate);
  }
  REQUIRE(c.speakers[0].label == "M01");
  REQUIRE(c.speakers[1].label == "F01");
}

TEST_CASE("articulatory channels are band limited below 25 Hz", "[corpus]") {
  const auto c = synth_corpus(2, 10, 1.0, 5);
  for (int u : {0, 7, 13}) {
    const auto& traj = c.utterances[static_cast<std::size_t>(u)].articulatory;
    for (int ch = 0; ch < kNumArticulators; ++ch) {
      std::vector<double> x(static_cast<std::size_t>(traj.frames()));
      for (Eigen::Index t = 0; t < traj.frames(); ++t) x[static_cast<std::size_t>(t)] = traj.samples(t, ch);
      CHECK(energy_fraction_above(x, traj.rate, 25.0) < 0.01);
    }
  }
}

TEST_CASE("one trajectory rendered by two speakers differs", "[corpus]") {
  const auto c = synth_corpus(2, 10, 1.0, 9);
  const auto& traj = c.utterances[0].articulatory;
  const auto p0 = speaker_params(9, 0), p1 = speaker_params(9, 1);
  auto r0 = make_rng(1), r1 = make_rng(1);
  const auto w0 = render_waveform(traj, p0, 16000, 16000, r0);
  const auto w1 = render_waveform(traj, p1, 16000, 16000, r1);
  double d = 0.0;
  for (std::size_t i = 0; i < w0.size(); ++i) d += (w0[i] - w1[i]) * double(w0[i] - w1[i]);
  REQUIRE(std::sqrt(d) > 0.0);
  REQUIRE((p0.mixing - p1.mixing).norm() > 0.0);
}

TEST_CASE("speaker parameters depend only on seed and index", "[corpus]") {
  const auto a = speaker_params(3, 1004);
  const auto b = speaker_params(3, 1004);
  REQUIRE(a.mixing == b.mixing);
  REQUIRE(a.base_pitch == b.base_pitch);
  REQUIRE(speaker_label(1004) == "V1004");
}

TEST_CASE("invalid synthesis sizes are rejected", "[corpus]") {
  REQUIRE_THROWS_AS(synth_corpus(1, 10, 1.0, 1), ParameterError);
  REQUIRE_THROWS_AS(synth_corpus(2, 9, 1.0, 1), ParameterError);
  REQUIRE_THROWS_AS(synth_corpus(2, 10, 0.5, 1), ParameterError);
  REQUIRE_THROWS_AS(synth_corpus(2, 10, 11.0, 1), ParameterError);
}

TEST_CASE("split counts follow round-half-up arithmetic", "[corpus][split]") {
  REQUIRE(split_counts(10) == SplitCounts{8, 1, 1});
  REQUIRE(split_counts(60) == SplitCounts{48, 6, 6});
  REQUIRE(split_counts(15) == SplitCounts{11, 2, 2});  // 1.5 rounds up
  REQUIRE(split_counts(14) == SplitCounts{12, 1, 1});
  for (int n = 1; n <= 1000; ++n) {
    const auto c = split_counts(n);
    const int tenth = (n + 5) / 10;  // integer round-half-up of n/10
    REQUIRE(c.validation == tenth);
    REQUIRE(c.test == tenth);
    REQUIRE(c.train + c.validation + c.test == n);
  }
  REQUIRE_THROWS_AS(split_counts(0), ParameterError);
}

TEST_CASE("splits are parallel across speakers, disjoint and covering", "[corpus][split]") {
  const auto c = synth_corpus(3, 20, 1.0, 2);
  const auto s = split_corpus(c, {0.8, 0.1, 0.1}, 4);
  REQUIRE(s.entries.size() == 60);
  std::set<std::pair<std::string, int>> seen;
  for (const auto& e : s.entries) REQUIRE(seen.insert({e.speaker, e.sentence}).second);
  for (const auto& spk : c.speakers)
    for (int sent = 0; sent < 20; ++sent)
      REQUIRE(s.subset_of(spk.label, sent) == s.subset_of(c.speakers[0].label, sent));
  REQUIRE(s.sentences(Subset::train).size() == 16);
  REQUIRE(s.sentences(Subset::validation).size() == 2);
  REQUIRE(s.sentences(Subset::test).size() == 2);

  const auto other = split_corpus(c, {0.8, 0.1, 0.1}, 5);
  REQUIRE(other.sentences(Subset::test).size() == 2);
  REQUIRE(other.sentences(Subset::train) != s.sentences(Subset::train));

  REQUIRE_THROWS_AS(split_corpus(c, {0.8, 0.1, 0.2}, 1), ParameterError);
  REQUIRE_THROWS_AS(split_corpus(Corpus{}, {0.8, 0.1, 0.1}, 1), ParameterError);
}

TEST_CASE("split file round trip", "[corpus][split]") {
  const auto s = split_sentences({"M01", "F01"}, 10, {0.8, 0.1, 0.1}, 1);
  const auto dir = temp_dir("split");
  save_split(s, dir / "split.json");
  const auto back = load_split(dir / "split.json");
  REQUIRE(back.entries == s.entries);
  fs::remove_all(dir);
}

TEST_CASE("corpus save/load round trip is bit exact", "[corpus][io]") {
  const auto c = synth_corpus(2, 10, 1.0, 21);
  const auto dir = temp_dir("roundtrip");
  save_corpus(c, dir);
  // Unknown extra files are ignored.
  std::ofstream(dir / "README.txt") << "notes";
  std::ofstream(dir / "M01" / "extra.bin") << "x";
  const auto back = load_corpus(dir);
  REQUIRE(back == c);
  fs::remove_all(dir);
}

TEST_CASE("corrupt corpus files raise format errors", "[corpus][io]") {
  const auto c = synth_corpus(2, 10, 1.0, 22);
  const auto dir = temp_dir("corrupt");
  save_corpus(c, dir);
  const auto ema = dir / "F01" / "003.ema.f32";

  SECTION("truncated trajectory") {
    fs::resize_file(ema, fs::file_size(ema) - 10);
    try {
      load_corpus(dir);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      REQUIRE(std::string(e.what()).find("003.ema.f32") != std::string::npos);
    }
  }
  SECTION("bad magic") {
    {
      std::fstream f(ema, std::ios::in | std::ios::out | std::ios::binary);
      f.write("XXXX", 4);
    }
    REQUIRE_THROWS_AS(load_corpus(dir), FormatError);
  }
  SECTION("wrong channel count") {
    binio::write_matrix(ema, 250, MatF::Zero(250, 11));
    try {
      load_corpus(dir);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      REQUIRE(std::string(e.what()).find("dims") != std::string::npos);
    }
  }
  SECTION("missing metadata") {
    fs::remove(dir / "corpus.json");
    REQUIRE_THROWS_AS(load_corpus(dir), MissingArtifactError);
  }
  fs::remove_all(dir);
}

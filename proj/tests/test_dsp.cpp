#include <catch2/catch_amalgamated.hpp>

#include "artinv/dsp.hpp"
#include "oracles.hpp"

#include <complex>

using namespace artinv;
using namespace artinv::dsp;
using namespace oracle;

TEST_CASE("MFCC matches the direct-DFT oracle", "[dsp][mfcc]") {
  const auto wave = noisy_chirp(4000, 3);
  const auto got = mfcc(wave, 16000.0);
  const MatD want = mfcc_oracle(wave, 16000.0);
  REQUIRE(got.frames.rows() == want.rows());
  REQUIRE(got.frames.cols() == 13);
  REQUIRE((got.frames - want).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("MFCC frame count and rate", "[dsp][mfcc]") {
  std::vector<float> one_second(16000, 0.1f);
  const auto f = mfcc(one_second, 16000.0);
  REQUIRE(f.length() == 99);
  REQUIRE(f.frame_rate == 100.0);
  REQUIRE(mfcc_frame_count(320, 16000.0) == 1);
  REQUIRE(mfcc_frame_count(319, 16000.0) == 0);
  REQUIRE_THROWS_AS(mfcc(std::vector<float>(100, 0.f), 16000.0), ParameterError);
}

TEST_CASE("MFCC of a stationary tone is constant across frames", "[dsp][mfcc]") {
  // 400 Hz: an integer number of periods per 160-sample hop.
  const auto f = mfcc(tone(400.0, 16000.0, 8000), 16000.0);
  for (Eigen::Index t = 1; t < f.length(); ++t) REQUIRE((f.frames.row(t) - f.frames.row(0)).norm() < 1e-8);
}

TEST_CASE("MFCC gain changes only c0", "[dsp][mfcc]") {
  auto wave = noisy_chirp(3200, 9);
  const auto a = mfcc(wave, 16000.0);
  const double g = 3.0;
  for (auto& v : wave) v *= g;
  const auto b = mfcc(wave, 16000.0);
  const MatD d = b.frames - a.frames;
  REQUIRE((d.col(0).array() - std::log(g) * std::sqrt(26.0)).abs().maxCoeff() < 1e-9);
  REQUIRE(d.rightCols(12).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("DCT matrix is orthonormal and mel scale inverts", "[dsp][mfcc]") {
  const MatD d = dct2_matrix(26, 26);
  REQUIRE((d * d.transpose() - MatD::Identity(26, 26)).cwiseAbs().maxCoeff() < 1e-12);
  for (double hz : {0.0, 100.0, 1000.0, 7999.0}) REQUIRE(mel_to_hz(hz_to_mel(hz)) == Catch::Approx(hz).margin(1e-9));
}

TEST_CASE("low-pass attenuates 50 Hz by 40 dB and passes 5 Hz", "[dsp][filter]") {
  const int n = 2500;
  const auto stop = lowpass(column(tone(50.0, 250.0, n)), 250.0, FilterSpec{});
  const auto pass = lowpass(column(tone(5.0, 250.0, n)), 250.0, FilterSpec{});
  const double in_rms = std::sqrt(0.5);
  // Interior region, away from the reflected edges.
  const double att_db = 20.0 * std::log10(rms(stop, 500, 2000) / in_rms);
  const double pass_db = 20.0 * std::log10(rms(pass, 500, 2000) / in_rms);
  INFO("stopband " << att_db << " dB, passband " << pass_db << " dB");
  REQUIRE(att_db <= -40.0);
  REQUIRE(std::abs(pass_db) <= 0.5);
}

TEST_CASE("zero-phase filtering keeps a passband tone in phase", "[dsp][filter]") {
  const auto x = tone(3.0, 250.0, 2000, 1.0, 0.4);
  const auto y = lowpass(column(x), 250.0, FilterSpec{});
  for (int i = 400; i < 1600; ++i) REQUIRE(std::abs(y(i, 0) - x[static_cast<std::size_t>(i)]) < 5e-3);
}

TEST_CASE("low-pass preserves constants and rejects bad cutoffs", "[dsp][filter]") {
  const MatD c = MatD::Constant(300, 3, 2.5);
  REQUIRE((lowpass(c, 250.0, FilterSpec{}) - c).cwiseAbs().maxCoeff() < 1e-10);
  REQUIRE_THROWS_AS(lowpass(c, 250.0, FilterSpec{125.0, 255}), ParameterError);
  REQUIRE_THROWS_AS(lowpass(c, 250.0, FilterSpec{0.0, 255}), ParameterError);
}

TEST_CASE("250 to 100 Hz resampling keeps a 10 Hz tone's dominant bin", "[dsp][resample]") {
  const auto x = tone(10.0, 250.0, 2500);
  const MatD y = resample(column(x), 250.0, 100.0);
  REQUIRE(y.rows() == 1000);
  REQUIRE(dft_peak_hz(y, 100.0) == Catch::Approx(10.0));
  std::vector<double> yv(y.data(), y.data() + y.rows());
  REQUIRE(dominant_frequency(yv, 100.0) == Catch::Approx(10.0));
}

TEST_CASE("resampling matches the continuous tone at output instants", "[dsp][resample]") {
  const auto x = tone(4.0, 250.0, 1000, 1.0, 0.2);
  const MatD y = resample(column(x), 250.0, 100.0);
  for (int n = 50; n < 350; ++n) REQUIRE(std::abs(y(n, 0) - std::sin(2 * kPi * 4.0 * n / 100.0 + 0.2)) < 1e-2);
}

TEST_CASE("rational ratio and resample edge cases", "[dsp][resample]") {
  const auto r = rational_ratio(250.0, 100.0);
  REQUIRE(r.p == 2);
  REQUIRE(r.q == 5);
  const MatD x = MatD::Random(37, 2);
  REQUIRE(resample(x, 100.0, 100.0) == x);
  REQUIRE(resample(x, 250.0, 100.0).rows() == 14);  // floor(37*2/5)
  const MatD c = MatD::Constant(100, 1, -1.5);
  REQUIRE((resample(c, 250.0, 100.0).array() + 1.5).abs().maxCoeff() < 1e-12);
  REQUIRE_THROWS_AS(rational_ratio(0.0, 100.0), ParameterError);
}

TEST_CASE("reflection indexing", "[dsp]") {
  REQUIRE(reflect_index(-1, 5) == 1);
  REQUIRE(reflect_index(-4, 5) == 4);
  REQUIRE(reflect_index(5, 5) == 3);
  REQUIRE(reflect_index(9, 5) == 1);
  REQUIRE(reflect_index(3, 1) == 0);
}

TEST_CASE("MVN gives zero mean and unit variance", "[dsp][mvn]") {
  FeatureSequence f;
  f.frames = MatD::Random(80, 5) * 3.0;
  f.frames.col(1).array() += 10.0;
  f.frames.col(4).setConstant(7.0);
  const auto g = mvn(f);
  for (Eigen::Index d = 0; d < 4; ++d) {
    REQUIRE(std::abs(g.frames.col(d).mean()) < 1e-12);
    REQUIRE(g.frames.col(d).squaredNorm() / 80.0 == Catch::Approx(1.0).epsilon(1e-12));
  }
  REQUIRE(g.frames.col(4).isZero(0.0));
  // Idempotent up to rounding.
  REQUIRE((mvn(g).frames - g.frames).cwiseAbs().maxCoeff() < 1e-12);
  FeatureSequence one;
  one.frames = MatD::Ones(1, 3);
  REQUIRE_THROWS_AS(mvn(one), ParameterError);
}

TEST_CASE("alignment truncates, warns and rejects", "[dsp][align]") {
  FeatureSequence a, b;
  a.frames = MatD::Random(99, 13);
  b.frames = MatD::Random(100, 12);
  b.kind = FeatureKind::articulatory;
  auto r = align(a, b);
  REQUIRE(r.acoustic.length() == 99);
  REQUIRE(r.articulatory.length() == 99);
  REQUIRE_FALSE(r.warning);
  REQUIRE(r.articulatory.frames == b.frames.topRows(99));

  b.frames = MatD::Random(110, 12);
  r = align(a, b);
  REQUIRE(r.warning);
  b.frames = MatD::Random(150, 12);
  REQUIRE_THROWS_AS(align(a, b), ParameterError);
  b.frames = MatD::Random(100, 12);
  b.frame_rate = 250.0;
  REQUIRE_THROWS_AS(align(a, b), ParameterError);
}

TEST_CASE("articulatory stream of a generated utterance", "[dsp]") {
  const auto c = corpus::synth_corpus(2, 10, 1.0, 4);
  const auto art = articulatory_features(c.utterances[0].articulatory);
  REQUIRE(art.length() == 100);
  REQUIRE(art.dims() == 12);
  const auto ac = mfcc(c.utterances[0].waveform, c.utterances[0].sample_rate);
  const auto al = align(ac, art);
  REQUIRE(al.acoustic.length() == 99);
  REQUIRE_FALSE(al.warning);
}

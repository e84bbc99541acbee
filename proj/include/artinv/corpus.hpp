#pragma once

// Deterministic synthetic multi-speaker acoustic-articulatory corpus.
//
// Every speaker is drawn from a low-dimensional latent (pitch register,
// vocal-tract warp, timbre tilt) plus an idiosyncratic part. The latent
// drives both what the speaker sounds like and how articulator positions map
// onto the harmonic spectrum, so the mapping is speaker dependent and partly
// predictable from voice characteristics alone.

#include "artinv/binio.hpp"
#include "artinv/common.hpp"

#include <json.hpp>

#include <algorithm>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace artinv::corpus {

namespace fs = std::filesystem;

struct SpeakerId {
  int index = 0;
  std::string label;

  friend bool operator==(const SpeakerId&, const SpeakerId&) = default;
};

/// Labels follow the M/F numbering of the recording protocol; background
/// speakers (index >= 1000) are labelled "V" + index.
inline std::string speaker_label(int index) {
  char buf[16];
  if (index >= 1000) {
    std::snprintf(buf, sizeof buf, "V%04d", index);
  } else {
    std::snprintf(buf, sizeof buf, "%c%02d", index % 2 == 0 ? 'M' : 'F', index / 2 + 1);
  }
  return buf;
}

/// T x 12 positions, channel order ULx..TDy.
struct ArticulatoryTrajectory {
  MatF samples;
  double rate = 250.0;

  Eigen::Index frames() const { return samples.rows(); }
  friend bool operator==(const ArticulatoryTrajectory& a, const ArticulatoryTrajectory& b) {
    return a.rate == b.rate && a.samples.rows() == b.samples.rows() &&
           a.samples.cols() == b.samples.cols() && a.samples == b.samples;
  }
};

struct Utterance {
  SpeakerId speaker;
  int sentence_id = 0;
  std::vector<float> waveform;
  double sample_rate = 16000.0;
  ArticulatoryTrajectory articulatory;

  friend bool operator==(const Utterance&, const Utterance&) = default;
};

struct Corpus {
  std::uint64_t seed = 0;
  double wav_rate = 16000.0;
  double ema_rate = 250.0;
  double duration_s = 0.0;
  int n_sentences = 0;
  std::vector<SpeakerId> speakers;
  std::vector<Utterance> utterances;  // speaker-major, then sentence id
  std::string stamp;                  // config hash of the producing run, may be empty

  const Utterance& at(std::size_t speaker_pos, int sentence) const {
    return utterances.at(speaker_pos * static_cast<std::size_t>(n_sentences) +
                         static_cast<std::size_t>(sentence));
  }
  std::optional<std::size_t> speaker_pos(int index) const {
    for (std::size_t i = 0; i < speakers.size(); ++i)
      if (speakers[i].index == index) return i;
    return std::nullopt;
  }

  friend bool operator==(const Corpus& a, const Corpus& b) {
    return a.seed == b.seed && a.wav_rate == b.wav_rate && a.ema_rate == b.ema_rate &&
           a.duration_s == b.duration_s && a.n_sentences == b.n_sentences && a.speakers == b.speakers &&
           a.utterances == b.utterances;
  }
};

// ---------------------------------------------------------------------------
// Generative model

inline constexpr int kHarmonics = 64;
inline constexpr int kLatentDims = 3;
inline constexpr int kEnvelopeBasis = 10;
inline constexpr int kSinusoidsPerChannel = 8;
inline constexpr double kMinTrajectoryHz = 0.2;
inline constexpr double kMaxTrajectoryHz = 20.0;
inline constexpr double kNoiseDb = -30.0;
inline constexpr double kMaxHarmonicHz = 7800.0;

struct SpeakerGenParams {
  int index = 0;
  Eigen::Matrix<double, kLatentDims, 1> latent;
  double base_pitch = 0.0;    // Hz
  Eigen::VectorXd timbre;     // per-harmonic gain, 0 above kMaxHarmonicHz
  MatD mixing;                // 12 x kHarmonics
  Eigen::VectorXd bias;       // per-harmonic offset inside the tanh
};

namespace detail {

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

// Smooth spectral-envelope basis: Gaussian bumps evenly spaced on the mel scale.
inline double envelope_basis(int j, double hz) {
  const double lo = hz_to_mel(80.0), hi = hz_to_mel(kMaxHarmonicHz);
  const double step = (hi - lo) / (kEnvelopeBasis - 1);
  const double d = (hz_to_mel(hz) - (lo + j * step)) / (0.8 * step);
  return std::exp(-0.5 * d * d);
}

struct GlobalModel {
  MatD base;                            // 12 x J
  std::array<MatD, kLatentDims> shift;  // latent directions, 12 x J
  Eigen::VectorXd bias;                 // J
  std::array<Eigen::VectorXd, kLatentDims> tilt;  // timbre directions, J
};

inline MatD gaussian_matrix(Rng& rng, int rows, int cols, double scale) {
  MatD m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * gaussian(rng);
  return m;
}

inline GlobalModel global_model(std::uint64_t seed) {
  auto rng = make_rng(seed, 0x676c6f62ULL);
  GlobalModel g;
  g.base = gaussian_matrix(rng, kNumArticulators, kEnvelopeBasis, 0.45);
  for (auto& s : g.shift) s = gaussian_matrix(rng, kNumArticulators, kEnvelopeBasis, 0.35);
  g.bias = gaussian_matrix(rng, kEnvelopeBasis, 1, 0.3);
  for (auto& t : g.tilt) t = gaussian_matrix(rng, kEnvelopeBasis, 1, 0.5);
  return g;
}

}  // namespace detail

/// Generation parameters of one speaker; a pure function of (seed, index).
inline SpeakerGenParams speaker_params(std::uint64_t seed, int index) {
  const auto g = detail::global_model(seed);
  auto rng = make_rng(seed, 0x73706b72ULL, static_cast<std::uint64_t>(index));
  SpeakerGenParams p;
  p.index = index;
  for (int k = 0; k < kLatentDims; ++k) p.latent[k] = uniform(rng, -1.0, 1.0);
  const double register_hz = index % 2 == 0 ? 120.0 : 200.0;
  p.base_pitch = register_hz * std::exp(0.12 * p.latent[0] + 0.04 * gaussian(rng));
  const double warp = std::exp(0.10 * p.latent[1]);

  MatD env = g.base;
  Eigen::VectorXd log_gain = Eigen::VectorXd::Zero(kEnvelopeBasis);
  for (int k = 0; k < kLatentDims; ++k) {
    env += 0.5 * p.latent[k] * g.shift[k];
    log_gain += 0.8 * p.latent[k] * g.tilt[k];
  }
  env += detail::gaussian_matrix(rng, kNumArticulators, kEnvelopeBasis, 0.02);
  log_gain += detail::gaussian_matrix(rng, kEnvelopeBasis, 1, 0.04);

  p.timbre = Eigen::VectorXd::Zero(kHarmonics);
  p.mixing = MatD::Zero(kNumArticulators, kHarmonics);
  p.bias = Eigen::VectorXd::Zero(kHarmonics);
  for (int h = 0; h < kHarmonics; ++h) {
    const double hz = (h + 1) * p.base_pitch;
    if (hz > kMaxHarmonicHz) break;
    double lg = 0.0;
    for (int j = 0; j < kEnvelopeBasis; ++j) {
      const double phi = detail::envelope_basis(j, hz * warp);
      p.mixing.col(h) += phi * env.col(j);
      p.bias[h] += phi * g.bias[j];
      lg += phi * log_gain[j];
    }
    // Natural roll-off of a glottal source, roughly -6 dB/octave above 500 Hz.
    p.timbre[h] = std::exp(lg) / (1.0 + hz / 500.0);
  }
  return p;
}

/// Sum of kSinusoidsPerChannel random-phase sinusoids below kMaxTrajectoryHz per
/// channel, unit variance per channel in expectation.
inline MatD random_trajectory(Rng& rng, Eigen::Index frames, double rate) {
  MatD out = MatD::Zero(frames, kNumArticulators);
  const double duration = static_cast<double>(frames) / rate;
  for (int c = 0; c < kNumArticulators; ++c) {
    std::array<double, kSinusoidsPerChannel> freq{}, phase{}, amp{};
    double power = 0.0;
    for (int k = 0; k < kSinusoidsPerChannel; ++k) {
      // Snapped to the window's DFT grid: whole periods over the utterance, so
      // the finite channel carries no leakage above the band edge.
      const double f = uniform(rng, kMinTrajectoryHz, kMaxTrajectoryHz);
      freq[k] = std::max(1.0, std::round(f * duration)) / duration;
      phase[k] = uniform(rng, 0.0, 2.0 * kPi);
      amp[k] = std::exp(-freq[k] / 4.0) * uniform(rng, 0.5, 1.5);
      power += 0.5 * amp[k] * amp[k];
    }
    const double norm = 1.0 / std::sqrt(power);
    for (Eigen::Index n = 0; n < frames; ++n) {
      const double t = static_cast<double>(n) / rate;
      double v = 0.0;
      for (int k = 0; k < kSinusoidsPerChannel; ++k)
        v += amp[k] * std::sin(2.0 * kPi * freq[k] * t + phase[k]);
      out(n, c) = v * norm;
    }
  }
  return out;
}

/// Harmonic-source rendering of a trajectory under one speaker. Amplitudes are
/// timbre * (1 + 0.95 tanh(mixing^T x(t) + bias)), interpolated from the
/// articulatory rate to the audio rate; additive white noise at kNoiseDb.
inline std::vector<float> render_waveform(const ArticulatoryTrajectory& traj, const SpeakerGenParams& spk,
                                          double wav_rate, std::size_t n_samples, Rng& rng) {
  const Eigen::Index T = traj.frames();
  if (T < 1) throw ParameterError("render_waveform: empty trajectory");
  const MatD x = traj.samples.cast<double>();
  MatD amp = (x * spk.mixing).rowwise() + spk.bias.transpose();  // T x H
  for (Eigen::Index i = 0; i < amp.size(); ++i) amp.data()[i] = 1.0 + 0.95 * std::tanh(amp.data()[i]);
  for (int h = 0; h < kHarmonics; ++h) amp.col(h) *= spk.timbre[h];
  int active = 0;
  while (active < kHarmonics && spk.timbre[active] != 0.0) ++active;

  const double into_a = uniform(rng, 0.0, 2.0 * kPi), into_b = uniform(rng, 0.0, 2.0 * kPi);
  std::vector<double> s(n_samples, 0.0);
  double phase = uniform(rng, 0.0, 2.0 * kPi);
  Eigen::VectorXd a(active);
  for (std::size_t n = 0; n < n_samples; ++n) {
    const double t = static_cast<double>(n) / wav_rate;
    const double pos = std::min(t * traj.rate, static_cast<double>(T - 1));
    const auto i0 = static_cast<Eigen::Index>(pos);
    const auto i1 = std::min(i0 + 1, T - 1);
    const double w = pos - static_cast<double>(i0);
    a = (1.0 - w) * amp.row(i0).head(active).transpose() + w * amp.row(i1).head(active).transpose();
    const std::complex<double> z1(std::cos(phase), std::sin(phase));
    std::complex<double> z = z1;
    double v = 0.0;
    for (int h = 0; h < active; ++h) {
      v += a[h] * z.imag();
      z *= z1;
    }
    s[n] = 0.1 * v;
    const double f0 = spk.base_pitch *
                      (1.0 + 0.04 * std::sin(2.0 * kPi * 0.5 * t + into_a) + 0.02 * std::sin(2.0 * kPi * 1.3 * t + into_b));
    phase = std::fmod(phase + 2.0 * kPi * f0 / wav_rate, 2.0 * kPi);
  }
  double power = 0.0;
  for (double v : s) power += v * v;
  const double sigma = std::sqrt(power / static_cast<double>(std::max<std::size_t>(n_samples, 1))) *
                       std::pow(10.0, kNoiseDb / 20.0);
  std::vector<float> out(n_samples);
  for (std::size_t n = 0; n < n_samples; ++n) out[n] = static_cast<float>(s[n] + sigma * gaussian(rng));
  return out;
}

struct SynthOptions {
  int n_speakers = 14;
  int n_sentences = 60;
  double duration_s = 1.0;
  std::uint64_t seed = 7;
  int first_index = 0;  // background corpora start at 1000
  double wav_rate = 16000.0;
  double ema_rate = 250.0;
};

/// One utterance; depends only on (seed, speaker index, sentence id).
inline Utterance synth_utterance(const SynthOptions& opt, const SpeakerGenParams& spk, int sentence) {
  const auto frames = static_cast<Eigen::Index>(std::lround(opt.duration_s * opt.ema_rate));
  const auto n_samples = static_cast<std::size_t>(std::lround(opt.duration_s * opt.wav_rate));
  // Parallel stimuli: half of the articulation is shared by every speaker
  // reading the sentence, half is speaker-specific execution.
  auto shared_rng = make_rng(opt.seed, 0x73656e74ULL, static_cast<std::uint64_t>(sentence));
  auto own_rng = make_rng(opt.seed, 0x75747472ULL, static_cast<std::uint64_t>(spk.index),
                          static_cast<std::uint64_t>(sentence));
  const MatD shared = random_trajectory(shared_rng, frames, opt.ema_rate);
  const MatD own = random_trajectory(own_rng, frames, opt.ema_rate);

  Utterance u;
  u.speaker = {spk.index, speaker_label(spk.index)};
  u.sentence_id = sentence;
  u.sample_rate = opt.wav_rate;
  u.articulatory.rate = opt.ema_rate;
  u.articulatory.samples = (std::sqrt(0.5) * (shared + own)).cast<float>();
  u.waveform = render_waveform(u.articulatory, spk, opt.wav_rate, n_samples, own_rng);
  return u;
}

inline void validate(const SynthOptions& opt) {
  if (opt.n_speakers < 2) throw ParameterError("synth_corpus: n_speakers must be >= 2");
  if (opt.n_sentences < 10) throw ParameterError("synth_corpus: n_sentences must be >= 10");
  if (!(opt.duration_s >= 1.0 && opt.duration_s <= 10.0))
    throw ParameterError("synth_corpus: duration_s must lie in [1, 10]");
  if (opt.first_index < 0) throw ParameterError("synth_corpus: first_index must be >= 0");
  if (!(opt.ema_rate > 0.0) || !(opt.wav_rate > 0.0)) throw ParameterError("synth_corpus: rates must be > 0");
}

/// Generates the corpus. `parallel_for(n, fn)` may distribute utterances across
/// threads; results do not depend on the schedule.
template <class ParallelFor>
Corpus synth_corpus(const SynthOptions& opt, ParallelFor&& parallel_for) {
  validate(opt);
  Corpus c;
  c.seed = opt.seed;
  c.wav_rate = opt.wav_rate;
  c.ema_rate = opt.ema_rate;
  c.duration_s = opt.duration_s;
  c.n_sentences = opt.n_sentences;
  std::vector<SpeakerGenParams> params;
  for (int s = 0; s < opt.n_speakers; ++s) {
    const int index = opt.first_index + s;
    c.speakers.push_back({index, speaker_label(index)});
    params.push_back(speaker_params(opt.seed, index));
  }
  const std::size_t total = static_cast<std::size_t>(opt.n_speakers) * static_cast<std::size_t>(opt.n_sentences);
  c.utterances.resize(total);
  parallel_for(total, [&](std::size_t i) {
    const auto s = i / static_cast<std::size_t>(opt.n_sentences);
    const auto sent = static_cast<int>(i % static_cast<std::size_t>(opt.n_sentences));
    c.utterances[i] = synth_utterance(opt, params[s], sent);
  });
  return c;
}

inline Corpus synth_corpus(const SynthOptions& opt) {
  return synth_corpus(opt, [](std::size_t n, auto&& fn) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
  });
}

inline Corpus synth_corpus(int n_speakers, int n_sentences, double duration_s, std::uint64_t seed) {
  SynthOptions opt;
  opt.n_speakers = n_speakers;
  opt.n_sentences = n_sentences;
  opt.duration_s = duration_s;
  opt.seed = seed;
  return synth_corpus(opt);
}

// ---------------------------------------------------------------------------
// Splits

enum class Subset { train, validation, test };

inline std::string to_string(Subset s) {
  switch (s) {
    case Subset::train: return "train";
    case Subset::validation: return "validation";
    case Subset::test: return "test";
  }
  return "?";
}

inline Subset subset_from_string(const std::string& s) {
  if (s == "train") return Subset::train;
  if (s == "validation") return Subset::validation;
  if (s == "test") return Subset::test;
  throw FormatError("unknown subset '" + s + "'");
}

struct SplitEntry {
  std::string speaker;
  int sentence = 0;
  Subset subset = Subset::train;

  friend bool operator==(const SplitEntry&, const SplitEntry&) = default;
};

struct SplitCounts {
  int train = 0, validation = 0, test = 0;
  friend bool operator==(const SplitCounts&, const SplitCounts&) = default;
};

/// Per-speaker subset sizes: validation and test are round-half-up of N*ratio,
/// the remainder goes to train.
inline SplitCounts split_counts(int n, double validation_ratio = 0.1, double test_ratio = 0.1) {
  if (n <= 0) throw ParameterError("split: empty corpus");
  SplitCounts c;
  c.validation = static_cast<int>(std::floor(n * validation_ratio + 0.5));
  c.test = static_cast<int>(std::floor(n * test_ratio + 0.5));
  c.train = n - c.validation - c.test;
  if (c.train < 0) throw ParameterError("split: ratios leave no room for training data");
  return c;
}

struct CorpusSplit {
  std::vector<SplitEntry> entries;  // speaker order of the corpus, then sentence id

  std::vector<int> sentences(Subset s) const {
    std::vector<int> out;
    if (entries.empty()) return out;
    const std::string& first = entries.front().speaker;
    for (const auto& e : entries)
      if (e.speaker == first && e.subset == s) out.push_back(e.sentence);
    return out;
  }
  std::vector<SplitEntry> of(Subset s) const {
    std::vector<SplitEntry> out;
    for (const auto& e : entries)
      if (e.subset == s) out.push_back(e);
    return out;
  }
  std::optional<Subset> subset_of(const std::string& speaker, int sentence) const {
    for (const auto& e : entries)
      if (e.speaker == speaker && e.sentence == sentence) return e.subset;
    return std::nullopt;
  }
};

/// Sentence-id partition shared by all speakers (parallel stimuli).
inline CorpusSplit split_sentences(const std::vector<std::string>& speakers, int n_sentences,
                                   std::array<double, 3> ratios, std::uint64_t seed) {
  if (speakers.empty() || n_sentences <= 0) throw ParameterError("split_corpus: empty corpus");
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9)
    throw ParameterError("split_corpus: ratios must sum to 1");
  const auto counts = split_counts(n_sentences, ratios[1], ratios[2]);
  std::vector<int> order(static_cast<std::size_t>(n_sentences));
  std::iota(order.begin(), order.end(), 0);
  auto rng = make_rng(seed, 0x73706c74ULL);
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(order[i], order[j]);
  }
  std::vector<Subset> subset_of(order.size(), Subset::train);
  for (int k = 0; k < counts.validation; ++k) subset_of[static_cast<std::size_t>(order[k])] = Subset::validation;
  for (int k = 0; k < counts.test; ++k)
    subset_of[static_cast<std::size_t>(order[static_cast<std::size_t>(counts.validation + k)])] = Subset::test;

  CorpusSplit split;
  for (const auto& spk : speakers)
    for (int s = 0; s < n_sentences; ++s) split.entries.push_back({spk, s, subset_of[static_cast<std::size_t>(s)]});
  return split;
}

inline CorpusSplit split_corpus(const Corpus& corpus, std::array<double, 3> ratios = {0.8, 0.1, 0.1},
                                std::uint64_t seed = 0) {
  if (corpus.utterances.empty()) throw ParameterError("split_corpus: empty corpus");
  std::vector<std::string> labels;
  for (const auto& s : corpus.speakers) labels.push_back(s.label);
  return split_sentences(labels, corpus.n_sentences, ratios, seed);
}

inline void save_split(const CorpusSplit& split, const fs::path& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : split.entries)
    j.push_back({{"speaker", e.speaker}, {"sentence", e.sentence}, {"subset", to_string(e.subset)}});
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << j.dump(1) << '\n';
}

inline CorpusSplit load_split(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw MissingArtifactError("cannot open split file " + path.string());
  CorpusSplit split;
  try {
    const auto j = nlohmann::json::parse(is);
    for (const auto& e : j)
      split.entries.push_back(
          {e.at("speaker").get<std::string>(), e.at("sentence").get<int>(), subset_from_string(e.at("subset"))});
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(path.string() + ": " + ex.what());
  }
  return split;
}

// ---------------------------------------------------------------------------
// Storage

inline std::string sentence_name(int sentence) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03d", sentence);
  return buf;
}

inline void save_corpus(const Corpus& c, const fs::path& dir) {
  fs::create_directories(dir);
  nlohmann::json meta;
  meta["format"] = "artinv-corpus-1";
  meta["seed"] = c.seed;
  meta["wav_rate"] = c.wav_rate;
  meta["ema_rate"] = c.ema_rate;
  meta["duration_s"] = c.duration_s;
  meta["n_sentences"] = c.n_sentences;
  meta["stamp"] = c.stamp;
  auto& spk = meta["speakers"] = nlohmann::json::array();
  for (const auto& s : c.speakers) spk.push_back({{"index", s.index}, {"label", s.label}});
  for (const auto& u : c.utterances) {
    const fs::path base = dir / u.speaker.label / sentence_name(u.sentence_id);
    binio::write_waveform(base.string() + ".wav.f32", static_cast<std::uint32_t>(u.sample_rate), u.waveform);
    binio::write_matrix(base.string() + ".ema.f32", static_cast<std::uint32_t>(u.articulatory.rate),
                        u.articulatory.samples);
  }
  // Metadata last: its presence marks a complete corpus.
  std::ofstream os(dir / "corpus.json");
  if (!os) throw Error("cannot write " + (dir / "corpus.json").string());
  os << meta.dump(1) << '\n';
}

inline Corpus load_corpus(const fs::path& dir) {
  const fs::path meta_path = dir / "corpus.json";
  std::ifstream is(meta_path);
  if (!is) throw MissingArtifactError("no corpus at " + dir.string() + " (missing corpus.json)");
  Corpus c;
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(is);
    c.seed = meta.at("seed").get<std::uint64_t>();
    c.wav_rate = meta.at("wav_rate").get<double>();
    c.ema_rate = meta.at("ema_rate").get<double>();
    c.duration_s = meta.at("duration_s").get<double>();
    c.n_sentences = meta.at("n_sentences").get<int>();
    c.stamp = meta.value("stamp", std::string{});
    for (const auto& s : meta.at("speakers"))
      c.speakers.push_back({s.at("index").get<int>(), s.at("label").get<std::string>()});
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(meta_path.string() + ": " + ex.what());
  }
  if (c.n_sentences <= 0) throw FormatError(meta_path.string() + ": field 'n_sentences' must be > 0");
  for (const auto& spk : c.speakers) {
    for (int s = 0; s < c.n_sentences; ++s) {
      const fs::path base = dir / spk.label / sentence_name(s);
      const fs::path wav_path = base.string() + ".wav.f32";
      const fs::path ema_path = base.string() + ".ema.f32";
      auto wav = binio::read_waveform(wav_path);
      auto ema = binio::read_matrix(ema_path, kNumArticulators);
      if (wav.rate != static_cast<std::uint32_t>(c.wav_rate))
        throw FormatError(wav_path.string() + ": field 'rate' disagrees with corpus.json");
      if (ema.rate != static_cast<std::uint32_t>(c.ema_rate))
        throw FormatError(ema_path.string() + ": field 'rate' disagrees with corpus.json");
      const double wav_dur = static_cast<double>(wav.samples.size()) / c.wav_rate;
      const double ema_dur = static_cast<double>(ema.data.rows()) / c.ema_rate;
      if (ema.data.rows() < 1 || std::abs(wav_dur - ema_dur) > 1.0 / c.ema_rate)
        throw FormatError(ema_path.string() + ": field 'frames' inconsistent with waveform duration");
      Utterance u;
      u.speaker = spk;
      u.sentence_id = s;
      u.sample_rate = c.wav_rate;
      u.waveform = std::move(wav.samples);
      u.articulatory.rate = c.ema_rate;
      u.articulatory.samples = std::move(ema.data);
      c.utterances.push_back(std::move(u));
    }
  }
  return c;
}

}  // namespace artinv::corpus

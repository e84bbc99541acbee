#pragma once

// Articulatory post-processing and acoustic feature computation: zero-phase
// low-pass, rational resampling, MFCC, per-utterance MVN and frame alignment.
// All functions are pure.

#include "artinv/common.hpp"
#include "artinv/corpus.hpp"

#include <unsupported/Eigen/FFT>

#include <complex>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace artinv::dsp {

enum class FeatureKind { mfcc, articulatory, embedding_broadcast };

inline std::string to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::mfcc: return "mfcc";
    case FeatureKind::articulatory: return "articulatory";
    case FeatureKind::embedding_broadcast: return "embedding-broadcast";
  }
  return "?";
}

/// T x D frames at a fixed frame rate.
struct FeatureSequence {
  MatD frames;
  double frame_rate = 100.0;
  FeatureKind kind = FeatureKind::mfcc;

  Eigen::Index length() const { return frames.rows(); }
  Eigen::Index dims() const { return frames.cols(); }
};

inline void check_finite(const FeatureSequence& f, const char* what) {
  if (f.frames.rows() < 1) throw ParameterError(std::string(what) + ": empty feature sequence");
  if (!f.frames.allFinite()) throw NumericError(std::string(what) + ": non-finite feature value");
}

// ---------------------------------------------------------------------------
// Filtering

/// Windowed-sinc (Hamming) low-pass; transition width follows from the order.
struct FilterSpec {
  double cutoff_hz = 25.0;
  int order = 255;

  double transition_hz(double rate) const { return 3.3 * rate / (order + 1); }
};

/// Low-pass FIR taps with unit DC gain. `cutoff` is in cycles/sample.
inline std::vector<double> windowed_sinc(double cutoff, int taps) {
  std::vector<double> h(static_cast<std::size_t>(taps));
  const double mid = 0.5 * (taps - 1);
  for (int n = 0; n < taps; ++n) {
    const double x = n - mid;
    const double sinc = x == 0.0 ? 2.0 * cutoff : std::sin(2.0 * kPi * cutoff * x) / (kPi * x);
    const double w = taps > 1 ? 0.54 - 0.46 * std::cos(2.0 * kPi * n / (taps - 1)) : 1.0;
    h[static_cast<std::size_t>(n)] = sinc * w;
  }
  const double sum = std::accumulate(h.begin(), h.end(), 0.0);
  for (auto& v : h) v /= sum;
  return h;
}

/// Mirror index into [0, n) with repeated even reflection (x[-k] = x[k]).
inline Eigen::Index reflect_index(Eigen::Index i, Eigen::Index n) {
  if (n == 1) return 0;
  const Eigen::Index period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

/// Causal FIR along time applied to each column of a reflection-padded signal.
inline MatD fir_columns(const MatD& x, const std::vector<double>& h) {
  const Eigen::Index T = x.rows(), K = static_cast<Eigen::Index>(h.size());
  const Eigen::MatrixXd xc = x;  // column-major: contiguous time axis
  Eigen::MatrixXd yc = Eigen::MatrixXd::Zero(T, x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double* in = xc.col(c).data();
    double* out = yc.col(c).data();
    for (Eigen::Index n = 0; n < T; ++n) {
      const Eigen::Index kmax = std::min(K - 1, n);
      double acc = 0.0;
      for (Eigen::Index k = 0; k <= kmax; ++k) acc += h[static_cast<std::size_t>(k)] * in[n - k];
      out[n] = acc;
    }
  }
  return yc;
}

/// Zero-phase forward-backward FIR low-pass of each column (time along rows).
inline MatD lowpass(const MatD& x, double rate, const FilterSpec& spec) {
  if (!(spec.cutoff_hz > 0.0) || spec.cutoff_hz >= 0.5 * rate)
    throw ParameterError("lowpass: cutoff must lie in (0, rate/2)");
  if (spec.order < 1) throw ParameterError("lowpass: order must be >= 1");
  const Eigen::Index T = x.rows();
  if (T < 1) throw ParameterError("lowpass: empty signal");
  const auto h = windowed_sinc(spec.cutoff_hz / rate, spec.order + 1);
  const Eigen::Index pad = spec.order;
  MatD padded(T + 2 * pad, x.cols());
  for (Eigen::Index i = 0; i < padded.rows(); ++i) padded.row(i) = x.row(reflect_index(i - pad, T));
  MatD fwd = fir_columns(padded, h);
  MatD rev = fwd.colwise().reverse();
  MatD back = fir_columns(rev, h);
  MatD out = back.colwise().reverse();
  return out.middleRows(pad, T);
}

inline corpus::ArticulatoryTrajectory lowpass(const corpus::ArticulatoryTrajectory& traj,
                                              const FilterSpec& spec = {}) {
  corpus::ArticulatoryTrajectory out;
  out.rate = traj.rate;
  out.samples = lowpass(MatD(traj.samples.cast<double>()), traj.rate, spec).cast<float>();
  return out;
}

// ---------------------------------------------------------------------------
// Rational resampling

struct Ratio {
  long p = 1;  // up
  long q = 1;  // down
};

/// Smallest p/q (q <= 1000) equal to target/source within 1e-9 relative.
inline Ratio rational_ratio(double source_rate, double target_rate) {
  if (!(source_rate > 0.0) || !(target_rate > 0.0)) throw ParameterError("resample: rates must be > 0");
  const double r = target_rate / source_rate;
  for (long q = 1; q <= 1000; ++q) {
    const double p = std::round(r * static_cast<double>(q));
    if (p >= 1.0 && p <= 1000.0 && std::abs(p / static_cast<double>(q) - r) <= 1e-9 * r)
      return {static_cast<long>(p), q};
  }
  throw ParameterError("resample: no rational ratio p/q <= 1000 for " + std::to_string(source_rate) + " -> " +
                       std::to_string(target_rate));
}

/// Upsample by p, anti-alias FIR, decimate by q. Output length floor(T*p/q).
/// Each polyphase branch is normalized to unit gain so constants pass exactly.
inline MatD resample(const MatD& x, double source_rate, double target_rate) {
  const auto [p, q] = rational_ratio(source_rate, target_rate);
  if (p == q) return x;
  const Eigen::Index T = x.rows();
  if (T < 1) throw ParameterError("resample: empty signal");
  const long m = std::max(p, q);
  const long half = 10 * m;
  const long taps = 2 * half + 1;
  auto h = windowed_sinc(0.5 / static_cast<double>(m), static_cast<int>(taps));
  for (long phase = 0; phase < p; ++phase) {
    double s = 0.0;
    for (long k = phase; k < taps; k += p) s += h[static_cast<std::size_t>(k)];
    for (long k = phase; k < taps; k += p) h[static_cast<std::size_t>(k)] /= s;
  }
  const auto out_len = static_cast<Eigen::Index>((static_cast<long long>(T) * p) / q);
  MatD y = MatD::Zero(out_len, x.cols());
  for (Eigen::Index n = 0; n < out_len; ++n) {
    // Output sample n sits at upsampled index n*q; the filter is centred on it.
    const long long centre = static_cast<long long>(n) * q;
    for (long k = 0; k < taps; ++k) {
      const long long j = centre + half - k;  // upsampled index
      const long long jm = j % p;
      if (jm != 0 && jm != -p) continue;
      const long long src = (j - jm) / p;
      y.row(n) += h[static_cast<std::size_t>(k)] * x.row(reflect_index(static_cast<Eigen::Index>(src), T));
    }
  }
  return y;
}

inline corpus::ArticulatoryTrajectory resample(const corpus::ArticulatoryTrajectory& traj, double target_rate) {
  corpus::ArticulatoryTrajectory out;
  out.rate = target_rate;
  out.samples = resample(MatD(traj.samples.cast<double>()), traj.rate, target_rate).cast<float>();
  return out;
}

// ---------------------------------------------------------------------------
// MFCC

struct MfccConfig {
  int n_coeffs = 13;
  double win_s = 0.020;
  double hop_s = 0.010;
  int n_filters = 26;
  double preemph = 0.97;
  double log_floor = 1e-10;
};

inline int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// n_filters x (nfft/2+1) triangular filters, edges equally spaced in mel
/// from 0 Hz to Nyquist, evaluated at the FFT bin centre frequencies.
inline MatD mel_filterbank(int n_filters, int nfft, double sample_rate) {
  const int bins = nfft / 2 + 1;
  const double top = hz_to_mel(0.5 * sample_rate);
  std::vector<double> edge(static_cast<std::size_t>(n_filters + 2));
  for (int i = 0; i < n_filters + 2; ++i) edge[static_cast<std::size_t>(i)] = mel_to_hz(top * i / (n_filters + 1));
  MatD fb = MatD::Zero(n_filters, bins);
  for (int m = 0; m < n_filters; ++m) {
    const double lo = edge[static_cast<std::size_t>(m)], mid = edge[static_cast<std::size_t>(m + 1)],
                 hi = edge[static_cast<std::size_t>(m + 2)];
    for (int k = 0; k < bins; ++k) {
      const double f = k * sample_rate / nfft;
      if (f > lo && f < hi) fb(m, k) = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
    }
  }
  return fb;
}

/// Orthonormal DCT-II rows 0..n_out-1 for an n_in-point input.
inline MatD dct2_matrix(int n_out, int n_in) {
  MatD d(n_out, n_in);
  for (int i = 0; i < n_out; ++i) {
    const double scale = std::sqrt((i == 0 ? 1.0 : 2.0) / n_in);
    for (int m = 0; m < n_in; ++m) d(i, m) = scale * std::cos(kPi * i * (m + 0.5) / n_in);
  }
  return d;
}

inline Eigen::Index mfcc_frame_count(std::size_t n_samples, double sample_rate, const MfccConfig& cfg = {}) {
  const auto win = static_cast<std::size_t>(std::lround(cfg.win_s * sample_rate));
  const auto hop = static_cast<std::size_t>(std::lround(cfg.hop_s * sample_rate));
  if (n_samples < win) return 0;
  return static_cast<Eigen::Index>((n_samples - win) / hop + 1);
}

/// Per-frame pre-emphasis (first sample uses itself as predecessor), Hamming
/// window, |DFT| on the next power of two, mel filterbank, floored log and
/// orthonormal DCT-II. Partial trailing frames are dropped.
template <class T>
FeatureSequence mfcc(std::span<const T> wave, double sample_rate, const MfccConfig& cfg = {}) {
  const int win = static_cast<int>(std::lround(cfg.win_s * sample_rate));
  const int hop = static_cast<int>(std::lround(cfg.hop_s * sample_rate));
  if (win < 2 || hop < 1) throw ParameterError("mfcc: window/hop too small for sample rate");
  if (cfg.n_coeffs < 1 || cfg.n_coeffs > cfg.n_filters) throw ParameterError("mfcc: n_coeffs must lie in [1, n_filters]");
  const Eigen::Index frames = mfcc_frame_count(wave.size(), sample_rate, cfg);
  if (frames < 1)
    throw ParameterError("mfcc: waveform shorter than one window (" + std::to_string(win) + " samples)");
  const int nfft = next_pow2(win);
  const int bins = nfft / 2 + 1;
  const MatD fb = mel_filterbank(cfg.n_filters, nfft, sample_rate);
  const MatD dct = dct2_matrix(cfg.n_coeffs, cfg.n_filters);
  std::vector<double> window(static_cast<std::size_t>(win));
  for (int n = 0; n < win; ++n) window[static_cast<std::size_t>(n)] = 0.54 - 0.46 * std::cos(2.0 * kPi * n / (win - 1));

  Eigen::FFT<double> fft;
  std::vector<double> buf(static_cast<std::size_t>(nfft));
  std::vector<std::complex<double>> spec;
  Eigen::VectorXd mag(bins), logmel(cfg.n_filters);
  FeatureSequence out;
  out.frame_rate = sample_rate / hop;
  out.kind = FeatureKind::mfcc;
  out.frames.resize(frames, cfg.n_coeffs);
  for (Eigen::Index f = 0; f < frames; ++f) {
    const std::size_t start = static_cast<std::size_t>(f) * static_cast<std::size_t>(hop);
    std::fill(buf.begin(), buf.end(), 0.0);
    for (int n = 0; n < win; ++n) {
      const double cur = static_cast<double>(wave[start + static_cast<std::size_t>(n)]);
      const double prev = static_cast<double>(wave[start + static_cast<std::size_t>(n > 0 ? n - 1 : 0)]);
      buf[static_cast<std::size_t>(n)] = (cur - cfg.preemph * prev) * window[static_cast<std::size_t>(n)];
    }
    fft.fwd(spec, buf);
    for (int k = 0; k < bins; ++k) mag[k] = std::abs(spec[static_cast<std::size_t>(k)]);
    logmel = fb * mag;
    for (int m = 0; m < cfg.n_filters; ++m) logmel[m] = std::log(std::max(logmel[m], cfg.log_floor));
    out.frames.row(f) = (dct * logmel).transpose();
  }
  return out;
}

inline FeatureSequence mfcc(const std::vector<float>& wave, double sample_rate, const MfccConfig& cfg = {}) {
  return mfcc(std::span<const float>(wave), sample_rate, cfg);
}
inline FeatureSequence mfcc(const std::vector<double>& wave, double sample_rate, const MfccConfig& cfg = {}) {
  return mfcc(std::span<const double>(wave), sample_rate, cfg);
}

// ---------------------------------------------------------------------------
// Normalization and alignment

inline constexpr double kStdFloor = 1e-8;

/// Per-dimension zero mean / unit (population) variance over the utterance.
/// Dimensions whose deviation is below the floor become exactly zero.
inline FeatureSequence mvn(const FeatureSequence& in) {
  if (in.length() < 2) throw ParameterError("mvn: need at least 2 frames");
  FeatureSequence out = in;
  const double n = static_cast<double>(in.length());
  for (Eigen::Index d = 0; d < in.dims(); ++d) {
    const double mean = in.frames.col(d).sum() / n;
    const double var = (in.frames.col(d).array() - mean).square().sum() / n;
    const double sd = std::sqrt(var);
    if (sd < kStdFloor) {
      out.frames.col(d).setZero();
    } else {
      out.frames.col(d) = (in.frames.col(d).array() - mean) / sd;
    }
  }
  return out;
}

struct Aligned {
  FeatureSequence acoustic;
  FeatureSequence articulatory;
  std::optional<std::string> warning;
};

inline constexpr Eigen::Index kAlignWarnFrames = 5;
inline constexpr Eigen::Index kAlignMaxFrames = 50;

/// Truncates both streams to the shorter length.
inline Aligned align(const FeatureSequence& acoustic, const FeatureSequence& art) {
  if (std::abs(acoustic.frame_rate - art.frame_rate) > 1e-9)
    throw ParameterError("align: frame rates differ (" + std::to_string(acoustic.frame_rate) + " vs " +
                         std::to_string(art.frame_rate) + ")");
  const Eigen::Index diff = std::abs(acoustic.length() - art.length());
  if (diff > kAlignMaxFrames)
    throw ParameterError("align: length mismatch of " + std::to_string(diff) + " frames exceeds " +
                         std::to_string(kAlignMaxFrames));
  const Eigen::Index t = std::min(acoustic.length(), art.length());
  Aligned out;
  out.acoustic = acoustic;
  out.articulatory = art;
  out.acoustic.frames.conservativeResize(t, Eigen::NoChange);
  out.articulatory.frames.conservativeResize(t, Eigen::NoChange);
  if (diff > kAlignWarnFrames) out.warning = "length mismatch of " + std::to_string(diff) + " frames";
  return out;
}

// ---------------------------------------------------------------------------
// Helpers shared by the pipeline and the tests

/// Articulatory stream of one utterance at the target rate: low-pass then resample.
inline FeatureSequence articulatory_features(const corpus::ArticulatoryTrajectory& traj, double target_rate = 100.0,
                                             const FilterSpec& spec = {}) {
  FeatureSequence out;
  out.kind = FeatureKind::articulatory;
  out.frame_rate = target_rate;
  out.frames = resample(lowpass(MatD(traj.samples.cast<double>()), traj.rate, spec), traj.rate, target_rate);
  return out;
}

/// Fraction of a real signal's energy at or below `cutoff_hz` (DC included).
inline double energy_fraction_below(std::span<const double> x, double rate, double cutoff_hz) {
  if (x.empty()) throw ParameterError("energy_fraction_below: empty signal");
  Eigen::FFT<double> fft;
  std::vector<double> in(x.begin(), x.end());
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, in);
  const std::size_t n = in.size();
  double below = 0.0, total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t kk = std::min(k, n - k);
    const double f = static_cast<double>(kk) * rate / static_cast<double>(n);
    const double e = std::norm(spec[k]);
    total += e;
    if (f <= cutoff_hz) below += e;
  }
  return total > 0.0 ? below / total : 1.0;
}

/// Frequency (Hz) of the largest non-DC FFT magnitude bin.
inline double dominant_frequency(std::span<const double> x, double rate) {
  Eigen::FFT<double> fft;
  std::vector<double> in(x.begin(), x.end());
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, in);
  std::size_t best = 1;
  for (std::size_t k = 1; k <= in.size() / 2; ++k)
    if (std::abs(spec[k]) > std::abs(spec[best])) best = k;
  return static_cast<double>(best) * rate / static_cast<double>(in.size());
}

}  // namespace artinv::dsp

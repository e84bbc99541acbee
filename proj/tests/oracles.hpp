#pragma once

// Independent reference implementations shared by the DSP tests and the
// acceptance run.

#include "artinv/common.hpp"

#include <cmath>
#include <complex>
#include <vector>

namespace oracle {

using artinv::MatD;
using artinv::kPi;
using artinv::make_rng;
using artinv::gaussian;

inline std::vector<double> tone(double hz, double rate, int n, double amp = 1.0, double phase = 0.0) {
  std::vector<double> x(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] = amp * std::sin(2.0 * kPi * hz * i / rate + phase);
  return x;
}

inline MatD column(const std::vector<double>& x) {
  MatD m(static_cast<Eigen::Index>(x.size()), 1);
  for (std::size_t i = 0; i < x.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = x[i];
  return m;
}

inline double rms(const MatD& x, Eigen::Index from, Eigen::Index to) {
  return std::sqrt(x.col(0).segment(from, to - from).squaredNorm() / double(to - from));
}

// Brute-force MFCC written from the textbook definitions: direct DFT, mel
// triangles built from explicit edge frequencies, log, DCT-II sums.
inline MatD mfcc_oracle(const std::vector<double>& wave, double sr) {
  const int win = 320, hop = 160, nfft = 512, nfilt = 26, ncep = 13;
  const int frames = (int(wave.size()) - win) / hop + 1;
  auto mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
  auto imel = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
  std::vector<double> edges(nfilt + 2);
  for (int i = 0; i < nfilt + 2; ++i) edges[i] = imel(mel(sr / 2) * i / (nfilt + 1));
  MatD out(frames, ncep);
  for (int f = 0; f < frames; ++f) {
    std::vector<double> x(win);
    for (int n = 0; n < win; ++n) {
      const double prev = n == 0 ? wave[f * hop] : wave[f * hop + n - 1];
      const double w = 0.54 - 0.46 * std::cos(2 * kPi * n / (win - 1));
      x[n] = (wave[f * hop + n] - 0.97 * prev) * w;
    }
    std::vector<double> mag(nfft / 2 + 1);
    for (int k = 0; k <= nfft / 2; ++k) {
      double re = 0, im = 0;
      for (int n = 0; n < win; ++n) {
        re += x[n] * std::cos(2 * kPi * k * n / nfft);
        im -= x[n] * std::sin(2 * kPi * k * n / nfft);
      }
      mag[k] = std::hypot(re, im);
    }
    std::vector<double> lm(nfilt);
    for (int m = 0; m < nfilt; ++m) {
      double e = 0;
      for (int k = 0; k <= nfft / 2; ++k) {
        const double hz = k * sr / nfft;
        double wgt = 0;
        if (hz > edges[m] && hz <= edges[m + 1]) wgt = (hz - edges[m]) / (edges[m + 1] - edges[m]);
        else if (hz > edges[m + 1] && hz < edges[m + 2]) wgt = (edges[m + 2] - hz) / (edges[m + 2] - edges[m + 1]);
        e += wgt * mag[k];
      }
      lm[m] = std::log(std::max(e, 1e-10));
    }
    for (int i = 0; i < ncep; ++i) {
      double s = 0;
      for (int m = 0; m < nfilt; ++m) s += lm[m] * std::cos(kPi * i * (m + 0.5) / nfilt);
      out(f, i) = s * std::sqrt((i == 0 ? 1.0 : 2.0) / nfilt);
    }
  }
  return out;
}

inline std::vector<double> noisy_chirp(int n, std::uint64_t seed) {
  auto rng = make_rng(seed);
  std::vector<double> x(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double t = i / 16000.0;
    x[static_cast<std::size_t>(i)] = 0.3 * std::sin(2 * kPi * (200 + 1500 * t) * t) + 0.05 * gaussian(rng);
  }
  return x;
}

// Dominant bin of a real signal by direct DFT, in Hz.
inline double dft_peak_hz(const MatD& y, double rate) {
  const int n = int(y.rows());
  int best = 1;
  double best_mag = 0;
  for (int k = 1; k <= n / 2; ++k) {
    std::complex<double> acc = 0;
    for (int t = 0; t < n; ++t) acc += y(t, 0) * std::polar(1.0, -2 * kPi * double(k) * t / n);
    if (std::abs(acc) > best_mag) best_mag = std::abs(acc), best = k;
  }
  return best * rate / n;
}

}  // namespace oracle

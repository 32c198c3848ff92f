#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "ispa/dsp_features.hpp"
#include "ispa/error.hpp"

namespace ispa {

namespace {

// Short lags are searched on a 1/kSubsteps grid so that periods of only a
// few samples (the top octaves at 16 kHz) still produce a clear dip.
constexpr int kSubsteps = 4;
constexpr int kFineLagLimit = 48;
constexpr int kInterpHalfTaps = 16;

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

double windowed_sinc(double x) {
  if (std::abs(x) >= kInterpHalfTaps) return 0.0;
  const double s = std::abs(x) < 1e-12 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
  const double a = std::numbers::pi * x / kInterpHalfTaps;
  return s * (0.42 + 0.5 * std::cos(a) + 0.08 * std::cos(2.0 * a));
}

// The region holds `window` samples starting at the frame's integration
// window followed by `tau_max` look-ahead samples.
class YinAnalyzer {
 public:
  YinAnalyzer(int window, int tau_min, int tau_max)
      : window_(window),
        tau_min_(tau_min),
        tau_max_(tau_max),
        fine_limit_(std::min(kFineLagLimit, tau_max)),
        n_fft_(next_pow2(2 * window + tau_max)) {
    a_.assign(static_cast<std::size_t>(n_fft_), 0.0);
    b_.assign(static_cast<std::size_t>(n_fft_), 0.0);
    for (int phase = 1; phase < kSubsteps; ++phase) {
      std::vector<double> taps;
      const double frac = static_cast<double>(phase) / kSubsteps;
      for (int k = -kInterpHalfTaps; k <= kInterpHalfTaps; ++k) taps.push_back(windowed_sinc(k - frac));
      kernels_.push_back(std::move(taps));
    }
  }

  int region_length() const { return window_ + tau_max_; }

  struct Result {
    double lag = 0.0;
    double cmnd = 1.0;
  };

  Result analyze(const std::vector<double>& region) {
    integer_difference(region);

    // Cumulative mean of d over integer lags 1..tau.
    mean_.assign(static_cast<std::size_t>(tau_max_) + 1, 0.0);
    double running = 0.0;
    for (int tau = 1; tau <= tau_max_; ++tau) {
      running += d_[static_cast<std::size_t>(tau)];
      mean_[static_cast<std::size_t>(tau)] = running / tau;
    }

    lags_.clear();
    cmnd_.clear();
    fine_difference(region);
    for (int tau = std::max(tau_min_, fine_limit_); tau <= tau_max_; ++tau) {
      push(tau, d_[static_cast<std::size_t>(tau)]);
    }

    std::size_t best = cmnd_.size();
    for (std::size_t i = 0; i < cmnd_.size(); ++i) {
      if (cmnd_[i] < threshold_) {
        while (i + 1 < cmnd_.size() && cmnd_[i + 1] < cmnd_[i]) ++i;
        best = i;
        break;
      }
    }
    if (best == cmnd_.size()) {
      best = static_cast<std::size_t>(std::min_element(cmnd_.begin(), cmnd_.end()) - cmnd_.begin());
    }

    Result r{lags_[best], cmnd_[best]};
    if (best > 0 && best + 1 < cmnd_.size()) {
      const double h0 = lags_[best] - lags_[best - 1];
      const double h1 = lags_[best + 1] - lags_[best];
      if (std::abs(h0 - h1) < 1e-9) {
        const double y0 = cmnd_[best - 1];
        const double y1 = cmnd_[best];
        const double y2 = cmnd_[best + 1];
        const double denom = y0 - 2.0 * y1 + y2;
        if (denom > 0.0) r.lag = lags_[best] + h0 * 0.5 * (y0 - y2) / denom;
      }
    }
    return r;
  }

  void set_threshold(double t) { threshold_ = t; }

 private:
  void push(double lag, double d) {
    const double m = mean_at(lag);
    lags_.push_back(lag);
    cmnd_.push_back(m > 0.0 ? d / m : 1.0);
  }

  double mean_at(double lag) const {
    const auto lo = static_cast<std::size_t>(std::floor(lag));
    if (lo >= static_cast<std::size_t>(tau_max_)) return mean_[static_cast<std::size_t>(tau_max_)];
    const double frac = lag - static_cast<double>(lo);
    const double m_lo = lo == 0 ? mean_[1] : mean_[lo];
    return m_lo + frac * (mean_[lo + 1] - m_lo);
  }

  // d(tau) = E(0) + E(tau) - 2 r(tau) for every integer lag, with r from an
  // FFT cross-correlation and E from prefix sums of squares.
  void integer_difference(const std::vector<double>& region) {
    const auto len = static_cast<std::size_t>(region_length());
    std::fill(a_.begin(), a_.end(), 0.0);
    std::fill(b_.begin(), b_.end(), 0.0);
    std::copy_n(region.begin(), window_, a_.begin());
    std::copy_n(region.begin(), len, b_.begin());
    fft_.fwd(fa_, a_);
    fft_.fwd(fb_, b_);
    for (std::size_t k = 0; k < fa_.size(); ++k) fb_[k] *= std::conj(fa_[k]);
    fft_.inv(corr_, fb_);

    prefix_.assign(len + 1, 0.0);
    for (std::size_t j = 0; j < len; ++j) prefix_[j + 1] = prefix_[j] + region[j] * region[j];

    d_.assign(static_cast<std::size_t>(tau_max_) + 1, 0.0);
    const double e0 = prefix_[static_cast<std::size_t>(window_)];
    for (int tau = 1; tau <= tau_max_; ++tau) {
      const auto t = static_cast<std::size_t>(tau);
      const double et = prefix_[t + static_cast<std::size_t>(window_)] - prefix_[t];
      d_[t] = std::max(0.0, e0 + et - 2.0 * corr_[t]);
    }
  }

  // Direct evaluation on the fractional grid below fine_limit_, using
  // band-limited fractional shifts of the region.
  void fine_difference(const std::vector<double>& region) {
    if (tau_min_ >= fine_limit_) return;
    const int len = region_length();
    shifted_.resize(kernels_.size());
    for (std::size_t p = 0; p < kernels_.size(); ++p) {
      auto& out = shifted_[p];
      out.assign(static_cast<std::size_t>(window_ + fine_limit_ + 1), 0.0);
      for (std::size_t m = 0; m < out.size(); ++m) {
        double acc = 0.0;
        for (int k = -kInterpHalfTaps; k <= kInterpHalfTaps; ++k) {
          // out[m] approximates x(m + (p + 1) / kSubsteps)
          const int idx = static_cast<int>(m) + k;
          if (idx < 0 || idx >= len) continue;
          acc += region[static_cast<std::size_t>(idx)] * kernels_[p][static_cast<std::size_t>(k + kInterpHalfTaps)];
        }
        out[m] = acc;
      }
    }
    for (int tau = tau_min_; tau < fine_limit_; ++tau) {
      for (int step = 0; step < kSubsteps; ++step) {
        const double lag = tau + static_cast<double>(step) / kSubsteps;
        double d = 0.0;
        if (step == 0) {
          d = d_[static_cast<std::size_t>(tau)];
        } else {
          const auto& xs = shifted_[static_cast<std::size_t>(step - 1)];
          for (int j = 0; j < window_; ++j) {
            const double diff = region[static_cast<std::size_t>(j)] - xs[static_cast<std::size_t>(j + tau)];
            d += diff * diff;
          }
        }
        push(lag, d);
      }
    }
  }

  int window_;
  int tau_min_;
  int tau_max_;
  int fine_limit_;
  int n_fft_;
  double threshold_ = 0.1;
  Eigen::FFT<double> fft_;
  std::vector<std::vector<double>> kernels_;
  std::vector<std::vector<double>> shifted_;
  std::vector<double> a_, b_, corr_, prefix_, d_, mean_, lags_, cmnd_;
  std::vector<std::complex<double>> fa_, fb_;
};

}  // namespace

PitchTrack estimate_pitch(const Waveform& w, const PitchConfig& config) {
  if (!(config.hop_seconds > 0.0)) throw Error("hop_seconds must be positive");
  const double nyquist_cap = 0.95 * w.sample_rate / 2.0;
  const double f_max = std::min(config.f_max, nyquist_cap);
  if (!(config.f_min > 0.0) || config.f_min >= f_max) throw Error("f_min must be below f_max");

  const double sr = w.sample_rate;
  const int tau_min = std::max(2, static_cast<int>(std::floor(sr / f_max)));
  const int tau_max = static_cast<int>(std::ceil(sr / config.f_min));
  const int window = std::max(tau_min * 2, static_cast<int>(std::lround(config.hop_seconds * sr)));
  const double hop_samples = config.hop_seconds * sr;

  const Eigen::Index n = w.samples.size();
  const Eigen::Index frames = frame_count(n, w.sample_rate, config.hop_seconds);

  PitchTrack track;
  track.hop_seconds = config.hop_seconds;
  track.f0_hz = Eigen::VectorXd::Zero(frames);
  track.confidence = Eigen::VectorXd::Zero(frames);
  track.energy_db = frame_energy(w, config.hop_seconds, 2.0 * config.hop_seconds).values;

  YinAnalyzer yin(window, tau_min, tau_max);
  yin.set_threshold(config.dip_threshold);
  const int len = yin.region_length();
  std::vector<double> region(static_cast<std::size_t>(len));

  for (Eigen::Index i = 0; i < frames; ++i) {
    // Frame i integrates over [i * hop, (i + 1) * hop), the span a segment of
    // frames covers; lags look ahead of it. Samples past the end read as zero.
    const auto centre = static_cast<Eigen::Index>(std::llround((static_cast<double>(i) + 0.5) * hop_samples));
    const Eigen::Index start = centre - window / 2;
    bool any = false;
    for (int j = 0; j < len; ++j) {
      const Eigen::Index k = start + j;
      const double v = (k >= 0 && k < n) ? w.samples[k] : 0.0;
      region[static_cast<std::size_t>(j)] = v;
      any = any || v != 0.0;
    }
    if (!any) continue;

    const auto result = yin.analyze(region);
    const double confidence = std::clamp(1.0 - result.cmnd, 0.0, 1.0);
    const double f0 = sr / result.lag;
    track.confidence[i] = confidence;
    if (confidence >= config.voicing_threshold && f0 >= std::max(config.f_min, kMinVoicedHz) &&
        f0 <= std::min(f_max, kMaxVoicedHz)) {
      track.f0_hz[i] = f0;
    }
  }
  return track;
}

}  // namespace ispa

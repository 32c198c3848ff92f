#pragma once

#include <filesystem>

#include <Eigen/Core>

namespace ispa {

/// Mono PCM audio, amplitudes nominally in [-1, 1].
struct Waveform {
  Eigen::VectorXd samples;
  int sample_rate = 16000;

  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

/// Per-frame level in dBFS (0 dB = RMS of a full-scale +/-1 signal).
struct EnergyTrack {
  double hop_seconds = 0.0;
  Eigen::VectorXd values;
};

inline constexpr int kDefaultSampleRate = 16000;
inline constexpr double kEnergyFloorDb = -120.0;

/// Reads a RIFF/WAVE file: PCM 8/16/24/32-bit integer or 32-bit float,
/// including WAVE_FORMAT_EXTENSIBLE. Channels are averaged to mono.
Waveform load_audio(const std::filesystem::path& path);

/// Writes 16-bit PCM mono. Samples are clipped to [-1, 1].
void save_wav(const std::filesystem::path& path, const Waveform& w);

/// Band-limited windowed-sinc resampling. Returns `w` unchanged when the
/// rates already match.
Waveform resample(const Waveform& w, int target_rate);

/// Number of hop-spaced frames covering `n_samples`: ceil(duration / hop).
Eigen::Index frame_count(Eigen::Index n_samples, int sample_rate,
                         double hop_seconds);

/// Hann-weighted RMS level of a window centred at i * hop, in dBFS, floored
/// at -120. Samples outside the signal are excluded from both the weighted
/// sum and the normalisation.
EnergyTrack frame_energy(const Waveform& w, double hop_seconds,
                         double win_seconds);

}  // namespace ispa

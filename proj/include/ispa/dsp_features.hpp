#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ispa/audio_io.hpp"

namespace ispa {

/// Row-major frame matrix: one row per frame, one column per feature.
using FrameMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per-frame feature vectors. Frame i is centred at start_time_s + i * hop.
struct FeatureSequence {
  double hop_seconds = 0.020;
  double start_time_s = 0.0;
  FrameMatrix frames;

  Eigen::Index size() const { return frames.rows(); }
  Eigen::Index dim() const { return frames.cols(); }
  double duration() const { return static_cast<double>(size()) * hop_seconds; }
};

/// Per-frame fundamental frequency. f0 == 0 marks an unvoiced frame. Pitch
/// frame i describes [i * hop, (i + 1) * hop); exported time_s is its start.
struct PitchTrack {
  double hop_seconds = 0.03125;
  Eigen::VectorXd f0_hz;
  Eigen::VectorXd confidence;
  Eigen::VectorXd energy_db;

  Eigen::Index size() const { return f0_hz.size(); }
  bool voiced(Eigen::Index i) const { return f0_hz[i] > 0.0; }
};

struct BandwidthTrack {
  double hop_seconds = 0.03125;
  Eigen::VectorXd values;
};

struct MfccConfig {
  int n_coeffs = 40;
  double hop_seconds = 0.020;
  int n_mels = 64;
};

struct PitchConfig {
  double hop_seconds = 0.03125;
  double f_min = 30.0;
  double f_max = 8000.0;
  double voicing_threshold = 0.5;
  /// Absolute CMND threshold for the first-dip search.
  double dip_threshold = 0.1;
};

/// One row of a phone alignment file.
struct PhoneInterval {
  double start_s = 0.0;
  double end_s = 0.0;
  std::string phone;
};

inline constexpr double kPitchHopSeconds = 0.03125;
inline constexpr double kMinVoicedHz = 20.0;
inline constexpr double kMaxVoicedHz = 16000.0;

/// Centred, Hann-windowed power spectra (window = 2 * hop, zero padded to a
/// power of two, samples outside the signal read as zero). Rows are frames,
/// columns are bins 0..n_fft/2.
struct PowerSpectrogram {
  Eigen::MatrixXd power;
  int n_fft = 0;
  int sample_rate = 0;
  double hop_seconds = 0.0;

  double bin_hz(Eigen::Index k) const {
    return static_cast<double>(k) * sample_rate / n_fft;
  }
};

PowerSpectrogram power_spectrogram(const Waveform& w, double hop_seconds);

/// Triangular HTK-mel filterbank over bins 0..n_fft/2, edges spanning 0 Hz
/// to Nyquist. Rows are bands.
Eigen::MatrixXd mel_filterbank(int n_mels, int n_fft, int sample_rate);

/// Log-mel energies followed by an orthonormal DCT-II; coefficient 0 kept.
FeatureSequence compute_mfcc(const Waveform& w, const MfccConfig& config = {});

/// YIN-style estimator: cumulative-mean-normalised difference function with
/// parabolic refinement. Confidence is 1 - CMND at the chosen lag.
PitchTrack estimate_pitch(const Waveform& w, const PitchConfig& config = {});

/// Power-weighted spectral spread around the power-weighted centroid, in Hz.
/// An all-zero frame has bandwidth 0.
BandwidthTrack spectral_bandwidth(const Waveform& w, double hop_seconds = kPitchHopSeconds);

// ISPF: "ISPF", u32 version, f64 hop, f64 start, u32 dim, u64 n_frames,
// then n_frames * dim little-endian float32 values, row major.
inline constexpr std::uint32_t kIspfVersion = 1;
inline constexpr std::size_t kIspfHeaderBytes = 36;

FeatureSequence import_features(const std::filesystem::path& path);
/// Values are narrowed to float32.
void export_features(const std::filesystem::path& path, const FeatureSequence& features);

/// CSV with header time_s,f0_hz,confidence,energy_db. The hop is inferred
/// from the row spacing (tolerance 1e-4 s). Empty or zero f0 is unvoiced;
/// empty confidence reads as 0 and empty energy as 0 dBFS.
PitchTrack import_pitch(const std::filesystem::path& path);
void export_pitch(const std::filesystem::path& path, const PitchTrack& track);

/// CSV with header start_s,end_s,phone.
std::vector<PhoneInterval> import_phone_alignment(const std::filesystem::path& path);

}  // namespace ispa

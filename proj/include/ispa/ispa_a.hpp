#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "ispa/audio_io.hpp"
#include "ispa/dsp_features.hpp"
#include "ispa/segmenter.hpp"

namespace ispa {

// ---------------------------------------------------------------------------
// Token inventory
// ---------------------------------------------------------------------------

enum class Bandwidth { U, N, M, W, X };

/// Note lengths at 60 bpm, shortest first. `Whole` prints as the empty string.
enum class LengthClass { ThirtySecond, Sixteenth, Eighth, Quarter, Half, Whole, TwoWhole, FourWhole };

inline constexpr int kLengthClassCount = 8;
inline constexpr std::array<double, kLengthClassCount> kLengthSeconds{0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0};
inline constexpr std::array<std::string_view, kLengthClassCount> kLengthText{"/32", "/16", "/8", "/4",
                                                                             "/2",  "",    "x2", "x4"};

inline constexpr int kMinSlope = -3;
inline constexpr int kMaxSlope = 3;

/// Pitch change over a segment, as a log2 ratio end/start, at the centre of
/// slope class k: k / 3 (so -3 halves the pitch and +3 doubles it).
inline constexpr double slope_center(int slope_class) { return slope_class / 3.0; }

inline double length_seconds(LengthClass c) { return kLengthSeconds[static_cast<std::size_t>(c)]; }

struct IspaAToken {
  bool rest = false;
  Bandwidth bandwidth = Bandwidth::N;
  int octave = 0;
  LengthClass length = LengthClass::Quarter;
  int slope = 0;

  static IspaAToken make_rest(LengthClass length) {
    IspaAToken t;
    t.rest = true;
    t.length = length;
    return t;
  }

  static IspaAToken make_pitched(Bandwidth bw, int octave, LengthClass length, int slope) {
    return IspaAToken{false, bw, octave, length, slope};
  }

  friend bool operator==(const IspaAToken& a, const IspaAToken& b) {
    if (a.rest != b.rest || a.length != b.length) return false;
    return a.rest || (a.bandwidth == b.bandwidth && a.octave == b.octave && a.slope == b.slope);
  }
};

std::string encode_token(const IspaAToken& token);
/// Tokens joined by single spaces.
std::string encode_tokens(const std::vector<IspaAToken>& tokens);
/// Whitespace-separated tokens. Throws ParseError with the byte offset of the
/// first offending character.
std::vector<IspaAToken> parse_tokens(std::string_view text);

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

/// Upper edges (Hz) of U, N, M and W; anything at or above the last edge is X.
struct BandwidthThresholds {
  std::array<double, 4> edges{5.0, 500.0, 1200.0, 3000.0};
};

Bandwidth classify_bandwidth(double median_bw_hz, const BandwidthThresholds& thresholds = {});

/// Class edges at the 20/40/60/80 % quantiles of a reference set of
/// per-segment median bandwidths.
BandwidthThresholds calibrate_bandwidth_thresholds(std::vector<double> reference_bw_hz);

/// MIDI octave number (middle C in octave 4), clamped to [0, 9].
int hz_to_octave(double f0_hz);

/// Geometric centre of a MIDI octave, in Hz.
double octave_center_hz(int octave);

/// Class whose duration is nearest in log2 to length_frames * hop_seconds;
/// exact ties go to the longer class.
LengthClass quantize_length(Eigen::Index length_frames, double hop_seconds);

/// Nearest slope class for a log2 pitch ratio, with edges halfway between
/// centres; the result is clamped to [-3, 3].
int classify_slope(double log2_ratio);

// ---------------------------------------------------------------------------
// Pitch cost model
// ---------------------------------------------------------------------------

enum class DistanceDomain { Semitones, Hertz };

struct AcousticCostConfig {
  double voiced_mismatch_penalty = 1.0;
  double unvoiced_mismatch_penalty = 12.0;
  DistanceDomain domain = DistanceDomain::Semitones;
};

/// Label 0 is REST; labels 1..7 are slope classes -3..+3.
inline constexpr int kRestLabel = 0;
inline constexpr int label_for_slope(int slope_class) { return slope_class - kMinSlope + 1; }
inline constexpr int slope_for_label(int label) { return label - 1 + kMinSlope; }

/// A candidate pitched segment: model pitch
/// log2 f(t) = base_log2_hz + slope_center * (t - start) / length.
struct PitchSegmentModel {
  double base_log2_hz = 0.0;
  int slope = 0;
  double distance = 0.0;

  double log2_hz_at(double fraction) const { return base_log2_hz + slope_center(slope) * fraction; }
};

/// Scores spans of a pitch track against REST and the seven slope models.
/// The base pitch of each slope model is the median of
/// log2 f(t) - r * (t - start) / length over voiced frames.
class AcousticCostModel {
 public:
  explicit AcousticCostModel(const PitchTrack& track, AcousticCostConfig config = {});

  SegmentCost segment_cost(Eigen::Index start, Eigen::Index length) const;

  /// Best fit for one slope class over [start, start + length). Unvoiced
  /// spans yield base 0 and a distance made only of unvoiced penalties.
  PitchSegmentModel fit(Eigen::Index start, Eigen::Index length, int slope_class) const;

  double rest_distance(Eigen::Index start, Eigen::Index length) const;

  Eigen::Index size() const { return static_cast<Eigen::Index>(log2_f0_.size()); }

 private:
  AcousticCostConfig config_;
  std::vector<double> log2_f0_;  // NaN when unvoiced
  std::vector<Eigen::Index> voiced_prefix_;
};

// ---------------------------------------------------------------------------
// End to end
// ---------------------------------------------------------------------------

struct IspaAConfig {
  PitchConfig pitch{};
  AcousticCostConfig cost{};
  BandwidthThresholds bandwidth{};
  double lambda = 8.0;
  double rest_threshold_db = -50.0;
  int sample_rate = kDefaultSampleRate;
};

/// Segment lengths in frames for each length class, e.g. {4, 8, ..., 512}
/// at a 31.25 ms hop. Lengths that round to zero frames are dropped.
std::vector<Eigen::Index> length_class_frames(double hop_seconds);

struct IspaASegment {
  Segment segment;
  IspaAToken token;
  PitchSegmentModel model;
  double median_bandwidth_hz = 0.0;
  double median_energy_db = 0.0;
};

/// Segments and labels a pitch track with matching bandwidth values. The
/// two tracks are aligned frame by frame and truncated to the shorter one.
std::vector<IspaASegment> segment_tracks(const PitchTrack& track, const BandwidthTrack& bandwidth,
                                         const IspaAConfig& config = {});

/// Full pipeline on audio: resample, pitch (or `external_pitch` when given),
/// bandwidth, segmentation, token labelling.
std::vector<IspaAToken> transcribe_a(const Waveform& w, const IspaAConfig& config = {},
                                     const std::optional<PitchTrack>& external_pitch = std::nullopt);

inline constexpr double kSynthAmplitude = 0.3;
inline constexpr double kSynthRampSeconds = 0.010;

/// Pure-tone rendering: each pitched token becomes an exponential sweep
/// centred (in log2) on its octave's centre and spanning its slope's ratio;
/// rests become silence. Bandwidth is ignored.
Waveform synthesize(const std::vector<IspaAToken>& tokens, int sample_rate = kDefaultSampleRate);

}  // namespace ispa

#include "ispa/ispa_a.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numbers>

#include "ispa/error.hpp"

namespace ispa {

namespace {

constexpr std::string_view kBandwidthLetters = "UNMWX";
constexpr double kSemitonesPerOctave = 12.0;

double median_inplace(std::vector<double>& v) {
  const std::size_t n = v.size();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  const double upper = *mid;
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

double median_of(const Eigen::VectorXd& values, Eigen::Index start, Eigen::Index length) {
  std::vector<double> v(values.data() + start, values.data() + start + length);
  return median_inplace(v);
}

std::string slope_text(int slope) {
  if (slope == 0) return "=";
  return (slope > 0 ? "+" : "-") + std::to_string(std::abs(slope));
}

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

// Cursor over one whitespace-delimited token; `base` is the token's offset
// within the full text.
struct TokenCursor {
  std::string_view tok;
  std::size_t base;
  std::size_t i = 0;

  bool done() const { return i >= tok.size(); }
  char peek() const { return tok[i]; }
  std::size_t pos() const { return base + i; }
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(what, pos()); }
};

LengthClass parse_length(TokenCursor& c) {
  if (c.done()) return LengthClass::Whole;
  const char ch = c.peek();
  if (ch == '/') {
    const std::string_view rest = c.tok.substr(c.i + 1);
    if (rest.starts_with("32")) { c.i += 3; return LengthClass::ThirtySecond; }
    if (rest.starts_with("16")) { c.i += 3; return LengthClass::Sixteenth; }
    if (rest.starts_with("8")) { c.i += 2; return LengthClass::Eighth; }
    if (rest.starts_with("4")) { c.i += 2; return LengthClass::Quarter; }
    if (rest.starts_with("2")) { c.i += 2; return LengthClass::Half; }
    // point at the first character that cannot continue "/32" or "/16"
    c.i += (rest.starts_with("3") || rest.starts_with("1")) ? 2 : 1;
    c.fail("bad length");
  }
  if (ch == 'x') {
    if (c.i + 1 < c.tok.size() && c.tok[c.i + 1] == '2') { c.i += 2; return LengthClass::TwoWhole; }
    if (c.i + 1 < c.tok.size() && c.tok[c.i + 1] == '4') { c.i += 2; return LengthClass::FourWhole; }
    c.i += 1;
    c.fail("bad length");
  }
  return LengthClass::Whole;
}

int parse_slope(TokenCursor& c) {
  if (c.done()) c.fail("missing slope");
  const char ch = c.peek();
  if (ch == '=') {
    ++c.i;
    return 0;
  }
  if (ch == '+' || ch == '-') {
    ++c.i;
    if (c.done() || c.peek() < '1' || c.peek() > '3') c.fail("bad slope");
    const int mag = c.peek() - '0';
    ++c.i;
    return ch == '+' ? mag : -mag;
  }
  c.fail("bad slope");
}

IspaAToken parse_one(std::string_view tok, std::size_t base) {
  TokenCursor c{tok, base};
  const char lead = c.peek();
  IspaAToken t;
  if (lead == 'R') {
    ++c.i;
    t = IspaAToken::make_rest(parse_length(c));
  } else if (const auto bw = kBandwidthLetters.find(lead); bw != std::string_view::npos) {
    ++c.i;
    if (c.done() || !std::isdigit(static_cast<unsigned char>(c.peek()))) c.fail("bad octave digit");
    const int octave = c.peek() - '0';
    ++c.i;
    const LengthClass len = parse_length(c);
    const int slope = parse_slope(c);
    t = IspaAToken::make_pitched(static_cast<Bandwidth>(bw), octave, len, slope);
  } else {
    c.fail(std::string("unknown leading character '") + lead + "'");
  }
  if (!c.done()) c.fail("trailing garbage");
  return t;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string encode_token(const IspaAToken& token) {
  std::string out;
  if (token.rest) {
    out = "R";
    out += kLengthText[static_cast<std::size_t>(token.length)];
    return out;
  }
  out += kBandwidthLetters[static_cast<std::size_t>(token.bandwidth)];
  out += static_cast<char>('0' + token.octave);
  out += kLengthText[static_cast<std::size_t>(token.length)];
  out += slope_text(token.slope);
  return out;
}

std::string encode_tokens(const std::vector<IspaAToken>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out += ' ';
    out += encode_token(tokens[i]);
  }
  return out;
}

std::vector<IspaAToken> parse_tokens(std::string_view text) {
  std::vector<IspaAToken> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (is_space(text[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    out.push_back(parse_one(text.substr(i, j - i), i));
    i = j;
  }
  return out;
}

// ---------------------------------------------------------------------------

Bandwidth classify_bandwidth(double median_bw_hz, const BandwidthThresholds& thresholds) {
  for (std::size_t i = 0; i < thresholds.edges.size(); ++i) {
    if (median_bw_hz < thresholds.edges[i]) return static_cast<Bandwidth>(i);
  }
  return Bandwidth::X;
}

BandwidthThresholds calibrate_bandwidth_thresholds(std::vector<double> reference_bw_hz) {
  if (reference_bw_hz.size() < 5) throw Error("bandwidth calibration needs at least 5 reference values");
  std::sort(reference_bw_hz.begin(), reference_bw_hz.end());
  BandwidthThresholds t;
  const auto n = static_cast<double>(reference_bw_hz.size() - 1);
  for (std::size_t q = 0; q < 4; ++q) {
    const double pos = n * 0.2 * static_cast<double>(q + 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, reference_bw_hz.size() - 1);
    t.edges[q] = reference_bw_hz[lo] + (pos - static_cast<double>(lo)) * (reference_bw_hz[hi] - reference_bw_hz[lo]);
  }
  return t;
}

int hz_to_octave(double f0_hz) {
  if (!(f0_hz > 0.0)) throw Error("hz_to_octave: frequency must be positive");
  const double midi = 69.0 + 12.0 * std::log2(f0_hz / 440.0);
  const int octave = static_cast<int>(std::floor(midi / 12.0)) - 1;
  return std::clamp(octave, 0, 9);
}

double octave_center_hz(int octave) {
  // C of the octave is MIDI 12 * (octave + 1); the centre is six semitones up.
  const double midi = 12.0 * (octave + 1) + 6.0;
  return 440.0 * std::pow(2.0, (midi - 69.0) / 12.0);
}

LengthClass quantize_length(Eigen::Index length_frames, double hop_seconds) {
  if (length_frames < 1) throw Error("quantize_length: length must be >= 1");
  const double seconds = static_cast<double>(length_frames) * hop_seconds;
  const double pos = std::log2(seconds / kLengthSeconds[0]);
  const int idx = static_cast<int>(std::floor(pos + 0.5));
  return static_cast<LengthClass>(std::clamp(idx, 0, kLengthClassCount - 1));
}

int classify_slope(double log2_ratio) {
  const int k = static_cast<int>(std::lround(log2_ratio * 3.0));
  return std::clamp(k, kMinSlope, kMaxSlope);
}

// ---------------------------------------------------------------------------

AcousticCostModel::AcousticCostModel(const PitchTrack& track, AcousticCostConfig config) : config_(config) {
  const auto n = static_cast<std::size_t>(track.size());
  log2_f0_.resize(n);
  voiced_prefix_.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const double f = track.f0_hz[static_cast<Eigen::Index>(i)];
    const bool voiced = f > 0.0;
    log2_f0_[i] = voiced ? std::log2(f) : std::numeric_limits<double>::quiet_NaN();
    voiced_prefix_[i + 1] = voiced_prefix_[i] + (voiced ? 1 : 0);
  }
}

double AcousticCostModel::rest_distance(Eigen::Index start, Eigen::Index length) const {
  const auto voiced = voiced_prefix_[static_cast<std::size_t>(start + length)] - voiced_prefix_[static_cast<std::size_t>(start)];
  return static_cast<double>(voiced) * config_.voiced_mismatch_penalty;
}

PitchSegmentModel AcousticCostModel::fit(Eigen::Index start, Eigen::Index length, int slope_class) const {
  PitchSegmentModel m;
  m.slope = slope_class;
  const double r = slope_center(slope_class);
  const double len = static_cast<double>(length);

  thread_local std::vector<double> residual;
  residual.clear();
  for (Eigen::Index t = start; t < start + length; ++t) {
    const double lf = log2_f0_[static_cast<std::size_t>(t)];
    if (std::isnan(lf)) continue;
    residual.push_back(lf - r * static_cast<double>(t - start) / len);
  }
  const auto unvoiced = static_cast<double>(length - static_cast<Eigen::Index>(residual.size()));
  m.distance = unvoiced * config_.unvoiced_mismatch_penalty;
  if (residual.empty()) return m;

  std::vector<double> scratch(residual);
  m.base_log2_hz = median_inplace(scratch);

  double d = 0.0;
  if (config_.domain == DistanceDomain::Semitones) {
    for (double v : residual) d += std::abs(v - m.base_log2_hz);
    d *= kSemitonesPerOctave;
  } else {
    for (Eigen::Index t = start; t < start + length; ++t) {
      const double lf = log2_f0_[static_cast<std::size_t>(t)];
      if (std::isnan(lf)) continue;
      const double model = m.base_log2_hz + r * static_cast<double>(t - start) / len;
      d += std::abs(std::exp2(lf) - std::exp2(model));
    }
  }
  m.distance += d;
  return m;
}

SegmentCost AcousticCostModel::segment_cost(Eigen::Index start, Eigen::Index length) const {
  SegmentCost best{kRestLabel, rest_distance(start, length)};
  for (int s = kMinSlope; s <= kMaxSlope; ++s) {
    const PitchSegmentModel m = fit(start, length, s);
    if (m.distance < best.distance) best = SegmentCost{label_for_slope(s), m.distance};
  }
  return best;
}

// ---------------------------------------------------------------------------

std::vector<Eigen::Index> length_class_frames(double hop_seconds) {
  std::vector<Eigen::Index> out;
  for (double sec : kLengthSeconds) {
    const auto frames = static_cast<Eigen::Index>(std::llround(sec / hop_seconds));
    if (frames >= 1 && (out.empty() || frames > out.back())) out.push_back(frames);
  }
  return out;
}

std::vector<IspaASegment> segment_tracks(const PitchTrack& full_track, const BandwidthTrack& bandwidth,
                                         const IspaAConfig& config) {
  const Eigen::Index n = std::min(full_track.size(), bandwidth.values.size());
  if (n < 1) throw Error("segment_tracks: empty pitch track");
  PitchTrack track = full_track;
  if (track.size() != n) {
    track.f0_hz.conservativeResize(n);
    track.confidence.conservativeResize(n);
    track.energy_db.conservativeResize(n);
  }

  const AcousticCostModel model(track, config.cost);
  SegmentationConfig seg_config;
  seg_config.lambda = config.lambda;
  seg_config.allowed_lengths = length_class_frames(track.hop_seconds);
  const std::vector<Segment> segments = viterbi_segment(n, model, seg_config);

  std::vector<IspaASegment> out;
  out.reserve(segments.size());
  for (const Segment& s : segments) {
    IspaASegment item;
    item.segment = s;
    item.median_energy_db = median_of(track.energy_db, s.start_frame, s.length());
    item.median_bandwidth_hz = median_of(bandwidth.values, s.start_frame, s.length());
    const LengthClass len = quantize_length(s.length(), track.hop_seconds);
    if (s.label == kRestLabel || item.median_energy_db < config.rest_threshold_db) {
      item.token = IspaAToken::make_rest(len);
    } else {
      item.model = model.fit(s.start_frame, s.length(), slope_for_label(s.label));
      const double mid_hz = std::exp2(item.model.log2_hz_at(0.5));
      item.token = IspaAToken::make_pitched(classify_bandwidth(item.median_bandwidth_hz, config.bandwidth),
                                            hz_to_octave(mid_hz), len, item.model.slope);
    }
    out.push_back(item);
  }
  return out;
}

std::vector<IspaAToken> transcribe_a(const Waveform& input, const IspaAConfig& config,
                                     const std::optional<PitchTrack>& external_pitch) {
  const Waveform w = resample(input, config.sample_rate);
  const PitchTrack track = external_pitch ? *external_pitch : estimate_pitch(w, config.pitch);
  const BandwidthTrack bw = spectral_bandwidth(w, track.hop_seconds);
  std::vector<IspaAToken> tokens;
  for (const auto& s : segment_tracks(track, bw, config)) tokens.push_back(s.token);
  return tokens;
}

Waveform synthesize(const std::vector<IspaAToken>& tokens, int sample_rate) {
  if (sample_rate <= 0) throw Error("synthesize: sample_rate must be positive");
  std::vector<double> samples;
  const double sr = sample_rate;
  const auto ramp = static_cast<std::size_t>(std::llround(kSynthRampSeconds * sr));
  for (const IspaAToken& t : tokens) {
    const auto n = static_cast<std::size_t>(std::llround(length_seconds(t.length) * sr));
    if (t.rest) {
      samples.insert(samples.end(), n, 0.0);
      continue;
    }
    const double ratio = slope_center(t.slope);
    const double f_start = octave_center_hz(t.octave) * std::exp2(-0.5 * ratio);
    const double duration = static_cast<double>(n) / sr;
    const double k = std::exp2(ratio);  // end / start
    for (std::size_t i = 0; i < n; ++i) {
      const double time = static_cast<double>(i) / sr;
      double phase;
      if (t.slope == 0) {
        phase = 2.0 * std::numbers::pi * f_start * time;
      } else {
        const double lk = std::log(k);
        phase = 2.0 * std::numbers::pi * f_start * duration / lk * (std::pow(k, time / duration) - 1.0);
      }
      double gain = kSynthAmplitude;
      if (ramp > 0) {
        const std::size_t edge = std::min(i, n - 1 - i);
        if (edge < ramp) gain *= 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(edge) / static_cast<double>(ramp));
      }
      samples.push_back(gain * std::sin(phase));
    }
  }
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples = Eigen::Map<const Eigen::VectorXd>(samples.data(), static_cast<Eigen::Index>(samples.size()));
  return w;
}

}  // namespace ispa

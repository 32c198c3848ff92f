#include "ispa/dsp_features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <numbers>
#include <sstream>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "csv.hpp"
#include "ispa/error.hpp"

namespace ispa {

namespace {

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

template <typename T>
void put_le(std::vector<unsigned char>& out, T value) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<unsigned char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
  }
}

template <typename T>
T get_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return static_cast<T>(v);
}

}  // namespace

PowerSpectrogram power_spectrogram(const Waveform& w, double hop_seconds) {
  if (!(hop_seconds > 0.0)) throw Error("hop_seconds must be positive");
  const Eigen::Index n = w.samples.size();
  const double hop_samples = hop_seconds * w.sample_rate;
  const auto win = std::max<Eigen::Index>(2, std::llround(2.0 * hop_samples));
  const int n_fft = next_pow2(static_cast<int>(win));
  const Eigen::Index frames = frame_count(n, w.sample_rate, hop_seconds);

  std::vector<double> hann(static_cast<std::size_t>(win));
  for (Eigen::Index j = 0; j < win; ++j) {
    hann[static_cast<std::size_t>(j)] =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (static_cast<double>(j) + 0.5) / static_cast<double>(win));
  }

  PowerSpectrogram spec;
  spec.n_fft = n_fft;
  spec.sample_rate = w.sample_rate;
  spec.hop_seconds = hop_seconds;
  spec.power.resize(frames, n_fft / 2 + 1);

  Eigen::FFT<double> fft;
  std::vector<double> buf(static_cast<std::size_t>(n_fft));
  std::vector<std::complex<double>> bins;
  for (Eigen::Index i = 0; i < frames; ++i) {
    std::fill(buf.begin(), buf.end(), 0.0);
    const auto centre = static_cast<Eigen::Index>(std::llround(static_cast<double>(i) * hop_samples));
    const Eigen::Index start = centre - win / 2;
    for (Eigen::Index j = 0; j < win; ++j) {
      const Eigen::Index k = start + j;
      if (k >= 0 && k < n) buf[static_cast<std::size_t>(j)] = w.samples[k] * hann[static_cast<std::size_t>(j)];
    }
    fft.fwd(bins, buf);
    for (int k = 0; k <= n_fft / 2; ++k) spec.power(i, k) = std::norm(bins[static_cast<std::size_t>(k)]);
  }
  return spec;
}

Eigen::MatrixXd mel_filterbank(int n_mels, int n_fft, int sample_rate) {
  const int n_bins = n_fft / 2 + 1;
  const double nyquist = sample_rate / 2.0;
  const double mel_max = hz_to_mel(nyquist);
  std::vector<double> edges(static_cast<std::size_t>(n_mels + 2));
  for (int m = 0; m < n_mels + 2; ++m) edges[static_cast<std::size_t>(m)] = mel_to_hz(mel_max * m / (n_mels + 1));

  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(n_mels, n_bins);
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[static_cast<std::size_t>(m)];
    const double mid = edges[static_cast<std::size_t>(m + 1)];
    const double hi = edges[static_cast<std::size_t>(m + 2)];
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / n_fft;
      if (f > lo && f < hi) fb(m, k) = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
    }
  }
  return fb;
}

FeatureSequence compute_mfcc(const Waveform& w, const MfccConfig& config) {
  if (config.n_coeffs < 1 || config.n_coeffs > 64) throw Error("n_coeffs must be in [1, 64]");
  if (config.n_mels < config.n_coeffs) throw Error("n_mels must be at least n_coeffs");
  const auto win = std::llround(2.0 * config.hop_seconds * w.sample_rate);
  if (w.samples.size() < win) throw Error("audio shorter than one analysis window");

  const PowerSpectrogram spec = power_spectrogram(w, config.hop_seconds);
  const Eigen::MatrixXd fb = mel_filterbank(config.n_mels, spec.n_fft, w.sample_rate);
  constexpr double kLogFloor = 1e-10;
  const Eigen::MatrixXd log_mel = (spec.power * fb.transpose()).array().max(kLogFloor).log().matrix();

  const int m = config.n_mels;
  Eigen::MatrixXd dct(config.n_coeffs, m);
  for (int k = 0; k < config.n_coeffs; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / m) : std::sqrt(2.0 / m);
    for (int j = 0; j < m; ++j) dct(k, j) = scale * std::cos(std::numbers::pi * k * (j + 0.5) / m);
  }

  FeatureSequence out;
  out.hop_seconds = config.hop_seconds;
  out.frames = log_mel * dct.transpose();
  return out;
}

BandwidthTrack spectral_bandwidth(const Waveform& w, double hop_seconds) {
  const PowerSpectrogram spec = power_spectrogram(w, hop_seconds);
  const Eigen::Index n_bins = spec.power.cols();
  Eigen::VectorXd freqs(n_bins);
  for (Eigen::Index k = 0; k < n_bins; ++k) freqs[k] = spec.bin_hz(k);

  BandwidthTrack track;
  track.hop_seconds = hop_seconds;
  track.values.resize(spec.power.rows());
  for (Eigen::Index i = 0; i < spec.power.rows(); ++i) {
    const auto p = spec.power.row(i).transpose();
    const double total = p.sum();
    if (!(total > 0.0)) {
      track.values[i] = 0.0;
      continue;
    }
    const double centroid = p.dot(freqs) / total;
    const double spread = (freqs.array() - centroid).square().matrix().dot(p) / total;
    track.values[i] = std::sqrt(std::max(0.0, spread));
  }
  return track;
}

FeatureSequence import_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "ISPF", 4) != 0) throw FormatError("bad magic: " + path.string());
  if (bytes.size() < kIspfHeaderBytes) {
    throw FormatError("truncated header: expected " + std::to_string(kIspfHeaderBytes) + " bytes, got " +
                      std::to_string(bytes.size()) + ": " + path.string());
  }
  const unsigned char* p = bytes.data();
  const auto version = get_le<std::uint32_t>(p + 4);
  if (version != kIspfVersion) {
    throw FormatError("version mismatch: expected " + std::to_string(kIspfVersion) + ", got " +
                      std::to_string(version) + ": " + path.string());
  }
  FeatureSequence seq;
  seq.hop_seconds = std::bit_cast<double>(get_le<std::uint64_t>(p + 8));
  seq.start_time_s = std::bit_cast<double>(get_le<std::uint64_t>(p + 16));
  const auto dim = get_le<std::uint32_t>(p + 24);
  const auto n_frames = get_le<std::uint64_t>(p + 28);
  if (dim == 0) throw FormatError("dim must be at least 1: " + path.string());
  if (!(seq.hop_seconds > 0.0)) throw FormatError("hop_seconds must be positive: " + path.string());

  const std::uint64_t expected = n_frames * dim * 4;
  const std::uint64_t payload = bytes.size() - kIspfHeaderBytes;
  if (payload != expected) {
    throw FormatError("payload size mismatch: expected " + std::to_string(expected) + " bytes, got " +
                      std::to_string(payload) + ": " + path.string());
  }
  seq.frames.resize(static_cast<Eigen::Index>(n_frames), static_cast<Eigen::Index>(dim));
  const unsigned char* data = p + kIspfHeaderBytes;
  for (Eigen::Index i = 0; i < seq.frames.rows(); ++i) {
    for (Eigen::Index j = 0; j < seq.frames.cols(); ++j) {
      const auto bits = get_le<std::uint32_t>(data);
      seq.frames(i, j) = static_cast<double>(std::bit_cast<float>(bits));
      data += 4;
    }
  }
  if (!seq.frames.allFinite()) throw FormatError("non-finite feature values: " + path.string());
  return seq;
}

void export_features(const std::filesystem::path& path, const FeatureSequence& features) {
  std::vector<unsigned char> out;
  out.reserve(kIspfHeaderBytes + static_cast<std::size_t>(features.frames.size()) * 4);
  out.insert(out.end(), {'I', 'S', 'P', 'F'});
  put_le<std::uint32_t>(out, kIspfVersion);
  put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(features.hop_seconds));
  put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(features.start_time_s));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(features.dim()));
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(features.size()));
  for (Eigen::Index i = 0; i < features.frames.rows(); ++i) {
    for (Eigen::Index j = 0; j < features.frames.cols(); ++j) {
      put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(features.frames(i, j))));
    }
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

PitchTrack import_pitch(const std::filesystem::path& path) {
  const detail::CsvTable table = detail::read_csv(path);
  const int c_time = table.column("time_s");
  const int c_f0 = table.column("f0_hz");
  const int c_conf = table.column("confidence");
  const int c_energy = table.column("energy_db");
  for (const auto& [col, name] : {std::pair{c_time, "time_s"}, {c_f0, "f0_hz"}, {c_conf, "confidence"},
                                  {c_energy, "energy_db"}}) {
    if (col < 0) throw FormatError(std::string("missing column ") + name + ": " + path.string());
  }
  const auto n = static_cast<Eigen::Index>(table.rows.size());
  if (n == 0) throw FormatError("no pitch rows: " + path.string());

  PitchTrack track;
  track.f0_hz.resize(n);
  track.confidence.resize(n);
  track.energy_db.resize(n);
  std::vector<double> times(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = table.rows[static_cast<std::size_t>(i)];
    const std::string ctx = path.string() + " row " + std::to_string(i + 2);
    times[static_cast<std::size_t>(i)] = detail::parse_double(row[static_cast<std::size_t>(c_time)], ctx);
    const std::string& f0 = row[static_cast<std::size_t>(c_f0)];
    const double hz = f0.empty() ? 0.0 : detail::parse_double(f0, ctx);
    track.f0_hz[i] = (hz >= kMinVoicedHz && hz <= kMaxVoicedHz) ? hz : 0.0;
    const std::string& conf = row[static_cast<std::size_t>(c_conf)];
    track.confidence[i] = conf.empty() ? 0.0 : std::clamp(detail::parse_double(conf, ctx), 0.0, 1.0);
    const std::string& en = row[static_cast<std::size_t>(c_energy)];
    track.energy_db[i] = en.empty() ? 0.0 : detail::parse_double(en, ctx);
  }

  track.hop_seconds = kPitchHopSeconds;
  if (n >= 2) {
    track.hop_seconds = times[1] - times[0];
    if (!(track.hop_seconds > 0.0)) throw FormatError("non-uniform hop: rows not time-sorted: " + path.string());
    for (std::size_t i = 1; i < times.size(); ++i) {
      const double gap = times[i] - times[i - 1];
      if (std::abs(gap - track.hop_seconds) > 1e-4) {
        throw FormatError("non-uniform hop at row " + std::to_string(i + 2) + ": " + path.string());
      }
    }
  }
  return track;
}

void export_pitch(const std::filesystem::path& path, const PitchTrack& track) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << "time_s,f0_hz,confidence,energy_db\n" << std::setprecision(17);
  for (Eigen::Index i = 0; i < track.size(); ++i) {
    out << static_cast<double>(i) * track.hop_seconds << ',' << track.f0_hz[i] << ',' << track.confidence[i]
        << ',' << track.energy_db[i] << '\n';
  }
}

std::vector<PhoneInterval> import_phone_alignment(const std::filesystem::path& path) {
  const detail::CsvTable table = detail::read_csv(path);
  const int c_start = table.column("start_s");
  const int c_end = table.column("end_s");
  const int c_phone = table.column("phone");
  if (c_start < 0 || c_end < 0 || c_phone < 0) {
    throw FormatError("phone alignment needs columns start_s,end_s,phone: " + path.string());
  }
  std::vector<PhoneInterval> out;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const std::string ctx = path.string() + " row " + std::to_string(i + 2);
    PhoneInterval p;
    p.start_s = detail::parse_double(row[static_cast<std::size_t>(c_start)], ctx);
    p.end_s = detail::parse_double(row[static_cast<std::size_t>(c_end)], ctx);
    p.phone = row[static_cast<std::size_t>(c_phone)];
    if (p.phone.empty()) throw FormatError("empty phone symbol in " + ctx);
    if (p.end_s < p.start_s) throw FormatError("end_s before start_s in " + ctx);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace ispa

#include "ispa/audio_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <string>
#include <vector>

#include "ispa/error.hpp"

namespace ispa {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xFF));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

double decode_sample(const unsigned char* p, std::uint16_t format, int bits) {
  if (format == kFormatFloat) {
    float f;
    std::uint32_t u = read_u32(p);
    std::memcpy(&f, &u, sizeof f);
    return static_cast<double>(f);
  }
  switch (bits) {
    case 8:
      return (static_cast<int>(p[0]) - 128) / 128.0;
    case 16:
      return static_cast<std::int16_t>(read_u16(p)) / 32768.0;
    case 24: {
      std::int32_t v = static_cast<std::int32_t>(
          static_cast<std::uint32_t>(p[0]) << 8 |
          static_cast<std::uint32_t>(p[1]) << 16 |
          static_cast<std::uint32_t>(p[2]) << 24);
      return (v >> 8) / 8388608.0;
    }
    case 32:
      return static_cast<std::int32_t>(read_u32(p)) / 2147483648.0;
    default:
      return 0.0;
  }
}

double blackman(double x, double half_width) {
  if (std::abs(x) >= half_width) return 0.0;
  const double a = std::numbers::pi * x / half_width;
  return 0.42 + 0.5 * std::cos(a) + 0.08 * std::cos(2.0 * a);
}

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace

Waveform load_audio(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("unreadable file: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());

  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError("unreadable file: not a RIFF/WAVE file: " + path.string());
  }

  std::uint16_t format = 0;
  int channels = 0;
  int sample_rate = 0;
  int bits = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = bytes.size() - body;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || avail < 16) throw FormatError("truncated fmt chunk: " + path.string());
      format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      sample_rate = static_cast<int>(read_u32(chunk + 12));
      bits = read_u16(chunk + 22);
      if (format == kFormatExtensible) {
        if (size < 40 || avail < 40) throw FormatError("truncated extensible fmt chunk: " + path.string());
        format = read_u16(chunk + 8 + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      // Streamed writers may leave the size field unset; trust the file length.
      data_size = std::min<std::size_t>(size, avail);
    }
    pos = body + size + (size & 1u);
  }

  if (!have_fmt || data == nullptr) throw FormatError("unreadable file: missing fmt or data chunk: " + path.string());
  const bool int_ok = format == kFormatPcm && (bits == 8 || bits == 16 || bits == 24 || bits == 32);
  const bool float_ok = format == kFormatFloat && bits == 32;
  if (!(int_ok || float_ok) || channels < 1 || sample_rate <= 0) {
    throw FormatError("unsupported encoding (format " + std::to_string(format) + ", " +
                      std::to_string(bits) + " bits): " + path.string());
  }

  const std::size_t bytes_per_sample = static_cast<std::size_t>(bits / 8);
  const std::size_t frame_bytes = bytes_per_sample * static_cast<std::size_t>(channels);
  const std::size_t n = data_size / frame_bytes;
  if (n == 0) throw FormatError("zero-length audio: " + path.string());

  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      acc += decode_sample(data + i * frame_bytes + static_cast<std::size_t>(c) * bytes_per_sample, format, bits);
    }
    w.samples[static_cast<Eigen::Index>(i)] = acc / channels;
  }
  if (!w.samples.allFinite()) throw FormatError("non-finite samples: " + path.string());
  return w;
}

void save_wav(const std::filesystem::path& path, const Waveform& w) {
  const auto n = static_cast<std::uint32_t>(w.samples.size());
  std::vector<unsigned char> out;
  out.reserve(44 + 2 * static_cast<std::size_t>(n));
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + 2 * n);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, 2 * n);
  for (Eigen::Index i = 0; i < w.samples.size(); ++i) {
    const double s = std::clamp(w.samples[i], -1.0, 1.0);
    const auto v = static_cast<std::int16_t>(std::clamp(std::lround(s * 32768.0), -32768L, 32767L));
    put_u16(out, static_cast<std::uint16_t>(v));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error("write failed: " + path.string());
}

Waveform resample(const Waveform& w, int target_rate) {
  if (target_rate <= 0) throw Error("resample: target_rate must be positive");
  if (target_rate == w.sample_rate) return w;

  const double ratio = static_cast<double>(target_rate) / w.sample_rate;
  const double cutoff = std::min(1.0, ratio);
  constexpr double kZeroCrossings = 16.0;
  const double half_width = kZeroCrossings / cutoff;

  const Eigen::Index n_in = w.samples.size();
  const auto n_out = static_cast<Eigen::Index>(std::llround(static_cast<double>(n_in) * ratio));

  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(n_out);
  for (Eigen::Index i = 0; i < n_out; ++i) {
    const double t = static_cast<double>(i) / ratio;
    const auto lo = std::max<Eigen::Index>(0, static_cast<Eigen::Index>(std::ceil(t - half_width)));
    const auto hi = std::min<Eigen::Index>(n_in - 1, static_cast<Eigen::Index>(std::floor(t + half_width)));
    double acc = 0.0;
    for (Eigen::Index k = lo; k <= hi; ++k) {
      const double x = t - static_cast<double>(k);
      acc += w.samples[k] * cutoff * sinc(cutoff * x) * blackman(x, half_width);
    }
    out.samples[i] = acc;
  }
  return out;
}

Eigen::Index frame_count(Eigen::Index n_samples, int sample_rate, double hop_seconds) {
  const double hop_samples = hop_seconds * sample_rate;
  const double frames = static_cast<double>(n_samples) / hop_samples;
  // Absorb representation error so that exact multiples do not round up.
  return std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::ceil(frames - 1e-9)));
}

EnergyTrack frame_energy(const Waveform& w, double hop_seconds, double win_seconds) {
  if (!(hop_seconds > 0.0) || win_seconds < hop_seconds) {
    throw Error("frame_energy: require 0 < hop_seconds <= win_seconds");
  }
  const Eigen::Index n = w.samples.size();
  const Eigen::Index frames = frame_count(n, w.sample_rate, hop_seconds);
  const double hop_samples = hop_seconds * w.sample_rate;
  const auto win = std::max<Eigen::Index>(1, std::llround(win_seconds * w.sample_rate));

  Eigen::VectorXd hann(win);
  for (Eigen::Index j = 0; j < win; ++j) {
    hann[j] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (static_cast<double>(j) + 0.5) / static_cast<double>(win));
  }

  EnergyTrack track;
  track.hop_seconds = hop_seconds;
  track.values.resize(frames);
  for (Eigen::Index i = 0; i < frames; ++i) {
    const auto centre = static_cast<Eigen::Index>(std::llround(static_cast<double>(i) * hop_samples));
    const Eigen::Index start = centre - win / 2;
    double num = 0.0;
    double den = 0.0;
    for (Eigen::Index j = 0; j < win; ++j) {
      const Eigen::Index k = start + j;
      if (k < 0 || k >= n) continue;
      num += hann[j] * w.samples[k] * w.samples[k];
      den += hann[j];
    }
    const double ms = den > 0.0 ? num / den : 0.0;
    track.values[i] = ms > 0.0 ? std::max(kEnergyFloorDb, 10.0 * std::log10(ms)) : kEnergyFloorDb;
  }
  return track;
}

}  // namespace ispa

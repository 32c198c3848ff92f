#include <doctest.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <unsupported/Eigen/FFT>

#include "ispa/audio_io.hpp"
#include "ispa/error.hpp"
#include "support.hpp"

namespace {

void put_u16(std::vector<char>& b, std::uint16_t v) {
  b.push_back(static_cast<char>(v & 0xff));
  b.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::vector<char>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

// Minimal RIFF writer: `payload` is the raw data chunk.
void write_wav(const std::filesystem::path& p, std::uint16_t format, int channels, int rate, int bits,
               const std::vector<char>& payload) {
  std::vector<char> b;
  const char* riff = "RIFF";
  b.insert(b.end(), riff, riff + 4);
  put_u32(b, static_cast<std::uint32_t>(36 + payload.size()));
  const char* wave = "WAVEfmt ";
  b.insert(b.end(), wave, wave + 8);
  put_u32(b, 16);
  put_u16(b, format);
  put_u16(b, static_cast<std::uint16_t>(channels));
  put_u32(b, static_cast<std::uint32_t>(rate));
  put_u32(b, static_cast<std::uint32_t>(rate * channels * bits / 8));
  put_u16(b, static_cast<std::uint16_t>(channels * bits / 8));
  put_u16(b, static_cast<std::uint16_t>(bits));
  const char* data = "data";
  b.insert(b.end(), data, data + 4);
  put_u32(b, static_cast<std::uint32_t>(payload.size()));
  b.insert(b.end(), payload.begin(), payload.end());
  std::ofstream(p, std::ios::binary).write(b.data(), static_cast<std::streamsize>(b.size()));
}

std::string error_of(const std::filesystem::path& p) {
  try {
    ispa::load_audio(p);
  } catch (const ispa::Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("load_audio averages stereo 16-bit to mono") {
  const auto dir = testing::temp_dir("audio_stereo");
  std::vector<char> payload;
  for (int i = 0; i < 88200; ++i) {
    put_u16(payload, static_cast<std::uint16_t>(static_cast<std::int16_t>(16384)));
    put_u16(payload, static_cast<std::uint16_t>(static_cast<std::int16_t>(-8192)));
  }
  write_wav(dir / "s.wav", 1, 2, 44100, 16, payload);
  const auto w = ispa::load_audio(dir / "s.wav");
  CHECK(w.samples.size() == 88200);
  CHECK(w.sample_rate == 44100);
  CHECK(w.samples[0] == doctest::Approx((0.5 - 0.25) / 2.0));
  CHECK(w.duration() == doctest::Approx(2.0));
}

TEST_CASE("integer and float PCM scaling") {
  const auto dir = testing::temp_dir("audio_scaling");
  std::vector<char> p16;
  put_u16(p16, 32767);
  put_u16(p16, static_cast<std::uint16_t>(static_cast<std::int16_t>(-32768)));
  write_wav(dir / "a.wav", 1, 1, 16000, 16, p16);
  auto w = ispa::load_audio(dir / "a.wav");
  CHECK(w.samples[0] == doctest::Approx(32767.0 / 32768.0).epsilon(1e-12));
  CHECK(w.samples[1] == -1.0);

  std::vector<char> p8{static_cast<char>(255), static_cast<char>(128), static_cast<char>(0)};
  write_wav(dir / "b.wav", 1, 1, 8000, 8, p8);
  w = ispa::load_audio(dir / "b.wav");
  CHECK(w.samples[0] == doctest::Approx(127.0 / 128.0));
  CHECK(w.samples[1] == 0.0);
  CHECK(w.samples[2] == -1.0);

  std::vector<char> p24{0, 0, 0x40};  // 0x400000 = 2^22
  write_wav(dir / "c.wav", 1, 1, 16000, 24, p24);
  CHECK(ispa::load_audio(dir / "c.wav").samples[0] == doctest::Approx(0.5));

  std::vector<char> p32;
  put_u32(p32, 0xC0000000u);  // -2^30
  write_wav(dir / "d.wav", 1, 1, 16000, 32, p32);
  CHECK(ispa::load_audio(dir / "d.wav").samples[0] == doctest::Approx(-0.5));

  std::vector<char> pf(4);
  const float f = 0.25f;
  std::memcpy(pf.data(), &f, 4);
  write_wav(dir / "e.wav", 3, 1, 16000, 32, pf);
  CHECK(ispa::load_audio(dir / "e.wav").samples[0] == 0.25);
}

TEST_CASE("load_audio errors") {
  const auto dir = testing::temp_dir("audio_errors");
  write_wav(dir / "empty.wav", 1, 1, 16000, 16, {});
  CHECK(error_of(dir / "empty.wav").find("zero-length audio") != std::string::npos);
  write_wav(dir / "alaw.wav", 6, 1, 8000, 8, {1, 2, 3});
  CHECK(error_of(dir / "alaw.wav").find("unsupported encoding") != std::string::npos);
  CHECK(error_of(dir / "missing.wav").find("unreadable file") != std::string::npos);
  std::ofstream(dir / "junk.wav") << "not audio at all";
  CHECK(error_of(dir / "junk.wav").find("unreadable file") != std::string::npos);
}

TEST_CASE("save_wav then load_audio is within one quantisation step") {
  const auto dir = testing::temp_dir("audio_roundtrip");
  const auto w = testing::sine(440.0, 0.2, 0.7);
  ispa::save_wav(dir / "r.wav", w);
  const auto back = ispa::load_audio(dir / "r.wav");
  REQUIRE(back.samples.size() == w.samples.size());
  CHECK((back.samples - w.samples).cwiseAbs().maxCoeff() <= 1.0 / 32768.0);
  CHECK(ispa::resample(back, back.sample_rate).samples == back.samples);
}

TEST_CASE("resample") {
  const auto w = testing::sine(440.0, 1.0, 0.5, 16000);
  CHECK(ispa::resample(w, 16000).samples == w.samples);

  const auto half = ispa::resample(w, 8000);
  CHECK(half.sample_rate == 8000);
  CHECK(std::abs(half.samples.size() - 8000) <= 1);

  const auto src = testing::sine(440.0, 1.0, 0.5, 44100);
  const auto dst = ispa::resample(src, 16000);
  CHECK(std::abs(dst.duration() - src.duration()) <= 1.0 / 16000);
  Eigen::FFT<double> fft;
  std::vector<double> x(dst.samples.data(), dst.samples.data() + 16000);
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, x);
  std::size_t peak = 0;
  for (std::size_t k = 1; k < spec.size() / 2; ++k) {
    if (std::abs(spec[k]) > std::abs(spec[peak])) peak = k;
  }
  CHECK(std::abs(static_cast<double>(peak) - 440.0) <= 1.0);  // 1 Hz bins

  CHECK_THROWS_AS(ispa::resample(w, 0), ispa::Error);
}

TEST_CASE("frame_energy") {
  SUBCASE("silence sits on the floor") {
    const auto e = ispa::frame_energy(testing::silence(1.0), 0.03125, 0.0625);
    CHECK(e.values.size() == 32);
    CHECK((e.values.array() == ispa::kEnergyFloorDb).all());
  }
  SUBCASE("full-scale square wave is 0 dBFS") {
    ispa::Waveform w;
    w.samples = Eigen::VectorXd::NullaryExpr(16000, [](Eigen::Index i) { return (i / 20) % 2 == 0 ? 1.0 : -1.0; });
    const auto e = ispa::frame_energy(w, 0.02, 0.04);
    CHECK(e.values.size() == 50);
    CHECK(e.values.cwiseAbs().maxCoeff() < 1e-9);
  }
  SUBCASE("a = 0.00316 sine is below -50 dBFS") {
    const auto e = ispa::frame_energy(testing::sine(700.0, 1.0, 0.00316), 0.03125, 0.0625);
    CHECK(e.values.maxCoeff() < -50.0);
    CHECK(e.values.mean() == doctest::Approx(20.0 * std::log10(0.00316 / std::sqrt(2.0))).epsilon(0.01));
  }
  SUBCASE("frame count is ceil(duration / hop)") {
    CHECK(ispa::frame_energy(testing::sine(100.0, 1.01), 0.03125, 0.0625).values.size() == 33);
    CHECK(ispa::frame_count(16000, 16000, 0.02) == 50);
    CHECK(ispa::frame_count(16001, 16000, 0.02) == 51);
  }
  SUBCASE("gain shifts every frame by 20 log10 g") {
    const auto w = testing::sine(330.0, 0.5, 0.4);
    ispa::Waveform scaled = w;
    scaled.samples *= 0.25;
    const auto a = ispa::frame_energy(w, 0.03125, 0.0625);
    const auto b = ispa::frame_energy(scaled, 0.03125, 0.0625);
    CHECK(((b.values - a.values).array() - 20.0 * std::log10(0.25)).abs().maxCoeff() < 1e-9);
  }
  CHECK_THROWS_AS(ispa::frame_energy(testing::silence(0.1), 0.05, 0.02), ispa::Error);
  CHECK_THROWS_AS(ispa::frame_energy(testing::silence(0.1), 0.0, 0.02), ispa::Error);
}

#include <doctest.h>

#include <fstream>
#include <iterator>

#include "ispa/dsp_features.hpp"
#include "ispa/error.hpp"
#include "support.hpp"

namespace {

std::vector<char> bytes_of(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string import_error(const std::filesystem::path& p) {
  try {
    ispa::import_features(p);
  } catch (const ispa::Error& e) {
    return e.what();
  }
  return {};
}

std::string pitch_error(const std::filesystem::path& p) {
  try {
    ispa::import_pitch(p);
  } catch (const ispa::Error& e) {
    return e.what();
  }
  return {};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<double> voiced_f0(const ispa::PitchTrack& t) {
  std::vector<double> out;
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    if (t.voiced(i)) out.push_back(t.f0_hz[i]);
  }
  return out;
}

}  // namespace

TEST_CASE("compute_mfcc shape and behaviour") {
  const auto f = ispa::compute_mfcc(testing::sine(440.0, 1.0));
  CHECK(f.size() == 50);
  CHECK(f.dim() == 40);
  CHECK(f.hop_seconds == 0.020);
  CHECK(f.frames.allFinite());

  const auto s = ispa::compute_mfcc(testing::silence(1.0));
  CHECK((s.frames.rowwise() - s.frames.row(0)).cwiseAbs().maxCoeff() < 1e-9);

  const auto n = ispa::compute_mfcc(testing::noise(1.0, 3));
  CHECK((n.frames.colwise().mean() - f.frames.colwise().mean()).norm() > 0.0);

  ispa::MfccConfig cfg;
  cfg.n_coeffs = 13;
  CHECK(ispa::compute_mfcc(testing::sine(440.0, 0.5), cfg).dim() == 13);
  cfg.n_coeffs = 0;
  CHECK_THROWS_AS(ispa::compute_mfcc(testing::sine(440.0, 0.5), cfg), ispa::Error);
  cfg.n_coeffs = 65;
  CHECK_THROWS_AS(ispa::compute_mfcc(testing::sine(440.0, 0.5), cfg), ispa::Error);
  CHECK_THROWS_AS(ispa::compute_mfcc(testing::sine(440.0, 0.01)), ispa::Error);
}

TEST_CASE("estimate_pitch on steady tones") {
  const auto t = ispa::estimate_pitch(testing::sine(700.0, 2.0));
  CHECK(t.size() == 64);
  CHECK(t.hop_seconds == 0.03125);
  CHECK(t.confidence.size() == t.size());
  CHECK(t.energy_db.size() == t.size());
  const auto v = voiced_f0(t);
  REQUIRE(!v.empty());
  const auto close = std::count_if(v.begin(), v.end(), [](double f) { return std::abs(f / 700.0 - 1.0) < 0.01; });
  CHECK(static_cast<double>(close) >= 0.95 * static_cast<double>(v.size()));

  for (double hz : {100.0, 250.0, 700.0, 2000.0}) {
    CAPTURE(hz);
    const auto vv = voiced_f0(ispa::estimate_pitch(testing::sine(hz, 1.0)));
    REQUIRE(!vv.empty());
    CHECK(std::abs(median(vv) / hz - 1.0) < 0.01);
  }
}

TEST_CASE("estimate_pitch on silence and chirp") {
  const auto s = ispa::estimate_pitch(testing::silence(1.0));
  CHECK((s.f0_hz.array() == 0.0).all());

  const auto c = ispa::estimate_pitch(testing::chirp(400.0, 800.0, 1.0));
  REQUIRE(c.size() == 32);
  CHECK(c.f0_hz[0] == doctest::Approx(400.0).epsilon(0.03));
  CHECK(c.f0_hz[c.size() - 1] == doctest::Approx(800.0).epsilon(0.03));
  CHECK(((c.f0_hz.array() == 0.0) || (c.f0_hz.array() >= 20.0 && c.f0_hz.array() <= 16000.0)).all());
  CHECK((c.confidence.array() >= 0.0 && c.confidence.array() <= 1.0).all());

  ispa::PitchConfig bad;
  bad.f_min = 500.0;
  bad.f_max = 400.0;
  CHECK_THROWS_AS(ispa::estimate_pitch(testing::sine(440.0, 0.5), bad), ispa::Error);
}

TEST_CASE("spectral_bandwidth") {
  const auto sine = ispa::spectral_bandwidth(testing::sine(700.0, 1.0));
  const auto wn = ispa::spectral_bandwidth(testing::noise(1.0, 5));
  const auto sil = ispa::spectral_bandwidth(testing::silence(1.0));
  REQUIRE(sine.values.size() == wn.values.size());
  CHECK(sine.values.segment(2, sine.values.size() - 4).maxCoeff() < 50.0);
  CHECK(wn.values.minCoeff() > 2000.0);
  CHECK((sil.values.array() == 0.0).all());
  CHECK((sine.values.array() < wn.values.array()).all());
  CHECK((sine.values.array() >= 0.0).all());
}

TEST_CASE("ISPF round trip and header echo") {
  const auto dir = testing::temp_dir("ispf");
  ispa::FeatureSequence seq;
  seq.hop_seconds = 0.020;
  seq.start_time_s = 0.5;
  seq.frames = ispa::FrameMatrix::Random(100, 768).cast<float>().cast<double>();
  ispa::export_features(dir / "a.ispf", seq);
  CHECK(bytes_of(dir / "a.ispf").size() == 36 + 100 * 768 * 4);
  const auto back = ispa::import_features(dir / "a.ispf");
  CHECK(back.dim() == 768);
  CHECK(back.size() == 100);
  CHECK(back.hop_seconds == 0.020);
  CHECK(back.start_time_s == 0.5);
  CHECK(back.frames == seq.frames);
  ispa::export_features(dir / "b.ispf", back);
  CHECK(bytes_of(dir / "a.ispf") == bytes_of(dir / "b.ispf"));
}

TEST_CASE("ISPF errors") {
  const auto dir = testing::temp_dir("ispf_errors");
  ispa::FeatureSequence seq;
  seq.frames = ispa::FrameMatrix::Ones(10, 4);
  ispa::export_features(dir / "ok.ispf", seq);
  auto bytes = bytes_of(dir / "ok.ispf");

  auto write = [&](const std::string& name, const std::vector<char>& b) {
    std::ofstream(dir / name, std::ios::binary).write(b.data(), static_cast<std::streamsize>(b.size()));
    return dir / name;
  };
  auto magic = bytes;
  std::fill_n(magic.begin(), 4, 'X');
  CHECK(import_error(write("magic.ispf", magic)).find("bad magic") != std::string::npos);

  auto version = bytes;
  version[4] = 2;
  CHECK(import_error(write("version.ispf", version)).find("version mismatch") != std::string::npos);

  auto shortp = bytes;
  shortp.resize(shortp.size() - 4);
  const std::string msg = import_error(write("short.ispf", shortp));
  CHECK(msg.find("expected 160 bytes") != std::string::npos);
  CHECK(msg.find("got 156") != std::string::npos);
}

TEST_CASE("import_pitch") {
  const auto dir = testing::temp_dir("pitch_csv");
  std::ofstream(dir / "ok.csv") << "time_s,f0_hz,confidence,energy_db\n0.0,700,0.9,-10\n0.03125,,0.1,-60\n0.0625,0,0.2,-70\n";
  const auto t = ispa::import_pitch(dir / "ok.csv");
  CHECK(t.size() == 3);
  CHECK(t.hop_seconds == doctest::Approx(0.03125));
  CHECK(t.f0_hz[0] == 700.0);
  CHECK_FALSE(t.voiced(1));
  CHECK_FALSE(t.voiced(2));
  CHECK(t.energy_db[1] == -60.0);

  std::ofstream(dir / "reordered.csv") << "confidence,energy_db,f0_hz,time_s\n0.9,-10,440,0.0\n0.8,-10,450,0.02\n";
  const auto r = ispa::import_pitch(dir / "reordered.csv");
  CHECK(r.f0_hz[1] == 450.0);
  CHECK(r.hop_seconds == doctest::Approx(0.02));

  std::ofstream(dir / "uneven.csv") << "time_s,f0_hz,confidence,energy_db\n0.0,1,1,0\n0.03,1,1,0\n0.07,1,1,0\n";
  CHECK(pitch_error(dir / "uneven.csv").find("non-uniform hop") != std::string::npos);

  std::ofstream(dir / "nocol.csv") << "time_s,f0_hz,energy_db\n0.0,100,0\n";
  CHECK(pitch_error(dir / "nocol.csv").find("missing column") != std::string::npos);

  std::ofstream(dir / "range.csv") << "time_s,f0_hz,confidence,energy_db\n0.0,10,1,0\n0.02,20000,1,0\n";
  const auto rr = ispa::import_pitch(dir / "range.csv");
  CHECK((rr.f0_hz.array() == 0.0).all());
}

TEST_CASE("export_pitch round trip") {
  const auto dir = testing::temp_dir("pitch_rt");
  const auto t = ispa::estimate_pitch(testing::sine(300.0, 0.5));
  ispa::export_pitch(dir / "p.csv", t);
  const auto back = ispa::import_pitch(dir / "p.csv");
  REQUIRE(back.size() == t.size());
  CHECK(back.hop_seconds == doctest::Approx(t.hop_seconds).epsilon(1e-9));
  CHECK((back.f0_hz - t.f0_hz).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((back.confidence - t.confidence).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("import_phone_alignment") {
  const auto dir = testing::temp_dir("phones");
  std::ofstream(dir / "a.csv") << "start_s,end_s,phone\n0.0,0.1,a\n0.1,0.25,s\n";
  const auto a = ispa::import_phone_alignment(dir / "a.csv");
  REQUIRE(a.size() == 2);
  CHECK(a[1].phone == "s");
  CHECK(a[1].end_s == 0.25);
  std::ofstream(dir / "b.csv") << "start,end,phone\n0,1,a\n";
  CHECK_THROWS_AS(ispa::import_phone_alignment(dir / "b.csv"), ispa::FormatError);
  CHECK_THROWS_AS(ispa::import_phone_alignment(dir / "none.csv"), ispa::FormatError);
}

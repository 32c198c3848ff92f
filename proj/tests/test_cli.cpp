#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "ispa/dsp_features.hpp"
#include "ispa/eval_harness.hpp"
#include "ispa/ispa_a.hpp"
#include "ispa/ispa_f.hpp"
#include "support.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Run run(const fs::path& dir, const std::string& args, const std::string& stdin_text = {}) {
  const fs::path out = dir / "stdout.txt";
  const fs::path err = dir / "stderr.txt";
  const fs::path in = dir / "stdin.txt";
  std::ofstream(in) << stdin_text;
  const std::string cmd = "cd '" + dir.string() + "' && '" ISPA_CLI_PATH "' " + args + " < '" + in.string() + "' > '" +
                          out.string() + "' 2> '" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

}  // namespace

TEST_CASE("cli transcribe ispa-a") {
  const auto dir = testing::temp_dir("cli_a");
  ispa::save_wav(dir / "tone700.wav", testing::sine(700.0, 2.0));
  ispa::save_wav(dir / "quiet.wav", testing::silence(1.0));
  auto r = run(dir, "transcribe --method ispa-a tone700.wav");
  CHECK(r.code == 0);
  CHECK(r.out == "N5/2=\n");

  r = run(dir, "transcribe tone700.wav quiet.wav tone700.wav --jobs 3");
  CHECK(r.code == 0);
  CHECK(r.out == "N5/2=\nR/4\nN5/2=\n");

  r = run(dir, "transcribe tone700.wav --out tokens.txt");
  CHECK(r.code == 0);
  CHECK(slurp(dir / "tokens.txt") == "N5/2=\n");

  ispa::PitchTrack external;
  external.f0_hz = Eigen::VectorXd::Constant(64, 350.0);
  external.confidence = Eigen::VectorXd::Ones(64);
  external.energy_db = Eigen::VectorXd::Constant(64, -10.0);
  ispa::export_pitch(dir / "tone700.pitch.csv", external);
  r = run(dir, "transcribe --pitch tone700.pitch.csv tone700.wav");
  CHECK(r.code == 0);
  CHECK(r.out == "N4/2=\n");

  r = run(dir, "transcribe --distance-domain hz tone700.wav");
  CHECK(r.code == 0);
  CHECK(r.out == "N5/2=\n");
}

TEST_CASE("cli usage and runtime errors") {
  const auto dir = testing::temp_dir("cli_err");
  ispa::save_wav(dir / "clip.wav", testing::sine(440.0, 1.0));
  CHECK(run(dir, "transcribe --method ispa-f clip.wav").code == 2);
  CHECK(run(dir, "transcribe --method ispa-a --variant raw clip.wav").code == 2);
  CHECK(run(dir, "transcribe --method nope clip.wav").code == 2);
  CHECK(run(dir, "transcribe").code == 2);
  CHECK(run(dir, "").code == 2);
  CHECK(run(dir, "frobnicate").code == 2);
  CHECK(run(dir, "transcribe --lambda -1 clip.wav").code == 2);
  CHECK(run(dir, "--help").code == 0);

  const auto r = run(dir, "transcribe clip.wav missing.wav");
  CHECK(r.code == 1);
  CHECK(r.out == "N4/4=\n");
  CHECK(r.err.find("missing.wav") != std::string::npos);
}

TEST_CASE("cli train-codebook, ispa-f transcription and determinism") {
  const auto dir = testing::temp_dir("cli_f");
  std::string inputs;
  for (int i = 0; i < 10; ++i) {
    const std::string name = "clip" + std::to_string(i) + ".wav";
    ispa::save_wav(dir / name, i % 2 ? testing::noise(1.0, static_cast<std::uint64_t>(i)) : testing::sine(200.0 + 100.0 * i, 1.0));
    inputs += " " + name;
  }
  auto r = run(dir, "train-codebook --k 8 --seed 3 --out cb.json" + inputs);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("inertia") != std::string::npos);
  CHECK(r.out.find("frames 500") != std::string::npos);
  const auto cb = ispa::load_codebook(dir / "cb.json");
  CHECK(cb.size() == 8);
  CHECK(cb.dim() == 40);
  CHECK(run(dir, "train-codebook --k 8 --seed 3 --out cb2.json" + inputs).code == 0);
  CHECK(slurp(dir / "cb.json") == slurp(dir / "cb2.json"));

  r = run(dir, "transcribe --method ispa-f --variant raw --codebook cb.json clip0.wav clip1.wav");
  REQUIRE(r.code == 0);
  std::istringstream lines(r.out);
  std::string line;
  while (std::getline(lines, line)) CHECK(ispa::split_tokens(line).size() == 50);

  r = run(dir, "transcribe --method ispa-f --codebook cb.json clip0.wav");
  CHECK(r.code == 0);
  CHECK(ispa::split_tokens(r.out).size() < 50);

  r = run(dir, "transcribe --method ispa-f --variant phn --codebook cb.json clip0.wav");
  CHECK(r.code == 1);

  ispa::FeatureSequence a, b;
  a.frames = ispa::FrameMatrix::Random(20, 40);
  b.frames = ispa::FrameMatrix::Random(20, 768);
  ispa::export_features(dir / "a.ispf", a);
  ispa::export_features(dir / "b.ispf", b);
  r = run(dir, "train-codebook --k 2 --out mixed.json a.ispf b.ispf");
  CHECK(r.code == 1);
  CHECK(r.err.find("dim mismatch") != std::string::npos);

  r = run(dir, "transcribe --method ispa-f --variant raw --codebook cb.json --features a.ispf");
  CHECK(r.code == 0);
  CHECK(ispa::split_tokens(r.out).size() == 20);
}

TEST_CASE("cli map-phones") {
  const auto dir = testing::temp_dir("cli_phones");
  ispa::Codebook cb;
  cb.feature_kind = "test";
  cb.centroids = ispa::FrameMatrix::Identity(5, 5);
  ispa::save_codebook(dir / "cb.json", cb);
  ispa::FeatureSequence f;
  f.frames = ispa::FrameMatrix::Zero(30, 5);
  f.frames.topRows(10).col(0).setOnes();
  f.frames.middleRows(10, 10).col(2).setOnes();
  f.frames.bottomRows(10).col(4).setOnes();
  ispa::export_features(dir / "u.ispf", f);
  std::ofstream(dir / "u.csv") << "start_s,end_s,phone\n0.0,0.2,a\n0.2,0.4,i\n0.4,0.6,u\n";

  auto r = run(dir, "map-phones --codebook cb.json --features u.ispf --alignment u.csv --out mapped.json");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("assigned 3 synthesized 2") != std::string::npos);
  const auto mapped = ispa::load_codebook(dir / "mapped.json");
  CHECK(*mapped.phone_labels == std::vector<std::string>{"a", "c1", "i", "c3", "u"});
  CHECK(run(dir, "map-phones --codebook cb.json --features u.ispf --alignment u.csv --out again.json").code == 0);
  CHECK(slurp(dir / "mapped.json") == slurp(dir / "again.json"));

  r = run(dir, "map-phones --codebook cb.json --features u.ispf --alignment nothere.csv --out x.json");
  CHECK(r.code == 1);
  CHECK(r.err.find("nothere.csv") != std::string::npos);

  ispa::save_wav(dir / "u.wav", testing::sine(440.0, 0.6));
  r = run(dir, "transcribe --method ispa-f --variant phn --codebook mapped.json --features u.ispf");
  CHECK(r.code == 0);
  CHECK(r.out == "a; i; u;\n");
}

TEST_CASE("cli eval") {
  const auto dir = testing::temp_dir("cli_eval");
  std::ofstream m(dir / "manifest.csv");
  m << "path,label,split\n";
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const char* splits[] = {"train", "train", "train", "train", "valid", "test"};
  for (int i = 0; i < 6; ++i) {
    const double f = 250.0 * std::exp2(u(rng));
    ispa::save_wav(dir / ("tone" + std::to_string(i) + ".wav"), testing::sine(f, 1.0));
    ispa::save_wav(dir / ("chirp" + std::to_string(i) + ".wav"), testing::chirp(f, 2.0 * f, 1.0));
    ispa::save_wav(dir / ("noise" + std::to_string(i) + ".wav"), testing::noise(1.0, static_cast<std::uint64_t>(i)));
    m << "tone" << i << ".wav,tone," << splits[i] << "\n";
    m << "chirp" << i << ".wav,chirp," << splits[i] << "\n";
    m << "noise" << i << ".wav,noise," << splits[i] << "\n";
  }
  m.close();

  auto r = run(dir, "eval --manifest manifest.csv --ngram 2 --seed 1 --seed 2 --out report.json");
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(slurp(dir / "report.json"));
  CHECK(j["accuracy"]["test"].get<double>() >= 0.9);
  CHECK(j["runs"].size() == 2);
  CHECK(j["config"]["method"] == "ispa-a");
  CHECK(j["config"]["seeds"].size() == 2);
  CHECK(run(dir, "eval --manifest manifest.csv --ngram 2 --seed 1 --seed 2 --out report2.json").code == 0);
  CHECK(slurp(dir / "report.json") == slurp(dir / "report2.json"));

  std::ofstream(dir / "notest.csv") << "path,label,split\ntone0.wav,tone,train\nchirp0.wav,chirp,train\n"
                                       "tone4.wav,tone,valid\n";
  r = run(dir, "eval --manifest notest.csv");
  CHECK(r.code == 1);
  CHECK(r.err.find("empty test split") != std::string::npos);

  std::string all;
  for (int i = 0; i < 6; ++i) all += " tone" + std::to_string(i) + ".wav noise" + std::to_string(i) + ".wav";
  REQUIRE(run(dir, "train-codebook --k 8 --out cb.json" + all).code == 0);
  r = run(dir, "eval --manifest manifest.csv --method ispa-f --variant raw --codebook cb.json");
  REQUIRE(r.code == 0);
  CHECK(nlohmann::json::parse(r.out)["tokens_per_second"].get<double>() == doctest::Approx(50.0).epsilon(0.01));
}

TEST_CASE("cli synth") {
  const auto dir = testing::temp_dir("cli_synth");
  auto r = run(dir, "synth --out rest.wav", "R/2\n");
  REQUIRE(r.code == 0);
  const auto rest = ispa::load_audio(dir / "rest.wav");
  CHECK(rest.duration() == doctest::Approx(2.0));
  CHECK(rest.samples.cwiseAbs().maxCoeff() == 0.0);

  std::ofstream(dir / "tone.txt") << "N5/2=\n";
  r = run(dir, "synth tone.txt --out tone.wav --rate 22050");
  REQUIRE(r.code == 0);
  const auto tone = ispa::load_audio(dir / "tone.wav");
  CHECK(tone.sample_rate == 22050);
  CHECK(tone.duration() == doctest::Approx(2.0));
  CHECK(ispa::encode_tokens(ispa::transcribe_a(tone)) == "N5/2=");

  r = run(dir, "synth --out bad.wav", "N5/2= N5/2?\n");
  CHECK(r.code == 1);
  CHECK(r.err.find("position 10") != std::string::npos);
  CHECK(run(dir, "synth", "R\n").code == 2);
}

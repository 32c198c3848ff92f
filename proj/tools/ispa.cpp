// ispa: transcribe audio into ISPA token text, train and label codebooks,
// run the classification harness, render tokens back to audio.

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ispa/audio_io.hpp"
#include "ispa/dsp_features.hpp"
#include "ispa/error.hpp"
#include "ispa/eval_harness.hpp"
#include "ispa/ispa_a.hpp"
#include "ispa/ispa_f.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int default_jobs() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

// Runs work(i) for i in [0, n) on up to `jobs` threads and hands each result
// to emit() in index order as soon as its prefix is complete.
template <typename T>
void run_ordered(std::size_t n, int jobs, const std::function<T(std::size_t)>& work,
                 const std::function<void(std::size_t, T&)>& emit) {
  std::vector<std::optional<T>> results(n);
  std::mutex mu;
  std::condition_variable ready;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      T r = work(i);
      std::lock_guard lock(mu);
      results[i] = std::move(r);
      ready.notify_all();
    }
  };
  const auto workers = static_cast<std::size_t>(std::clamp<int>(jobs, 1, static_cast<int>(std::max<std::size_t>(n, 1))));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(worker);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      T r = work(i);
      emit(i, r);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      std::unique_lock lock(mu);
      ready.wait(lock, [&] { return results[i].has_value(); });
      T r = std::move(*results[i]);
      results[i].reset();
      lock.unlock();
      emit(i, r);
    }
  }
  for (auto& t : pool) t.join();
}

bool is_ispf(const fs::path& p) { return p.extension() == ".ispf"; }

ispa::FeatureSequence load_features(const fs::path& p, double hop) {
  if (is_ispf(p)) return ispa::import_features(p);
  ispa::MfccConfig cfg;
  cfg.hop_seconds = hop;
  return ispa::compute_mfcc(ispa::resample(ispa::load_audio(p), ispa::kDefaultSampleRate), cfg);
}

// ---------------------------------------------------------------------------
// Transcription shared by `transcribe` and `eval`.

struct TranscribeOptions {
  std::string method = "ispa-a";
  std::string variant;
  std::string codebook_path;
  std::optional<double> lambda;
  std::optional<double> hop;
  std::string distance_domain = "semitones";
  ispa::AcousticCostConfig cost;
  double rest_threshold_db = -50.0;

  // filled by prepare()
  ispa::FeatureVariant feature_variant = ispa::FeatureVariant::Seg;
  std::optional<ispa::Codebook> codebook;

  void add_flags(CLI::App& app) {
    app.add_option("--method", method, "ispa-a or ispa-f")->check(CLI::IsMember({"ispa-a", "ispa-f"}));
    app.add_option("--variant", variant, "raw, seg or phn (ispa-f)")->check(CLI::IsMember({"raw", "seg", "phn"}));
    app.add_option("--codebook", codebook_path, "codebook JSON (ispa-f)");
    app.add_option("--lambda", lambda, "length penalty weight")->check(CLI::NonNegativeNumber);
    app.add_option("--hop", hop, "frame hop in seconds")->check(CLI::PositiveNumber);
    app.add_option("--distance-domain", distance_domain, "pitch distance units (ispa-a)")
        ->check(CLI::IsMember({"semitones", "hz"}));
    app.add_option("--voiced-penalty", cost.voiced_mismatch_penalty, "REST cost per voiced frame (ispa-a)")
        ->check(CLI::NonNegativeNumber);
    app.add_option("--unvoiced-penalty", cost.unvoiced_mismatch_penalty, "pitched cost per unvoiced frame (ispa-a)")
        ->check(CLI::NonNegativeNumber);
    app.add_option("--rest-threshold", rest_threshold_db, "median dBFS below which a segment is REST (ispa-a)");
  }

  void validate() const {
    if (method == "ispa-a" && !variant.empty()) throw UsageError("--variant is only valid with --method ispa-f");
    if (method == "ispa-f" && codebook_path.empty()) throw UsageError("--method ispa-f requires --codebook");
    if (method == "ispa-a" && !codebook_path.empty()) throw UsageError("--codebook is only valid with --method ispa-f");
  }

  void prepare() {
    if (method != "ispa-f") return;
    if (variant == "raw") feature_variant = ispa::FeatureVariant::Raw;
    else if (variant == "phn") feature_variant = ispa::FeatureVariant::Phn;
    else feature_variant = ispa::FeatureVariant::Seg;
    codebook = ispa::load_codebook(codebook_path);
  }

  nlohmann::json echo() const {
    nlohmann::json j{{"method", method}};
    if (method == "ispa-a") {
      j["distance_domain"] = distance_domain;
      j["voiced_penalty"] = cost.voiced_mismatch_penalty;
      j["unvoiced_penalty"] = cost.unvoiced_mismatch_penalty;
      j["rest_threshold_db"] = rest_threshold_db;
    }
    if (method == "ispa-f") {
      j["variant"] = variant.empty() ? "seg" : variant;
      j["codebook"] = codebook_path;
    }
    if (lambda) j["lambda"] = *lambda;
    if (hop) j["hop"] = *hop;
    return j;
  }
};

struct Transcript {
  std::string text;
  double duration = 0.0;
};

Transcript transcribe(const TranscribeOptions& opt, const std::optional<fs::path>& audio,
                      const std::optional<fs::path>& pitch, const std::optional<fs::path>& features) {
  if (opt.method == "ispa-a") {
    ispa::IspaAConfig cfg;
    if (opt.lambda) cfg.lambda = *opt.lambda;
    if (opt.hop) cfg.pitch.hop_seconds = *opt.hop;
    cfg.cost = opt.cost;
    cfg.cost.domain = opt.distance_domain == "hz" ? ispa::DistanceDomain::Hertz : ispa::DistanceDomain::Semitones;
    cfg.rest_threshold_db = opt.rest_threshold_db;
    const ispa::Waveform w = ispa::load_audio(*audio);
    std::optional<ispa::PitchTrack> track;
    if (pitch) track = ispa::import_pitch(*pitch);
    return {ispa::encode_tokens(ispa::transcribe_a(w, cfg, track)), w.duration()};
  }
  const ispa::Codebook& cb = *opt.codebook;
  const double lambda = opt.lambda.value_or(ispa::kDefaultFeatureLambda);
  ispa::FeatureSequence fs;
  double duration = 0.0;
  if (features) {
    fs = ispa::import_features(*features);
    duration = audio ? ispa::load_audio(*audio).duration() : fs.duration();
  } else {
    const ispa::Waveform w = ispa::load_audio(*audio);
    ispa::MfccConfig mc;
    mc.hop_seconds = opt.hop.value_or(cb.hop_seconds);
    fs = ispa::compute_mfcc(ispa::resample(w, ispa::kDefaultSampleRate), mc);
    duration = w.duration();
  }
  return {ispa::transcribe_f(fs, cb, opt.feature_variant, lambda), duration};
}

struct Outcome {
  std::optional<Transcript> result;
  std::string error;
};

std::ostream* open_output(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return &std::cout;
  file.open(path);
  if (!file) throw ispa::Error("cannot open for writing: " + path);
  return &file;
}

// ---------------------------------------------------------------------------

struct TranscribeCmd {
  TranscribeOptions opt;
  std::vector<std::string> inputs;
  std::vector<std::string> pitch;
  std::vector<std::string> features;
  std::string out;
  int jobs = default_jobs();

  void add(CLI::App& app) {
    opt.add_flags(app);
    app.add_option("--pitch", pitch, "external pitch CSV, one per input (ispa-a)")->allow_extra_args(false);
    app.add_option("--features", features, "ISPF file, one per input (ispa-f)")->allow_extra_args(false);
    app.add_option("--out", out, "output file (default stdout)");
    app.add_option("--jobs", jobs, "parallel files")->check(CLI::PositiveNumber);
    app.add_option("inputs", inputs, "audio files");
  }

  int run() {
    opt.validate();
    if (!pitch.empty() && opt.method != "ispa-a") throw UsageError("--pitch is only valid with --method ispa-a");
    if (!features.empty() && opt.method != "ispa-f") throw UsageError("--features is only valid with --method ispa-f");
    if (!pitch.empty() && pitch.size() != inputs.size()) throw UsageError("need one --pitch per input file");
    if (!features.empty() && !inputs.empty() && features.size() != inputs.size()) {
      throw UsageError("need one --features per input file");
    }
    const std::size_t n = std::max(inputs.size(), features.size());
    if (n == 0) throw UsageError("no input files");

    opt.prepare();
    std::ofstream file;
    std::ostream* os = open_output(out, file);
    bool failed = false;
    auto label = [&](std::size_t i) { return i < inputs.size() ? inputs[i] : features[i]; };
    run_ordered<Outcome>(
        n, jobs,
        [&](std::size_t i) {
          Outcome o;
          try {
            std::optional<fs::path> a, p, f;
            if (i < inputs.size()) a = inputs[i];
            if (!pitch.empty()) p = pitch[i];
            if (!features.empty()) f = features[i];
            o.result = transcribe(opt, a, p, f);
          } catch (const std::exception& e) {
            o.error = e.what();
          }
          return o;
        },
        [&](std::size_t i, Outcome& o) {
          if (o.result) {
            *os << o.result->text << '\n' << std::flush;
          } else {
            std::cerr << "ispa: " << label(i) << ": " << o.error << '\n';
            failed = true;
          }
        });
    return failed ? kExitFailure : kExitOk;
  }
};

struct TrainCodebookCmd {
  ispa::KMeansOptions km;
  std::vector<std::string> inputs;
  std::string out;
  double hop = 0.020;
  int jobs = default_jobs();

  void add(CLI::App& app) {
    app.add_option("--k", km.k, "number of centroids")->check(CLI::Range(2, 1 << 20));
    app.add_option("--seed", km.seed, "RNG seed");
    app.add_option("--max-iter", km.max_iterations, "Lloyd iteration cap")->check(CLI::PositiveNumber);
    app.add_option("--max-frames", km.max_frames, "subsample cap")->check(CLI::PositiveNumber);
    app.add_option("--hop", hop, "MFCC hop in seconds")->check(CLI::PositiveNumber);
    app.add_option("--jobs", jobs, "parallel files")->check(CLI::PositiveNumber);
    app.add_option("--out", out, "codebook JSON")->required();
    app.add_option("inputs", inputs, "audio or .ispf files")->required();
  }

  int run() {
    std::vector<ispa::FeatureSequence> corpus(inputs.size());
    std::string error;
    run_ordered<std::string>(
        inputs.size(), jobs,
        [&](std::size_t i) -> std::string {
          try {
            corpus[i] = load_features(inputs[i], hop);
          } catch (const std::exception& e) {
            return inputs[i] + ": " + e.what();
          }
          return {};
        },
        [&](std::size_t, std::string& e) {
          if (!e.empty() && error.empty()) error = e;
        });
    if (!error.empty()) throw ispa::Error(error);

    const bool all_ispf = std::all_of(inputs.begin(), inputs.end(), [](const std::string& p) { return is_ispf(p); });
    const std::string kind = all_ispf ? "ispf" : "mfcc";
    const ispa::KMeansResult r = ispa::train_codebook(corpus, km, kind);
    ispa::save_codebook(out, r.codebook);
    std::cout << "inertia " << r.inertia() << " frames " << r.frames_used << " iterations " << r.inertia_trace.size()
              << '\n';
    return kExitOk;
  }
};

struct MapPhonesCmd {
  std::string codebook;
  std::vector<std::string> features;
  std::vector<std::string> alignments;
  std::string out;

  void add(CLI::App& app) {
    app.add_option("--codebook", codebook, "codebook JSON")->required();
    app.add_option("--features", features, "audio or .ispf files")->required();
    app.add_option("--alignment", alignments, "phone alignment CSVs, paired with --features")->required();
    app.add_option("--out", out, "labelled codebook JSON")->required();
  }

  int run() {
    if (features.size() != alignments.size()) throw UsageError("--features and --alignment counts differ");
    const ispa::Codebook cb = ispa::load_codebook(codebook);
    std::vector<ispa::AlignedFeatures> corpus;
    for (std::size_t i = 0; i < features.size(); ++i) {
      if (!fs::exists(alignments[i])) throw ispa::Error("alignment file not found: " + alignments[i]);
      if (!fs::exists(features[i])) throw ispa::Error("features file not found: " + features[i]);
      corpus.push_back({load_features(features[i], cb.hop_seconds), ispa::import_phone_alignment(alignments[i])});
    }
    const ispa::PhoneTable table = ispa::phone_mean_vectors(corpus);
    for (const auto& w : table.warnings) std::cerr << "ispa: warning: " << w << '\n';
    if (table.entries.empty()) throw ispa::Error("no phones recovered from alignments");
    const ispa::PhoneMapping m = ispa::map_phones(cb, table);
    ispa::save_codebook(out, m.codebook);
    std::cout << "total_distance " << m.total_distance << " assigned " << m.assigned << " synthesized "
              << m.synthesized << '\n';
    return kExitOk;
  }
};

struct EvalCmd {
  TranscribeOptions opt;
  std::string manifest;
  int ngram = 2;
  std::vector<std::uint64_t> seeds;
  std::string out;
  int jobs = default_jobs();

  void add(CLI::App& app) {
    opt.add_flags(app);
    app.add_option("--manifest", manifest, "CSV with path,label,split")->required();
    app.add_option("--ngram", ngram, "max n-gram order")->check(CLI::Range(1, 3));
    app.add_option("--seed", seeds, "classifier seed (repeatable)")->allow_extra_args(false);
    app.add_option("--out", out, "report JSON (default stdout)");
    app.add_option("--jobs", jobs, "parallel files")->check(CLI::PositiveNumber);
  }

  int run() {
    opt.validate();
    if (seeds.empty()) seeds.push_back(0);
    opt.prepare();
    const std::vector<ispa::ManifestRow> rows = ispa::load_manifest(manifest);

    std::vector<ispa::EvalDocument> docs(rows.size());
    std::string error;
    run_ordered<Outcome>(
        rows.size(), jobs,
        [&](std::size_t i) {
          Outcome o;
          try {
            o.result = transcribe(opt, rows[i].path, std::nullopt, std::nullopt);
          } catch (const std::exception& e) {
            o.error = e.what();
          }
          return o;
        },
        [&](std::size_t i, Outcome& o) {
          if (!o.result) {
            if (error.empty()) error = rows[i].path.string() + ": " + o.error;
            return;
          }
          docs[i].doc.tokens = ispa::split_tokens(o.result->text);
          docs[i].doc.duration_seconds = o.result->duration;
          docs[i].doc.label = rows[i].label;
          docs[i].split = rows[i].split;
        });
    if (!error.empty()) throw ispa::Error(error);

    ispa::EvalOptions eo;
    eo.n_max = ngram;
    eo.seeds = seeds;
    const ispa::EvalReport report = ispa::evaluate(docs, eo);
    nlohmann::json config = opt.echo();
    config["manifest"] = manifest;
    config["ngram"] = ngram;
    config["seeds"] = seeds;
    std::ofstream file;
    std::ostream* os = open_output(out, file);
    *os << ispa::report_to_json(report, config).dump(2) << '\n';
    return kExitOk;
  }
};

struct SynthCmd {
  std::string input;
  std::string out;
  int rate = ispa::kDefaultSampleRate;

  void add(CLI::App& app) {
    app.add_option("--out", out, "output WAV")->required();
    app.add_option("--rate", rate, "sample rate")->check(CLI::Range(1000, 384000));
    app.add_option("input", input, "token text file (default stdin)");
  }

  int run() {
    std::string text;
    if (input.empty() || input == "-") {
      text.assign(std::istreambuf_iterator<char>(std::cin), {});
    } else {
      std::ifstream in(input);
      if (!in) throw ispa::Error("cannot open " + input);
      text.assign(std::istreambuf_iterator<char>(in), {});
    }
    ispa::save_wav(out, ispa::synthesize(ispa::parse_tokens(text), rate));
    return kExitOk;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ISPA transcription toolkit"};
  app.require_subcommand(1);

  TranscribeCmd transcribe_cmd;
  TrainCodebookCmd train_cmd;
  MapPhonesCmd map_cmd;
  EvalCmd eval_cmd;
  SynthCmd synth_cmd;
  std::function<int()> selected;

  auto* t = app.add_subcommand("transcribe", "audio to ISPA token text, one line per file");
  transcribe_cmd.add(*t);
  t->callback([&] { selected = [&] { return transcribe_cmd.run(); }; });
  auto* k = app.add_subcommand("train-codebook", "k-means codebook from audio or ISPF files");
  train_cmd.add(*k);
  k->callback([&] { selected = [&] { return train_cmd.run(); }; });
  auto* m = app.add_subcommand("map-phones", "label codebook centroids with phones");
  map_cmd.add(*m);
  m->callback([&] { selected = [&] { return map_cmd.run(); }; });
  auto* e = app.add_subcommand("eval", "transcribe a manifest and run the n-gram classifier");
  eval_cmd.add(*e);
  e->callback([&] { selected = [&] { return eval_cmd.run(); }; });
  auto* s = app.add_subcommand("synth", "render ISPA-A tokens to a WAV file");
  synth_cmd.add(*s);
  s->callback([&] { selected = [&] { return synth_cmd.run(); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kExitUsage;
  }

  try {
    return selected();
  } catch (const UsageError& err) {
    std::cerr << "ispa: usage: " << err.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& err) {
    std::cerr << "ispa: error: " << err.what() << '\n';
    return kExitFailure;
  }
}

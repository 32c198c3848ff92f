#include "ispa/ispa_f.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "ispa/assignment.hpp"
#include "ispa/error.hpp"

namespace ispa {

namespace {

using nlohmann::json;

struct PunctEntry {
  Eigen::Index length;
  std::string_view text;
};

constexpr PunctEntry kPunct[] = {{1, ""}, {2, ","}, {5, ":"}, {10, ";"}, {20, "."}, {50, ".."}};

FrameMatrix stack_corpus(const std::vector<FeatureSequence>& corpus) {
  if (corpus.empty()) throw Error("train_codebook: empty corpus");
  const Eigen::Index dim = corpus.front().dim();
  Eigen::Index total = 0;
  for (const auto& seq : corpus) {
    if (seq.dim() != dim) {
      throw Error("train_codebook: dim mismatch across corpus (" + std::to_string(dim) + " vs " +
                  std::to_string(seq.dim()) + ")");
    }
    total += seq.size();
  }
  FrameMatrix x(total, dim);
  Eigen::Index row = 0;
  for (const auto& seq : corpus) {
    x.middleRows(row, seq.size()) = seq.frames;
    row += seq.size();
  }
  return x;
}

// Index and squared distance of the nearest centroid; ties to the smaller id.
std::pair<int, double> nearest(const FrameMatrix& centroids, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < centroids.rows(); ++k) {
    const double d = (centroids.row(k) - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  return {best, best_d};
}

FrameMatrix kmeans_plus_plus(const FrameMatrix& x, int k, std::mt19937_64& rng) {
  const Eigen::Index n = x.rows();
  FrameMatrix c(k, x.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  c.row(0) = x.row(pick(rng));
  Eigen::VectorXd d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2[i] = (x.row(i) - c.row(0)).squaredNorm();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int j = 1; j < k; ++j) {
    const double total = d2.sum();
    Eigen::Index chosen = 0;
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double acc = 0.0;
      chosen = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > target && d2[i] > 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = pick(rng);
    }
    c.row(j) = x.row(chosen);
    for (Eigen::Index i = 0; i < n; ++i) d2[i] = std::min(d2[i], (x.row(i) - c.row(j)).squaredNorm());
  }
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// Codebook
// ---------------------------------------------------------------------------

std::string Codebook::symbol(int id) const {
  if (phone_labels) return (*phone_labels)[static_cast<std::size_t>(id)];
  return "c" + std::to_string(id);
}

void Codebook::validate() const {
  if (size() < 2) throw Error("codebook needs at least 2 centroids");
  if (dim() < 1) throw Error("codebook dim must be >= 1");
  if (!centroids.allFinite()) throw Error("codebook has non-finite centroids");
  if (!(hop_seconds > 0.0)) throw Error("codebook hop_seconds must be positive");
  if (phone_labels) {
    if (static_cast<Eigen::Index>(phone_labels->size()) != size()) {
      throw Error("phone_labels must have one entry per centroid");
    }
    std::vector<std::string> sorted = *phone_labels;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) throw Error("phone_labels must be distinct");
    for (const auto& s : sorted) {
      if (s.empty()) throw Error("phone_labels must be non-empty");
    }
  }
}

std::string codebook_to_json(const Codebook& cb) {
  json j;
  j["version"] = kCodebookVersion;
  j["dim"] = cb.dim();
  j["hop_seconds"] = cb.hop_seconds;
  j["feature_kind"] = cb.feature_kind;
  json rows = json::array();
  for (Eigen::Index k = 0; k < cb.size(); ++k) {
    json row = json::array();
    for (Eigen::Index d = 0; d < cb.dim(); ++d) row.push_back(cb.centroids(k, d));
    rows.push_back(std::move(row));
  }
  j["centroids"] = std::move(rows);
  j["phone_labels"] = cb.phone_labels ? json(*cb.phone_labels) : json(nullptr);
  return j.dump(1) + "\n";
}

Codebook codebook_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("codebook JSON: ") + e.what());
  }
  try {
    if (j.at("version").get<int>() != kCodebookVersion) throw FormatError("codebook version mismatch");
    Codebook cb;
    cb.hop_seconds = j.at("hop_seconds").get<double>();
    cb.feature_kind = j.at("feature_kind").get<std::string>();
    const auto dim = j.at("dim").get<Eigen::Index>();
    const auto& rows = j.at("centroids");
    cb.centroids.resize(static_cast<Eigen::Index>(rows.size()), dim);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      if (static_cast<Eigen::Index>(rows[k].size()) != dim) throw FormatError("centroid row length != dim");
      for (Eigen::Index d = 0; d < dim; ++d) {
        cb.centroids(static_cast<Eigen::Index>(k), d) = rows[k][static_cast<std::size_t>(d)].get<double>();
      }
    }
    if (j.contains("phone_labels") && !j["phone_labels"].is_null()) {
      cb.phone_labels = j["phone_labels"].get<std::vector<std::string>>();
    }
    cb.validate();
    return cb;
  } catch (const json::exception& e) {
    throw FormatError(std::string("codebook JSON: ") + e.what());
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError(std::string("codebook JSON: ") + e.what());
  }
}

void save_codebook(const std::filesystem::path& path, const Codebook& cb) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << codebook_to_json(cb);
  if (!out) throw Error("write failed: " + path.string());
}

Codebook load_codebook(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open codebook " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return codebook_from_json(ss.str());
}

// ---------------------------------------------------------------------------
// k-means
// ---------------------------------------------------------------------------

KMeansResult train_codebook(const std::vector<FeatureSequence>& corpus, const KMeansOptions& options,
                            std::string feature_kind) {
  if (options.k < 2) throw Error("train_codebook: k must be >= 2");
  FrameMatrix x = stack_corpus(corpus);
  if (x.rows() < options.k) {
    throw Error("train_codebook: fewer frames (" + std::to_string(x.rows()) + ") than clusters (" +
                std::to_string(options.k) + ")");
  }

  std::mt19937_64 rng(options.seed);
  if (x.rows() > options.max_frames) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(x.rows()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    for (Eigen::Index i = 0; i < options.max_frames; ++i) {
      std::uniform_int_distribution<Eigen::Index> pick(i, x.rows() - 1);
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
    }
    idx.resize(static_cast<std::size_t>(options.max_frames));
    std::sort(idx.begin(), idx.end());
    FrameMatrix sub(options.max_frames, x.cols());
    for (Eigen::Index i = 0; i < options.max_frames; ++i) sub.row(i) = x.row(idx[static_cast<std::size_t>(i)]);
    x = std::move(sub);
  }

  const Eigen::Index n = x.rows();
  FrameMatrix c = kmeans_plus_plus(x, options.k, rng);
  std::vector<int> assign(static_cast<std::size_t>(n));
  Eigen::VectorXd dist(n);

  KMeansResult result;
  result.frames_used = n;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    double inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto [k, d] = nearest(c, x.row(i));
      assign[static_cast<std::size_t>(i)] = k;
      dist[i] = d;
      inertia += d;
    }
    const double prev = result.inertia_trace.empty() ? 0.0 : result.inertia_trace.back();
    result.inertia_trace.push_back(inertia);
    if (result.inertia_trace.size() > 1 && (prev - inertia) <= options.tolerance * prev) break;
    if (inertia == 0.0) break;

    FrameMatrix sums = FrameMatrix::Zero(options.k, x.cols());
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(options.k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += x.row(i);
      ++counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
    }
    for (int k = 0; k < options.k; ++k) {
      if (counts[static_cast<std::size_t>(k)] > 0) {
        c.row(k) = sums.row(k) / static_cast<double>(counts[static_cast<std::size_t>(k)]);
        continue;
      }
      Eigen::Index far = 0;
      dist.maxCoeff(&far);
      c.row(k) = x.row(far);
      dist[far] = 0.0;
    }
  }

  result.codebook.centroids = std::move(c);
  result.codebook.feature_kind = std::move(feature_kind);
  result.codebook.hop_seconds = corpus.front().hop_seconds;
  return result;
}

std::vector<int> assign_frames(const FeatureSequence& features, const Codebook& cb) {
  if (features.dim() != cb.dim()) {
    throw Error("assign_frames: feature dim " + std::to_string(features.dim()) + " != codebook dim " +
                std::to_string(cb.dim()));
  }
  std::vector<int> ids(static_cast<std::size_t>(features.size()));
  for (Eigen::Index i = 0; i < features.size(); ++i) ids[static_cast<std::size_t>(i)] = nearest(cb.centroids, features.frames.row(i)).first;
  return ids;
}

// ---------------------------------------------------------------------------
// Segment cost
// ---------------------------------------------------------------------------

FeatureCostModel::FeatureCostModel(const FeatureSequence& features, const Codebook& cb, bool normalize_by_dim) {
  if (features.dim() != cb.dim()) {
    throw Error("feature dim " + std::to_string(features.dim()) + " != codebook dim " + std::to_string(cb.dim()));
  }
  const Eigen::Index n = features.size();
  const Eigen::RowVectorXd mu =
      n > 0 ? Eigen::RowVectorXd(features.frames.colwise().mean()) : Eigen::RowVectorXd::Zero(features.dim());
  centroids_ = cb.centroids.rowwise() - mu;
  centroid_norms_ = centroids_.rowwise().squaredNorm();
  prefix_sum_ = FrameMatrix::Zero(n + 1, features.dim());
  prefix_sq_ = Eigen::VectorXd::Zero(n + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::RowVectorXd f = features.frames.row(i) - mu;
    prefix_sum_.row(i + 1) = prefix_sum_.row(i) + f;
    prefix_sq_[i + 1] = prefix_sq_[i] + f.squaredNorm();
  }
  if (normalize_by_dim) scale_ = 1.0 / static_cast<double>(features.dim());
}

Eigen::VectorXd FeatureCostModel::span_distances(Eigen::Index start, Eigen::Index length) const {
  const Eigen::RowVectorXd s1 = prefix_sum_.row(start + length) - prefix_sum_.row(start);
  const double s2 = prefix_sq_[start + length] - prefix_sq_[start];
  Eigen::VectorXd d = (-2.0 * (centroids_ * s1.transpose())).array() + s2 +
                      static_cast<double>(length) * centroid_norms_.array();
  return d.cwiseMax(0.0);
}

SegmentCost FeatureCostModel::segment_cost(Eigen::Index start, Eigen::Index length) const {
  const Eigen::VectorXd d = span_distances(start, length);
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < d.size(); ++k) {
    if (d[k] < d[best]) best = k;
  }
  return SegmentCost{static_cast<int>(best), d[best] * scale_};
}

// ---------------------------------------------------------------------------
// Transcription
// ---------------------------------------------------------------------------

std::string encode_length_punct(Eigen::Index length_frames) {
  if (length_frames < 1) throw Error("encode_length_punct: length must be >= 1");
  const PunctEntry* best = &kPunct[0];
  for (const auto& e : kPunct) {
    if (std::abs(e.length - length_frames) < std::abs(best->length - length_frames)) best = &e;
  }
  return std::string(best->text);
}

std::optional<Eigen::Index> decode_length_punct(std::string_view suffix) {
  for (const auto& e : kPunct) {
    if (e.text == suffix) return e.length;
  }
  return std::nullopt;
}

std::vector<Segment> segment_features(const FeatureSequence& features, const Codebook& cb, double lambda) {
  if (features.size() < 1) throw Error("segment_features: empty feature sequence");
  const FeatureCostModel model(features, cb, /*normalize_by_dim=*/true);
  SegmentationConfig config;
  config.lambda = lambda;
  config.allowed_lengths = kFeatureSegmentLengths;
  return viterbi_segment(features.size(), model, config);
}

std::string transcribe_f(const FeatureSequence& features, const Codebook& cb, FeatureVariant variant,
                         double lambda) {
  if (features.dim() != cb.dim()) {
    throw Error("feature dim " + std::to_string(features.dim()) + " != codebook dim " + std::to_string(cb.dim()));
  }
  if (variant == FeatureVariant::Phn && !cb.phone_labels) throw Error("phn variant requires a phone-mapped codebook");

  std::string out;
  auto append = [&out](const std::string& tok) {
    if (!out.empty()) out += ' ';
    out += tok;
  };
  if (variant == FeatureVariant::Raw) {
    for (int id : assign_frames(features, cb)) append("c" + std::to_string(id));
    return out;
  }
  for (const Segment& s : segment_features(features, cb, lambda)) {
    const std::string sym = variant == FeatureVariant::Phn ? cb.symbol(s.label) : "c" + std::to_string(s.label);
    append(sym + encode_length_punct(s.length()));
  }
  return out;
}

std::vector<std::pair<std::string, Eigen::Index>> decode_feature_tokens(std::string_view text, const Codebook& cb) {
  std::vector<std::string> symbols;
  for (Eigen::Index k = 0; k < cb.size(); ++k) {
    symbols.push_back("c" + std::to_string(k));
    if (cb.phone_labels) symbols.push_back(cb.symbol(static_cast<int>(k)));
  }
  std::vector<std::pair<std::string, Eigen::Index>> out;
  std::istringstream in{std::string(text)};
  std::string tok;
  while (in >> tok) {
    std::string best_sym;
    Eigen::Index best_len = 0;
    for (const auto& sym : symbols) {
      if (sym.size() <= best_sym.size() || !std::string_view(tok).starts_with(sym)) continue;
      if (const auto len = decode_length_punct(std::string_view(tok).substr(sym.size()))) {
        best_sym = sym;
        best_len = *len;
      }
    }
    if (best_sym.empty()) throw FormatError("unrecognised ISPA-F token '" + tok + "'");
    out.emplace_back(best_sym, best_len);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Phones
// ---------------------------------------------------------------------------

PhoneTable phone_mean_vectors(const std::vector<AlignedFeatures>& corpus) {
  PhoneTable table;
  std::map<std::string, std::pair<Eigen::VectorXd, Eigen::Index>> acc;
  Eigen::Index dim = -1;
  for (std::size_t u = 0; u < corpus.size(); ++u) {
    const auto& [features, alignment] = corpus[u];
    if (dim < 0) dim = features.dim();
    if (features.dim() != dim) throw Error("phone_mean_vectors: dim mismatch across corpus");
    const double begin = features.start_time_s;
    const double end = begin + features.duration();
    for (const auto& iv : alignment) {
      double lo = iv.start_s;
      double hi = iv.end_s;
      if (lo < begin || hi > end) {
        table.warnings.push_back("utterance " + std::to_string(u) + ": interval [" + std::to_string(lo) + ", " +
                                 std::to_string(hi) + ") for '" + iv.phone + "' clipped to audio duration");
        lo = std::max(lo, begin);
        hi = std::min(hi, end);
      }
      auto& [sum, count] = acc[iv.phone];
      if (sum.size() == 0) sum = Eigen::VectorXd::Zero(dim);
      for (Eigen::Index i = 0; i < features.size(); ++i) {
        const double centre = features.start_time_s + static_cast<double>(i) * features.hop_seconds;
        if (centre >= lo && centre < hi) {
          sum += features.frames.row(i).transpose();
          ++count;
        }
      }
    }
  }
  for (auto& [phone, stats] : acc) {
    if (stats.second == 0) {
      table.warnings.push_back("phone '" + phone + "' covers no frame centre; dropped");
      continue;
    }
    table.entries.push_back(PhoneEntry{phone, stats.first / static_cast<double>(stats.second), stats.second});
  }
  return table;
}

PhoneMapping map_phones(const Codebook& cb, const PhoneTable& phones) {
  if (phones.entries.empty()) throw Error("map_phones: no phones");
  const auto n = static_cast<Eigen::Index>(phones.entries.size());
  Eigen::MatrixXd cost(n, cb.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& mean = phones.entries[static_cast<std::size_t>(i)].mean;
    if (mean.size() != cb.dim()) {
      throw Error("map_phones: phone vector dim " + std::to_string(mean.size()) + " != codebook dim " +
                  std::to_string(cb.dim()));
    }
    for (Eigen::Index k = 0; k < cb.size(); ++k) cost(i, k) = (cb.centroids.row(k) - mean.transpose()).norm();
  }
  const Assignment a = solve_assignment(cost);

  PhoneMapping out;
  out.codebook = cb;
  std::vector<std::string> labels(static_cast<std::size_t>(cb.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    const int k = a.row_to_col[static_cast<std::size_t>(i)];
    if (k < 0) continue;
    labels[static_cast<std::size_t>(k)] = phones.entries[static_cast<std::size_t>(i)].phone;
    ++out.assigned;
  }
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k].empty()) {
      labels[k] = "c" + std::to_string(k);
      ++out.synthesized;
    }
  }
  out.total_distance = a.total_cost;
  out.codebook.phone_labels = std::move(labels);
  out.codebook.validate();
  return out;
}

}  // namespace ispa

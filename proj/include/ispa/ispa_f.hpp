#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "ispa/dsp_features.hpp"
#include "ispa/segmenter.hpp"

namespace ispa {

/// k-means centroids used as the ISPA-F vocabulary.
struct Codebook {
  double hop_seconds = 0.020;
  std::string feature_kind;
  FrameMatrix centroids;  // K x dim
  std::optional<std::vector<std::string>> phone_labels;

  Eigen::Index size() const { return centroids.rows(); }
  Eigen::Index dim() const { return centroids.cols(); }

  /// Phone label when mapped, otherwise "c<id>".
  std::string symbol(int id) const;

  /// Throws when K < 2, values are non-finite, or labels are not K distinct
  /// strings.
  void validate() const;

  friend bool operator==(const Codebook& a, const Codebook& b) {
    return a.hop_seconds == b.hop_seconds && a.feature_kind == b.feature_kind &&
           a.centroids.rows() == b.centroids.rows() && a.centroids.cols() == b.centroids.cols() &&
           a.centroids == b.centroids && a.phone_labels == b.phone_labels;
  }
};

inline constexpr int kCodebookVersion = 1;

/// JSON: {version, dim, hop_seconds, feature_kind, centroids, phone_labels}.
std::string codebook_to_json(const Codebook& cb);
Codebook codebook_from_json(std::string_view text);
void save_codebook(const std::filesystem::path& path, const Codebook& cb);
Codebook load_codebook(const std::filesystem::path& path);

struct KMeansOptions {
  int k = 64;
  std::uint64_t seed = 0;
  int max_iterations = 300;
  double tolerance = 1e-4;
  Eigen::Index max_frames = 200000;
};

struct KMeansResult {
  Codebook codebook;
  /// Inertia after each assignment step; non-increasing.
  std::vector<double> inertia_trace;
  Eigen::Index frames_used = 0;

  double inertia() const { return inertia_trace.empty() ? 0.0 : inertia_trace.back(); }
};

/// k-means++ seeding followed by Lloyd iterations until the relative inertia
/// change drops below `tolerance`. Empty clusters are reseeded with the
/// point farthest from its centroid. Corpora larger than `max_frames` are
/// uniformly subsampled. Deterministic for a fixed seed.
KMeansResult train_codebook(const std::vector<FeatureSequence>& corpus, const KMeansOptions& options = {},
                            std::string feature_kind = {});

/// Nearest centroid per frame by squared Euclidean distance; ties go to the
/// smaller id.
std::vector<int> assign_frames(const FeatureSequence& features, const Codebook& cb);

/// D_k = sum over the span of ||f(t) - c_k||^2 from prefix sums
/// (sum f, sum ||f||^2, n), evaluated for every centroid. Features are
/// centred on their global mean first to limit cancellation. With
/// `normalize_by_dim` the distance is divided by the feature dimension.
class FeatureCostModel {
 public:
  FeatureCostModel(const FeatureSequence& features, const Codebook& cb, bool normalize_by_dim = false);

  SegmentCost segment_cost(Eigen::Index start, Eigen::Index length) const;

  /// Unnormalised distances to every centroid for the span.
  Eigen::VectorXd span_distances(Eigen::Index start, Eigen::Index length) const;

 private:
  FrameMatrix centroids_;  // centred
  Eigen::VectorXd centroid_norms_;
  FrameMatrix prefix_sum_;  // (n + 1) x dim
  Eigen::VectorXd prefix_sq_;
  double scale_ = 1.0;
};

enum class FeatureVariant { Raw, Seg, Phn };

inline constexpr double kDefaultFeatureLambda = 4.0;
inline const std::vector<Eigen::Index> kFeatureSegmentLengths{1, 2, 5, 10, 20, 50};

/// 1 -> "", 2 -> ",", 5 -> ":", 10 -> ";", 20 -> ".", 50 -> "..". Other
/// lengths use the nearest entry.
std::string encode_length_punct(Eigen::Index length_frames);

/// Inverse of encode_length_punct on an exact suffix.
std::optional<Eigen::Index> decode_length_punct(std::string_view suffix);

/// Viterbi segmentation over the punctuation lengths with dim-normalised
/// centroid distance.
std::vector<Segment> segment_features(const FeatureSequence& features, const Codebook& cb,
                                      double lambda = kDefaultFeatureLambda);

/// Token text for one utterance, tokens separated by single spaces.
std::string transcribe_f(const FeatureSequence& features, const Codebook& cb, FeatureVariant variant,
                         double lambda = kDefaultFeatureLambda);

/// Splits ISPA-F token text into (symbol, length) pairs. A token's symbol is
/// the longest prefix that is a known codebook symbol and leaves a valid
/// punctuation suffix.
std::vector<std::pair<std::string, Eigen::Index>> decode_feature_tokens(std::string_view text, const Codebook& cb);

// ---------------------------------------------------------------------------
// Phone mapping
// ---------------------------------------------------------------------------

struct PhoneEntry {
  std::string phone;
  Eigen::VectorXd mean;
  Eigen::Index support = 0;
};

struct PhoneTable {
  std::vector<PhoneEntry> entries;  // sorted by phone symbol
  std::vector<std::string> warnings;
};

struct AlignedFeatures {
  FeatureSequence features;
  std::vector<PhoneInterval> alignment;
};

/// Mean feature vector per phone over frames whose centre time falls in any
/// of that phone's [start, end) intervals. Intervals beyond the audio are
/// clipped and phones covering no frame are dropped, each with a warning.
PhoneTable phone_mean_vectors(const std::vector<AlignedFeatures>& corpus);

struct PhoneMapping {
  Codebook codebook;
  double total_distance = 0.0;
  int assigned = 0;
  int synthesized = 0;
};

/// One-to-one phone-to-centroid mapping minimising the summed Euclidean
/// distance. Unmatched centroids are labelled "c<id>".
PhoneMapping map_phones(const Codebook& cb, const PhoneTable& phones);

}  // namespace ispa

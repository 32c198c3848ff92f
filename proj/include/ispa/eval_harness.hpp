#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <json.hpp>

namespace ispa {

enum class Split { Train, Valid, Test };

std::string_view split_name(Split s);
Split parse_split(std::string_view text);

struct ManifestRow {
  std::filesystem::path path;  // resolved against the manifest's directory
  std::string label;
  Split split = Split::Train;
};

/// CSV with header path,label,split (any column order). Relative paths are
/// resolved against the manifest's directory.
std::vector<ManifestRow> load_manifest(const std::filesystem::path& path);

struct TokenDocument {
  std::vector<std::string> tokens;
  double duration_seconds = 0.0;
  std::optional<std::string> label;
};

/// Splits token text on whitespace.
std::vector<std::string> split_tokens(std::string_view text);

/// Total token count over total duration.
double tokens_per_second(const std::vector<TokenDocument>& docs);

using SparseCounts = Eigen::SparseMatrix<double, Eigen::RowMajor>;

inline constexpr char kNgramSeparator = '_';

/// n-gram counts of one token sequence for n = 1..n_max, n-grams joined by
/// kNgramSeparator.
std::unordered_map<std::string, int> ngram_counts(const std::vector<std::string>& tokens, int n_max);

struct NgramVocabulary {
  int n_max = 1;
  std::vector<std::string> terms;  // sorted
  std::unordered_map<std::string, int> index;

  std::size_t size() const { return terms.size(); }
};

/// Vocabulary from the given (training) documents. Throws when empty or when
/// n_max is outside [1, 3].
NgramVocabulary build_vocabulary(const std::vector<TokenDocument>& train, int n_max);

/// docs x vocab counts; n-grams missing from the vocabulary are ignored.
SparseCounts ngram_featurize(const std::vector<TokenDocument>& docs, const NgramVocabulary& vocab);

struct LabeledSplit {
  SparseCounts x;
  std::vector<int> y;
};

struct ClassifierOptions {
  std::vector<double> l2_grid{0.01, 0.1, 1.0};
  int max_epochs = 500;
  double tolerance = 1e-6;
  std::uint64_t seed = 0;
};

/// Multinomial logistic regression on L2-normalised rows with a bias term.
struct LogisticModel {
  Eigen::MatrixXd weights;  // features x classes
  Eigen::RowVectorXd bias;
  double l2 = 0.0;
  int epochs = 0;

  Eigen::MatrixXd scores(const SparseCounts& x) const;
  std::vector<int> predict(const SparseCounts& x) const;
};

/// Full-batch gradient descent on mean cross-entropy + l2/2 ||W||^2 until the
/// objective changes by less than `tolerance` or `max_epochs` is reached.
/// Weights start from a small seeded Gaussian.
LogisticModel fit_logistic(const LabeledSplit& train, int n_classes, double l2, const ClassifierOptions& options);

double accuracy(const std::vector<int>& truth, const std::vector<int>& predicted);

struct ClassifierReport {
  double train_accuracy = 0.0;
  double valid_accuracy = 0.0;
  double test_accuracy = 0.0;
  double l2 = 0.0;
  Eigen::MatrixXi confusion;  // test split, rows = truth, cols = predicted
};

/// Fits one model per l2 in the grid, keeps the best on valid (ties go to
/// the stronger regularisation) and scores all three splits. Throws on a
/// single-class training split.
ClassifierReport train_eval_classifier(const LabeledSplit& train, const LabeledSplit& valid, const LabeledSplit& test,
                                       int n_classes, const ClassifierOptions& options);

struct EvalDocument {
  TokenDocument doc;
  Split split = Split::Train;
};

struct EvalOptions {
  int n_max = 2;
  std::vector<std::uint64_t> seeds{0};
  ClassifierOptions classifier;
};

struct EvalReport {
  std::vector<std::string> classes;
  std::vector<ClassifierReport> runs;  // one per seed
  double tokens_per_second = 0.0;      // training split
  std::size_t vocabulary_size = 0;

  double mean_accuracy(Split s) const;
  double stddev_accuracy(Split s) const;
};

/// Featurises, trains and scores one run per seed. Every split must be
/// non-empty and every valid/test label must appear in train.
EvalReport evaluate(const std::vector<EvalDocument>& docs, const EvalOptions& options);

/// {accuracy: {train, valid, test}, accuracy_std, tokens_per_second,
/// confusion, classes, runs, config}. Confusion is summed over runs.
nlohmann::json report_to_json(const EvalReport& report, const nlohmann::json& config);

}  // namespace ispa

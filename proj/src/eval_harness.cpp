#include "ispa/eval_harness.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "csv.hpp"
#include "ispa/error.hpp"

namespace ispa {

namespace {

using Triplet = Eigen::Triplet<double>;

std::vector<std::string> ngrams_of(const std::vector<std::string>& tokens, int n_max) {
  std::vector<std::string> out;
  for (int n = 1; n <= n_max; ++n) {
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) {
      std::string g = tokens[i];
      for (int j = 1; j < n; ++j) {
        g += kNgramSeparator;
        g += tokens[i + static_cast<std::size_t>(j)];
      }
      out.push_back(std::move(g));
    }
  }
  return out;
}

void check_n_max(int n_max) {
  if (n_max < 1 || n_max > 3) throw Error("n_max must be in [1, 3], got " + std::to_string(n_max));
}

SparseCounts normalize_rows(const SparseCounts& x) {
  SparseCounts out = x;
  for (Eigen::Index r = 0; r < out.outerSize(); ++r) {
    double sq = 0.0;
    for (SparseCounts::InnerIterator it(out, r); it; ++it) sq += it.value() * it.value();
    if (sq <= 0.0) continue;
    const double inv = 1.0 / std::sqrt(sq);
    for (SparseCounts::InnerIterator it(out, r); it; ++it) it.valueRef() *= inv;
  }
  return out;
}

// Row-wise softmax in place; returns mean negative log-likelihood.
double softmax_nll(Eigen::MatrixXd& s, const std::vector<int>& y) {
  double nll = 0.0;
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double m = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - m).exp();
    const double z = s.row(i).sum();
    s.row(i) /= z;
    nll -= std::log(std::max(s(i, y[static_cast<std::size_t>(i)]), 1e-300));
  }
  return nll / static_cast<double>(s.rows());
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

}  // namespace

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::Train;
  if (text == "valid") return Split::Valid;
  if (text == "test") return Split::Test;
  throw FormatError("unknown split '" + std::string(text) + "' (expected train, valid or test)");
}

std::vector<ManifestRow> load_manifest(const std::filesystem::path& path) {
  const detail::CsvTable table = detail::read_csv(path);
  const int c_path = table.column("path");
  const int c_label = table.column("label");
  const int c_split = table.column("split");
  if (c_path < 0 || c_label < 0 || c_split < 0) {
    throw FormatError("manifest " + path.string() + ": missing column (need path,label,split)");
  }
  const std::filesystem::path base = path.parent_path();
  std::vector<ManifestRow> rows;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    ManifestRow row;
    row.path = r[static_cast<std::size_t>(c_path)];
    if (row.path.empty()) throw FormatError("manifest row " + std::to_string(i + 1) + ": empty path");
    if (row.path.is_relative()) row.path = base / row.path;
    row.label = r[static_cast<std::size_t>(c_label)];
    if (row.label.empty()) throw FormatError("manifest row " + std::to_string(i + 1) + ": empty label");
    row.split = parse_split(r[static_cast<std::size_t>(c_split)]);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<std::string> split_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

double tokens_per_second(const std::vector<TokenDocument>& docs) {
  if (docs.empty()) throw Error("tokens_per_second: no documents");
  double tokens = 0.0;
  double seconds = 0.0;
  for (const auto& d : docs) {
    tokens += static_cast<double>(d.tokens.size());
    seconds += d.duration_seconds;
  }
  if (!(seconds > 0.0)) throw Error("tokens_per_second: zero total duration");
  return tokens / seconds;
}

std::unordered_map<std::string, int> ngram_counts(const std::vector<std::string>& tokens, int n_max) {
  check_n_max(n_max);
  std::unordered_map<std::string, int> counts;
  for (auto& g : ngrams_of(tokens, n_max)) ++counts[g];
  return counts;
}

NgramVocabulary build_vocabulary(const std::vector<TokenDocument>& train, int n_max) {
  check_n_max(n_max);
  std::set<std::string> terms;
  for (const auto& d : train) {
    for (auto& g : ngrams_of(d.tokens, n_max)) terms.insert(std::move(g));
  }
  if (terms.empty()) throw Error("empty vocabulary");
  NgramVocabulary v;
  v.n_max = n_max;
  v.terms.assign(terms.begin(), terms.end());
  for (std::size_t i = 0; i < v.terms.size(); ++i) v.index.emplace(v.terms[i], static_cast<int>(i));
  return v;
}

SparseCounts ngram_featurize(const std::vector<TokenDocument>& docs, const NgramVocabulary& vocab) {
  if (vocab.size() == 0) throw Error("empty vocabulary");
  std::vector<Triplet> triplets;
  for (std::size_t r = 0; r < docs.size(); ++r) {
    for (const auto& g : ngrams_of(docs[r].tokens, vocab.n_max)) {
      const auto it = vocab.index.find(g);
      if (it != vocab.index.end()) triplets.emplace_back(static_cast<int>(r), it->second, 1.0);
    }
  }
  SparseCounts x(static_cast<Eigen::Index>(docs.size()), static_cast<Eigen::Index>(vocab.size()));
  x.setFromTriplets(triplets.begin(), triplets.end());  // duplicates are summed
  return x;
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd LogisticModel::scores(const SparseCounts& x) const {
  Eigen::MatrixXd s = normalize_rows(x) * weights;
  s.rowwise() += bias;
  return s;
}

std::vector<int> LogisticModel::predict(const SparseCounts& x) const {
  const Eigen::MatrixXd s = scores(x);
  std::vector<int> out(static_cast<std::size_t>(s.rows()));
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    Eigen::Index best = 0;
    s.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

LogisticModel fit_logistic(const LabeledSplit& train, int n_classes, double l2, const ClassifierOptions& options) {
  const Eigen::Index n = train.x.rows();
  const Eigen::Index v = train.x.cols();
  if (n == 0) throw Error("fit_logistic: empty training split");
  if (static_cast<Eigen::Index>(train.y.size()) != n) throw Error("fit_logistic: label count != row count");
  if (!(l2 >= 0.0)) throw Error("fit_logistic: l2 must be >= 0");

  const SparseCounts x = normalize_rows(train.x);
  const Eigen::SparseMatrix<double> xt = x.transpose();
  Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(n, n_classes);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = train.y[static_cast<std::size_t>(i)];
    if (c < 0 || c >= n_classes) throw Error("fit_logistic: label out of range");
    onehot(i, c) = 1.0;
  }

  LogisticModel m;
  m.l2 = l2;
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> init(0.0, 0.01);
  m.weights = Eigen::MatrixXd::NullaryExpr(v, n_classes, [&] { return init(rng); });
  m.bias = Eigen::RowVectorXd::Zero(n_classes);

  // Rows have unit norm, so with the bias the softmax loss is 1-smooth.
  const double step = 1.0 / (1.0 + l2);
  double prev = std::numeric_limits<double>::infinity();
  for (int epoch = 0; epoch < options.max_epochs; ++epoch) {
    Eigen::MatrixXd p = x * m.weights;
    p.rowwise() += m.bias;
    const double loss = softmax_nll(p, train.y) + 0.5 * l2 * m.weights.squaredNorm();
    m.epochs = epoch + 1;
    if (std::abs(prev - loss) < options.tolerance) break;
    prev = loss;
    const Eigen::MatrixXd g = (p - onehot) / static_cast<double>(n);
    m.weights -= step * (Eigen::MatrixXd(xt * g) + l2 * m.weights);
    m.bias -= step * g.colwise().sum();
  }
  return m;
}

double accuracy(const std::vector<int>& truth, const std::vector<int>& predicted) {
  if (truth.size() != predicted.size()) throw Error("accuracy: size mismatch");
  if (truth.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += truth[i] == predicted[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

ClassifierReport train_eval_classifier(const LabeledSplit& train, const LabeledSplit& valid, const LabeledSplit& test,
                                       int n_classes, const ClassifierOptions& options) {
  if (train.x.cols() != valid.x.cols() || train.x.cols() != test.x.cols()) {
    throw Error("train_eval_classifier: inconsistent vocabulary across splits");
  }
  if (std::set<int>(train.y.begin(), train.y.end()).size() < 2) {
    throw Error("degenerate training split: fewer than 2 classes");
  }
  if (options.l2_grid.empty()) throw Error("train_eval_classifier: empty l2 grid");

  std::optional<LogisticModel> best;
  double best_valid = -1.0;
  for (double l2 : options.l2_grid) {
    LogisticModel m = fit_logistic(train, n_classes, l2, options);
    const double acc = accuracy(valid.y, m.predict(valid.x));
    if (!best || acc > best_valid || (acc == best_valid && l2 > best->l2)) {
      best = std::move(m);
      best_valid = acc;
    }
  }

  ClassifierReport r;
  r.l2 = best->l2;
  r.train_accuracy = accuracy(train.y, best->predict(train.x));
  r.valid_accuracy = best_valid;
  const std::vector<int> pred = best->predict(test.x);
  r.test_accuracy = accuracy(test.y, pred);
  r.confusion = Eigen::MatrixXi::Zero(n_classes, n_classes);
  for (std::size_t i = 0; i < pred.size(); ++i) ++r.confusion(test.y[i], pred[i]);
  return r;
}

// ---------------------------------------------------------------------------

double EvalReport::mean_accuracy(Split s) const {
  std::vector<double> v;
  for (const auto& r : runs) v.push_back(s == Split::Train ? r.train_accuracy : s == Split::Valid ? r.valid_accuracy : r.test_accuracy);
  return v.empty() ? 0.0 : mean(v);
}

double EvalReport::stddev_accuracy(Split s) const {
  std::vector<double> v;
  for (const auto& r : runs) v.push_back(s == Split::Train ? r.train_accuracy : s == Split::Valid ? r.valid_accuracy : r.test_accuracy);
  return stddev(v);
}

EvalReport evaluate(const std::vector<EvalDocument>& docs, const EvalOptions& options) {
  if (options.seeds.empty()) throw Error("evaluate: no seeds");
  std::map<Split, std::vector<TokenDocument>> parts;
  for (const auto& d : docs) {
    if (!d.doc.label) throw Error("evaluate: document without label");
    parts[d.split].push_back(d.doc);
  }
  for (Split s : {Split::Train, Split::Valid, Split::Test}) {
    if (parts[s].empty()) throw Error("empty " + std::string(split_name(s)) + " split");
  }

  EvalReport report;
  std::set<std::string> classes;
  for (const auto& d : parts[Split::Train]) classes.insert(*d.label);
  report.classes.assign(classes.begin(), classes.end());
  auto class_of = [&](const std::string& label) {
    const auto it = std::lower_bound(report.classes.begin(), report.classes.end(), label);
    if (it == report.classes.end() || *it != label) throw Error("label '" + label + "' does not occur in train split");
    return static_cast<int>(it - report.classes.begin());
  };

  const NgramVocabulary vocab = build_vocabulary(parts[Split::Train], options.n_max);
  report.vocabulary_size = vocab.size();
  report.tokens_per_second = tokens_per_second(parts[Split::Train]);

  auto labeled = [&](Split s) {
    LabeledSplit out;
    out.x = ngram_featurize(parts[s], vocab);
    for (const auto& d : parts[s]) out.y.push_back(class_of(*d.label));
    return out;
  };
  const LabeledSplit train = labeled(Split::Train);
  const LabeledSplit valid = labeled(Split::Valid);
  const LabeledSplit test = labeled(Split::Test);

  for (std::uint64_t seed : options.seeds) {
    ClassifierOptions co = options.classifier;
    co.seed = seed;
    report.runs.push_back(train_eval_classifier(train, valid, test, static_cast<int>(report.classes.size()), co));
  }
  return report;
}

nlohmann::json report_to_json(const EvalReport& report, const nlohmann::json& config) {
  using nlohmann::json;
  json j;
  j["accuracy"] = {{"train", report.mean_accuracy(Split::Train)},
                   {"valid", report.mean_accuracy(Split::Valid)},
                   {"test", report.mean_accuracy(Split::Test)}};
  j["accuracy_std"] = {{"train", report.stddev_accuracy(Split::Train)},
                       {"valid", report.stddev_accuracy(Split::Valid)},
                       {"test", report.stddev_accuracy(Split::Test)}};
  j["tokens_per_second"] = report.tokens_per_second;
  j["classes"] = report.classes;
  j["vocabulary_size"] = report.vocabulary_size;

  const auto c = static_cast<Eigen::Index>(report.classes.size());
  Eigen::MatrixXi total = Eigen::MatrixXi::Zero(c, c);
  json runs = json::array();
  for (const auto& r : report.runs) {
    total += r.confusion;
    runs.push_back({{"train", r.train_accuracy}, {"valid", r.valid_accuracy}, {"test", r.test_accuracy}, {"l2", r.l2}});
  }
  json confusion = json::array();
  for (Eigen::Index i = 0; i < c; ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < c; ++k) row.push_back(total(i, k));
    confusion.push_back(std::move(row));
  }
  j["confusion"] = std::move(confusion);
  j["runs"] = std::move(runs);
  j["config"] = config;
  return j;
}

}  // namespace ispa

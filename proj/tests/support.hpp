#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ispa/audio_io.hpp"
#include "ispa/segmenter.hpp"

namespace testing {

inline ispa::Waveform sine(double hz, double seconds, double amp = 0.5, int sr = 16000) {
  ispa::Waveform w;
  w.sample_rate = sr;
  const auto n = static_cast<Eigen::Index>(std::llround(seconds * sr));
  w.samples = Eigen::VectorXd::NullaryExpr(n, [&](Eigen::Index i) {
    return amp * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / sr);
  });
  return w;
}

/// Exponential sweep f0 -> f1 over the whole clip.
inline ispa::Waveform chirp(double f0, double f1, double seconds, double amp = 0.5, int sr = 16000) {
  ispa::Waveform w;
  w.sample_rate = sr;
  const auto n = static_cast<Eigen::Index>(std::llround(seconds * sr));
  const double k = std::log(f1 / f0);
  w.samples = Eigen::VectorXd::NullaryExpr(n, [&](Eigen::Index i) {
    const double t = static_cast<double>(i) / sr;
    const double phase = std::abs(k) < 1e-12 ? 2.0 * std::numbers::pi * f0 * t
                                             : 2.0 * std::numbers::pi * f0 * seconds / k * (std::exp(k * t / seconds) - 1.0);
    return amp * std::sin(phase);
  });
  return w;
}

inline ispa::Waveform noise(double seconds, std::uint64_t seed, double amp = 0.3, int sr = 16000) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ispa::Waveform w;
  w.sample_rate = sr;
  w.samples = Eigen::VectorXd::NullaryExpr(static_cast<Eigen::Index>(std::llround(seconds * sr)),
                                           [&] { return amp * u(rng); });
  return w;
}

inline ispa::Waveform silence(double seconds, int sr = 16000) {
  ispa::Waveform w;
  w.sample_rate = sr;
  w.samples = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(std::llround(seconds * sr)));
  return w;
}

inline ispa::Waveform concat(const ispa::Waveform& a, const ispa::Waveform& b) {
  ispa::Waveform w;
  w.sample_rate = a.sample_rate;
  w.samples.resize(a.samples.size() + b.samples.size());
  w.samples << a.samples, b.samples;
  return w;
}

/// Span costs looked up from a random table: cost[start][length] per label.
struct TableCostModel {
  int n_labels = 3;
  std::vector<std::vector<std::vector<double>>> table;  // [start][length][label]

  TableCostModel(Eigen::Index n, int labels, std::mt19937_64& rng, bool integer_costs) : n_labels(labels) {
    std::uniform_real_distribution<double> u(0.0, 5.0);
    std::uniform_int_distribution<int> ui(0, 6);
    table.resize(static_cast<std::size_t>(n));
    for (Eigen::Index s = 0; s < n; ++s) {
      table[static_cast<std::size_t>(s)].resize(static_cast<std::size_t>(n - s + 1));
      for (Eigen::Index l = 1; s + l <= n; ++l) {
        auto& cell = table[static_cast<std::size_t>(s)][static_cast<std::size_t>(l)];
        for (int k = 0; k < labels; ++k) cell.push_back(integer_costs ? ui(rng) : u(rng));
      }
    }
  }

  ispa::SegmentCost segment_cost(Eigen::Index start, Eigen::Index length) const {
    const auto& cell = table[static_cast<std::size_t>(start)][static_cast<std::size_t>(length)];
    ispa::SegmentCost best{0, cell[0]};
    for (int k = 1; k < n_labels; ++k) {
      if (cell[static_cast<std::size_t>(k)] < best.distance) best = {k, cell[static_cast<std::size_t>(k)]};
    }
    return best;
  }
};

struct ZeroCostModel {
  ispa::SegmentCost segment_cost(Eigen::Index, Eigen::Index) const { return {0, 0.0}; }
};

/// Minimum assignment cost by enumerating every injection of the smaller
/// side into the larger one.
inline double brute_force_assignment(const Eigen::MatrixXd& c) {
  const bool t = c.rows() > c.cols();
  const Eigen::MatrixXd a = t ? Eigen::MatrixXd(c.transpose()) : c;
  std::vector<int> cols(static_cast<std::size_t>(a.cols()));
  std::iota(cols.begin(), cols.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  // Every permutation of the columns; the first rows() entries give an
  // injection. Duplicates are harmless.
  do {
    double s = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) s += a(i, cols[static_cast<std::size_t>(i)]);
    best = std::min(best, s);
  } while (std::next_permutation(cols.begin(), cols.end()));
  return best;
}

inline Eigen::MatrixXd random_int_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, int hi = 20) {
  std::uniform_int_distribution<int> u(0, hi);
  return Eigen::MatrixXd::NullaryExpr(r, c, [&] { return static_cast<double>(u(rng)); });
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("ispa_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

template <typename F>
double seconds_of(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace testing

#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ispa/error.hpp"

namespace ispa {

/// A half-open frame span [start_frame, end_frame) with the winning label of
/// its cost model and the segment's share of the objective,
/// distance + lambda * length_penalty(length).
struct Segment {
  Eigen::Index start_frame = 0;
  Eigen::Index end_frame = 0;
  int label = 0;
  double distance = 0.0;
  double cost = 0.0;
  /// Set on the trailing residue when the frame count cannot be tiled by the
  /// allowed lengths.
  bool padded = false;

  Eigen::Index length() const { return end_frame - start_frame; }
  friend bool operator==(const Segment&, const Segment&) = default;
};

struct SegmentCost {
  int label = 0;
  double distance = 0.0;
};

/// Anything that can score a span: returns the best label for
/// [start, start + length) and its distance (>= 0). Must be deterministic.
template <typename M>
concept CostModel = requires(const M& model, Eigen::Index start, Eigen::Index length) {
  { model.segment_cost(start, length) } -> std::convertible_to<SegmentCost>;
};

struct SegmentationConfig {
  double lambda = 1.0;
  /// Candidate segment lengths in frames, strictly ascending.
  std::vector<Eigen::Index> allowed_lengths{1};

  void validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error("lambda must be finite and >= 0");
    if (allowed_lengths.empty()) throw Error("allowed_lengths must not be empty");
    for (std::size_t i = 0; i < allowed_lengths.size(); ++i) {
      if (allowed_lengths[i] < 1) throw Error("allowed_lengths must be positive");
      if (i > 0 && allowed_lengths[i] <= allowed_lengths[i - 1]) {
        throw Error("allowed_lengths must be strictly ascending");
      }
    }
  }
};

/// 1 / (1 + ln(length)).
inline double length_penalty(Eigen::Index length_frames) {
  if (length_frames < 1) throw Error("length_penalty: length must be >= 1");
  return 1.0 / (1.0 + std::log(static_cast<double>(length_frames)));
}

inline double total_cost(const std::vector<Segment>& segments) {
  double sum = 0.0;
  for (const auto& s : segments) sum += s.cost;
  return sum;
}

namespace detail {

template <CostModel M>
Segment make_segment(const M& model, Eigen::Index start, Eigen::Index length, double lambda) {
  const SegmentCost sc = model.segment_cost(start, length);
  Segment s;
  s.start_frame = start;
  s.end_frame = start + length;
  s.label = sc.label;
  s.distance = sc.distance;
  s.cost = sc.distance + lambda * length_penalty(length);
  return s;
}

/// Largest t <= n that is a sum of allowed lengths (0 always is).
inline Eigen::Index largest_tileable(Eigen::Index n, const std::vector<Eigen::Index>& lengths) {
  std::vector<char> ok(static_cast<std::size_t>(n) + 1, 0);
  ok[0] = 1;
  for (Eigen::Index t = 1; t <= n; ++t) {
    for (Eigen::Index l : lengths) {
      if (l <= t && ok[static_cast<std::size_t>(t - l)]) {
        ok[static_cast<std::size_t>(t)] = 1;
        break;
      }
    }
  }
  Eigen::Index t = n;
  while (!ok[static_cast<std::size_t>(t)]) --t;
  return t;
}

template <CostModel M>
void append_padding(std::vector<Segment>& out, const M& model, Eigen::Index tiled, Eigen::Index n, double lambda) {
  if (tiled == n) return;
  Segment pad = make_segment(model, tiled, n - tiled, lambda);
  pad.padded = true;
  out.push_back(pad);
}

}  // namespace detail

/// Minimum-cost tiling of [0, n_frames) by dynamic programming:
///   best[t] = min_{l <= t} best[t - l] + D(t - l, l) + lambda * LP(l).
/// Ties prefer the longer final segment. If n_frames is not a sum of allowed
/// lengths, the largest tileable prefix is segmented and the remainder is
/// appended as one segment flagged `padded`.
template <CostModel M>
std::vector<Segment> viterbi_segment(Eigen::Index n_frames, const M& model, const SegmentationConfig& config) {
  config.validate();
  if (n_frames < 1) throw Error("viterbi_segment: n_frames must be >= 1");

  constexpr double kInf = std::numeric_limits<double>::infinity();
  const auto n = static_cast<std::size_t>(n_frames);
  std::vector<double> best(n + 1, kInf);
  std::vector<Segment> back(n + 1);
  best[0] = 0.0;

  for (std::size_t t = 1; t <= n; ++t) {
    for (auto it = config.allowed_lengths.rbegin(); it != config.allowed_lengths.rend(); ++it) {
      const auto l = static_cast<std::size_t>(*it);
      if (l > t || best[t - l] == kInf) continue;
      Segment s = detail::make_segment(model, static_cast<Eigen::Index>(t - l), static_cast<Eigen::Index>(l),
                                       config.lambda);
      const double candidate = best[t - l] + s.cost;
      if (candidate < best[t]) {
        best[t] = candidate;
        back[t] = s;
      }
    }
  }

  Eigen::Index tiled = n_frames;
  while (best[static_cast<std::size_t>(tiled)] == kInf) --tiled;

  std::vector<Segment> out;
  for (auto t = static_cast<std::size_t>(tiled); t > 0;) {
    out.push_back(back[t]);
    t = static_cast<std::size_t>(back[t].start_frame);
  }
  std::reverse(out.begin(), out.end());
  detail::append_padding(out, model, tiled, n_frames, config.lambda);
  return out;
}

inline constexpr Eigen::Index kBruteForceMaxFrames = 20;

/// Exhaustive reference for viterbi_segment. Among equal-cost tilings it
/// keeps the one whose segment lengths, read from the end, are
/// lexicographically largest, which is the order the DP back-pointers
/// produce. Guarded to n_frames <= 20.
template <CostModel M>
std::vector<Segment> brute_force_segment(Eigen::Index n_frames, const M& model, const SegmentationConfig& config) {
  config.validate();
  if (n_frames < 1) throw Error("brute_force_segment: n_frames must be >= 1");
  if (n_frames > kBruteForceMaxFrames) {
    throw Error("brute_force_segment: n_frames exceeds the enumeration guard of " +
                std::to_string(kBruteForceMaxFrames));
  }

  const Eigen::Index tiled = detail::largest_tileable(n_frames, config.allowed_lengths);
  std::vector<Segment> best;
  double best_cost = std::numeric_limits<double>::infinity();
  std::vector<Segment> current;

  auto prefer = [](const std::vector<Segment>& a, const std::vector<Segment>& b) {
    // true if a should replace b on a cost tie
    auto ia = a.rbegin();
    auto ib = b.rbegin();
    for (; ia != a.rend() && ib != b.rend(); ++ia, ++ib) {
      if (ia->length() != ib->length()) return ia->length() > ib->length();
    }
    return false;
  };

  auto recurse = [&](auto&& self, Eigen::Index pos, double acc) -> void {
    if (pos == tiled) {
      if (acc < best_cost || (acc == best_cost && prefer(current, best))) {
        best_cost = acc;
        best = current;
      }
      return;
    }
    for (Eigen::Index l : config.allowed_lengths) {
      if (pos + l > tiled) break;
      Segment s = detail::make_segment(model, pos, l, config.lambda);
      current.push_back(s);
      self(self, pos + l, acc + s.cost);
      current.pop_back();
    }
  };
  recurse(recurse, 0, 0.0);

  detail::append_padding(best, model, tiled, n_frames, config.lambda);
  return best;
}

}  // namespace ispa

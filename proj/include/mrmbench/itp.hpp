#pragma once

// Inference-time probing: per-label centroids, Euclidean distances to them,
// and a minimum-distance confidence gate.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mrmbench/error.hpp"
#include "mrmbench/repr_store.hpp"

namespace mrmbench {

struct CentroidSet {
  std::string dimension;
  std::string version;
  std::size_t d = 0;
  std::vector<std::vector<double>> centroids;
  std::vector<std::size_t> counts;

  std::size_t k() const { return centroids.size(); }
};

/// sqrt(sum (a_j - b_j)^2), accumulated in double.
template <typename A, typename B>
double distance(std::span<A> a, std::span<B> b) {
  if (a.size() != b.size())
    throw Error("itp", Errc::shape_mismatch,
                "distance between vectors of length " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double diff = static_cast<double>(a[j]) - static_cast<double>(b[j]);
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

inline constexpr std::size_t kMaxLloydIterations = 100;

/// Class means of `reps` grouped by label (k = max label + 1). With `refine`,
/// Lloyd iterations over all rows start from those means and run to an
/// assignment fixpoint or kMaxLloydIterations.
inline CentroidSet compute_centroids(const RepresentationMatrix& reps, std::span<const Label> labels,
                                     std::string dimension, std::string version, bool refine = false,
                                     std::size_t k = 0) {
  if (labels.size() != reps.rows()) throw Error("itp", Errc::shape_mismatch, "labels and representations differ in length");
  if (labels.empty()) throw Error("itp", Errc::empty_input, "no representations");
  if (!reps.all_finite()) throw Error("itp", Errc::non_finite, "non-finite representation");
  const Label top = *std::max_element(labels.begin(), labels.end());
  if (k == 0) k = static_cast<std::size_t>(top) + 1;
  if (top >= k) throw Error("itp", Errc::out_of_range, "label " + std::to_string(top) + " >= k " + std::to_string(k));

  const std::size_t d = reps.cols();
  CentroidSet set{std::move(dimension), std::move(version), d,
                  std::vector<std::vector<double>>(k, std::vector<double>(d, 0.0)), std::vector<std::size_t>(k, 0)};

  auto recompute = [&](std::span<const Label> assign) {
    std::vector<std::vector<double>> sums(k, std::vector<double>(d, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < reps.rows(); ++i) {
      auto h = reps.row(i);
      auto& s = sums[assign[i]];
      for (std::size_t j = 0; j < d; ++j) s[j] += h[j];
      ++counts[assign[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // keeps the previous centroid
      for (std::size_t j = 0; j < d; ++j) set.centroids[c][j] = sums[c][j] / static_cast<double>(counts[c]);
    }
    set.counts = counts;
  };

  recompute(labels);
  for (std::size_t c = 0; c < k; ++c)
    if (set.counts[c] == 0) throw Error("itp", Errc::empty_input, "class " + std::to_string(c) + " has no members");
  if (!refine) return set;

  std::vector<Label> assign(labels.begin(), labels.end());
  for (std::size_t iter = 0; iter < kMaxLloydIterations; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < reps.rows(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      Label arg = 0;
      for (std::size_t c = 0; c < k; ++c) {
        const double dist = distance(reps.row(i), std::span<const double>(set.centroids[c]));
        if (dist < best) {
          best = dist;
          arg = static_cast<Label>(c);
        }
      }
      changed |= arg != assign[i];
      assign[i] = arg;
    }
    if (!changed) break;
    recompute(assign);
  }
  return set;
}

struct Nearest {
  double d_min = std::numeric_limits<double>::infinity();
  std::size_t set_index = 0;
  std::size_t centroid = 0;
};

namespace detail {

inline void check_sets(std::span<const CentroidSet> sets, std::size_t d) {
  if (sets.empty()) throw Error("itp", Errc::empty_input, "no centroid sets");
  for (const auto& s : sets) {
    if (s.d != d)
      throw Error("itp", Errc::shape_mismatch,
                  "centroid set " + s.dimension + " has d=" + std::to_string(s.d) + ", representations d=" +
                      std::to_string(d));
    if (s.centroids.empty()) throw Error("itp", Errc::empty_input, "centroid set " + s.dimension + " is empty");
  }
}

}  // namespace detail

/// Smallest distance over every centroid of every set. Ties keep the earliest
/// (set, centroid) pair.
template <typename T>
Nearest min_distance(std::span<T> h, std::span<const CentroidSet> sets) {
  detail::check_sets(sets, h.size());
  Nearest best;
  for (std::size_t s = 0; s < sets.size(); ++s)
    for (std::size_t c = 0; c < sets[s].centroids.size(); ++c) {
      const double dist = distance(h, std::span<const double>(sets[s].centroids[c]));
      if (dist < best.d_min) best = {dist, s, c};
    }
  return best;
}

struct GateDecision {
  std::string id;
  double d_min = 0.0;
  std::string dimension;
  std::string version;
  std::size_t centroid = 0;
  double threshold = 0.0;
  bool accepted = false;
};

inline constexpr double kDefaultThreshold = 140.0;
inline constexpr double kThresholdSweep[] = {100.0, 120.0, 140.0, 160.0, 180.0};

/// Accepts a sample iff its minimum centroid distance is <= threshold.
inline std::vector<GateDecision> gate(const RepresentationMatrix& reps, std::span<const std::string> ids,
                                      std::span<const CentroidSet> sets, double threshold = kDefaultThreshold) {
  if (!(threshold > 0.0) || !std::isfinite(threshold))
    throw Error("itp", Errc::invalid_argument, "threshold must be a finite value > 0");
  if (ids.size() != reps.rows()) throw Error("itp", Errc::shape_mismatch, "ids and representations differ in length");
  detail::check_sets(sets, reps.cols());
  std::vector<GateDecision> out;
  out.reserve(reps.rows());
  for (std::size_t i = 0; i < reps.rows(); ++i) {
    const auto near = min_distance(reps.row(i), sets);
    const auto& s = sets[near.set_index];
    out.push_back({ids[i], near.d_min, s.dimension, s.version, near.centroid, threshold, near.d_min <= threshold});
  }
  return out;
}

/// Row-major samples x sets matrix of per-set minimum distances.
struct DistanceProfile {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::string> columns;
  std::vector<double> values;

  double operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
};

inline DistanceProfile distance_profile(const RepresentationMatrix& reps, std::span<const CentroidSet> sets) {
  detail::check_sets(sets, reps.cols());
  DistanceProfile p{reps.rows(), sets.size(), {}, std::vector<double>(reps.rows() * sets.size())};
  for (const auto& s : sets) {
    const bool shared = std::count_if(sets.begin(), sets.end(), [&](const CentroidSet& o) {
                          return o.dimension == s.dimension;
                        }) > 1;
    p.columns.push_back(shared ? s.dimension + "_" + s.version : s.dimension);
  }
  for (std::size_t i = 0; i < reps.rows(); ++i)
    for (std::size_t j = 0; j < sets.size(); ++j) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : sets[j].centroids) best = std::min(best, distance(reps.row(i), std::span<const double>(c)));
      p.values[i * p.cols + j] = best;
    }
  return p;
}

/// Linear-interpolated quantile (q in [0, 1]) of calibration d_min values.
inline double calibrate_threshold(std::vector<double> d_mins, double q) {
  if (d_mins.empty()) throw Error("itp", Errc::empty_input, "no calibration distances");
  if (!(q >= 0.0 && q <= 1.0)) throw Error("itp", Errc::invalid_argument, "quantile must lie in [0, 1]");
  std::sort(d_mins.begin(), d_mins.end());
  const double pos = q * static_cast<double>(d_mins.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, d_mins.size() - 1);
  return d_mins[lo] + (pos - static_cast<double>(lo)) * (d_mins[hi] - d_mins[lo]);
}

inline nlohmann::json to_json(const CentroidSet& s) {
  return {{"dimension", s.dimension}, {"version", s.version}, {"d", s.d}, {"centroids", s.centroids}, {"counts", s.counts}};
}

inline CentroidSet centroid_set_from_json(const nlohmann::json& j) {
  CentroidSet s;
  try {
    s.dimension = j.at("dimension").get<std::string>();
    s.version = j.at("version").get<std::string>();
    s.d = j.at("d").get<std::size_t>();
    s.centroids = j.at("centroids").get<std::vector<std::vector<double>>>();
    s.counts = j.at("counts").get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error("itp", Errc::invalid_argument, std::string("malformed centroid JSON: ") + e.what());
  }
  if (s.centroids.empty() || s.counts.size() != s.centroids.size())
    throw Error("itp", Errc::shape_mismatch, "centroid set " + s.dimension + ": centroids/counts mismatch");
  for (const auto& c : s.centroids) {
    if (c.size() != s.d) throw Error("itp", Errc::shape_mismatch, "centroid set " + s.dimension + ": wrong width");
    for (double v : c)
      if (!std::isfinite(v)) throw Error("itp", Errc::non_finite, "centroid set " + s.dimension + ": non-finite value");
  }
  return s;
}

/// Accepts a single set object or an array of sets.
inline std::vector<CentroidSet> centroid_sets_from_json(const nlohmann::json& j) {
  std::vector<CentroidSet> out;
  if (j.is_array())
    for (const auto& e : j) out.push_back(centroid_set_from_json(e));
  else
    out.push_back(centroid_set_from_json(j));
  return out;
}

inline nlohmann::json to_json(const GateDecision& g) {
  return {{"id", g.id},         {"d_min", g.d_min},         {"dimension", g.dimension}, {"version", g.version},
          {"centroid", g.centroid}, {"threshold", g.threshold}, {"accepted", g.accepted}};
}

}  // namespace mrmbench

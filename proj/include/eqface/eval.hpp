#pragma once

// Verification (TAR@FAR, ROC) and closed-set identification (rank-N) metrics
// over a reference x query cosine similarity matrix.
//
// Accept rule: a pair is accepted when score >= threshold. For a FAR target
// the threshold is the smallest observed score whose empirical FAR
// (#impostors >= t / #impostors) does not exceed the target; no
// interpolation between observed scores.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "eqface/linalg.hpp"

namespace eqface {

struct SimilarityMatrix {
  Mat values;  // rows = references, cols = queries
  std::vector<std::int64_t> ref_labels;
  std::vector<std::int64_t> query_labels;

  // values(i, j) is a genuine pair iff labels agree.
  std::vector<std::vector<bool>> same_identity() const;
};

SimilarityMatrix similarity_matrix(std::span<const Vec> refs,
                                   std::span<const std::int64_t> ref_labels,
                                   std::span<const Vec> queries,
                                   std::span<const std::int64_t> query_labels);

struct ScoreSets {
  std::vector<double> genuine;
  std::vector<double> impostor;
};

ScoreSets split_scores(const Mat& sim, const std::vector<std::vector<bool>>& same);

struct TarAtFar {
  double far_target = 0.0;
  double tar = 0.0;
  double threshold = 0.0;   // +inf when no observed score meets the target
  double far = 0.0;         // empirical FAR at the threshold
  bool achievable = true;   // false when #impostors < 1 / far_target
};

// Throws InsufficientPairs when either score set is empty.
std::vector<TarAtFar> tar_at_far(const ScoreSets& scores, std::span<const double> far_targets);
std::vector<TarAtFar> tar_at_far(const Mat& sim, const std::vector<std::vector<bool>>& same,
                                 std::span<const double> far_targets);

struct RankAccuracy {
  int n = 1;
  double accuracy = 0.0;
};

// Queries whose identity is absent from the references are skipped. Equal
// similarities rank the lower reference index first. Throws
// NoInGalleryQueries when no query can be scored.
std::vector<RankAccuracy> rank_n(const Mat& sim, std::span<const std::int64_t> ref_labels,
                                 std::span<const std::int64_t> query_labels,
                                 std::span<const int> n_values);

struct RocPoint {
  double threshold = 0.0;
  double far = 0.0;
  double tar = 0.0;
};

// One point per distinct score, in descending threshold order, framed by a
// +inf point (0, 0) and a -inf point (1, 1).
std::vector<RocPoint> roc_curve(const ScoreSets& scores);

std::string roc_to_csv(std::span<const RocPoint> points);

struct MetricRow {
  std::string metric;
  std::string operating_point;
  double value = 0.0;
};

std::string metrics_to_csv(std::span<const MetricRow> rows);

}  // namespace eqface

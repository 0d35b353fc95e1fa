#include "eqface/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "eqface/csv_io.hpp"
#include "eqface/errors.hpp"

namespace eqface {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Scored {
  double score;
  bool genuine;
};

// All scores sorted descending; ties keep no particular order, callers group
// equal scores.
std::vector<Scored> sorted_scores(const ScoreSets& s) {
  std::vector<Scored> all;
  all.reserve(s.genuine.size() + s.impostor.size());
  for (double g : s.genuine) all.push_back({g, true});
  for (double i : s.impostor) all.push_back({i, false});
  std::sort(all.begin(), all.end(),
            [](const Scored& a, const Scored& b) { return a.score > b.score; });
  return all;
}

void require_pairs(const ScoreSets& s, const char* what) {
  if (s.genuine.empty() || s.impostor.empty()) {
    throw InsufficientPairs(std::string(what) + ": need at least one genuine and one impostor pair");
  }
}

// Walks distinct score values from high to low, calling fn(threshold,
// #genuine >= threshold, #impostor >= threshold).
template <typename F>
void sweep(const std::vector<Scored>& all, F&& fn) {
  std::size_t gen = 0, imp = 0;
  for (std::size_t i = 0; i < all.size();) {
    const double t = all[i].score;
    while (i < all.size() && all[i].score == t) {
      (all[i].genuine ? gen : imp) += 1;
      ++i;
    }
    if (!fn(t, gen, imp)) return;
  }
}

}  // namespace

std::vector<std::vector<bool>> SimilarityMatrix::same_identity() const {
  std::vector<std::vector<bool>> same(ref_labels.size(),
                                      std::vector<bool>(query_labels.size(), false));
  for (std::size_t i = 0; i < ref_labels.size(); ++i) {
    for (std::size_t j = 0; j < query_labels.size(); ++j) {
      same[i][j] = ref_labels[i] == query_labels[j];
    }
  }
  return same;
}

SimilarityMatrix similarity_matrix(std::span<const Vec> refs,
                                   std::span<const std::int64_t> ref_labels,
                                   std::span<const Vec> queries,
                                   std::span<const std::int64_t> query_labels) {
  if (refs.empty() || queries.empty()) throw EmptyInput("similarity_matrix: empty side");
  if (refs.size() != ref_labels.size() || queries.size() != query_labels.size()) {
    throw DimensionMismatch("similarity_matrix: labels do not match vectors");
  }
  SimilarityMatrix out;
  out.values.resize(static_cast<Eigen::Index>(refs.size()),
                    static_cast<Eigen::Index>(queries.size()));
  for (std::size_t i = 0; i < refs.size(); ++i) {
    for (std::size_t j = 0; j < queries.size(); ++j) {
      out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          linalg::dot(refs[i], queries[j]);
    }
  }
  out.ref_labels.assign(ref_labels.begin(), ref_labels.end());
  out.query_labels.assign(query_labels.begin(), query_labels.end());
  return out;
}

ScoreSets split_scores(const Mat& sim, const std::vector<std::vector<bool>>& same) {
  if (same.size() != static_cast<std::size_t>(sim.rows())) {
    throw DimensionMismatch("split_scores: ground truth rows differ from matrix");
  }
  ScoreSets s;
  for (Eigen::Index i = 0; i < sim.rows(); ++i) {
    if (same[i].size() != static_cast<std::size_t>(sim.cols())) {
      throw DimensionMismatch("split_scores: ground truth cols differ from matrix");
    }
    for (Eigen::Index j = 0; j < sim.cols(); ++j) {
      (same[i][j] ? s.genuine : s.impostor).push_back(sim(i, j));
    }
  }
  return s;
}

std::vector<TarAtFar> tar_at_far(const ScoreSets& scores, std::span<const double> far_targets) {
  require_pairs(scores, "tar_at_far");
  const auto all = sorted_scores(scores);
  const double n_gen = static_cast<double>(scores.genuine.size());
  const double n_imp = static_cast<double>(scores.impostor.size());

  std::vector<TarAtFar> out;
  for (double target : far_targets) {
    TarAtFar r;
    r.far_target = target;
    r.achievable = n_imp * target >= 1.0;
    r.threshold = kInf;
    const double allowed = target * n_imp;
    sweep(all, [&](double t, std::size_t gen, std::size_t imp) {
      if (static_cast<double>(imp) > allowed) return false;
      r.threshold = t;
      r.tar = static_cast<double>(gen) / n_gen;
      r.far = static_cast<double>(imp) / n_imp;
      return true;
    });
    out.push_back(r);
  }
  return out;
}

std::vector<TarAtFar> tar_at_far(const Mat& sim, const std::vector<std::vector<bool>>& same,
                                 std::span<const double> far_targets) {
  return tar_at_far(split_scores(sim, same), far_targets);
}

std::vector<RankAccuracy> rank_n(const Mat& sim, std::span<const std::int64_t> ref_labels,
                                 std::span<const std::int64_t> query_labels,
                                 std::span<const int> n_values) {
  if (ref_labels.size() != static_cast<std::size_t>(sim.rows()) ||
      query_labels.size() != static_cast<std::size_t>(sim.cols())) {
    throw DimensionMismatch("rank_n: labels do not match matrix shape");
  }
  const std::set<std::int64_t> gallery(ref_labels.begin(), ref_labels.end());

  // Zero-based rank of the best correct reference for every scored query.
  std::vector<std::size_t> ranks;
  for (Eigen::Index j = 0; j < sim.cols(); ++j) {
    if (!gallery.contains(query_labels[j])) continue;
    Eigen::Index best = -1;
    for (Eigen::Index i = 0; i < sim.rows(); ++i) {
      if (ref_labels[i] != query_labels[j]) continue;
      if (best < 0 || sim(i, j) > sim(best, j)) best = i;
    }
    std::size_t rank = 0;
    for (Eigen::Index i = 0; i < sim.rows(); ++i) {
      if (sim(i, j) > sim(best, j) || (sim(i, j) == sim(best, j) && i < best)) ++rank;
    }
    ranks.push_back(rank);
  }
  if (ranks.empty()) throw NoInGalleryQueries("rank_n: no query identity is in the gallery");

  std::vector<RankAccuracy> out;
  for (int n : n_values) {
    std::size_t hits = 0;
    for (std::size_t r : ranks) {
      if (static_cast<long long>(r) < n) ++hits;
    }
    out.push_back({n, static_cast<double>(hits) / static_cast<double>(ranks.size())});
  }
  return out;
}

std::vector<RocPoint> roc_curve(const ScoreSets& scores) {
  require_pairs(scores, "roc_curve");
  const auto all = sorted_scores(scores);
  const double n_gen = static_cast<double>(scores.genuine.size());
  const double n_imp = static_cast<double>(scores.impostor.size());
  std::vector<RocPoint> out{{kInf, 0.0, 0.0}};
  sweep(all, [&](double t, std::size_t gen, std::size_t imp) {
    out.push_back({t, static_cast<double>(imp) / n_imp, static_cast<double>(gen) / n_gen});
    return true;
  });
  out.push_back({-kInf, 1.0, 1.0});
  return out;
}

std::string roc_to_csv(std::span<const RocPoint> points) {
  std::ostringstream os;
  os << "threshold,far,tar\n";
  for (const auto& p : points) {
    os << format_double(p.threshold) << ',' << format_double(p.far) << ','
       << format_double(p.tar) << '\n';
  }
  return os.str();
}

std::string metrics_to_csv(std::span<const MetricRow> rows) {
  std::ostringstream os;
  os << "metric,operating_point,value\n";
  for (const auto& r : rows) {
    os << r.metric << ',' << r.operating_point << ',' << format_double(r.value) << '\n';
  }
  return os.str();
}

}  // namespace eqface

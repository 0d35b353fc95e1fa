#pragma once

// Slow, independent reference implementations used to cross-check the
// library. Nothing here shares code with src/.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "eqface/eval.hpp"
#include "eqface/linalg.hpp"

namespace oracle {

inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

// Central difference of a scalar function of one variable.
template <typename F>
long double central_diff(F&& f, long double h) {
  return (f(h) - f(-h)) / (2 * h);
}

inline eqface::Vec random_unit(std::mt19937_64& rng, int d) {
  std::normal_distribution<double> n(0, 1);
  eqface::Vec v(d);
  for (int i = 0; i < d; ++i) v(i) = n(rng);
  return v / v.norm();
}

inline eqface::Mat random_unit_columns(std::mt19937_64& rng, int d, int n) {
  eqface::Mat w(d, n);
  for (int j = 0; j < n; ++j) w.col(j) = random_unit(rng, d);
  return w;
}

// Counts of scores >= t in a sorted (ascending) vector.
inline std::size_t count_at_least(const std::vector<double>& sorted, double t) {
  return static_cast<std::size_t>(sorted.end() -
                                  std::lower_bound(sorted.begin(), sorted.end(), t));
}

struct TarResult {
  double tar;
  double threshold;
  double far;
};

// Enumerates every observed score (plus +inf) as a candidate threshold and
// keeps the smallest one whose FAR is within the target.
inline TarResult tar_at_far(const std::vector<double>& genuine, const std::vector<double>& impostor,
                            double target) {
  std::vector<double> g = genuine, im = impostor;
  std::sort(g.begin(), g.end());
  std::sort(im.begin(), im.end());
  std::set<double> candidates(g.begin(), g.end());
  candidates.insert(im.begin(), im.end());
  TarResult best{0.0, std::numeric_limits<double>::infinity(), 0.0};
  for (double t : candidates) {
    const double far = static_cast<double>(count_at_least(im, t)) / im.size();
    if (static_cast<double>(count_at_least(im, t)) <= target * im.size() && t < best.threshold) {
      best = {static_cast<double>(count_at_least(g, t)) / g.size(), t, far};
    }
  }
  return best;
}

inline std::vector<eqface::RocPoint> roc(const std::vector<double>& genuine,
                                         const std::vector<double>& impostor) {
  std::vector<double> g = genuine, im = impostor;
  std::sort(g.begin(), g.end());
  std::sort(im.begin(), im.end());
  std::set<double> candidates(g.begin(), g.end());
  candidates.insert(im.begin(), im.end());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<eqface::RocPoint> out{{inf, 0.0, 0.0}};
  for (auto it = candidates.rbegin(); it != candidates.rend(); ++it) {
    out.push_back({*it, static_cast<double>(count_at_least(im, *it)) / im.size(),
                   static_cast<double>(count_at_least(g, *it)) / g.size()});
  }
  out.push_back({-inf, 1.0, 1.0});
  return out;
}

// Full sort of every reference per query.
inline double rank_accuracy(const eqface::Mat& sim, const std::vector<std::int64_t>& ref_labels,
                            const std::vector<std::int64_t>& query_labels, int n) {
  std::set<std::int64_t> gallery(ref_labels.begin(), ref_labels.end());
  std::size_t scored = 0, hits = 0;
  for (Eigen::Index j = 0; j < sim.cols(); ++j) {
    if (!gallery.count(query_labels[j])) continue;
    ++scored;
    std::vector<Eigen::Index> order(sim.rows());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
      if (sim(a, j) != sim(b, j)) return sim(a, j) > sim(b, j);
      return a < b;
    });
    for (int k = 0; k < n && k < static_cast<int>(order.size()); ++k) {
      if (ref_labels[order[k]] == query_labels[j]) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / scored;
}

// Spearman rank correlation with average ranks for ties.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace oracle

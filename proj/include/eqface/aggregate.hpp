#pragma once

// Quality-weighted feature aggregation.
//
//  * qwfa: normalize(sum s_j f_j / sum s_j)
//  * qwfaf: qwfa restricted to s_j >= s_th when mean(s) >= s_th, otherwise the
//    unweighted normalized mean of every feature
//  * progressive: online fusion gated by a similarity and a quality threshold
//
// The progressive state keeps the weighted sum unnormalized and only
// normalizes on read, so with both gates disabled it reproduces qwfa.

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include "eqface/errors.hpp"
#include "eqface/linalg.hpp"

namespace eqface {

inline constexpr double kMinQualityMass = 1e-12;

template <typename Scalar>
struct FeatureRecordT {
  VecT<Scalar> f;  // unit norm
  Scalar s{0};     // quality in (0, 1)
  std::int64_t identity = 0;
  std::int64_t order = 0;
};

using FeatureRecord = FeatureRecordT<double>;

namespace detail {

// Accumulates sum s_j f_j and sum s_j in input order. Shared by the batch and
// progressive paths so both produce the same bits for the same order. While
// every weight is identical the read-out is the plain mean sum f_j / n, so
// equal qualities reproduce the unweighted mean exactly.
template <typename Scalar>
struct WeightedSum {
  VecT<Scalar> acc;
  VecT<Scalar> plain;
  Scalar mass{0};
  Scalar first{0};
  std::int64_t count = 0;
  bool uniform = true;

  void add(const VecT<Scalar>& f, Scalar s) {
    if (count == 0) {
      acc = VecT<Scalar>::Zero(f.size());
      plain = VecT<Scalar>::Zero(f.size());
      first = s;
    } else if (acc.size() != f.size()) {
      throw DimensionMismatch("aggregate: feature dims differ");
    }
    uniform = uniform && s == first;
    for (Eigen::Index i = 0; i < f.size(); ++i) {
      acc(i) += s * f(i);
      plain(i) += f(i);
    }
    mass += s;
    ++count;
  }

  VecT<Scalar> read() const {
    if (!(mass >= Scalar(kMinQualityMass))) {
      throw ZeroQualityMass("aggregate: total quality below 1e-12");
    }
    VecT<Scalar> mean(acc.size());
    const Scalar n(static_cast<double>(count));
    for (Eigen::Index i = 0; i < acc.size(); ++i) {
      mean(i) = uniform ? plain(i) / n : acc(i) / mass;
    }
    return linalg::l2_normalize(mean);
  }

  bool operator==(const WeightedSum&) const = default;
};

}  // namespace detail

template <typename Scalar>
VecT<Scalar> qwfa(std::span<const FeatureRecordT<Scalar>> records) {
  if (records.empty()) throw EmptyInput("qwfa: no records");
  detail::WeightedSum<Scalar> sum;
  for (const auto& r : records) sum.add(r.f, r.s);
  return sum.read();
}

/// Unweighted mean of the features, L2-normalized.
template <typename Scalar>
VecT<Scalar> mean_aggregate(std::span<const FeatureRecordT<Scalar>> records) {
  if (records.empty()) throw EmptyInput("mean_aggregate: no records");
  detail::WeightedSum<Scalar> sum;
  for (const auto& r : records) sum.add(r.f, Scalar(1));
  return sum.read();
}

template <typename Scalar>
VecT<Scalar> qwfaf(std::span<const FeatureRecordT<Scalar>> records, Scalar s_th) {
  if (records.empty()) throw EmptyInput("qwfaf: no records");
  Scalar total(0);
  for (const auto& r : records) total += r.s;
  const Scalar mean_s = total / Scalar(static_cast<double>(records.size()));
  if (!(mean_s >= s_th)) return mean_aggregate(records);

  detail::WeightedSum<Scalar> sum;
  for (const auto& r : records) {
    if (r.s >= s_th) sum.add(r.f, r.s);
  }
  return sum.read();
}

template <typename Scalar>
struct AggregateStateT {
  detail::WeightedSum<Scalar> sum;
  Scalar f_th{-1};
  Scalar s_th{0};
  std::int64_t count_accepted = 0;

  Scalar s_sum() const { return sum.mass; }
  // Current fused feature (unit norm).
  VecT<Scalar> fused() const { return sum.read(); }

  bool operator==(const AggregateStateT& o) const {
    return sum == o.sum && f_th == o.f_th && s_th == o.s_th &&
           count_accepted == o.count_accepted;
  }
};

using AggregateState = AggregateStateT<double>;

/// Seeds the state with the first record, regardless of the thresholds.
template <typename Scalar>
AggregateStateT<Scalar> progressive_init(const FeatureRecordT<Scalar>& first,
                                         Scalar f_th, Scalar s_th) {
  AggregateStateT<Scalar> state;
  state.f_th = f_th;
  state.s_th = s_th;
  state.sum.add(first.f, first.s);
  state.count_accepted = 1;
  return state;
}

/// Accepts `rec` when fused . f > f_th and s > s_th (both strict); otherwise
/// returns the state unchanged.
template <typename Scalar>
AggregateStateT<Scalar> progressive_update(const AggregateStateT<Scalar>& state,
                                           const FeatureRecordT<Scalar>& rec) {
  const Scalar similarity = linalg::dot(state.fused(), rec.f);
  if (!(similarity > state.f_th && rec.s > state.s_th)) return state;
  AggregateStateT<Scalar> next = state;
  next.sum.add(rec.f, rec.s);
  next.count_accepted += 1;
  return next;
}

// Runs a whole stream through init/update; optionally caps the number of
// records consumed (0 = no cap).
template <typename Scalar>
AggregateStateT<Scalar> progressive_fuse(std::span<const FeatureRecordT<Scalar>> stream,
                                         Scalar f_th, Scalar s_th,
                                         std::size_t max_records = 0) {
  if (stream.empty()) throw EmptyInput("progressive_fuse: empty stream");
  const std::size_t n =
      max_records == 0 ? stream.size() : std::min(stream.size(), max_records);
  auto state = progressive_init(stream[0], f_th, s_th);
  for (std::size_t i = 1; i < n; ++i) state = progressive_update(state, stream[i]);
  return state;
}

// Non-template entry points so containers of FeatureRecord convert to span.
inline Vec qwfa(std::span<const FeatureRecord> records) { return qwfa<double>(records); }
inline Vec mean_aggregate(std::span<const FeatureRecord> records) {
  return mean_aggregate<double>(records);
}
inline Vec qwfaf(std::span<const FeatureRecord> records, double s_th) {
  return qwfaf<double>(records, s_th);
}
inline AggregateState progressive_fuse(std::span<const FeatureRecord> stream, double f_th,
                                       double s_th, std::size_t max_records = 0) {
  return progressive_fuse<double>(stream, f_th, s_th, max_records);
}

}  // namespace eqface

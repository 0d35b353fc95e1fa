#include "eqface/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <unordered_map>

#include "eqface/errors.hpp"

namespace eqface {
namespace {

// Independent, reproducible stream per purpose.
std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

enum Stream : std::uint64_t { kPrototypes = 1, kLift = 2, kSamples = 3, kSplit = 4 };

Vec gaussian(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

}  // namespace

void GenConfig::validate() const {
  if (n_classes < 2) throw InvalidConfig("gen: n_classes must be >= 2");
  if (samples_per_class < 1) throw InvalidConfig("gen: samples_per_class must be >= 1");
  if (d_in < 1) throw InvalidConfig("gen: d_in must be >= 1");
  if (d < 2) throw InvalidConfig("gen: d must be >= 2");
  if (!(observation_noise >= 0)) throw InvalidConfig("gen: observation_noise must be >= 0");
  if (noise_levels.empty()) throw InvalidConfig("gen: noise_levels is empty");
  double total = 0;
  std::set<double> distinct;
  for (const auto& level : noise_levels) {
    if (!(level.sigma >= 0) || !std::isfinite(level.sigma)) {
      throw InvalidConfig("gen: noise sigma must be finite and >= 0");
    }
    if (!(level.fraction >= 0 && level.fraction <= 1)) {
      throw InvalidConfig("gen: noise fraction must lie in [0, 1]");
    }
    total += level.fraction;
    distinct.insert(level.sigma);
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw InvalidConfig("gen: noise fractions must sum to 1");
  }
  if (distinct.size() < 2) {
    throw InvalidConfig("gen: at least two distinct noise sigmas are required");
  }
}

std::vector<int> samples_per_level(const GenConfig& cfg) {
  const std::size_t k = cfg.noise_levels.size();
  std::vector<int> counts(k);
  std::vector<double> remainder(k);
  int assigned = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double exact = cfg.noise_levels[i].fraction * cfg.samples_per_class;
    counts[i] = static_cast<int>(std::floor(exact + 1e-9));
    remainder[i] = exact - counts[i];
    assigned += counts[i];
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < cfg.samples_per_class; i = (i + 1) % k) {
    counts[order[i]] += 1;
    ++assigned;
  }
  return counts;
}

Dataset generate(const GenConfig& cfg) {
  cfg.validate();
  Dataset out;

  auto proto_rng = make_rng(cfg.seed, kPrototypes);
  out.prototypes.reserve(cfg.n_classes);
  for (int c = 0; c < cfg.n_classes; ++c) {
    out.prototypes.push_back(linalg::l2_normalize(gaussian(proto_rng, cfg.d)));
  }

  auto lift_rng = make_rng(cfg.lift_seed.value_or(cfg.seed), kLift);
  out.lift.resize(cfg.d_in, cfg.d);
  {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int r = 0; r < cfg.d_in; ++r) {
      for (int c = 0; c < cfg.d; ++c) out.lift(r, c) = normal(lift_rng);
    }
  }

  const std::vector<int> counts = samples_per_level(cfg);
  auto sample_rng = make_rng(cfg.seed, kSamples);
  out.samples.reserve(static_cast<std::size_t>(cfg.n_classes) * cfg.samples_per_class);
  std::uint64_t next_id = 0;
  for (int c = 0; c < cfg.n_classes; ++c) {
    for (std::size_t level = 0; level < counts.size(); ++level) {
      const double sigma = cfg.noise_levels[level].sigma;
      for (int k = 0; k < counts[level]; ++k) {
        EmbeddingSample s;
        const Vec g = gaussian(sample_rng, cfg.d);
        Vec noisy = out.prototypes[c];
        linalg::axpy(sigma, g, noisy);
        s.f_true = linalg::l2_normalize(noisy);
        s.x = linalg::matvec(out.lift, s.f_true);
        const Vec obs = gaussian(sample_rng, cfg.d_in);
        linalg::axpy(cfg.observation_noise, obs, s.x);
        s.label = c;
        s.sigma_gt = sigma;
        s.sample_id = next_id++;
        out.samples.push_back(std::move(s));
      }
    }
  }
  return out;
}

ReferenceQuerySplit split_reference_query(const std::vector<EmbeddingSample>& samples,
                                          int n_ref_ids, int n_ref_per_id,
                                          int n_query_per_id, int n_disturb_ids,
                                          std::uint64_t seed) {
  if (n_ref_ids < 1 || n_ref_per_id < 1 || n_query_per_id < 1 || n_disturb_ids < 0) {
    throw InvalidConfig("split: counts must be positive");
  }
  std::vector<int> labels;
  std::unordered_map<int, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto [it, inserted] = by_label.try_emplace(samples[i].label);
    if (inserted) labels.push_back(samples[i].label);
    it->second.push_back(i);
  }
  std::sort(labels.begin(), labels.end());

  auto rng = make_rng(seed, kSplit);
  std::shuffle(labels.begin(), labels.end(), rng);

  const auto needed_ids = static_cast<std::size_t>(n_ref_ids) + n_disturb_ids;
  if (labels.size() < needed_ids) {
    throw InsufficientData("split: need " + std::to_string(needed_ids) +
                           " identities, dataset has " + std::to_string(labels.size()));
  }

  ReferenceQuerySplit split;
  std::vector<std::pair<int, std::vector<std::size_t>>> chosen;
  auto take = [&](int label, std::size_t need) {
    std::vector<std::size_t> idx = by_label.at(label);
    if (idx.size() < need) {
      throw InsufficientData("split: identity " + std::to_string(label) + " has " +
                             std::to_string(idx.size()) + " samples, need " +
                             std::to_string(need));
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(need);
    chosen.emplace_back(label, idx);
    return idx;
  };

  for (int i = 0; i < n_ref_ids; ++i) {
    const int label = labels[i];
    split.gallery_ids.push_back(label);
    const auto idx = take(label, static_cast<std::size_t>(n_ref_per_id) + n_query_per_id);
    for (int k = 0; k < n_ref_per_id; ++k) split.reference.push_back(samples[idx[k]]);
    for (int k = 0; k < n_query_per_id; ++k) {
      split.query.push_back(samples[idx[n_ref_per_id + k]]);
    }
  }
  for (int i = 0; i < n_disturb_ids; ++i) {
    const int label = labels[n_ref_ids + i];
    split.disturbance_ids.push_back(label);
    for (std::size_t k : take(label, n_query_per_id)) split.query.push_back(samples[k]);
  }
  std::vector<bool> used(samples.size(), false);
  for (const auto& [label, idx] : chosen) {
    for (std::size_t k : idx) used[k] = true;
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!used[i]) split.unused.push_back(samples[i]);
  }
  return split;
}

}  // namespace eqface

#pragma once

// Synthetic labeled data on the unit hypersphere with known per-sample
// corruption. Each class has a prototype p; a sample is
//
//   f_true = normalize(p + sigma * g)         g ~ N(0, I_d)
//   x      = A f_true + 0.01 * g'             g' ~ N(0, I_{d_in})
//
// with A a seeded d_in x d standard Gaussian matrix shared by the dataset
// (so every input coordinate has unit variance). sigma is recorded as
// the ground-truth (inverse) quality.

#include <cstdint>
#include <optional>
#include <vector>

#include "eqface/linalg.hpp"

namespace eqface {

struct NoiseLevel {
  double sigma = 0.0;
  double fraction = 1.0;
};

struct GenConfig {
  int n_classes = 50;
  int samples_per_class = 40;
  int d_in = 32;
  int d = 16;
  std::vector<NoiseLevel> noise_levels{{0.1, 0.7}, {1.0, 0.3}};
  std::uint64_t seed = 1;
  // Seed of the lifting matrix A. Datasets that share it live in the same
  // input space, so a model trained on one can embed the other.
  std::optional<std::uint64_t> lift_seed;
  double observation_noise = 0.01;

  void validate() const;
};

struct EmbeddingSample {
  Vec x;
  int label = 0;
  double sigma_gt = 0.0;
  std::uint64_t sample_id = 0;
  Vec f_true;  // clean embedding; empty when loaded from CSV
};

struct Dataset {
  std::vector<EmbeddingSample> samples;
  std::vector<Vec> prototypes;
  Mat lift;  // d_in x d
};

Dataset generate(const GenConfig& cfg);

// Number of samples of one class drawn at each noise level (largest-remainder
// rounding of fraction * samples_per_class).
std::vector<int> samples_per_level(const GenConfig& cfg);

struct ReferenceQuerySplit {
  std::vector<EmbeddingSample> reference;
  std::vector<EmbeddingSample> query;
  std::vector<int> gallery_ids;
  std::vector<int> disturbance_ids;
  std::vector<EmbeddingSample> unused;  // neither side, in input order
};

// Picks n_ref_ids gallery identities and n_disturb_ids extra identities at
// random. Gallery identities contribute n_ref_per_id reference samples and a
// disjoint n_query_per_id query samples; disturbance identities contribute
// query samples only. Samples left over (usable for training on the same
// identities) are returned in `unused`.
ReferenceQuerySplit split_reference_query(const std::vector<EmbeddingSample>& samples,
                                          int n_ref_ids, int n_ref_per_id,
                                          int n_query_per_id, int n_disturb_ids,
                                          std::uint64_t seed);

}  // namespace eqface

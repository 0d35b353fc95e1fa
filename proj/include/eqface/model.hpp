#pragma once

// Two-branch embedding network:
//
//   backbone:  x -> W1 x + b1 -> relu -> W2 h + b2 = f_raw,  f = f_raw / |f_raw|
//   quality:   f_raw -> FC -> BN -> relu -> FC -> sigmoid = s
//   classifier W (d x n), columns renormalized at use time
//
// The quality branch reads the unnormalized backbone output.

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "eqface/linalg.hpp"

namespace eqface {

enum class Component { backbone, quality, classifier };

std::string_view to_string(Component c);

struct ModelDims {
  int d_in = 32;
  int hidden = 64;
  int d = 16;
  int q = 4;  // quality branch width; d / 4 unless set
  int n_classes = 50;

  void validate() const;
  bool operator==(const ModelDims&) const = default;
};

inline constexpr double kBnEpsilon = 1e-5;
inline constexpr double kBnMomentum = 0.9;
// Quality logits are clamped to this magnitude so s stays strictly in (0, 1).
inline constexpr double kQualityLogitClamp = 30.0;

struct BackboneParams {
  Mat w1;  // hidden x d_in
  Vec b1;
  Mat w2;  // d x hidden
  Vec b2;

  template <typename F>
  void for_each(F&& f) {
    f("w1", w1); f("b1", b1); f("w2", w2); f("b2", b2);
  }
  template <typename F>
  void for_each(F&& f) const {
    f("w1", w1); f("b1", b1); f("w2", w2); f("b2", b2);
  }
  bool operator==(const BackboneParams&) const = default;
};

struct QualityParams {
  Mat w1;  // q x d
  Vec b1;
  Vec gamma;
  Vec beta;
  Mat w2;  // 1 x q
  Vec b2;  // size 1

  template <typename F>
  void for_each(F&& f) {
    f("w1", w1); f("b1", b1); f("gamma", gamma); f("beta", beta); f("w2", w2); f("b2", b2);
  }
  template <typename F>
  void for_each(F&& f) const {
    f("w1", w1); f("b1", b1); f("gamma", gamma); f("beta", beta); f("w2", w2); f("b2", b2);
  }
  bool operator==(const QualityParams&) const = default;
};

struct BatchNormState {
  Vec running_mean;
  Vec running_var;
  bool operator==(const BatchNormState&) const = default;
};

struct ClassifierParams {
  Mat w;  // d x n_classes

  template <typename F>
  void for_each(F&& f) {
    f("w", w);
  }
  template <typename F>
  void for_each(F&& f) const {
    f("w", w);
  }
  bool operator==(const ClassifierParams&) const = default;
};

struct FreezeMask {
  bool backbone = false;
  bool quality = false;
  bool classifier = false;

  bool& operator[](Component c);
  bool operator[](Component c) const;
  bool operator==(const FreezeMask&) const = default;
};

struct Model {
  ModelDims dims;
  BackboneParams backbone;
  QualityParams quality;
  BatchNormState bn;
  ClassifierParams classifier;
  FreezeMask frozen;

  void freeze(Component c) { frozen[c] = true; }
  void unfreeze(Component c) { frozen[c] = false; }
  bool is_frozen(Component c) const { return frozen[c]; }

  // Classifier with every column scaled to unit norm.
  Mat normalized_classifier() const;

  bool operator==(const Model&) const = default;
};

// Scaled Gaussian weights (std 1/sqrt(fan_in)), zero biases, BN gamma 1 /
// beta 0 / running mean 0 / running var 1, unit-norm classifier columns.
Model init_model(const ModelDims& dims, std::uint64_t seed);

// Redraws backbone and classifier only, leaving the quality branch alone.
void reinit_backbone_and_classifier(Model& model, std::uint64_t seed);

enum class Mode { train, eval };

struct ForwardResult {
  Vec x;
  Vec hidden_pre;
  Vec hidden;
  Vec f_raw;
  Vec f;
  Vec branch_pre;   // FC1 output
  Vec branch_hat;   // BN-normalized
  Vec branch_bn;    // gamma * hat + beta
  Vec branch_act;   // relu
  double quality_logit = 0.0;
  bool logit_clamped = false;
  double s = 0.5;

  bool has_cache() const {
    return x.size() > 0 && hidden.size() > 0 && f_raw.size() > 0 && branch_hat.size() > 0;
  }
};

// Statistics the BN layer normalized with: batch stats in train mode, running
// stats in eval mode.
struct BatchStats {
  Mode mode = Mode::eval;
  Vec mean;
  Vec var;
};

struct BatchForward {
  std::vector<ForwardResult> samples;
  BatchStats bn;
};

// Forward over a batch. In train mode BN uses the batch statistics (returned
// in `bn`); the running statistics are not touched, see update_running_stats.
BatchForward forward_batch(const Model& model, std::span<const Vec> xs, Mode mode);

// Single-sample eval-mode forward. Pure in (model, x).
ForwardResult forward(const Model& model, const Vec& x);

// running = momentum * running + (1 - momentum) * batch
void update_running_stats(Model& model, const BatchStats& stats);

// Gradients for the unfrozen, routed components only.
struct Gradients {
  std::optional<BackboneParams> backbone;
  std::optional<QualityParams> quality;
  std::optional<ClassifierParams> classifier;

  bool empty() const { return !backbone && !quality && !classifier; }
};

// Flat view of one parameter tensor (column-major storage).
struct TensorSpan {
  std::string_view name;
  double* data;
  Eigen::Index rows;
  Eigen::Index cols;

  Eigen::Index size() const { return rows * cols; }
};

// Callers holding a const Params must not write through the spans.
template <typename Params>
std::vector<TensorSpan> tensor_spans(Params& params) {
  std::vector<TensorSpan> out;
  params.for_each([&](std::string_view name, auto& t) {
    out.push_back({name, const_cast<double*>(t.data()), t.rows(), t.cols()});
  });
  return out;
}

BackboneParams zeros_like(const BackboneParams& p);
QualityParams zeros_like(const QualityParams& p);
ClassifierParams zeros_like(const ClassifierParams& p);

}  // namespace eqface

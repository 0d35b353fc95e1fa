#pragma once

// Momentum SGD and the three-step training pipeline:
//
//   Step 1  s = 1; train backbone + classifier, quality branch frozen
//   Step 2  backbone + classifier frozen; s from the live quality branch,
//           only the branch is trained
//   Step 3  branch frozen; s taken from a per-sample table computed by the
//           branch; backbone + classifier retrained (optionally dropping
//           samples with s < s_th)
//
// run_pipeline executes Step1, then (Step2, Step3) repeated, ending on a
// Step 2: iterations = 2 gives Step1, Step2, Step3, Step2.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eqface/loss.hpp"
#include "eqface/model.hpp"
#include "eqface/synthgen.hpp"

namespace eqface {

struct OptimConfig {
  double lr0 = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::vector<int> decay_epochs{10, 20};
  double decay_factor = 10.0;
  int total_epochs = 30;
  int batch_size = 32;
  std::uint64_t seed = 1;

  void validate() const;
  // lr0 / decay_factor^(number of decay epochs <= epoch), epochs from 0.
  double lr_at(int epoch) const;
};

struct SgdConfig {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

// v <- momentum * v + g + weight_decay * theta;  theta <- theta - lr * v
void sgd_update(std::span<double> param, std::span<const double> grad,
                std::span<double> velocity, const SgdConfig& cfg);

// Velocity buffers, one per trainable component, created on first use.
struct SgdState {
  std::optional<BackboneParams> backbone;
  std::optional<QualityParams> quality;
  std::optional<ClassifierParams> classifier;
};

// Applies `grads` to every unfrozen component present in `grads`. Frozen
// components are never written. Throws ShapeMismatch on a shape disagreement.
void sgd_step(Model& model, const Gradients& grads, SgdState& state, const SgdConfig& cfg);

enum class Step3Restart { continue_training, scratch };

struct PipelineConfig {
  OptimConfig step1{0.1, 0.9, 5e-4, {10, 20}, 10.0, 30, 32, 1};
  OptimConfig step2{0.01, 0.9, 5e-4, {5, 10}, 10.0, 15, 32, 1};
  OptimConfig step3{0.1, 0.9, 5e-4, {10, 20}, 10.0, 30, 32, 1};
  LossConfig loss;
  int iterations = 2;
  Step3Restart step3_restart = Step3Restart::continue_training;
  std::optional<double> qwdf_threshold;
  // Start from a given baseline and run a single Step 2 only.
  bool quality_head_only = false;
  std::uint64_t seed = 1;

  void validate() const;
};

using QualityTable = std::map<std::uint64_t, double>;

struct EpochLog {
  std::string step;  // "step1" | "step2" | "step3"
  int iteration = 1;
  int epoch = 0;
  double mean_loss = 0.0;  // NaN when no sample contributed
  double lr = 0.0;
  std::size_t contributing = 0;
  std::size_t updates = 0;  // optimizer steps taken
};

struct StepReport {
  std::vector<EpochLog> epochs;
};

// Objective over one batch: mean eqface loss over the contributing samples.
struct BatchResult {
  double loss = 0.0;
  std::size_t contributing = 0;
  Gradients grads;
  BatchStats bn;
  std::vector<double> losses;  // per sample, NaN when filtered out
};

// Evaluates the batch objective and its gradients. BN runs in train mode only
// when the quality source is the live, unfrozen branch. With a table and a
// qwdf threshold, samples whose table quality is below the threshold get
// weight 0.
BatchResult evaluate_batch(const Model& model,
                           std::span<const EmbeddingSample* const> batch,
                           const LossConfig& loss, QualityMode mode,
                           const QualityTable* table = nullptr,
                           std::optional<double> qwdf_threshold = std::nullopt);

// Contiguous batches of `batch_size` over `order`; a trailing batch shorter
// than 4 (the BN minimum) is merged into the previous one.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order,
                                                   int batch_size);

StepReport run_step1(const std::vector<EmbeddingSample>& data, Model& model,
                     const PipelineConfig& cfg, int iteration = 1);
StepReport run_step2(const std::vector<EmbeddingSample>& data, Model& model,
                     const PipelineConfig& cfg, int iteration = 1);
StepReport run_step3(const std::vector<EmbeddingSample>& data, Model& model,
                     const QualityTable& table, const PipelineConfig& cfg,
                     int iteration = 1);

// Eval-mode quality for every sample.
QualityTable compute_quality_table(const Model& model,
                                   const std::vector<EmbeddingSample>& data);

struct StepCheckpoint {
  std::string name;  // "step1", "iter1.step2", "iter1.step3", ...
  std::string step;
  int iteration = 1;
  Model model;
};

struct PipelineResult {
  Model model;
  std::vector<StepCheckpoint> checkpoints;
  std::vector<EpochLog> log;
  QualityTable quality;  // from the final model
};

using StepObserver = std::function<void(const StepCheckpoint&)>;

PipelineResult run_pipeline(const std::vector<EmbeddingSample>& data, const Model& initial,
                            const PipelineConfig& cfg, const StepObserver& observer = {});

}  // namespace eqface

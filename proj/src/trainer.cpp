#include "eqface/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "eqface/backprop.hpp"
#include "eqface/errors.hpp"

namespace eqface {
namespace {

constexpr int kMinBatch = 4;
constexpr int kMaxBadBatches = 3;

template <typename Params>
void apply_update(Params& params, const Params& grads, std::optional<Params>& velocity,
                  const SgdConfig& cfg, std::string_view component) {
  if (!velocity) velocity = zeros_like(params);
  auto p = tensor_spans(params);
  auto g = tensor_spans(grads);
  auto v = tensor_spans(*velocity);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (g[i].rows != p[i].rows || g[i].cols != p[i].cols || v[i].rows != p[i].rows ||
        v[i].cols != p[i].cols) {
      throw ShapeMismatch("sgd: " + std::string(component) + "." + std::string(p[i].name) +
                          " gradient/velocity shape differs from parameter");
    }
    const auto n = static_cast<std::size_t>(p[i].size());
    sgd_update({p[i].data, n}, {g[i].data, n}, {v[i].data, n}, cfg);
  }
}

std::mt19937_64 epoch_rng(std::uint64_t seed, int epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x65706fu};
  return std::mt19937_64(seq);
}

struct StepSpec {
  std::string name;
  int iteration;
  const OptimConfig* optim;
  QualityMode mode;
  const QualityTable* table;
  std::optional<double> qwdf;
};

StepReport train_epochs(const std::vector<EmbeddingSample>& data, Model& model,
                        const LossConfig& loss, const StepSpec& spec) {
  const OptimConfig& optim = *spec.optim;
  optim.validate();
  if (data.empty()) throw InsufficientData(spec.name + ": empty training set");

  StepReport report;
  SgdState state;
  int bad_batches = 0;
  std::vector<std::size_t> order(data.size());

  for (int epoch = 0; epoch < optim.total_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    auto rng = epoch_rng(optim.seed, epoch);
    std::shuffle(order.begin(), order.end(), rng);

    const SgdConfig sgd{optim.lr_at(epoch), optim.momentum, optim.weight_decay};
    double loss_sum = 0.0;
    EpochLog log{spec.name, spec.iteration, epoch, 0.0, sgd.lr, 0, 0};

    std::vector<const EmbeddingSample*> batch;
    for (const auto& idx : make_batches(order, optim.batch_size)) {
      batch.clear();
      for (std::size_t i : idx) batch.push_back(&data[i]);
      BatchResult r = evaluate_batch(model, batch, loss, spec.mode, spec.table, spec.qwdf);
      if (r.contributing == 0) continue;
      if (!std::isfinite(r.loss)) {
        if (++bad_batches >= kMaxBadBatches) {
          throw DivergenceDetected(spec.name + ": loss non-finite for " +
                                   std::to_string(kMaxBadBatches) + " consecutive batches");
        }
        continue;
      }
      bad_batches = 0;
      log.contributing += r.contributing;
      loss_sum += r.loss * static_cast<double>(r.contributing);
      sgd_step(model, r.grads, state, sgd);
      update_running_stats(model, r.bn);
      ++log.updates;
    }
    log.mean_loss = log.contributing > 0 ? loss_sum / static_cast<double>(log.contributing)
                                         : std::numeric_limits<double>::quiet_NaN();
    report.epochs.push_back(log);
  }
  return report;
}

}  // namespace

void OptimConfig::validate() const {
  if (!(lr0 >= 0) || !std::isfinite(lr0)) throw InvalidConfig("optim: lr0 must be >= 0");
  if (!(momentum >= 0 && momentum < 1)) throw InvalidConfig("optim: momentum must be in [0, 1)");
  if (!(weight_decay >= 0)) throw InvalidConfig("optim: weight_decay must be >= 0");
  if (!(decay_factor > 0)) throw InvalidConfig("optim: decay_factor must be > 0");
  if (total_epochs < 0) throw InvalidConfig("optim: total_epochs must be >= 0");
  if (batch_size < kMinBatch) throw InvalidConfig("optim: batch_size must be >= 4");
  for (std::size_t i = 0; i < decay_epochs.size(); ++i) {
    if (i > 0 && decay_epochs[i] <= decay_epochs[i - 1]) {
      throw InvalidConfig("optim: decay_epochs must be strictly ascending");
    }
    if (decay_epochs[i] >= total_epochs) {
      throw InvalidConfig("optim: decay epoch " + std::to_string(decay_epochs[i]) +
                          " not below total_epochs");
    }
  }
}

double OptimConfig::lr_at(int epoch) const {
  double lr = lr0;
  for (int e : decay_epochs) {
    if (e <= epoch) lr /= decay_factor;
  }
  return lr;
}

void sgd_update(std::span<double> param, std::span<const double> grad,
                std::span<double> velocity, const SgdConfig& cfg) {
  if (grad.size() != param.size() || velocity.size() != param.size()) {
    throw ShapeMismatch("sgd_update: length mismatch");
  }
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = cfg.momentum * velocity[i] + grad[i] + cfg.weight_decay * param[i];
    param[i] -= cfg.lr * velocity[i];
  }
}

void sgd_step(Model& model, const Gradients& grads, SgdState& state, const SgdConfig& cfg) {
  if (grads.backbone && !model.frozen.backbone) {
    apply_update(model.backbone, *grads.backbone, state.backbone, cfg, "backbone");
  }
  if (grads.quality && !model.frozen.quality) {
    apply_update(model.quality, *grads.quality, state.quality, cfg, "quality");
  }
  if (grads.classifier && !model.frozen.classifier) {
    apply_update(model.classifier, *grads.classifier, state.classifier, cfg, "classifier");
  }
}

void PipelineConfig::validate() const {
  if (iterations < 1) throw InvalidConfig("pipeline: iterations must be >= 1");
  step1.validate();
  step2.validate();
  step3.validate();
  loss.validate();
  if (qwdf_threshold && !(*qwdf_threshold >= 0 && *qwdf_threshold <= 1)) {
    throw InvalidConfig("pipeline: qwdf threshold must lie in [0, 1]");
  }
}

std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order,
                                                   int batch_size) {
  std::vector<std::vector<std::size_t>> out;
  const auto step = static_cast<std::size_t>(std::max(batch_size, 1));
  for (std::size_t start = 0; start < order.size(); start += step) {
    const std::size_t end = std::min(order.size(), start + step);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  if (out.size() > 1 && out.back().size() < static_cast<std::size_t>(kMinBatch)) {
    auto tail = std::move(out.back());
    out.pop_back();
    out.back().insert(out.back().end(), tail.begin(), tail.end());
  }
  return out;
}

BatchResult evaluate_batch(const Model& model,
                           std::span<const EmbeddingSample* const> batch,
                           const LossConfig& loss, QualityMode mode,
                           const QualityTable* table, std::optional<double> qwdf_threshold) {
  if (batch.empty()) throw EmptyInput("evaluate_batch: empty batch");
  if (mode == QualityMode::frozen && table == nullptr) {
    throw IncompleteQualityTable("evaluate_batch: frozen quality mode without a table");
  }
  const bool bn_train = mode == QualityMode::live && !model.frozen.quality;

  std::vector<Vec> xs;
  xs.reserve(batch.size());
  for (const auto* s : batch) xs.push_back(s->x);
  BatchForward fwd = forward_batch(model, xs, bn_train ? Mode::train : Mode::eval);

  const std::size_t n = batch.size();
  std::vector<double> quality(n, 1.0);
  std::vector<bool> keep(n, true);
  for (std::size_t i = 0; i < n; ++i) {
    if (mode == QualityMode::live) {
      quality[i] = fwd.samples[i].s;
    } else if (mode == QualityMode::frozen) {
      auto it = table->find(batch[i]->sample_id);
      if (it == table->end()) {
        throw IncompleteQualityTable("quality table has no entry for sample " +
                                     std::to_string(batch[i]->sample_id));
      }
      quality[i] = it->second;
      if (qwdf_threshold && quality[i] < *qwdf_threshold) keep[i] = false;
    }
  }

  BatchResult result;
  result.contributing = static_cast<std::size_t>(std::count(keep.begin(), keep.end(), true));
  result.losses.assign(n, std::numeric_limits<double>::quiet_NaN());
  result.bn = fwd.bn;
  if (result.contributing == 0) return result;

  const Mat w = model.normalized_classifier();
  const double weight = 1.0 / static_cast<double>(result.contributing);
  std::vector<LossOutput<double>> outputs(n);
  std::vector<double> weights(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!keep[i]) {
      outputs[i].grad_f = Vec::Zero(model.dims.d);
      outputs[i].grad_w = Mat::Zero(w.rows(), w.cols());
      continue;
    }
    outputs[i] = compute_loss(loss, fwd.samples[i].f, w, batch[i]->label, quality[i]);
    result.losses[i] = outputs[i].value;
    result.loss += weight * outputs[i].value;
    weights[i] = weight;
  }
  result.grads = backward_through_model(model, fwd, outputs, weights, mode);
  return result;
}

StepReport run_step1(const std::vector<EmbeddingSample>& data, Model& model,
                     const PipelineConfig& cfg, int iteration) {
  model.unfreeze(Component::backbone);
  model.unfreeze(Component::classifier);
  model.freeze(Component::quality);
  return train_epochs(data, model, cfg.loss,
                      {"step1", iteration, &cfg.step1, QualityMode::fixed_one, nullptr,
                       std::nullopt});
}

StepReport run_step2(const std::vector<EmbeddingSample>& data, Model& model,
                     const PipelineConfig& cfg, int iteration) {
  model.freeze(Component::backbone);
  model.freeze(Component::classifier);
  model.unfreeze(Component::quality);
  return train_epochs(data, model, cfg.loss,
                      {"step2", iteration, &cfg.step2, QualityMode::live, nullptr,
                       std::nullopt});
}

StepReport run_step3(const std::vector<EmbeddingSample>& data, Model& model,
                     const QualityTable& table, const PipelineConfig& cfg, int iteration) {
  for (const auto& s : data) {
    if (!table.contains(s.sample_id)) {
      throw IncompleteQualityTable("quality table has no entry for sample " +
                                   std::to_string(s.sample_id));
    }
  }
  for (const auto& [id, s] : table) {
    if (!(s > 0 && s <= 1)) {
      throw InvalidQuality("quality table entry " + std::to_string(id) + " outside (0, 1]");
    }
  }
  if (cfg.step3_restart == Step3Restart::scratch) {
    reinit_backbone_and_classifier(model, cfg.seed + static_cast<std::uint64_t>(iteration));
  }
  model.unfreeze(Component::backbone);
  model.unfreeze(Component::classifier);
  model.freeze(Component::quality);
  return train_epochs(data, model, cfg.loss,
                      {"step3", iteration, &cfg.step3, QualityMode::frozen, &table,
                       cfg.qwdf_threshold});
}

QualityTable compute_quality_table(const Model& model,
                                   const std::vector<EmbeddingSample>& data) {
  QualityTable table;
  for (const auto& s : data) table[s.sample_id] = forward(model, s.x).s;
  return table;
}

PipelineResult run_pipeline(const std::vector<EmbeddingSample>& data, const Model& initial,
                            const PipelineConfig& cfg, const StepObserver& observer) {
  cfg.validate();
  PipelineResult result;
  result.model = initial;
  Model& model = result.model;

  auto record = [&](const StepReport& report, std::string step, int iteration) {
    result.log.insert(result.log.end(), report.epochs.begin(), report.epochs.end());
    StepCheckpoint ckpt;
    ckpt.name = step == "step1" ? step : "iter" + std::to_string(iteration) + "." + step;
    ckpt.step = std::move(step);
    ckpt.iteration = iteration;
    ckpt.model = model;
    if (observer) observer(ckpt);
    result.checkpoints.push_back(std::move(ckpt));
  };

  if (cfg.quality_head_only) {
    record(run_step2(data, model, cfg, 1), "step2", 1);
  } else {
    record(run_step1(data, model, cfg, 1), "step1", 1);
    for (int it = 1; it <= cfg.iterations; ++it) {
      record(run_step2(data, model, cfg, it), "step2", it);
      if (it == cfg.iterations) break;
      const QualityTable table = compute_quality_table(model, data);
      record(run_step3(data, model, table, cfg, it), "step3", it);
    }
  }
  result.quality = compute_quality_table(model, data);
  return result;
}

}  // namespace eqface

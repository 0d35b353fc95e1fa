#include "eqface/backprop.hpp"

#include <string>

#include "eqface/errors.hpp"

namespace eqface {

Gradients backward_through_model(const Model& model, const BatchForward& forward,
                                 std::span<const LossOutput<double>> losses,
                                 std::span<const double> weights, QualityMode mode) {
  const std::size_t n = forward.samples.size();
  if (losses.size() != n || weights.size() != n) {
    throw MissingCache("backward: " + std::to_string(n) + " forward results, " +
                       std::to_string(losses.size()) + " losses, " +
                       std::to_string(weights.size()) + " weights");
  }
  for (const auto& r : forward.samples) {
    if (!r.has_cache()) throw MissingCache("backward: forward result without intermediates");
  }

  Gradients grads;
  const bool route_backbone = !model.frozen.backbone;
  const bool route_classifier = !model.frozen.classifier;
  const bool route_quality = !model.frozen.quality && mode == QualityMode::live;

  if (route_classifier) {
    Mat g = Mat::Zero(model.classifier.w.rows(), model.classifier.w.cols());
    for (std::size_t i = 0; i < n; ++i) {
      if (weights[i] == 0.0) continue;
      g += weights[i] * losses[i].grad_w;
    }
    ClassifierParams cg = zeros_like(model.classifier);
    for (Eigen::Index c = 0; c < g.cols(); ++c) {
      cg.w.col(c) = linalg::normalize_backward(model.classifier.w.col(c), g.col(c));
    }
    grads.classifier = std::move(cg);
  }

  if (route_backbone) {
    const auto& bb = model.backbone;
    BackboneParams bg = zeros_like(bb);
    for (std::size_t i = 0; i < n; ++i) {
      if (weights[i] == 0.0) continue;
      const auto& r = forward.samples[i];
      const Vec g_raw = linalg::normalize_backward(r.f_raw, weights[i] * losses[i].grad_f);
      bg.b2 += g_raw;
      bg.w2.noalias() += g_raw * r.hidden.transpose();
      Vec g_hidden = linalg::matvec_transposed(bb.w2, g_raw);
      for (Eigen::Index k = 0; k < g_hidden.size(); ++k) {
        if (!(r.hidden_pre(k) > 0)) g_hidden(k) = 0;
      }
      bg.b1 += g_hidden;
      bg.w1.noalias() += g_hidden * r.x.transpose();
    }
    grads.backbone = std::move(bg);
  }

  if (route_quality) {
    const auto& qb = model.quality;
    QualityParams qg = zeros_like(qb);
    const int q = model.dims.q;
    const Vec inv_std = (forward.bn.var.array() + kBnEpsilon).sqrt().inverse().matrix();

    // Gradient at the BN-normalized activations, per sample.
    std::vector<Vec> g_hat(n, Vec::Zero(q));
    for (std::size_t i = 0; i < n; ++i) {
      const auto& r = forward.samples[i];
      if (weights[i] == 0.0 || r.logit_clamped) continue;
      const double g_t = weights[i] * losses[i].grad_s * r.s * (1.0 - r.s);
      qg.b2(0) += g_t;
      qg.w2.row(0) += g_t * r.branch_act.transpose();
      Vec g_bn = g_t * qb.w2.row(0).transpose();
      for (int k = 0; k < q; ++k) {
        if (!(r.branch_bn(k) > 0)) g_bn(k) = 0;
      }
      qg.gamma += g_bn.cwiseProduct(r.branch_hat);
      qg.beta += g_bn;
      g_hat[i] = g_bn.cwiseProduct(qb.gamma);
    }

    // Through the normalization. In train mode every sample of the batch
    // shares the statistics, including samples with zero weight.
    Vec sum_g = Vec::Zero(q);
    Vec sum_g_hat = Vec::Zero(q);
    if (forward.bn.mode == Mode::train) {
      for (std::size_t i = 0; i < n; ++i) {
        sum_g += g_hat[i];
        sum_g_hat += g_hat[i].cwiseProduct(forward.samples[i].branch_hat);
      }
    }
    const double count = static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& r = forward.samples[i];
      Vec g_pre;
      if (forward.bn.mode == Mode::train) {
        g_pre = (count * g_hat[i] - sum_g - r.branch_hat.cwiseProduct(sum_g_hat))
                    .cwiseProduct(inv_std) / count;
      } else {
        g_pre = g_hat[i].cwiseProduct(inv_std);
      }
      qg.b1 += g_pre;
      qg.w1.noalias() += g_pre * r.f_raw.transpose();
    }
    grads.quality = std::move(qg);
  }
  return grads;
}

}  // namespace eqface

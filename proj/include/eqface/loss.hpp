#pragma once

// Margin-based softmax losses on normalized embeddings, with analytic
// gradients w.r.t. the logits, the feature, the classifier columns and the
// per-sample quality scalar.
//
// All losses share one cross-entropy core. Logits are built as
//
//   z_j = q * scale * cos_j                                   (j != y)
//   z_y = q * scale * (m1 * cos(theta_y + m2) - m3) - shift   (target)
//
// where q is the quality multiplier (1 when absent), and the angular part is
// skipped for plain softmax / confidence-aware losses. cos_y is clamped to
// [-1 + 1e-7, 1 - 1e-7] before arccos; the clamp has zero derivative outside.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <string>

#include "eqface/errors.hpp"
#include "eqface/linalg.hpp"

namespace eqface {

enum class LossVariant { softmax, arc, unified, confidence_aware, eqface };

// Where the per-sample quality comes from while training.
enum class QualityMode { fixed_one, live, frozen };

struct LossConfig {
  double m1 = 1.0;
  double m2 = 0.3;
  double m3 = 0.2;
  double scale = 64.0;
  LossVariant variant = LossVariant::eqface;
  QualityMode quality_mode = QualityMode::fixed_one;
  double m = 0.0;  // single additive margin of the confidence-aware loss

  void validate() const {
    if (!(scale > 0)) throw InvalidConfig("loss: scale S must be > 0");
    if (!(m1 > 0)) throw InvalidConfig("loss: m1 must be > 0");
    if (!(m2 >= 0 && m2 < std::numbers::pi / 2)) {
      throw InvalidConfig("loss: m2 must lie in [0, pi/2)");
    }
    if (!(m3 >= 0)) throw InvalidConfig("loss: m3 must be >= 0");
  }
};

template <typename Scalar>
struct LossOutput {
  Scalar value{0};
  VecT<Scalar> logits;
  VecT<Scalar> grad_logits;
  VecT<Scalar> grad_f;
  MatT<Scalar> grad_w;  // d x n, one column per class
  Scalar grad_s{0};     // zero for losses without a quality multiplier
};

inline constexpr double kCosClamp = 1e-7;

namespace detail {

struct AngularMargin {
  double m1;
  double m2;
  double m3;
};

struct LogitSpec {
  double scale = 1.0;
  bool angular = false;
  AngularMargin margin{1.0, 0.0, 0.0};
  double quality = 1.0;
  double target_shift = 0.0;
  bool has_quality = false;
};

template <typename DF, typename DW>
void check_inputs(const Eigen::MatrixBase<DF>& f, const Eigen::MatrixBase<DW>& w,
                  Eigen::Index label) {
  if (w.rows() != f.size()) {
    throw DimensionMismatch("loss: feature dim " + std::to_string(f.size()) +
                            " vs classifier rows " + std::to_string(w.rows()));
  }
  if (w.cols() < 1) throw DimensionMismatch("loss: classifier has no columns");
  if (label < 0 || label >= w.cols()) {
    throw DimensionMismatch("loss: label " + std::to_string(label) +
                            " outside [0, " + std::to_string(w.cols()) + ")");
  }
}

// Cross entropy -log softmax(z)[y] and its gradient p - e_y. The max term
// contributes exactly 1 to the partition sum, so log1p keeps precision when
// the target dominates.
template <typename Scalar>
Scalar cross_entropy(const VecT<Scalar>& z, Eigen::Index y, VecT<Scalar>& grad) {
  using std::exp;
  using std::log1p;
  Eigen::Index arg = 0;
  for (Eigen::Index j = 1; j < z.size(); ++j) {
    if (z(j) > z(arg)) arg = j;
  }
  const Scalar top = z(arg);
  Scalar rest(0);
  grad.resize(z.size());
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    grad(j) = exp(z(j) - top);
    if (j != arg) rest += grad(j);
  }
  const Scalar denom = Scalar(1) + rest;
  for (Eigen::Index j = 0; j < z.size(); ++j) grad(j) /= denom;
  grad(y) -= Scalar(1);
  return (top - z(y)) + log1p(rest);
}

template <typename DF, typename DW>
LossOutput<typename DF::Scalar> evaluate(const Eigen::MatrixBase<DF>& f,
                                         const Eigen::MatrixBase<DW>& w,
                                         Eigen::Index y, const LogitSpec& spec) {
  using Scalar = typename DF::Scalar;
  using std::acos;
  using std::cos;
  using std::sin;
  check_inputs(f, w, y);

  const Eigen::Index n = w.cols();
  const VecT<Scalar> c = linalg::matvec_transposed(w, f);
  const Scalar scale(spec.scale);
  const Scalar q(spec.quality);

  VecT<Scalar> u(n);     // logits before the quality multiplier
  VecT<Scalar> du(n);    // d u_j / d cos_j
  for (Eigen::Index j = 0; j < n; ++j) {
    u(j) = scale * c(j);
    du(j) = scale;
  }
  if (spec.angular) {
    const Scalar lo(-1 + kCosClamp);
    const Scalar hi(1 - kCosClamp);
    const Scalar cy = c(y);
    const bool clamped = cy < lo || cy > hi;
    const Scalar cc = cy < lo ? lo : (cy > hi ? hi : cy);
    const Scalar theta = acos(cc);
    const Scalar m1(spec.margin.m1), m2(spec.margin.m2), m3(spec.margin.m3);
    u(y) = scale * (m1 * cos(theta + m2) - m3);
    du(y) = clamped ? Scalar(0) : scale * m1 * sin(theta + m2) / sin(theta);
  }

  LossOutput<Scalar> out;
  out.logits = q * u;
  out.logits(y) -= Scalar(spec.target_shift);
  out.value = cross_entropy(out.logits, y, out.grad_logits);

  VecT<Scalar> grad_c(n);
  for (Eigen::Index j = 0; j < n; ++j) grad_c(j) = out.grad_logits(j) * q * du(j);
  out.grad_f = linalg::matvec(w, grad_c);
  out.grad_w.resize(w.rows(), n);
  for (Eigen::Index j = 0; j < n; ++j) out.grad_w.col(j) = grad_c(j) * f;
  out.grad_s = spec.has_quality ? linalg::dot(out.grad_logits, u) : Scalar(0);
  return out;
}

}  // namespace detail

/// Plain softmax cross entropy on W^T f, optionally multiplied by `scale`.
template <typename DF, typename DW>
LossOutput<typename DF::Scalar> loss_softmax(const Eigen::MatrixBase<DF>& f,
                                             const Eigen::MatrixBase<DW>& w,
                                             Eigen::Index y, double scale = 1.0) {
  detail::LogitSpec spec;
  spec.scale = scale;
  return detail::evaluate(f, w, y, spec);
}

/// Additive angular margin: target logit S cos(theta_y + m).
template <typename DF, typename DW>
LossOutput<typename DF::Scalar> loss_arcface(const Eigen::MatrixBase<DF>& f,
                                             const Eigen::MatrixBase<DW>& w,
                                             Eigen::Index y, double m, double scale) {
  detail::LogitSpec spec;
  spec.scale = scale;
  spec.angular = true;
  spec.margin = {1.0, m, 0.0};
  return detail::evaluate(f, w, y, spec);
}

/// Combined margin: target logit S (m1 cos(theta_y + m2) - m3).
template <typename DF, typename DW>
LossOutput<typename DF::Scalar> loss_unified(const Eigen::MatrixBase<DF>& f,
                                             const Eigen::MatrixBase<DW>& w,
                                             Eigen::Index y, const LossConfig& cfg) {
  cfg.validate();
  detail::LogitSpec spec;
  spec.scale = cfg.scale;
  spec.angular = true;
  spec.margin = {cfg.m1, cfg.m2, cfg.m3};
  return detail::evaluate(f, w, y, spec);
}

/// Confidence-weighted softmax with a single margin: target s w_y^T f - m,
/// others s w_j^T f. `s` is unbounded above.
template <typename DF, typename DW>
LossOutput<typename DF::Scalar> loss_confidence_aware(const Eigen::MatrixBase<DF>& f,
                                                      const Eigen::MatrixBase<DW>& w,
                                                      Eigen::Index y, double s,
                                                      double m) {
  if (!(s > 0) || !std::isfinite(s)) {
    throw InvalidQuality("confidence-aware loss: s must be finite and > 0");
  }
  detail::LogitSpec spec;
  spec.quality = s;
  spec.target_shift = m;
  spec.has_quality = true;
  return detail::evaluate(f, w, y, spec);
}

/// Quality-weighted combined-margin loss. Every logit, target and others, is
/// multiplied by s * S; s must lie in (0, 1).
template <typename DF, typename DW>
LossOutput<typename DF::Scalar> loss_eqface(const Eigen::MatrixBase<DF>& f,
                                            const Eigen::MatrixBase<DW>& w,
                                            Eigen::Index y, double s,
                                            const LossConfig& cfg) {
  cfg.validate();
  if (!(s > 0 && s <= 1)) {
    throw InvalidQuality("eqface loss: s must lie in (0, 1], got " + std::to_string(s));
  }
  detail::LogitSpec spec;
  spec.scale = cfg.scale;
  spec.angular = true;
  spec.margin = {cfg.m1, cfg.m2, cfg.m3};
  spec.quality = s;
  spec.has_quality = true;
  return detail::evaluate(f, w, y, spec);
}

// Dispatch on cfg.variant. `s` is ignored by variants without a quality term.
template <typename DF, typename DW>
LossOutput<typename DF::Scalar> compute_loss(const LossConfig& cfg,
                                             const Eigen::MatrixBase<DF>& f,
                                             const Eigen::MatrixBase<DW>& w,
                                             Eigen::Index y, double s = 1.0) {
  switch (cfg.variant) {
    case LossVariant::softmax:
      return loss_softmax(f, w, y, cfg.scale);
    case LossVariant::arc:
      return loss_arcface(f, w, y, cfg.m2, cfg.scale);
    case LossVariant::unified:
      return loss_unified(f, w, y, cfg);
    case LossVariant::confidence_aware:
      return loss_confidence_aware(f, w, y, s, cfg.m);
    case LossVariant::eqface:
      return loss_eqface(f, w, y, s, cfg);
  }
  throw InvalidConfig("loss: unknown variant");
}

}  // namespace eqface

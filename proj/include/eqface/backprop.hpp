#pragma once

// Chain rule from per-sample loss gradients back to model parameters.

#include <span>

#include "eqface/loss.hpp"
#include "eqface/model.hpp"

namespace eqface {

// Per-sample loss gradients and the weight the sample carries in the batch
// objective (1/N for a plain mean, 0 for a filtered-out sample).
//
// Routing:
//   * backbone, classifier: from grad_f / grad_w when unfrozen
//   * quality branch: from grad_s, only when mode == live and unfrozen; the
//     branch never sends gradient back into the backbone
//
// Throws MissingCache when a forward result lacks its intermediates or the
// three inputs disagree in length.
Gradients backward_through_model(const Model& model, const BatchForward& forward,
                                 std::span<const LossOutput<double>> losses,
                                 std::span<const double> weights, QualityMode mode);

}  // namespace eqface

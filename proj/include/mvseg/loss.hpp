#pragma once

#include "mvseg/ops.hpp"

namespace mvseg {

using ag::Var;

struct LossConfig {
    double lambda_aux = 0.3;
    int iou_weight_kernel = 15; // odd
    double iou_weight_gain = 5.0;

    void validate() const;
};

// Mean binary cross-entropy over probabilities, clamped to [1e-6, 1-1e-6].
Var bce_loss(const Var& pred, const Tensor& gt);
// Numerically stable logit-space form used by the training loop.
Var bce_with_logits(const Var& logits, const Tensor& gt);

// Per-pixel weights ω = 1 + gain * |avgpool_k(gt) - gt| (stride 1, zero
// padding, divisor k*k).
Tensor iou_weight_map(const Tensor& gt, const LossConfig& cfg);

// 1 - Σ(ω p g) / Σ(ω (p + g - p g)) per sample, averaged over the batch.
// An all-zero denominator contributes 0.
Var weighted_iou_loss(const Var& pred, const Tensor& gt, const LossConfig& cfg);

// L(M) = bce(M) + weighted_iou(M); total = L(M_p) + λ L(M_s).
Var total_loss(const Var& mp, const Var& ms, const Tensor& gt, const LossConfig& cfg);
Var total_loss_logits(const Var& mp_logits, const Var& ms_logits, const Tensor& gt,
                      const LossConfig& cfg);

} // namespace mvseg

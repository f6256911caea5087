#include "mvseg/loss.hpp"

#include <cmath>

#include "mvseg/errors.hpp"

namespace mvseg {

using ag::VarImpl;
using ag::accum_grad;
using ag::make_op;

namespace {

constexpr double kProbEps = 1e-6;

void check_pair(const Tensor& pred, const Tensor& gt, const char* op) {
    if (!pred.same_shape(gt))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + pred.shape_str() +
                                    " vs " + gt.shape_str());
    if (pred.ndim() != 4)
        throw std::invalid_argument(std::string(op) + ": expected ⟨B,C,H,W⟩ maps");
    if (!pred.all_finite() || !gt.all_finite())
        throw NumericError(std::string(op) + ": non-finite input");
}

} // namespace

void LossConfig::validate() const {
    if (lambda_aux < 0.0) throw ConfigError("lambda_aux must be >= 0");
    if (iou_weight_kernel < 1 || iou_weight_kernel % 2 == 0)
        throw ConfigError("iou_weight_kernel must be odd and >= 1");
}

Var bce_loss(const Var& pred, const Tensor& gt) {
    check_pair(pred.value(), gt, "bce_loss");
    const Tensor& p = pred.value();
    int64_t n = p.numel();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double ph = std::min(std::max(p.data()[i], kProbEps), 1.0 - kProbEps);
        double g = gt.data()[i];
        acc += -(g * std::log(ph) + (1.0 - g) * std::log(1.0 - ph));
    }
    Tensor out({1}, {acc / static_cast<double>(n)});
    auto pp = pred.impl();
    Tensor pin = p, gin = gt;
    return make_op(std::move(out), {pred}, [pp, pin, gin, n](VarImpl& self) {
        if (!pp->requires_grad) return;
        double go = self.grad.data()[0] / static_cast<double>(n);
        Tensor dp(pin.shape());
        for (int64_t i = 0; i < n; ++i) {
            double raw = pin.data()[i];
            if (raw <= kProbEps || raw >= 1.0 - kProbEps) continue; // clamped region
            double g = gin.data()[i];
            dp.data()[i] = go * (-g / raw + (1.0 - g) / (1.0 - raw));
        }
        accum_grad(*pp, dp);
    });
}

Var bce_with_logits(const Var& logits, const Tensor& gt) {
    check_pair(logits.value(), gt, "bce_with_logits");
    const Tensor& x = logits.value();
    int64_t n = x.numel();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double v = x.data()[i];
        double g = gt.data()[i];
        acc += std::max(v, 0.0) - g * v + std::log1p(std::exp(-std::fabs(v)));
    }
    Tensor out({1}, {acc / static_cast<double>(n)});
    auto px = logits.impl();
    Tensor xin = x, gin = gt;
    return make_op(std::move(out), {logits}, [px, xin, gin, n](VarImpl& self) {
        if (!px->requires_grad) return;
        double go = self.grad.data()[0] / static_cast<double>(n);
        Tensor dx(xin.shape());
        for (int64_t i = 0; i < n; ++i) {
            double v = xin.data()[i];
            double sig = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
            dx.data()[i] = go * (sig - gin.data()[i]);
        }
        accum_grad(*px, dx);
    });
}

Tensor iou_weight_map(const Tensor& gt, const LossConfig& cfg) {
    cfg.validate();
    Tensor pooled = ops::avg_pool_same(gt, cfg.iou_weight_kernel);
    Tensor w(gt.shape());
    for (int64_t i = 0; i < gt.numel(); ++i)
        w.data()[i] = 1.0 + cfg.iou_weight_gain * std::fabs(pooled.data()[i] - gt.data()[i]);
    return w;
}

Var weighted_iou_loss(const Var& pred, const Tensor& gt, const LossConfig& cfg) {
    check_pair(pred.value(), gt, "weighted_iou_loss");
    Tensor w = iou_weight_map(gt, cfg);
    const Tensor& p = pred.value();
    int64_t b = p.dim(0);
    int64_t per = p.numel() / b;
    std::vector<double> inter(static_cast<size_t>(b), 0.0);
    std::vector<double> uni(static_cast<size_t>(b), 0.0);
    for (int64_t bi = 0; bi < b; ++bi) {
        const double* pp = p.data() + bi * per;
        const double* gg = gt.data() + bi * per;
        const double* ww = w.data() + bi * per;
        double is = 0.0, us = 0.0;
        for (int64_t i = 0; i < per; ++i) {
            is += ww[i] * pp[i] * gg[i];
            us += ww[i] * (pp[i] + gg[i] - pp[i] * gg[i]);
        }
        inter[static_cast<size_t>(bi)] = is;
        uni[static_cast<size_t>(bi)] = us;
    }
    double loss = 0.0;
    for (int64_t bi = 0; bi < b; ++bi) {
        double u = uni[static_cast<size_t>(bi)];
        loss += u > 0.0 ? 1.0 - inter[static_cast<size_t>(bi)] / u : 0.0;
    }
    loss /= static_cast<double>(b);

    Tensor out({1}, {loss});
    auto pp = pred.impl();
    Tensor pin = p, gin = gt, win = w;
    return make_op(std::move(out), {pred}, [pp, pin, gin, win, inter, uni, b, per](VarImpl& self) {
        if (!pp->requires_grad) return;
        double go = self.grad.data()[0] / static_cast<double>(b);
        Tensor dp(pin.shape());
        for (int64_t bi = 0; bi < b; ++bi) {
            double u = uni[static_cast<size_t>(bi)];
            if (u <= 0.0) continue;
            double is = inter[static_cast<size_t>(bi)];
            const double* gg = gin.data() + bi * per;
            const double* ww = win.data() + bi * per;
            double* dd = dp.data() + bi * per;
            for (int64_t i = 0; i < per; ++i) {
                double di = ww[i] * gg[i];
                double du = ww[i] * (1.0 - gg[i]);
                dd[i] = go * (-(di * u - is * du) / (u * u));
            }
        }
        accum_grad(*pp, dp);
    });
}

Var total_loss(const Var& mp, const Var& ms, const Tensor& gt, const LossConfig& cfg) {
    cfg.validate();
    Var lp = ops::add(bce_loss(mp, gt), weighted_iou_loss(mp, gt, cfg));
    Var ls = ops::add(bce_loss(ms, gt), weighted_iou_loss(ms, gt, cfg));
    return ops::add(lp, ops::scale(ls, cfg.lambda_aux));
}

Var total_loss_logits(const Var& mp_logits, const Var& ms_logits, const Tensor& gt,
                      const LossConfig& cfg) {
    cfg.validate();
    Var lp = ops::add(bce_with_logits(mp_logits, gt),
                      weighted_iou_loss(ops::sigmoid(mp_logits), gt, cfg));
    Var ls = ops::add(bce_with_logits(ms_logits, gt),
                      weighted_iou_loss(ops::sigmoid(ms_logits), gt, cfg));
    return ops::add(lp, ops::scale(ls, cfg.lambda_aux));
}

} // namespace mvseg

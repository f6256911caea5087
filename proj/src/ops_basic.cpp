#include "mvseg/ops.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace mvseg::ops {

using ag::VarImpl;
using ag::accum_grad;
using ag::make_op;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a.value().same_shape(b.value()))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    a.value().shape_str() + " vs " + b.value().shape_str());
}

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

} // namespace

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out = a.value().clone();
    add_into(out, b.value());
    auto pa = a.impl(), pb = b.impl();
    return make_op(std::move(out), {a, b}, [pa, pb](VarImpl& self) {
        if (pa->requires_grad) accum_grad(*pa, self.grad);
        if (pb->requires_grad) accum_grad(*pb, self.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out = a.value().clone();
    double* o = out.data();
    const double* pbv = b.value().data();
    for (int64_t i = 0; i < out.numel(); ++i) o[i] -= pbv[i];
    auto pa = a.impl(), pb = b.impl();
    return make_op(std::move(out), {a, b}, [pa, pb](VarImpl& self) {
        if (pa->requires_grad) accum_grad(*pa, self.grad);
        if (pb->requires_grad) {
            Tensor neg = self.grad.clone();
            scale_inplace(neg, -1.0);
            accum_grad(*pb, neg);
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out(a.value().shape());
    double* o = out.data();
    const double* pav = a.value().data();
    const double* pbv = b.value().data();
    for (int64_t i = 0; i < out.numel(); ++i) o[i] = pav[i] * pbv[i];
    auto pa = a.impl(), pb = b.impl();
    Tensor av = a.value(), bv = b.value();
    return make_op(std::move(out), {a, b}, [pa, pb, av, bv](VarImpl& self) {
        const double* g = self.grad.data();
        if (pa->requires_grad) {
            Tensor da(av.shape());
            for (int64_t i = 0; i < da.numel(); ++i) da.data()[i] = g[i] * bv.data()[i];
            accum_grad(*pa, da);
        }
        if (pb->requires_grad) {
            Tensor db(bv.shape());
            for (int64_t i = 0; i < db.numel(); ++i) db.data()[i] = g[i] * av.data()[i];
            accum_grad(*pb, db);
        }
    });
}

Var scale(const Var& a, double c) {
    Tensor out = a.value().clone();
    scale_inplace(out, c);
    auto pa = a.impl();
    return make_op(std::move(out), {a}, [pa, c](VarImpl& self) {
        if (!pa->requires_grad) return;
        Tensor g = self.grad.clone();
        scale_inplace(g, c);
        accum_grad(*pa, g);
    });
}

Var add_scalar(const Var& a, double c) {
    Tensor out = a.value().clone();
    double* o = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) o[i] += c;
    auto pa = a.impl();
    return make_op(std::move(out), {a}, [pa](VarImpl& self) {
        if (pa->requires_grad) accum_grad(*pa, self.grad);
    });
}

Var gelu(const Var& a) {
    const Tensor& x = a.value();
    Tensor out(x.shape());
    const double* xv = x.data();
    double* o = out.data();
    for (int64_t i = 0; i < x.numel(); ++i)
        o[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * kInvSqrt2));
    auto pa = a.impl();
    Tensor xin = x;
    return make_op(std::move(out), {a}, [pa, xin](VarImpl& self) {
        if (!pa->requires_grad) return;
        Tensor dx(xin.shape());
        const double* g = self.grad.data();
        const double* xv = xin.data();
        for (int64_t i = 0; i < xin.numel(); ++i) {
            double cdf = 0.5 * (1.0 + std::erf(xv[i] * kInvSqrt2));
            double pdf = kInvSqrt2Pi * std::exp(-0.5 * xv[i] * xv[i]);
            dx.data()[i] = g[i] * (cdf + xv[i] * pdf);
        }
        accum_grad(*pa, dx);
    });
}

Var sigmoid(const Var& a) {
    const Tensor& x = a.value();
    Tensor out(x.shape());
    const double* xv = x.data();
    double* o = out.data();
    for (int64_t i = 0; i < x.numel(); ++i) {
        double v = xv[i];
        o[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                        : std::exp(v) / (1.0 + std::exp(v));
    }
    auto pa = a.impl();
    Tensor y = out;
    return make_op(std::move(out), {a}, [pa, y](VarImpl& self) {
        if (!pa->requires_grad) return;
        Tensor dx(y.shape());
        const double* g = self.grad.data();
        const double* yv = y.data();
        for (int64_t i = 0; i < y.numel(); ++i)
            dx.data()[i] = g[i] * yv[i] * (1.0 - yv[i]);
        accum_grad(*pa, dx);
    });
}

Var sum(const Var& a) {
    double s = 0.0;
    const double* xv = a.value().data();
    for (int64_t i = 0; i < a.numel(); ++i) s += xv[i];
    Tensor out({1}, {s});
    auto pa = a.impl();
    auto shape = a.value().shape();
    return make_op(std::move(out), {a}, [pa, shape](VarImpl& self) {
        if (pa->requires_grad) accum_grad(*pa, Tensor(shape, self.grad.data()[0]));
    });
}

Var mean(const Var& a) {
    int64_t n = a.numel();
    if (n == 0) throw std::invalid_argument("mean of empty tensor");
    double s = 0.0;
    const double* xv = a.value().data();
    for (int64_t i = 0; i < n; ++i) s += xv[i];
    Tensor out({1}, {s / static_cast<double>(n)});
    auto pa = a.impl();
    auto shape = a.value().shape();
    return make_op(std::move(out), {a}, [pa, shape, n](VarImpl& self) {
        if (pa->requires_grad)
            accum_grad(*pa, Tensor(shape, self.grad.data()[0] / static_cast<double>(n)));
    });
}

Var reshape(const Var& a, std::vector<int64_t> shape) {
    Tensor out = a.value().reshaped(shape);
    auto pa = a.impl();
    auto in_shape = a.value().shape();
    return make_op(std::move(out), {a}, [pa, in_shape](VarImpl& self) {
        if (pa->requires_grad) accum_grad(*pa, self.grad.reshaped(in_shape));
    });
}

Var linear(const Var& x, const Var& w, const Var& b) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    if (wv.ndim() != 2) throw std::invalid_argument("linear: weight must be 2-D");
    int64_t din = wv.dim(0), dout = wv.dim(1);
    if (xv.ndim() < 1 || xv.shape().back() != din)
        throw std::invalid_argument("linear: input feature dim " + xv.shape_str() +
                                    " does not match weight " + wv.shape_str());
    int64_t m = xv.numel() / din;

    std::vector<int64_t> out_shape = xv.shape();
    out_shape.back() = dout;
    Tensor out(out_shape);
    {
        ConstMatMap xm(xv.data(), m, din);
        ConstMatMap wm(wv.data(), din, dout);
        MatMap om(out.data(), m, dout);
        om.noalias() = xm * wm;
        if (b.defined()) {
            if (b.value().numel() != dout)
                throw std::invalid_argument("linear: bias size mismatch");
            Eigen::Map<const Eigen::RowVectorXd> bm(b.value().data(), dout);
            om.rowwise() += bm;
        }
    }
    auto px = x.impl(), pw = w.impl();
    auto pb = b.defined() ? b.impl() : nullptr;
    Tensor xin = xv, win = wv;
    std::vector<Var> inputs = b.defined() ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    return make_op(std::move(out), std::move(inputs),
                   [px, pw, pb, xin, win, m, din, dout](VarImpl& self) {
        ConstMatMap gm(self.grad.data(), m, dout);
        if (px->requires_grad) {
            Tensor dx(xin.shape());
            MatMap dxm(dx.data(), m, din);
            ConstMatMap wm(win.data(), din, dout);
            dxm.noalias() = gm * wm.transpose();
            accum_grad(*px, dx);
        }
        if (pw->requires_grad) {
            Tensor dw(win.shape());
            MatMap dwm(dw.data(), din, dout);
            ConstMatMap xm(xin.data(), m, din);
            dwm.noalias() = xm.transpose() * gm;
            accum_grad(*pw, dw);
        }
        if (pb && pb->requires_grad) {
            Tensor db({dout});
            Eigen::Map<Eigen::RowVectorXd> dbm(db.data(), dout);
            dbm = gm.colwise().sum();
            accum_grad(*pb, db);
        }
    });
}

namespace {

// Shared normalization kernel: rows of length d at strided positions.
// row_base(i) gives the offset of row i's first element; `stride` the
// distance between consecutive elements of a row.
struct NormPlan {
    int64_t rows;
    int64_t d;
    int64_t stride;
    std::function<int64_t(int64_t)> row_base;
};

Var norm_impl(const Var& x, const Var& gamma, const Var& beta, double eps, NormPlan plan,
              const char* name) {
    const Tensor& xv = x.value();
    if (gamma.value().numel() != plan.d || beta.value().numel() != plan.d)
        throw std::invalid_argument(std::string(name) + ": affine parameter size mismatch");

    Tensor out(xv.shape());
    Tensor xhat(xv.shape());
    Tensor inv_sigma({plan.rows});
    const double* xp = xv.data();
    const double* gp = gamma.value().data();
    const double* bp = beta.value().data();
    double* op = out.data();
    double* hp = xhat.data();
    const double dinv = 1.0 / static_cast<double>(plan.d);
    for (int64_t r = 0; r < plan.rows; ++r) {
        int64_t base = plan.row_base(r);
        double mu = 0.0;
        for (int64_t j = 0; j < plan.d; ++j) mu += xp[base + j * plan.stride];
        mu *= dinv;
        double var = 0.0;
        for (int64_t j = 0; j < plan.d; ++j) {
            double c = xp[base + j * plan.stride] - mu;
            var += c * c;
        }
        var *= dinv;
        double is = 1.0 / std::sqrt(var + eps);
        inv_sigma.data()[r] = is;
        for (int64_t j = 0; j < plan.d; ++j) {
            double h = (xp[base + j * plan.stride] - mu) * is;
            hp[base + j * plan.stride] = h;
            op[base + j * plan.stride] = h * gp[j] + bp[j];
        }
    }

    auto px = x.impl(), pg = gamma.impl(), pb = beta.impl();
    Tensor gsaved = gamma.value();
    return make_op(std::move(out), {x, gamma, beta},
                   [px, pg, pb, xhat, inv_sigma, gsaved, plan](VarImpl& self) {
        const double* g = self.grad.data();
        const double* hp = xhat.data();
        const double* gp = gsaved.data();
        const double dinv = 1.0 / static_cast<double>(plan.d);
        Tensor dx, dgamma, dbeta;
        if (px->requires_grad) dx = Tensor(xhat.shape());
        if (pg->requires_grad) dgamma = Tensor({plan.d});
        if (pb->requires_grad) dbeta = Tensor({plan.d});
        for (int64_t r = 0; r < plan.rows; ++r) {
            int64_t base = plan.row_base(r);
            double sum_dh = 0.0, sum_dh_h = 0.0;
            for (int64_t j = 0; j < plan.d; ++j) {
                int64_t off = base + j * plan.stride;
                double dh = g[off] * gp[j];
                sum_dh += dh;
                sum_dh_h += dh * hp[off];
                if (dgamma.defined()) dgamma.data()[j] += g[off] * hp[off];
                if (dbeta.defined()) dbeta.data()[j] += g[off];
            }
            if (dx.defined()) {
                double is = inv_sigma.data()[r];
                for (int64_t j = 0; j < plan.d; ++j) {
                    int64_t off = base + j * plan.stride;
                    double dh = g[off] * gp[j];
                    dx.data()[off] = is * (dh - dinv * sum_dh - hp[off] * dinv * sum_dh_h);
                }
            }
        }
        if (dx.defined()) accum_grad(*px, dx);
        if (dgamma.defined()) accum_grad(*pg, dgamma);
        if (dbeta.defined()) accum_grad(*pb, dbeta);
    });
}

} // namespace

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    const Tensor& xv = x.value();
    if (xv.ndim() < 1) throw std::invalid_argument("layer_norm: rank-0 input");
    int64_t d = xv.shape().back();
    int64_t rows = xv.numel() / d;
    NormPlan plan{rows, d, 1, [d](int64_t r) { return r * d; }};
    return norm_impl(x, gamma, beta, eps, std::move(plan), "layer_norm");
}

Var channel_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    const Tensor& xv = x.value();
    if (xv.ndim() != 4) throw std::invalid_argument("channel_norm: expected ⟨B,C,H,W⟩");
    int64_t b = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    int64_t hw = h * w;
    NormPlan plan{b * hw, c, hw, [c, hw](int64_t r) {
                      int64_t bi = r / hw, pix = r % hw;
                      return bi * c * hw + pix;
                  }};
    return norm_impl(x, gamma, beta, eps, std::move(plan), "channel_norm");
}

} // namespace mvseg::ops

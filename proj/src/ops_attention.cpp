#include "mvseg/ops.hpp"

#include <cmath>
#include <stdexcept>

namespace mvseg::ops {

using ag::VarImpl;
using ag::accum_grad;
using ag::make_op;

Var attention_rows(const Var& q, const Var& k, const Var& v, double scale) {
    const Tensor& qv = q.value();
    const Tensor& kv = k.value();
    const Tensor& vv = v.value();
    if (qv.ndim() != 3 || kv.ndim() != 3 || vv.ndim() != 3)
        throw std::invalid_argument("attention_rows: expected ⟨G,N,d⟩ inputs");
    int64_t g = qv.dim(0), nq = qv.dim(1), d = qv.dim(2);
    int64_t nk = kv.dim(1);
    if (kv.dim(0) != g || vv.dim(0) != g || vv.dim(1) != nk || kv.dim(2) != d || vv.dim(2) != d)
        throw std::invalid_argument("attention_rows: shape mismatch q" + qv.shape_str() +
                                    " k" + kv.shape_str() + " v" + vv.shape_str());
    if (nk < 1) throw std::invalid_argument("attention_rows: empty key set");

    Tensor out({g, nq, d});
    std::vector<double> p(static_cast<size_t>(nk));
    const double* qp = qv.data();
    const double* kp = kv.data();
    const double* vp = vv.data();
    double* op = out.data();
    for (int64_t gi = 0; gi < g; ++gi) {
        const double* kbase = kp + gi * nk * d;
        const double* vbase = vp + gi * nk * d;
        for (int64_t i = 0; i < nq; ++i) {
            const double* qi = qp + (gi * nq + i) * d;
            double mx = -1e300;
            for (int64_t j = 0; j < nk; ++j) {
                double s = 0.0;
                const double* kj = kbase + j * d;
                for (int64_t t = 0; t < d; ++t) s += qi[t] * kj[t];
                s *= scale;
                p[static_cast<size_t>(j)] = s;
                if (s > mx) mx = s;
            }
            double z = 0.0;
            for (int64_t j = 0; j < nk; ++j) {
                double e = std::exp(p[static_cast<size_t>(j)] - mx);
                p[static_cast<size_t>(j)] = e;
                z += e;
            }
            double* oi = op + (gi * nq + i) * d;
            for (int64_t t = 0; t < d; ++t) oi[t] = 0.0;
            double zinv = 1.0 / z;
            for (int64_t j = 0; j < nk; ++j) {
                double w = p[static_cast<size_t>(j)] * zinv;
                const double* vj = vbase + j * d;
                for (int64_t t = 0; t < d; ++t) oi[t] += w * vj[t];
            }
        }
    }

    auto pq = q.impl(), pk = k.impl(), pv = v.impl();
    Tensor qin = qv, kin = kv, vin = vv;
    return make_op(std::move(out), {q, k, v},
                   [pq, pk, pv, qin, kin, vin, scale, g, nq, nk, d](VarImpl& self) {
        const double* gr = self.grad.data();
        const double* qp = qin.data();
        const double* kp = kin.data();
        const double* vp = vin.data();
        Tensor dq, dk, dv;
        if (pq->requires_grad) dq = Tensor(qin.shape());
        if (pk->requires_grad) dk = Tensor(kin.shape());
        if (pv->requires_grad) dv = Tensor(vin.shape());
        std::vector<double> pn(static_cast<size_t>(nk));
        std::vector<double> dp(static_cast<size_t>(nk));
        for (int64_t gi = 0; gi < g; ++gi) {
            const double* kbase = kp + gi * nk * d;
            const double* vbase = vp + gi * nk * d;
            for (int64_t i = 0; i < nq; ++i) {
                const double* qi = qp + (gi * nq + i) * d;
                const double* go = gr + (gi * nq + i) * d;
                // Recompute the softmax row (scores never stored).
                double mx = -1e300;
                for (int64_t j = 0; j < nk; ++j) {
                    double s = 0.0;
                    const double* kj = kbase + j * d;
                    for (int64_t t = 0; t < d; ++t) s += qi[t] * kj[t];
                    s *= scale;
                    pn[static_cast<size_t>(j)] = s;
                    if (s > mx) mx = s;
                }
                double z = 0.0;
                for (int64_t j = 0; j < nk; ++j) {
                    double e = std::exp(pn[static_cast<size_t>(j)] - mx);
                    pn[static_cast<size_t>(j)] = e;
                    z += e;
                }
                double zinv = 1.0 / z;
                double dot_sum = 0.0;
                for (int64_t j = 0; j < nk; ++j) {
                    pn[static_cast<size_t>(j)] *= zinv;
                    const double* vj = vbase + j * d;
                    double dpj = 0.0;
                    for (int64_t t = 0; t < d; ++t) dpj += go[t] * vj[t];
                    dp[static_cast<size_t>(j)] = dpj;
                    dot_sum += pn[static_cast<size_t>(j)] * dpj;
                }
                for (int64_t j = 0; j < nk; ++j) {
                    double w = pn[static_cast<size_t>(j)];
                    double ds = w * (dp[static_cast<size_t>(j)] - dot_sum) * scale;
                    const double* kj = kbase + j * d;
                    if (dv.defined()) {
                        double* dvj = dv.data() + (gi * nk + j) * d;
                        for (int64_t t = 0; t < d; ++t) dvj[t] += w * go[t];
                    }
                    if (dq.defined()) {
                        double* dqi = dq.data() + (gi * nq + i) * d;
                        for (int64_t t = 0; t < d; ++t) dqi[t] += ds * kj[t];
                    }
                    if (dk.defined()) {
                        double* dkj = dk.data() + (gi * nk + j) * d;
                        for (int64_t t = 0; t < d; ++t) dkj[t] += ds * qi[t];
                    }
                }
            }
        }
        if (dq.defined()) accum_grad(*pq, dq);
        if (dk.defined()) accum_grad(*pk, dk);
        if (dv.defined()) accum_grad(*pv, dv);
    });
}

namespace {

// Gather with a precomputed index map; backward scatters through the same map.
Var permuted_copy(const Var& x, std::vector<int64_t> out_shape,
                  std::function<int64_t(int64_t)> src_of_dst) {
    const Tensor& xv = x.value();
    Tensor out(std::move(out_shape));
    double* op = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) op[i] = xv.data()[src_of_dst(i)];
    auto px = x.impl();
    auto in_shape = xv.shape();
    int64_t n = out.numel();
    return make_op(std::move(out), {x}, [px, in_shape, n, src_of_dst](VarImpl& self) {
        if (!px->requires_grad) return;
        Tensor dx(in_shape);
        const double* g = self.grad.data();
        for (int64_t i = 0; i < n; ++i) dx.data()[src_of_dst(i)] += g[i];
        accum_grad(*px, dx);
    });
}

} // namespace

Var split_heads(const Var& x, int heads) {
    const Tensor& xv = x.value();
    if (xv.ndim() != 3) throw std::invalid_argument("split_heads: expected ⟨M,N,D⟩");
    int64_t m = xv.dim(0), n = xv.dim(1), dfull = xv.dim(2);
    if (heads < 1 || dfull % heads != 0)
        throw std::invalid_argument("split_heads: feature dim not divisible by head count");
    int64_t dh = dfull / heads;
    return permuted_copy(x, {m * heads, n, dh}, [=](int64_t i) {
        int64_t t = i % dh;
        int64_t rest = i / dh;
        int64_t ni = rest % n;
        int64_t mh = rest / n;
        int64_t hh = mh % heads;
        int64_t mi = mh / heads;
        return (mi * n + ni) * dfull + hh * dh + t;
    });
}

Var merge_heads(const Var& x, int heads) {
    const Tensor& xv = x.value();
    if (xv.ndim() != 3) throw std::invalid_argument("merge_heads: expected ⟨M*h,N,dh⟩");
    int64_t mh = xv.dim(0), n = xv.dim(1), dh = xv.dim(2);
    if (heads < 1 || mh % heads != 0)
        throw std::invalid_argument("merge_heads: leading dim not divisible by head count");
    int64_t m = mh / heads;
    int64_t dfull = dh * heads;
    return permuted_copy(x, {m, n, dfull}, [=](int64_t i) {
        int64_t dd = i % dfull;
        int64_t rest = i / dfull;
        int64_t ni = rest % n;
        int64_t mi = rest / n;
        int64_t hh = dd / dh;
        int64_t t = dd % dh;
        return ((mi * heads + hh) * n + ni) * dh + t;
    });
}

Var tokens_to_map(const Var& x, int64_t h, int64_t w) {
    const Tensor& xv = x.value();
    if (xv.ndim() != 3) throw std::invalid_argument("tokens_to_map: expected ⟨M,N,D⟩");
    int64_t m = xv.dim(0), n = xv.dim(1), d = xv.dim(2);
    if (n != h * w)
        throw std::invalid_argument("tokens_to_map: token count " + std::to_string(n) +
                                    " != " + std::to_string(h) + "x" + std::to_string(w));
    return permuted_copy(x, {m, d, h, w}, [=](int64_t i) {
        int64_t xx = i % w;
        int64_t rest = i / w;
        int64_t yy = rest % h;
        rest /= h;
        int64_t dd = rest % d;
        int64_t mi = rest / d;
        return (mi * n + yy * w + xx) * d + dd;
    });
}

Var map_to_tokens(const Var& x) {
    const Tensor& xv = x.value();
    if (xv.ndim() != 4) throw std::invalid_argument("map_to_tokens: expected ⟨M,D,H,W⟩");
    int64_t m = xv.dim(0), d = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    int64_t n = h * w;
    return permuted_copy(x, {m, n, d}, [=](int64_t i) {
        int64_t dd = i % d;
        int64_t rest = i / d;
        int64_t ni = rest % n;
        int64_t mi = rest / n;
        return ((mi * d + dd) * h + ni / w) * w + ni % w;
    });
}

Var broadcast_rows(const Var& x, int64_t m) {
    const Tensor& xv = x.value();
    if (xv.ndim() != 2) throw std::invalid_argument("broadcast_rows: expected ⟨T,C⟩");
    int64_t t = xv.dim(0), c = xv.dim(1);
    Tensor out({m, t, c});
    for (int64_t i = 0; i < m; ++i)
        std::copy(xv.data(), xv.data() + t * c, out.data() + i * t * c);
    auto px = x.impl();
    return make_op(std::move(out), {x}, [px, m, t, c](VarImpl& self) {
        if (!px->requires_grad) return;
        Tensor dx({t, c});
        const double* g = self.grad.data();
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < t * c; ++j) dx.data()[j] += g[i * t * c + j];
        accum_grad(*px, dx);
    });
}

Var select_token(const Var& x, int64_t t) {
    const Tensor& xv = x.value();
    if (xv.ndim() != 3) throw std::invalid_argument("select_token: expected ⟨M,T,C⟩");
    int64_t m = xv.dim(0), tt = xv.dim(1), c = xv.dim(2);
    if (t < 0 || t >= tt) throw std::invalid_argument("select_token: index out of range");
    Tensor out({m, c});
    for (int64_t i = 0; i < m; ++i)
        std::copy(xv.data() + (i * tt + t) * c, xv.data() + (i * tt + t) * c + c,
                  out.data() + i * c);
    auto px = x.impl();
    return make_op(std::move(out), {x}, [px, m, tt, c, t](VarImpl& self) {
        if (!px->requires_grad) return;
        Tensor dx({m, tt, c});
        const double* g = self.grad.data();
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < c; ++j) dx.data()[(i * tt + t) * c + j] += g[i * c + j];
        accum_grad(*px, dx);
    });
}

Var pixel_dot(const Var& feat, const Var& w) {
    const Tensor& fv = feat.value();
    const Tensor& wv = w.value();
    if (fv.ndim() != 4 || wv.ndim() != 2 || fv.dim(0) != wv.dim(0) || fv.dim(1) != wv.dim(1))
        throw std::invalid_argument("pixel_dot: expected feat ⟨M,C,H,W⟩ and w ⟨M,C⟩");
    int64_t m = fv.dim(0), c = fv.dim(1), h = fv.dim(2), ww = fv.dim(3);
    Tensor out({m, 1, h, ww});
    const double* fp = fv.data();
    const double* wp = wv.data();
    double* op = out.data();
    for (int64_t mi = 0; mi < m; ++mi)
        for (int64_t pix = 0; pix < h * ww; ++pix) {
            double acc = 0.0;
            for (int64_t ch = 0; ch < c; ++ch)
                acc += fp[(mi * c + ch) * h * ww + pix] * wp[mi * c + ch];
            op[mi * h * ww + pix] = acc;
        }
    auto pf = feat.impl(), pw = w.impl();
    Tensor fin = fv, win = wv;
    return make_op(std::move(out), {feat, w}, [pf, pw, fin, win, m, c, h, ww](VarImpl& self) {
        const double* g = self.grad.data();
        Tensor df, dw;
        if (pf->requires_grad) df = Tensor(fin.shape());
        if (pw->requires_grad) dw = Tensor(win.shape());
        for (int64_t mi = 0; mi < m; ++mi)
            for (int64_t ch = 0; ch < c; ++ch) {
                double wc = win.data()[mi * c + ch];
                double acc = 0.0;
                for (int64_t pix = 0; pix < h * ww; ++pix) {
                    double go = g[mi * h * ww + pix];
                    if (df.defined()) df.data()[(mi * c + ch) * h * ww + pix] += go * wc;
                    acc += go * fin.data()[(mi * c + ch) * h * ww + pix];
                }
                if (dw.defined()) dw.data()[mi * c + ch] += acc;
            }
        if (df.defined()) accum_grad(*pf, df);
        if (dw.defined()) accum_grad(*pw, dw);
    });
}

Var concat_channels(const Var& a, const Var& b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.ndim() != 4 || bv.ndim() != 4 || av.dim(0) != bv.dim(0) ||
        av.dim(2) != bv.dim(2) || av.dim(3) != bv.dim(3))
        throw std::invalid_argument("concat_channels: incompatible shapes " + av.shape_str() +
                                    " vs " + bv.shape_str());
    int64_t bs = av.dim(0), ca = av.dim(1), cb = bv.dim(1), h = av.dim(2), w = av.dim(3);
    int64_t hw = h * w;
    Tensor out({bs, ca + cb, h, w});
    for (int64_t n = 0; n < bs; ++n) {
        std::copy(av.data() + n * ca * hw, av.data() + (n + 1) * ca * hw,
                  out.data() + n * (ca + cb) * hw);
        std::copy(bv.data() + n * cb * hw, bv.data() + (n + 1) * cb * hw,
                  out.data() + n * (ca + cb) * hw + ca * hw);
    }
    auto pa = a.impl(), pb = b.impl();
    return make_op(std::move(out), {a, b}, [pa, pb, bs, ca, cb, h, w, hw](VarImpl& self) {
        const double* g = self.grad.data();
        if (pa->requires_grad) {
            Tensor da({bs, ca, h, w});
            for (int64_t n = 0; n < bs; ++n)
                std::copy(g + n * (ca + cb) * hw, g + n * (ca + cb) * hw + ca * hw,
                          da.data() + n * ca * hw);
            accum_grad(*pa, da);
        }
        if (pb->requires_grad) {
            Tensor db({bs, cb, h, w});
            for (int64_t n = 0; n < bs; ++n)
                std::copy(g + n * (ca + cb) * hw + ca * hw, g + (n + 1) * (ca + cb) * hw,
                          db.data() + n * cb * hw);
            accum_grad(*pb, db);
        }
    });
}

} // namespace mvseg::ops

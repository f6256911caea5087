#include "mvseg/ops.hpp"

#include <cmath>
#include <stdexcept>

namespace mvseg::ops {

using ag::VarImpl;
using ag::accum_grad;
using ag::make_op;

namespace {

void require_4d(const Tensor& t, const char* op) {
    if (t.ndim() != 4)
        throw std::invalid_argument(std::string(op) + ": expected 4-D input, got " + t.shape_str());
}

} // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    require_4d(xv, "conv2d");
    if (wv.ndim() != 4) throw std::invalid_argument("conv2d: weight must be ⟨Co,Ci,kh,kw⟩");
    int64_t bs = xv.dim(0), ci = xv.dim(1), ih = xv.dim(2), iw = xv.dim(3);
    int64_t co = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
    if (wv.dim(1) != ci)
        throw std::invalid_argument("conv2d: channel mismatch " + xv.shape_str() + " vs " + wv.shape_str());
    if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
    int64_t oh = (ih + 2 * pad - kh) / stride + 1;
    int64_t ow = (iw + 2 * pad - kw) / stride + 1;
    if (oh < 1 || ow < 1) throw std::invalid_argument("conv2d: output would be empty");
    if (b.defined() && b.value().numel() != co)
        throw std::invalid_argument("conv2d: bias size mismatch");

    Tensor out({bs, co, oh, ow});
    const double* xp = xv.data();
    const double* wp = wv.data();
    double* op = out.data();
    for (int64_t n = 0; n < bs; ++n)
        for (int64_t oc = 0; oc < co; ++oc) {
            double bias = b.defined() ? b.value().data()[oc] : 0.0;
            for (int64_t oy = 0; oy < oh; ++oy)
                for (int64_t ox = 0; ox < ow; ++ox) {
                    double acc = bias;
                    for (int64_t icn = 0; icn < ci; ++icn)
                        for (int64_t ky = 0; ky < kh; ++ky) {
                            int64_t iy = oy * stride - pad + ky;
                            if (iy < 0 || iy >= ih) continue;
                            const double* xrow = xp + ((n * ci + icn) * ih + iy) * iw;
                            const double* wrow = wp + ((oc * ci + icn) * kh + ky) * kw;
                            for (int64_t kx = 0; kx < kw; ++kx) {
                                int64_t ix = ox * stride - pad + kx;
                                if (ix < 0 || ix >= iw) continue;
                                acc += xrow[ix] * wrow[kx];
                            }
                        }
                    op[((n * co + oc) * oh + oy) * ow + ox] = acc;
                }
        }

    auto px = x.impl(), pw = w.impl();
    auto pb = b.defined() ? b.impl() : nullptr;
    Tensor xin = xv, win = wv;
    std::vector<Var> inputs = b.defined() ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    return make_op(std::move(out), std::move(inputs),
                   [px, pw, pb, xin, win, stride, pad, bs, ci, ih, iw, co, kh, kw, oh, ow](VarImpl& self) {
        const double* g = self.grad.data();
        const double* xp = xin.data();
        const double* wp = win.data();
        Tensor dx, dw, db;
        if (px->requires_grad) dx = Tensor(xin.shape());
        if (pw->requires_grad) dw = Tensor(win.shape());
        if (pb && pb->requires_grad) db = Tensor({co});
        for (int64_t n = 0; n < bs; ++n)
            for (int64_t oc = 0; oc < co; ++oc)
                for (int64_t oy = 0; oy < oh; ++oy)
                    for (int64_t ox = 0; ox < ow; ++ox) {
                        double go = g[((n * co + oc) * oh + oy) * ow + ox];
                        if (db.defined()) db.data()[oc] += go;
                        for (int64_t icn = 0; icn < ci; ++icn)
                            for (int64_t ky = 0; ky < kh; ++ky) {
                                int64_t iy = oy * stride - pad + ky;
                                if (iy < 0 || iy >= ih) continue;
                                for (int64_t kx = 0; kx < kw; ++kx) {
                                    int64_t ix = ox * stride - pad + kx;
                                    if (ix < 0 || ix >= iw) continue;
                                    int64_t xoff = ((n * ci + icn) * ih + iy) * iw + ix;
                                    int64_t woff = ((oc * ci + icn) * kh + ky) * kw + kx;
                                    if (dx.defined()) dx.data()[xoff] += go * wp[woff];
                                    if (dw.defined()) dw.data()[woff] += go * xp[xoff];
                                }
                            }
                    }
        if (dx.defined()) accum_grad(*px, dx);
        if (dw.defined()) accum_grad(*pw, dw);
        if (db.defined()) accum_grad(*pb, db);
    });
}

Var dwconv2d(const Var& x, const Var& w, int pad) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    require_4d(xv, "dwconv2d");
    if (wv.ndim() != 3 || wv.dim(0) != xv.dim(1))
        throw std::invalid_argument("dwconv2d: weight must be ⟨C,kh,kw⟩ matching input channels");
    int64_t bs = xv.dim(0), c = xv.dim(1), ih = xv.dim(2), iw = xv.dim(3);
    int64_t kh = wv.dim(1), kw = wv.dim(2);
    int64_t oh = ih + 2 * pad - kh + 1;
    int64_t ow = iw + 2 * pad - kw + 1;
    if (oh < 1 || ow < 1) throw std::invalid_argument("dwconv2d: output would be empty");

    Tensor out({bs, c, oh, ow});
    const double* xp = xv.data();
    const double* wp = wv.data();
    double* op = out.data();
    for (int64_t n = 0; n < bs; ++n)
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t oy = 0; oy < oh; ++oy)
                for (int64_t ox = 0; ox < ow; ++ox) {
                    double acc = 0.0;
                    for (int64_t ky = 0; ky < kh; ++ky) {
                        int64_t iy = oy - pad + ky;
                        if (iy < 0 || iy >= ih) continue;
                        for (int64_t kx = 0; kx < kw; ++kx) {
                            int64_t ix = ox - pad + kx;
                            if (ix < 0 || ix >= iw) continue;
                            acc += xp[((n * c + ch) * ih + iy) * iw + ix] * wp[(ch * kh + ky) * kw + kx];
                        }
                    }
                    op[((n * c + ch) * oh + oy) * ow + ox] = acc;
                }

    auto px = x.impl(), pw = w.impl();
    Tensor xin = xv, win = wv;
    return make_op(std::move(out), {x, w},
                   [px, pw, xin, win, pad, bs, c, ih, iw, kh, kw, oh, ow](VarImpl& self) {
        const double* g = self.grad.data();
        Tensor dx, dw;
        if (px->requires_grad) dx = Tensor(xin.shape());
        if (pw->requires_grad) dw = Tensor(win.shape());
        for (int64_t n = 0; n < bs; ++n)
            for (int64_t ch = 0; ch < c; ++ch)
                for (int64_t oy = 0; oy < oh; ++oy)
                    for (int64_t ox = 0; ox < ow; ++ox) {
                        double go = g[((n * c + ch) * oh + oy) * ow + ox];
                        for (int64_t ky = 0; ky < kh; ++ky) {
                            int64_t iy = oy - pad + ky;
                            if (iy < 0 || iy >= ih) continue;
                            for (int64_t kx = 0; kx < kw; ++kx) {
                                int64_t ix = ox - pad + kx;
                                if (ix < 0 || ix >= iw) continue;
                                int64_t xoff = ((n * c + ch) * ih + iy) * iw + ix;
                                int64_t woff = (ch * kh + ky) * kw + kx;
                                if (dx.defined()) dx.data()[xoff] += go * win.data()[woff];
                                if (dw.defined()) dw.data()[woff] += go * xin.data()[xoff];
                            }
                        }
                    }
        if (dx.defined()) accum_grad(*px, dx);
        if (dw.defined()) accum_grad(*pw, dw);
    });
}

Var dwconv3d_pair(const Var& a, const Var& b, const Var& w, int pad) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const Tensor& wv = w.value();
    require_4d(av, "dwconv3d_pair");
    if (!av.same_shape(bv))
        throw std::invalid_argument("dwconv3d_pair: stacked slices must share a shape");
    if (wv.ndim() != 4 || wv.dim(0) != av.dim(1) || wv.dim(1) != 2)
        throw std::invalid_argument("dwconv3d_pair: weight must be ⟨C,2,kh,kw⟩");
    int64_t bs = av.dim(0), c = av.dim(1), ih = av.dim(2), iw = av.dim(3);
    int64_t kh = wv.dim(2), kw = wv.dim(3);
    int64_t oh = ih + 2 * pad - kh + 1;
    int64_t ow = iw + 2 * pad - kw + 1;
    if (oh < 1 || ow < 1) throw std::invalid_argument("dwconv3d_pair: output would be empty");

    Tensor out({bs, c, oh, ow});
    const double* ap = av.data();
    const double* bp = bv.data();
    const double* wp = wv.data();
    double* op = out.data();
    for (int64_t n = 0; n < bs; ++n)
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t oy = 0; oy < oh; ++oy)
                for (int64_t ox = 0; ox < ow; ++ox) {
                    double acc = 0.0;
                    for (int64_t ky = 0; ky < kh; ++ky) {
                        int64_t iy = oy - pad + ky;
                        if (iy < 0 || iy >= ih) continue;
                        for (int64_t kx = 0; kx < kw; ++kx) {
                            int64_t ix = ox - pad + kx;
                            if (ix < 0 || ix >= iw) continue;
                            int64_t xoff = ((n * c + ch) * ih + iy) * iw + ix;
                            int64_t w0 = ((ch * 2 + 0) * kh + ky) * kw + kx;
                            int64_t w1 = ((ch * 2 + 1) * kh + ky) * kw + kx;
                            acc += ap[xoff] * wp[w0] + bp[xoff] * wp[w1];
                        }
                    }
                    op[((n * c + ch) * oh + oy) * ow + ox] = acc;
                }

    auto pa = a.impl(), pb = b.impl(), pw = w.impl();
    Tensor ain = av, bin = bv, win = wv;
    return make_op(std::move(out), {a, b, w},
                   [pa, pb, pw, ain, bin, win, pad, bs, c, ih, iw, kh, kw, oh, ow](VarImpl& self) {
        const double* g = self.grad.data();
        Tensor da, db, dw;
        if (pa->requires_grad) da = Tensor(ain.shape());
        if (pb->requires_grad) db = Tensor(bin.shape());
        if (pw->requires_grad) dw = Tensor(win.shape());
        for (int64_t n = 0; n < bs; ++n)
            for (int64_t ch = 0; ch < c; ++ch)
                for (int64_t oy = 0; oy < oh; ++oy)
                    for (int64_t ox = 0; ox < ow; ++ox) {
                        double go = g[((n * c + ch) * oh + oy) * ow + ox];
                        for (int64_t ky = 0; ky < kh; ++ky) {
                            int64_t iy = oy - pad + ky;
                            if (iy < 0 || iy >= ih) continue;
                            for (int64_t kx = 0; kx < kw; ++kx) {
                                int64_t ix = ox - pad + kx;
                                if (ix < 0 || ix >= iw) continue;
                                int64_t xoff = ((n * c + ch) * ih + iy) * iw + ix;
                                int64_t w0 = ((ch * 2 + 0) * kh + ky) * kw + kx;
                                int64_t w1 = ((ch * 2 + 1) * kh + ky) * kw + kx;
                                if (da.defined()) da.data()[xoff] += go * win.data()[w0];
                                if (db.defined()) db.data()[xoff] += go * win.data()[w1];
                                if (dw.defined()) {
                                    dw.data()[w0] += go * ain.data()[xoff];
                                    dw.data()[w1] += go * bin.data()[xoff];
                                }
                            }
                        }
                    }
        if (da.defined()) accum_grad(*pa, da);
        if (db.defined()) accum_grad(*pb, db);
        if (dw.defined()) accum_grad(*pw, dw);
    });
}

Var conv_transpose2x2(const Var& x, const Var& w, const Var& b) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    require_4d(xv, "conv_transpose2x2");
    if (wv.ndim() != 4 || wv.dim(2) != 2 || wv.dim(3) != 2 || wv.dim(0) != xv.dim(1))
        throw std::invalid_argument("conv_transpose2x2: weight must be ⟨Ci,Co,2,2⟩");
    int64_t bs = xv.dim(0), ci = xv.dim(1), ih = xv.dim(2), iw = xv.dim(3);
    int64_t co = wv.dim(1);
    if (b.defined() && b.value().numel() != co)
        throw std::invalid_argument("conv_transpose2x2: bias size mismatch");

    Tensor out({bs, co, ih * 2, iw * 2});
    if (b.defined()) {
        double* op = out.data();
        for (int64_t n = 0; n < bs; ++n)
            for (int64_t oc = 0; oc < co; ++oc) {
                double bias = b.value().data()[oc];
                double* plane = op + (n * co + oc) * ih * 2 * iw * 2;
                for (int64_t i = 0; i < ih * 2 * iw * 2; ++i) plane[i] = bias;
            }
    }
    {
        const double* xp = xv.data();
        const double* wp = wv.data();
        double* op = out.data();
        int64_t oh = ih * 2, ow = iw * 2;
        for (int64_t n = 0; n < bs; ++n)
            for (int64_t icn = 0; icn < ci; ++icn)
                for (int64_t y = 0; y < ih; ++y)
                    for (int64_t xx = 0; xx < iw; ++xx) {
                        double v = xp[((n * ci + icn) * ih + y) * iw + xx];
                        for (int64_t oc = 0; oc < co; ++oc)
                            for (int64_t dy = 0; dy < 2; ++dy)
                                for (int64_t dxk = 0; dxk < 2; ++dxk)
                                    op[((n * co + oc) * oh + 2 * y + dy) * ow + 2 * xx + dxk] +=
                                        v * wp[((icn * co + oc) * 2 + dy) * 2 + dxk];
                    }
    }

    auto px = x.impl(), pw = w.impl();
    auto pb = b.defined() ? b.impl() : nullptr;
    Tensor xin = xv, win = wv;
    std::vector<Var> inputs = b.defined() ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    return make_op(std::move(out), std::move(inputs),
                   [px, pw, pb, xin, win, bs, ci, co, ih, iw](VarImpl& self) {
        const double* g = self.grad.data();
        int64_t oh = ih * 2, ow = iw * 2;
        Tensor dx, dw, db;
        if (px->requires_grad) dx = Tensor(xin.shape());
        if (pw->requires_grad) dw = Tensor(win.shape());
        if (pb && pb->requires_grad) db = Tensor({co});
        if (db.defined()) {
            for (int64_t n = 0; n < bs; ++n)
                for (int64_t oc = 0; oc < co; ++oc) {
                    const double* plane = g + (n * co + oc) * oh * ow;
                    double s = 0.0;
                    for (int64_t i = 0; i < oh * ow; ++i) s += plane[i];
                    db.data()[oc] += s;
                }
        }
        for (int64_t n = 0; n < bs; ++n)
            for (int64_t icn = 0; icn < ci; ++icn)
                for (int64_t y = 0; y < ih; ++y)
                    for (int64_t xx = 0; xx < iw; ++xx) {
                        int64_t xoff = ((n * ci + icn) * ih + y) * iw + xx;
                        double acc = 0.0;
                        for (int64_t oc = 0; oc < co; ++oc)
                            for (int64_t dy = 0; dy < 2; ++dy)
                                for (int64_t dxk = 0; dxk < 2; ++dxk) {
                                    double go = g[((n * co + oc) * oh + 2 * y + dy) * ow + 2 * xx + dxk];
                                    int64_t woff = ((icn * co + oc) * 2 + dy) * 2 + dxk;
                                    acc += go * win.data()[woff];
                                    if (dw.defined()) dw.data()[woff] += go * xin.data()[xoff];
                                }
                        if (dx.defined()) dx.data()[xoff] += acc;
                    }
        if (dx.defined()) accum_grad(*px, dx);
        if (dw.defined()) accum_grad(*pw, dw);
        if (db.defined()) accum_grad(*pb, db);
    });
}

Var avg_pool2x2(const Var& x) {
    const Tensor& xv = x.value();
    require_4d(xv, "avg_pool2x2");
    int64_t bs = xv.dim(0), c = xv.dim(1), ih = xv.dim(2), iw = xv.dim(3);
    if (ih % 2 != 0 || iw % 2 != 0)
        throw std::invalid_argument("avg_pool2x2: spatial dims must be even, got " + xv.shape_str());
    int64_t oh = ih / 2, ow = iw / 2;
    Tensor out({bs, c, oh, ow});
    const double* xp = xv.data();
    double* op = out.data();
    for (int64_t nc = 0; nc < bs * c; ++nc)
        for (int64_t oy = 0; oy < oh; ++oy)
            for (int64_t ox = 0; ox < ow; ++ox) {
                const double* base = xp + (nc * ih + 2 * oy) * iw + 2 * ox;
                op[(nc * oh + oy) * ow + ox] = 0.25 * (base[0] + base[1] + base[iw] + base[iw + 1]);
            }
    auto px = x.impl();
    auto in_shape = xv.shape();
    return make_op(std::move(out), {x}, [px, in_shape, bs, c, ih, iw, oh, ow](VarImpl& self) {
        if (!px->requires_grad) return;
        Tensor dx(in_shape);
        const double* g = self.grad.data();
        for (int64_t nc = 0; nc < bs * c; ++nc)
            for (int64_t oy = 0; oy < oh; ++oy)
                for (int64_t ox = 0; ox < ow; ++ox) {
                    double go = 0.25 * g[(nc * oh + oy) * ow + ox];
                    double* base = dx.data() + (nc * ih + 2 * oy) * iw + 2 * ox;
                    base[0] += go;
                    base[1] += go;
                    base[iw] += go;
                    base[iw + 1] += go;
                }
        accum_grad(*px, dx);
    });
}

namespace {

struct LerpAxis {
    std::vector<int64_t> i0, i1;
    std::vector<double> f;
};

LerpAxis make_axis(int64_t in, int64_t out) {
    LerpAxis ax;
    ax.i0.resize(out);
    ax.i1.resize(out);
    ax.f.resize(out);
    double scale = static_cast<double>(in) / static_cast<double>(out);
    for (int64_t o = 0; o < out; ++o) {
        double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
        if (src < 0.0) src = 0.0;
        int64_t i0 = static_cast<int64_t>(src);
        if (i0 > in - 1) i0 = in - 1;
        int64_t i1 = std::min(i0 + 1, in - 1);
        ax.i0[o] = i0;
        ax.i1[o] = i1;
        ax.f[o] = src - static_cast<double>(i0);
    }
    return ax;
}

} // namespace

Var bilinear_resize(const Var& x, int64_t out_h, int64_t out_w) {
    const Tensor& xv = x.value();
    require_4d(xv, "bilinear_resize");
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("bilinear_resize: non-positive output size");
    int64_t bs = xv.dim(0), c = xv.dim(1), ih = xv.dim(2), iw = xv.dim(3);
    if (ih == out_h && iw == out_w) {
        // Identity: pass values through untouched.
        Tensor out = xv.reshaped(xv.shape());
        auto px = x.impl();
        return make_op(std::move(out), {x}, [px](VarImpl& self) {
            if (px->requires_grad) accum_grad(*px, self.grad);
        });
    }
    LerpAxis ay = make_axis(ih, out_h);
    LerpAxis axx = make_axis(iw, out_w);
    Tensor out({bs, c, out_h, out_w});
    const double* xp = xv.data();
    double* op = out.data();
    for (int64_t nc = 0; nc < bs * c; ++nc) {
        const double* plane = xp + nc * ih * iw;
        double* oplane = op + nc * out_h * out_w;
        for (int64_t oy = 0; oy < out_h; ++oy) {
            const double* r0 = plane + ay.i0[oy] * iw;
            const double* r1 = plane + ay.i1[oy] * iw;
            double fy = ay.f[oy];
            for (int64_t ox = 0; ox < out_w; ++ox) {
                double fx = axx.f[ox];
                double top = r0[axx.i0[ox]] * (1.0 - fx) + r0[axx.i1[ox]] * fx;
                double bot = r1[axx.i0[ox]] * (1.0 - fx) + r1[axx.i1[ox]] * fx;
                oplane[oy * out_w + ox] = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    auto px = x.impl();
    auto in_shape = xv.shape();
    return make_op(std::move(out), {x},
                   [px, in_shape, ay, axx, bs, c, ih, iw, out_h, out_w](VarImpl& self) {
        if (!px->requires_grad) return;
        Tensor dx(in_shape);
        const double* g = self.grad.data();
        for (int64_t nc = 0; nc < bs * c; ++nc) {
            double* plane = dx.data() + nc * ih * iw;
            const double* gplane = g + nc * out_h * out_w;
            for (int64_t oy = 0; oy < out_h; ++oy) {
                double fy = ay.f[oy];
                for (int64_t ox = 0; ox < out_w; ++ox) {
                    double fx = axx.f[ox];
                    double go = gplane[oy * out_w + ox];
                    plane[ay.i0[oy] * iw + axx.i0[ox]] += go * (1.0 - fy) * (1.0 - fx);
                    plane[ay.i0[oy] * iw + axx.i1[ox]] += go * (1.0 - fy) * fx;
                    plane[ay.i1[oy] * iw + axx.i0[ox]] += go * fy * (1.0 - fx);
                    plane[ay.i1[oy] * iw + axx.i1[ox]] += go * fy * fx;
                }
            }
        }
        accum_grad(*px, dx);
    });
}

Tensor avg_pool_same(const Tensor& x, int k) {
    require_4d(x, "avg_pool_same");
    if (k < 1 || k % 2 == 0) throw std::invalid_argument("avg_pool_same: kernel must be odd and >= 1");
    int64_t bs = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    int r = (k - 1) / 2;
    Tensor out(x.shape());
    const double inv = 1.0 / (static_cast<double>(k) * k);
    const double* xp = x.data();
    double* op = out.data();
    for (int64_t nc = 0; nc < bs * c; ++nc) {
        const double* plane = xp + nc * h * w;
        double* oplane = op + nc * h * w;
        for (int64_t y = 0; y < h; ++y)
            for (int64_t xx = 0; xx < w; ++xx) {
                double acc = 0.0;
                for (int64_t dy = -r; dy <= r; ++dy) {
                    int64_t iy = y + dy;
                    if (iy < 0 || iy >= h) continue;
                    for (int64_t dxk = -r; dxk <= r; ++dxk) {
                        int64_t ix = xx + dxk;
                        if (ix < 0 || ix >= w) continue;
                        acc += plane[iy * w + ix];
                    }
                }
                oplane[y * w + xx] = acc * inv;
            }
    }
    return out;
}

Tensor bilinear_resize_plain(const Tensor& x, int64_t out_h, int64_t out_w) {
    ag::NoGradGuard ng;
    return bilinear_resize(Var::constant(x), out_h, out_w).value();
}

} // namespace mvseg::ops

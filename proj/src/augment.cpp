#include "mvseg/augment.hpp"

#include <cmath>
#include <stdexcept>

#include "mvseg/ops.hpp"

namespace mvseg::augment {

namespace {

int64_t reflect(int64_t i, int64_t n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

double sample_bilinear(const double* plane, int64_t h, int64_t w, double sy, double sx) {
    int64_t y0 = static_cast<int64_t>(std::floor(sy));
    int64_t x0 = static_cast<int64_t>(std::floor(sx));
    double fy = sy - static_cast<double>(y0);
    double fx = sx - static_cast<double>(x0);
    int64_t ry0 = reflect(y0, h), ry1 = reflect(y0 + 1, h);
    int64_t rx0 = reflect(x0, w), rx1 = reflect(x0 + 1, w);
    double top = plane[ry0 * w + rx0] * (1.0 - fx) + plane[ry0 * w + rx1] * fx;
    double bot = plane[ry1 * w + rx0] * (1.0 - fx) + plane[ry1 * w + rx1] * fx;
    return top * (1.0 - fy) + bot * fy;
}

double sample_nearest(const double* plane, int64_t h, int64_t w, double sy, double sx) {
    int64_t y = reflect(static_cast<int64_t>(std::llround(sy)), h);
    int64_t x = reflect(static_cast<int64_t>(std::llround(sx)), w);
    return plane[y * w + x];
}

Tensor crop_resize(const Tensor& x, int64_t y0, int64_t x0, int64_t ch, int64_t cw, bool nearest) {
    int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor cropped({c, ch, cw});
    for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t y = 0; y < ch; ++y)
            for (int64_t xx = 0; xx < cw; ++xx)
                cropped.data()[(ci * ch + y) * cw + xx] =
                    x.data()[(ci * h + y0 + y) * w + x0 + xx];
    if (nearest) return nearest_resize(cropped, h, w);
    Tensor c4 = cropped.reshaped({1, c, ch, cw});
    return ops::bilinear_resize_plain(c4, h, w).reshaped({c, h, w});
}

} // namespace

Tensor nearest_resize(const Tensor& x, int64_t out_h, int64_t out_w) {
    if (x.ndim() != 3) throw std::invalid_argument("nearest_resize: expected ⟨C,H,W⟩");
    int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor out({c, out_h, out_w});
    double sy = static_cast<double>(h) / static_cast<double>(out_h);
    double sx = static_cast<double>(w) / static_cast<double>(out_w);
    for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t y = 0; y < out_h; ++y) {
            int64_t iy = std::min<int64_t>(static_cast<int64_t>((static_cast<double>(y) + 0.5) * sy), h - 1);
            for (int64_t xx = 0; xx < out_w; ++xx) {
                int64_t ix = std::min<int64_t>(static_cast<int64_t>((static_cast<double>(xx) + 0.5) * sx), w - 1);
                out.data()[(ci * out_h + y) * out_w + xx] = x.data()[(ci * h + iy) * w + ix];
            }
        }
    return out;
}

Tensor hflip(const Tensor& x) {
    if (x.ndim() != 3) throw std::invalid_argument("hflip: expected ⟨C,H,W⟩");
    int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor out(x.shape());
    for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t xx = 0; xx < w; ++xx)
                out.data()[(ci * h + y) * w + xx] = x.data()[(ci * h + y) * w + (w - 1 - xx)];
    return out;
}

Tensor rotate(const Tensor& x, double degrees, bool nearest) {
    if (x.ndim() != 3) throw std::invalid_argument("rotate: expected ⟨C,H,W⟩");
    int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    double rad = degrees * M_PI / 180.0;
    double cosr = std::cos(rad), sinr = std::sin(rad);
    double cy = (static_cast<double>(h) - 1.0) / 2.0;
    double cx = (static_cast<double>(w) - 1.0) / 2.0;
    Tensor out(x.shape());
    for (int64_t ci = 0; ci < c; ++ci) {
        const double* plane = x.data() + ci * h * w;
        double* oplane = out.data() + ci * h * w;
        for (int64_t y = 0; y < h; ++y)
            for (int64_t xx = 0; xx < w; ++xx) {
                // Inverse mapping: rotate the output grid back by -degrees.
                double dy = static_cast<double>(y) - cy;
                double dx = static_cast<double>(xx) - cx;
                double sy = cy + dy * cosr - dx * sinr;
                double sx = cx + dy * sinr + dx * cosr;
                oplane[y * w + xx] = nearest ? sample_nearest(plane, h, w, sy, sx)
                                             : sample_bilinear(plane, h, w, sy, sx);
            }
    }
    return out;
}

void apply(Tensor& image, Tensor& mask, const AugmentConfig& cfg, std::mt19937_64& rng) {
    if (image.ndim() != 3 || mask.ndim() != 3 || image.dim(1) != mask.dim(1) ||
        image.dim(2) != mask.dim(2))
        throw std::invalid_argument("augment: image/mask spatial dims must match");

    if (cfg.hflip && std::uniform_int_distribution<int>(0, 1)(rng) == 1) {
        image = hflip(image);
        mask = hflip(mask);
    }
    if (cfg.crop) {
        int64_t h = image.dim(1), w = image.dim(2);
        double area = std::uniform_real_distribution<double>(cfg.crop_area_min, 1.0)(rng);
        double f = std::sqrt(area);
        int64_t ch = std::max<int64_t>(1, static_cast<int64_t>(std::llround(static_cast<double>(h) * f)));
        int64_t cw = std::max<int64_t>(1, static_cast<int64_t>(std::llround(static_cast<double>(w) * f)));
        ch = std::min(ch, h);
        cw = std::min(cw, w);
        int64_t y0 = std::uniform_int_distribution<int64_t>(0, h - ch)(rng);
        int64_t x0 = std::uniform_int_distribution<int64_t>(0, w - cw)(rng);
        image = crop_resize(image, y0, x0, ch, cw, /*nearest=*/false);
        mask = crop_resize(mask, y0, x0, ch, cw, /*nearest=*/true);
    }
    if (cfg.rotation) {
        double deg = std::uniform_real_distribution<double>(-cfg.rotation_max_deg,
                                                            cfg.rotation_max_deg)(rng);
        image = rotate(image, deg, /*nearest=*/false);
        mask = rotate(mask, deg, /*nearest=*/true);
    }
}

} // namespace mvseg::augment

#include "mvseg/metrics.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

#include "mvseg/errors.hpp"
#include "mvseg/image_io.hpp"
#include "mvseg/ops.hpp"

namespace mvseg::metrics {

namespace {

constexpr double kEps = DBL_EPSILON;

void check_maps(const Tensor& pred, const Tensor& gt, const char* op, bool binary_gt = true) {
    if (pred.ndim() != 2 || gt.ndim() != 2)
        throw std::invalid_argument(std::string(op) + ": expected 2-D maps");
    if (!pred.same_shape(gt))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + pred.shape_str() +
                                    " vs " + gt.shape_str());
    const double* p = pred.data();
    const double* g = gt.data();
    for (int64_t i = 0; i < pred.numel(); ++i) {
        if (!(p[i] >= 0.0 && p[i] <= 1.0))
            throw std::invalid_argument(std::string(op) + ": pred values must lie in [0,1]");
        if (binary_gt) {
            if (g[i] != 0.0 && g[i] != 1.0)
                throw std::invalid_argument(std::string(op) + ": gt must be strictly binary");
        } else if (!(g[i] >= 0.0 && g[i] <= 1.0)) {
            throw std::invalid_argument(std::string(op) + ": gt values must lie in [0,1]");
        }
    }
}

int64_t count_fg(const Tensor& gt) {
    int64_t n = 0;
    for (int64_t i = 0; i < gt.numel(); ++i) n += gt.data()[i] == 1.0;
    return n;
}

// Threshold sweep convention, shared by every metric here: a pixel counts
// as predicted foreground at threshold index k (t = k/255) when p >= t for
// k >= 1, and when p > 0 at k = 0 ("any response"). This keeps a perfect
// binary prediction perfect across the whole sweep.
//
// Returns the largest k for which the pixel is foreground, or -1 when it
// never is (p == 0). The adjustment loops keep the bucket consistent with
// direct `p >= j/255.0` comparisons at representability boundaries.
int threshold_bucket(double p) {
    if (p == 0.0) return -1;
    int k = static_cast<int>(std::floor(p * 255.0));
    if (k > 255) k = 255;
    if (k < 0) k = 0;
    while (k < 255 && p >= static_cast<double>(k + 1) / 255.0) ++k;
    while (k > 0 && p < static_cast<double>(k) / 255.0) --k;
    return k;
}

struct ThresholdCounts {
    // tp[j], fp[j]: pixel counts with pred >= j/255, split by gt.
    std::array<int64_t, 256> tp{};
    std::array<int64_t, 256> fp{};
    int64_t n_fg = 0;
    int64_t n_bg = 0;
};

ThresholdCounts threshold_counts(const Tensor& pred, const Tensor& gt) {
    std::array<int64_t, 256> hist_fg{};
    std::array<int64_t, 256> hist_bg{};
    ThresholdCounts out;
    const double* p = pred.data();
    const double* g = gt.data();
    for (int64_t i = 0; i < pred.numel(); ++i) {
        int k = threshold_bucket(p[i]);
        if (g[i] == 1.0) {
            if (k >= 0) ++hist_fg[static_cast<size_t>(k)];
            ++out.n_fg;
        } else {
            if (k >= 0) ++hist_bg[static_cast<size_t>(k)];
            ++out.n_bg;
        }
    }
    int64_t acc_fg = 0, acc_bg = 0;
    for (int j = 255; j >= 0; --j) {
        acc_fg += hist_fg[static_cast<size_t>(j)];
        acc_bg += hist_bg[static_cast<size_t>(j)];
        out.tp[static_cast<size_t>(j)] = acc_fg;
        out.fp[static_cast<size_t>(j)] = acc_bg;
    }
    return out;
}

double fbeta(double p, double r, double beta_sq) {
    double denom = beta_sq * p + r;
    return denom > 0.0 ? (1.0 + beta_sq) * p * r / denom : 0.0;
}

} // namespace

double mae(const Tensor& pred, const Tensor& gt) {
    check_maps(pred, gt, "mae", /*binary_gt=*/false); // symmetric in its arguments
    double acc = 0.0;
    for (int64_t i = 0; i < pred.numel(); ++i)
        acc += std::fabs(pred.data()[i] - gt.data()[i]);
    return acc / static_cast<double>(pred.numel());
}

PrCurve pr_curve(const Tensor& pred, const Tensor& gt) {
    check_maps(pred, gt, "pr_curve");
    ThresholdCounts c = threshold_counts(pred, gt);
    if (c.n_fg == 0) throw std::invalid_argument("pr_curve: empty-foreground gt");
    PrCurve out;
    for (int j = 0; j < 256; ++j) {
        int64_t tp = c.tp[static_cast<size_t>(j)];
        int64_t fp = c.fp[static_cast<size_t>(j)];
        out.precision[static_cast<size_t>(j)] =
            (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 1.0;
        out.recall[static_cast<size_t>(j)] = static_cast<double>(tp) / static_cast<double>(c.n_fg);
    }
    return out;
}

double max_f(const Tensor& pred, const Tensor& gt, double beta_sq) {
    PrCurve c = pr_curve(pred, gt);
    double best = 0.0;
    for (int j = 0; j < 256; ++j)
        best = std::max(best, fbeta(c.precision[static_cast<size_t>(j)],
                                    c.recall[static_cast<size_t>(j)], beta_sq));
    return best;
}

void distance_transform(const std::vector<uint8_t>& fg, int64_t h, int64_t w,
                        std::vector<int64_t>& dist2, std::vector<int64_t>& nearest) {
    const int64_t n = h * w;
    const int64_t inf = 4 * (h * h + w * w) + 4;
    dist2.assign(static_cast<size_t>(n), inf);
    nearest.assign(static_cast<size_t>(n), -1);

    // Column pass: vertical distance to the nearest foreground in the column.
    std::vector<int64_t> coldist(static_cast<size_t>(n), inf);
    for (int64_t x = 0; x < w; ++x) {
        int64_t last = -(inf);
        for (int64_t y = 0; y < h; ++y) {
            if (fg[static_cast<size_t>(y * w + x)]) last = y;
            coldist[static_cast<size_t>(y * w + x)] = last < 0 ? inf : y - last;
        }
        last = inf;
        for (int64_t y = h - 1; y >= 0; --y) {
            if (fg[static_cast<size_t>(y * w + x)]) last = y;
            if (last != inf)
                coldist[static_cast<size_t>(y * w + x)] =
                    std::min(coldist[static_cast<size_t>(y * w + x)], last - y);
        }
    }

    // Row pass: lower envelope of parabolas. Columns without any foreground
    // carry a large finite height and never win against a real site.
    const double kFar = 1e20;
    std::vector<int64_t> v(static_cast<size_t>(w));
    std::vector<double> z(static_cast<size_t>(w) + 1);
    std::vector<double> f(static_cast<size_t>(w));
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            int64_t cd = coldist[static_cast<size_t>(y * w + x)];
            f[static_cast<size_t>(x)] = cd >= inf ? kFar : static_cast<double>(cd * cd);
        }
        int64_t k = 0;
        v[0] = 0;
        z[0] = -1e30;
        z[1] = 1e30;
        for (int64_t q = 1; q < w; ++q) {
            double fq = f[static_cast<size_t>(q)] + static_cast<double>(q * q);
            double s = (fq - (f[static_cast<size_t>(v[static_cast<size_t>(k)])] +
                              static_cast<double>(v[static_cast<size_t>(k)] * v[static_cast<size_t>(k)]))) /
                       (2.0 * static_cast<double>(q - v[static_cast<size_t>(k)]));
            while (s <= z[static_cast<size_t>(k)]) {
                --k;
                s = (fq - (f[static_cast<size_t>(v[static_cast<size_t>(k)])] +
                           static_cast<double>(v[static_cast<size_t>(k)] * v[static_cast<size_t>(k)]))) /
                    (2.0 * static_cast<double>(q - v[static_cast<size_t>(k)]));
            }
            ++k;
            v[static_cast<size_t>(k)] = q;
            z[static_cast<size_t>(k)] = s;
            z[static_cast<size_t>(k) + 1] = 1e30;
        }
        int64_t kk = 0;
        for (int64_t x = 0; x < w; ++x) {
            while (z[static_cast<size_t>(kk) + 1] < static_cast<double>(x)) ++kk;
            int64_t vk = v[static_cast<size_t>(kk)];
            double d = static_cast<double>((x - vk) * (x - vk)) + f[static_cast<size_t>(vk)];
            dist2[static_cast<size_t>(y * w + x)] =
                d >= kFar ? inf : static_cast<int64_t>(std::llround(d));
        }
    }

    // Nearest index with row-major tie-break: enumerate the exact-distance
    // ring. The candidate rows are scanned top-down; within a row the left
    // offset precedes the right one, so the first hit is the smallest
    // row-major index at that distance.
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            int64_t i = y * w + x;
            if (fg[static_cast<size_t>(i)]) {
                dist2[static_cast<size_t>(i)] = 0;
                nearest[static_cast<size_t>(i)] = i;
                continue;
            }
            int64_t d2 = dist2[static_cast<size_t>(i)];
            if (d2 >= inf) continue; // no foreground anywhere
            int64_t rad = static_cast<int64_t>(std::llround(std::floor(std::sqrt(static_cast<double>(d2)))));
            while (rad * rad > d2) --rad;
            while ((rad + 1) * (rad + 1) <= d2) ++rad;
            bool found = false;
            for (int64_t yy = std::max<int64_t>(0, y - rad);
                 yy <= std::min<int64_t>(h - 1, y + rad) && !found; ++yy) {
                int64_t dy = yy - y;
                int64_t rem = d2 - dy * dy;
                if (rem < 0) continue;
                int64_t dx = static_cast<int64_t>(std::llround(std::sqrt(static_cast<double>(rem))));
                while (dx * dx > rem) --dx;
                while ((dx + 1) * (dx + 1) <= rem) ++dx;
                if (dx * dx != rem) continue;
                for (int64_t xx : {x - dx, x + dx}) {
                    if (xx < 0 || xx >= w) continue;
                    if (fg[static_cast<size_t>(yy * w + xx)]) {
                        nearest[static_cast<size_t>(i)] = yy * w + xx;
                        found = true;
                        break;
                    }
                    if (dx == 0) break;
                }
            }
            if (!found) throw Error("distance_transform: internal ring-search failure");
        }
}

double weighted_f(const Tensor& pred, const Tensor& gt, double beta_sq) {
    check_maps(pred, gt, "weighted_f");
    int64_t h = gt.dim(0), w = gt.dim(1);
    int64_t n = h * w;
    int64_t fg_count = count_fg(gt);
    if (fg_count == 0) throw std::invalid_argument("weighted_f: empty-foreground gt");

    std::vector<uint8_t> fg(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) fg[static_cast<size_t>(i)] = gt.data()[i] == 1.0;

    std::vector<double> err(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) err[static_cast<size_t>(i)] = std::fabs(pred.data()[i] - gt.data()[i]);

    std::vector<int64_t> dist2, nearest;
    if (fg_count < n) {
        distance_transform(fg, h, w, dist2, nearest);
    } else {
        dist2.assign(static_cast<size_t>(n), 0);
        nearest.resize(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) nearest[static_cast<size_t>(i)] = i;
    }

    // Errors of background pixels are replaced by the error of the nearest
    // foreground pixel before diffusion.
    std::vector<double> err_t = err;
    for (int64_t i = 0; i < n; ++i)
        if (!fg[static_cast<size_t>(i)])
            err_t[static_cast<size_t>(i)] = err[static_cast<size_t>(nearest[static_cast<size_t>(i)])];

    // 7x7 Gaussian, sigma 5, normalized; zero-padded correlation.
    double kernel[7][7];
    double ksum = 0.0;
    for (int dy = -3; dy <= 3; ++dy)
        for (int dx = -3; dx <= 3; ++dx) {
            double v = std::exp(-(dy * dy + dx * dx) / (2.0 * 25.0));
            kernel[dy + 3][dx + 3] = v;
            ksum += v;
        }
    for (auto& row : kernel)
        for (double& v : row) v /= ksum;

    std::vector<double> ea(static_cast<size_t>(n), 0.0);
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int dy = -3; dy <= 3; ++dy) {
                int64_t yy = y + dy;
                if (yy < 0 || yy >= h) continue;
                for (int dx = -3; dx <= 3; ++dx) {
                    int64_t xx = x + dx;
                    if (xx < 0 || xx >= w) continue;
                    acc += err_t[static_cast<size_t>(yy * w + xx)] * kernel[dy + 3][dx + 3];
                }
            }
            ea[static_cast<size_t>(y * w + x)] = acc;
        }

    double sum_ew_fg = 0.0, sum_ew_bg = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double min_e = err[static_cast<size_t>(i)];
        if (fg[static_cast<size_t>(i)] && ea[static_cast<size_t>(i)] < min_e)
            min_e = ea[static_cast<size_t>(i)];
        double b = 1.0;
        if (!fg[static_cast<size_t>(i)])
            b = 2.0 - std::exp(std::log(0.5) / 5.0 *
                               std::sqrt(static_cast<double>(dist2[static_cast<size_t>(i)])));
        double ew = min_e * b;
        if (fg[static_cast<size_t>(i)])
            sum_ew_fg += ew;
        else
            sum_ew_bg += ew;
    }

    double tpw = static_cast<double>(fg_count) - sum_ew_fg;
    double fpw = sum_ew_bg;
    double recall = 1.0 - sum_ew_fg / static_cast<double>(fg_count);
    double precision = tpw / (kEps + tpw + fpw);
    return (1.0 + beta_sq) * recall * precision / (kEps + recall + beta_sq * precision);
}

namespace {

// Sample-std (N-1) region similarity used by the structural measure.
double region_ssim(const double* pred, const double* gt, int64_t h, int64_t w, int64_t y0,
                   int64_t x0, int64_t qh, int64_t qw, int64_t stride) {
    int64_t count = qh * qw;
    if (count == 0) return 0.0;
    double mx = 0.0, my = 0.0;
    for (int64_t y = 0; y < qh; ++y)
        for (int64_t x = 0; x < qw; ++x) {
            mx += pred[(y0 + y) * stride + x0 + x];
            my += gt[(y0 + y) * stride + x0 + x];
        }
    mx /= static_cast<double>(count);
    my /= static_cast<double>(count);
    double sx = 0.0, sy = 0.0, sxy = 0.0;
    for (int64_t y = 0; y < qh; ++y)
        for (int64_t x = 0; x < qw; ++x) {
            double dx = pred[(y0 + y) * stride + x0 + x] - mx;
            double dy = gt[(y0 + y) * stride + x0 + x] - my;
            sx += dx * dx;
            sy += dy * dy;
            sxy += dx * dy;
        }
    if (count > 1) {
        sx /= static_cast<double>(count - 1);
        sy /= static_cast<double>(count - 1);
        sxy /= static_cast<double>(count - 1);
    } else {
        sx = sy = sxy = 0.0;
    }
    double aleph = 4.0 * mx * my * sxy;
    double beth = (mx * mx + my * my) * (sx + sy);
    if (aleph != 0.0) return aleph / (beth + kEps);
    if (beth == 0.0) return 1.0;
    return 0.0;
}

double object_score(const double* vals, const std::vector<int64_t>& idx) {
    if (idx.empty()) return 0.0;
    double m = 0.0;
    for (int64_t i : idx) m += vals[i];
    m /= static_cast<double>(idx.size());
    double var = 0.0;
    for (int64_t i : idx) var += (vals[i] - m) * (vals[i] - m);
    double sd = idx.size() > 1 ? std::sqrt(var / static_cast<double>(idx.size() - 1)) : 0.0;
    return 2.0 * m / (m * m + 1.0 + sd + kEps);
}

} // namespace

double s_measure(const Tensor& pred, const Tensor& gt, double alpha) {
    check_maps(pred, gt, "s_measure");
    int64_t h = gt.dim(0), w = gt.dim(1);
    int64_t n = h * w;
    double y = 0.0;
    for (int64_t i = 0; i < n; ++i) y += gt.data()[i];
    y /= static_cast<double>(n);
    double pred_mean = 0.0;
    for (int64_t i = 0; i < n; ++i) pred_mean += pred.data()[i];
    pred_mean /= static_cast<double>(n);
    if (y == 0.0) return 1.0 - pred_mean;
    if (y == 1.0) return pred_mean;

    // Object term: foreground similarity on pred, background on 1 - pred.
    std::vector<int64_t> fg_idx, bg_idx;
    for (int64_t i = 0; i < n; ++i)
        (gt.data()[i] == 1.0 ? fg_idx : bg_idx).push_back(i);
    std::vector<double> inv(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) inv[static_cast<size_t>(i)] = 1.0 - pred.data()[i];
    double s_object = y * object_score(pred.data(), fg_idx) + (1.0 - y) * object_score(inv.data(), bg_idx);

    // Region term: quadrants about the foreground centroid (1-based rounding
    // as in the reference definition).
    double total = y * static_cast<double>(n);
    double sx = 0.0, sy = 0.0;
    for (int64_t yy = 0; yy < h; ++yy)
        for (int64_t xx = 0; xx < w; ++xx)
            if (gt.data()[yy * w + xx] == 1.0) {
                sx += static_cast<double>(xx + 1);
                sy += static_cast<double>(yy + 1);
            }
    int64_t cx = static_cast<int64_t>(std::floor(sx / total + 0.5));
    int64_t cy = static_cast<int64_t>(std::floor(sy / total + 0.5));
    // Split widths in 0-based terms: left block spans [0, cx), top [0, cy).
    double area = static_cast<double>(n);
    double w1 = static_cast<double>(cx * cy) / area;
    double w2 = static_cast<double>((w - cx) * cy) / area;
    double w3 = static_cast<double>(cx * (h - cy)) / area;
    double w4 = 1.0 - w1 - w2 - w3;
    double q1 = region_ssim(pred.data(), gt.data(), h, w, 0, 0, cy, cx, w);
    double q2 = region_ssim(pred.data(), gt.data(), h, w, 0, cx, cy, w - cx, w);
    double q3 = region_ssim(pred.data(), gt.data(), h, w, cy, 0, h - cy, cx, w);
    double q4 = region_ssim(pred.data(), gt.data(), h, w, cy, cx, h - cy, w - cx, w);
    double s_region = w1 * q1 + w2 * q2 + w3 * q3 + w4 * q4;

    return std::max(alpha * s_object + (1.0 - alpha) * s_region, 0.0);
}

double e_measure_mean(const Tensor& pred, const Tensor& gt) {
    check_maps(pred, gt, "e_measure_mean");
    int64_t n = pred.numel();
    ThresholdCounts c = threshold_counts(pred, gt);
    double acc = 0.0;
    for (int j = 0; j < 256; ++j) {
        int64_t tp = c.tp[static_cast<size_t>(j)];
        int64_t fp = c.fp[static_cast<size_t>(j)];
        int64_t fn = c.n_fg - tp;
        int64_t tn = c.n_bg - fp;
        double sum_enh;
        if (c.n_fg == 0) {
            // enhanced matrix = 1 - FM
            sum_enh = static_cast<double>(fn + tn);
        } else if (c.n_bg == 0) {
            sum_enh = static_cast<double>(tp + fp);
        } else {
            double mu_g = static_cast<double>(c.n_fg) / static_cast<double>(n);
            double mu_f = static_cast<double>(tp + fp) / static_cast<double>(n);
            auto enhanced = [&](double ag, double af) {
                double align = 2.0 * ag * af / (ag * ag + af * af + kEps);
                return (align + 1.0) * (align + 1.0) / 4.0;
            };
            sum_enh = static_cast<double>(tp) * enhanced(1.0 - mu_g, 1.0 - mu_f) +
                      static_cast<double>(fp) * enhanced(-mu_g, 1.0 - mu_f) +
                      static_cast<double>(fn) * enhanced(1.0 - mu_g, -mu_f) +
                      static_cast<double>(tn) * enhanced(-mu_g, -mu_f);
        }
        // Normalized by the pixel count (the cited formula); the popular
        // toolbox divisor (n - 1) would push a perfect small map above 1.
        acc += sum_enh / static_cast<double>(n);
    }
    return acc / 256.0;
}

namespace {

namespace fs = std::filesystem;

bool is_image_file(const fs::path& p) {
    static const std::set<std::string> exts{".png", ".jpg", ".jpeg", ".bmp", ".pgm", ".ppm",
                                            ".tif", ".tiff"};
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char ch) { return std::tolower(ch); });
    return exts.count(e) > 0;
}

std::map<std::string, fs::path> list_stems(const std::string& dir) {
    if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir);
    std::map<std::string, fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || !is_image_file(entry.path())) continue;
        std::string stem = entry.path().stem().string();
        if (out.count(stem))
            throw DataError("duplicate stem '" + stem + "' in " + dir);
        out[stem] = entry.path();
    }
    return out;
}

} // namespace

MetricReport evaluate_directory(const std::string& pred_dir, const std::string& gt_dir,
                                const EvalOptions& opts) {
    auto preds = list_stems(pred_dir);
    auto gts = list_stems(gt_dir);

    MetricReport report;
    std::vector<std::pair<std::string, std::pair<fs::path, fs::path>>> pairs;
    for (const auto& [stem, path] : preds) {
        auto it = gts.find(stem);
        if (it == gts.end())
            report.unmatched.push_back(stem + " (prediction only)");
        else
            pairs.push_back({stem, {path, it->second}});
    }
    for (const auto& [stem, path] : gts)
        if (!preds.count(stem)) report.unmatched.push_back(stem + " (ground truth only)");
    if (pairs.empty()) throw DataError("no matched prediction/ground-truth pairs found");

    std::array<int64_t, 256> pool_tp{}, pool_fp{}, pool_fn{};
    double sum_mae = 0.0, sum_f = 0.0, sum_wf = 0.0, sum_s = 0.0, sum_e = 0.0;
    int64_t scored = 0;

    for (const auto& [stem, paths] : pairs) {
        Tensor pred = io::load_grayscale(paths.first.string());
        Tensor gt = io::load_mask(paths.second.string());
        if (!pred.same_shape(gt)) {
            if (!opts.resize_pred)
                throw DataError("size mismatch for '" + stem + "': pred " + pred.shape_str() +
                                " vs gt " + gt.shape_str() + " (pass resize_pred to allow)");
            Tensor p4 = pred.reshaped({1, 1, pred.dim(0), pred.dim(1)});
            pred = ops::bilinear_resize_plain(p4, gt.dim(0), gt.dim(1)).reshaped({gt.dim(0), gt.dim(1)});
        }

        PerImageMetrics m;
        m.name = stem;
        m.mae = mae(pred, gt);
        m.empty_gt = count_fg(gt) == 0;
        if (m.empty_gt) {
            report.skipped.push_back(stem);
        } else {
            m.max_f = max_f(pred, gt, opts.beta_sq_max_f);
            m.weighted_f = weighted_f(pred, gt, opts.beta_sq_weighted_f);
            m.s_measure = s_measure(pred, gt);
            m.e_measure_mean = e_measure_mean(pred, gt);
            ThresholdCounts c = threshold_counts(pred, gt);
            for (int j = 0; j < 256; ++j) {
                pool_tp[static_cast<size_t>(j)] += c.tp[static_cast<size_t>(j)];
                pool_fp[static_cast<size_t>(j)] += c.fp[static_cast<size_t>(j)];
                pool_fn[static_cast<size_t>(j)] += c.n_fg - c.tp[static_cast<size_t>(j)];
            }
            sum_f += m.max_f;
            sum_wf += m.weighted_f;
            sum_s += m.s_measure;
            sum_e += m.e_measure_mean;
            ++scored;
        }
        sum_mae += m.mae;
        report.per_image.push_back(std::move(m));
    }

    report.agg_mae = sum_mae / static_cast<double>(report.per_image.size());
    if (scored > 0) {
        report.agg_max_f = sum_f / static_cast<double>(scored);
        report.agg_weighted_f = sum_wf / static_cast<double>(scored);
        report.agg_s_measure = sum_s / static_cast<double>(scored);
        report.agg_e_measure = sum_e / static_cast<double>(scored);
    }
    for (int j = 0; j < 256; ++j) {
        int64_t tp = pool_tp[static_cast<size_t>(j)];
        int64_t fp = pool_fp[static_cast<size_t>(j)];
        int64_t fn = pool_fn[static_cast<size_t>(j)];
        double p = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 1.0;
        double r = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        report.curve_precision[static_cast<size_t>(j)] = p;
        report.curve_recall[static_cast<size_t>(j)] = r;
        report.curve_f[static_cast<size_t>(j)] = fbeta(p, r, opts.beta_sq_max_f);
    }
    return report;
}

std::string MetricReport::to_json() const {
    nlohmann::json j;
    j["aggregate"] = {{"mae", agg_mae},
                      {"max_f", agg_max_f},
                      {"weighted_f", agg_weighted_f},
                      {"s_measure", agg_s_measure},
                      {"e_measure_mean", agg_e_measure},
                      {"images", per_image.size()},
                      {"scored", per_image.size() - skipped.size()}};
    j["per_image"] = nlohmann::json::array();
    for (const PerImageMetrics& m : per_image) {
        nlohmann::json e = {{"name", m.name}, {"mae", m.mae}, {"empty_gt", m.empty_gt}};
        if (!m.empty_gt) {
            e["max_f"] = m.max_f;
            e["weighted_f"] = m.weighted_f;
            e["s_measure"] = m.s_measure;
            e["e_measure_mean"] = m.e_measure_mean;
        }
        j["per_image"].push_back(std::move(e));
    }
    j["skipped_empty_gt"] = skipped;
    j["unmatched"] = unmatched;
    j["curves"] = {{"threshold", nlohmann::json::array()},
                   {"precision", nlohmann::json::array()},
                   {"recall", nlohmann::json::array()},
                   {"f", nlohmann::json::array()}};
    for (int k = 0; k < 256; ++k) {
        j["curves"]["threshold"].push_back(static_cast<double>(k) / 255.0);
        j["curves"]["precision"].push_back(curve_precision[static_cast<size_t>(k)]);
        j["curves"]["recall"].push_back(curve_recall[static_cast<size_t>(k)]);
        j["curves"]["f"].push_back(curve_f[static_cast<size_t>(k)]);
    }
    return j.dump(2);
}

std::string MetricReport::curves_csv() const {
    std::ostringstream os;
    os << "threshold,precision,recall,f\n";
    os.precision(17);
    for (int k = 0; k < 256; ++k)
        os << static_cast<double>(k) / 255.0 << "," << curve_precision[static_cast<size_t>(k)]
           << "," << curve_recall[static_cast<size_t>(k)] << ","
           << curve_f[static_cast<size_t>(k)] << "\n";
    return os.str();
}

} // namespace mvseg::metrics

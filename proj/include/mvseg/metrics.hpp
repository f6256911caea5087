#pragma once

#include <array>
#include <string>
#include <vector>

#include "mvseg/tensor.hpp"

namespace mvseg::metrics {

// All single-image metrics take 2-D maps ⟨H,W⟩: pred grayscale in [0,1],
// gt strictly binary {0,1}. Thresholds sweep t = k/255, k = 0..255, with
// foreground defined as pred >= t.

double mae(const Tensor& pred, const Tensor& gt);

struct PrCurve {
    std::array<double, 256> precision{};
    std::array<double, 256> recall{};
};

// Throws std::invalid_argument on empty-foreground gt.
PrCurve pr_curve(const Tensor& pred, const Tensor& gt);
double max_f(const Tensor& pred, const Tensor& gt, double beta_sq = 0.3);

// Weighted F-measure: errors diffused by a 7x7 sigma-5 Gaussian through the
// nearest-foreground dependency map and attenuated by a distance-based
// importance factor. beta_sq follows the original definition (1.0).
double weighted_f(const Tensor& pred, const Tensor& gt, double beta_sq = 1.0);

double s_measure(const Tensor& pred, const Tensor& gt, double alpha = 0.5);
double e_measure_mean(const Tensor& pred, const Tensor& gt);

// Exact squared Euclidean distance transform plus the nearest foreground
// pixel per background pixel. Ties broken toward the smallest row-major
// index. Exposed for tests.
void distance_transform(const std::vector<uint8_t>& fg, int64_t h, int64_t w,
                        std::vector<int64_t>& dist2, std::vector<int64_t>& nearest);

struct PerImageMetrics {
    std::string name;
    double mae = 0.0;
    double max_f = 0.0;
    double weighted_f = 0.0;
    double s_measure = 0.0;
    double e_measure_mean = 0.0;
    bool empty_gt = false;
};

struct MetricReport {
    std::vector<PerImageMetrics> per_image;
    double agg_mae = 0.0;
    double agg_max_f = 0.0;
    double agg_weighted_f = 0.0;
    double agg_s_measure = 0.0;
    double agg_e_measure = 0.0;
    // Pooled pixel-level curves (TP/FP/FN accumulated across the set).
    std::array<double, 256> curve_precision{};
    std::array<double, 256> curve_recall{};
    std::array<double, 256> curve_f{};
    std::vector<std::string> skipped;   // empty-gt stems, excluded from F/S/E
    std::vector<std::string> unmatched; // stems present on one side only

    std::string to_json() const;
    std::string curves_csv() const;
};

struct EvalOptions {
    bool resize_pred = false; // resize pred to gt size instead of rejecting
    double beta_sq_max_f = 0.3;
    double beta_sq_weighted_f = 1.0;
};

MetricReport evaluate_directory(const std::string& pred_dir, const std::string& gt_dir,
                                const EvalOptions& opts = {});

} // namespace mvseg::metrics

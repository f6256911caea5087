#include "doctest.h"

#include <filesystem>

#include "mvseg/checkpoint.hpp"
#include "mvseg/image_io.hpp"
#include "mvseg/metrics.hpp"
#include "mvseg/train.hpp"

using namespace mvseg;
namespace fs = std::filesystem;

namespace {

void write_scene(const std::string& img, const std::string& mask, int64_t size, int64_t cy,
                 int64_t cx, int64_t ry, int64_t rx, bool ellipse) {
    Tensor gray({size, size});
    Tensor m({size, size});
    for (int64_t y = 0; y < size; ++y)
        for (int64_t x = 0; x < size; ++x) {
            bool inside;
            if (ellipse) {
                double dy = static_cast<double>(y - cy) / static_cast<double>(ry);
                double dx = static_cast<double>(x - cx) / static_cast<double>(rx);
                inside = dy * dy + dx * dx <= 1.0;
            } else {
                inside = std::llabs(y - cy) <= ry && std::llabs(x - cx) <= rx;
            }
            m.at({y, x}) = inside ? 1.0 : 0.0;
            gray.at({y, x}) = inside ? 0.8 : 0.2;
        }
    io::save_grayscale(img, gray);
    io::save_grayscale(mask, m);
}

ModelConfig e2e_model() {
    ModelConfig cfg;
    cfg.encoder.stage_depths = {1, 1, 1, 1};
    cfg.encoder.stage_dims = {8, 8, 16, 16};
    cfg.encoder.heads = {1, 1, 2, 2};
    cfg.encoder.reduction_factor = 2;
    cfg.encoder.neck_dim = 16;
    cfg.encoder.view_h = 32;
    cfg.encoder.view_w = 32;
    cfg.encoder.mlp_ratio = 2;
    cfg.twoway_depth = 1;
    cfg.mask_feature_dim = 8;
    cfg.drm_aux_depth = 3;
    cfg.seed = 19;
    return cfg;
}

} // namespace

TEST_CASE("trained model beats its initialization on the metric suite") {
    fs::path tmp = "mvseg_e2e_tmp";
    fs::remove_all(tmp);
    std::string imgs = (tmp / "images").string();
    std::string masks = (tmp / "masks").string();
    fs::create_directories(imgs);
    fs::create_directories(masks);
    // Working resolution for 32x32 views is 64x64.
    write_scene(imgs + "/r1.png", masks + "/r1.png", 64, 30, 28, 14, 18, false);
    write_scene(imgs + "/r2.png", masks + "/r2.png", 64, 20, 40, 10, 9, false);
    write_scene(imgs + "/e1.png", masks + "/e1.png", 64, 34, 22, 16, 11, true);
    write_scene(imgs + "/e2.png", masks + "/e2.png", 64, 42, 42, 9, 13, true);

    ModelConfig mcfg = e2e_model();

    // Baseline: predictions of the untrained initialization.
    std::string init_ckpt = (tmp / "init.ckpt").string();
    save_checkpoint(SegModel(mcfg), init_ckpt);
    std::string init_preds = (tmp / "preds_init").string();
    predict(init_ckpt, imgs, init_preds, nullptr);
    metrics::MetricReport before = metrics::evaluate_directory(init_preds, masks);

    TrainConfig tcfg;
    tcfg.epochs = 60;
    tcfg.max_steps = 120;
    tcfg.batch_size = 4;
    tcfg.lr_new = 2e-3;
    tcfg.seed = 23;
    tcfg.aug.hflip = tcfg.aug.crop = tcfg.aug.rotation = false;
    tcfg.checkpoint_dir = (tmp / "ckpt").string();
    tcfg.checkpoint_interval = 1000;
    tcfg.log_every = 0;
    TrainResult result = train({imgs, masks}, mcfg, tcfg, nullptr);
    CHECK(result.final_train_mae < 0.05);

    std::string preds = (tmp / "preds").string();
    predict(result.checkpoint_path, imgs, preds, nullptr);
    metrics::MetricReport after = metrics::evaluate_directory(preds, masks);

    CHECK(after.agg_mae < before.agg_mae);
    CHECK(after.agg_mae < 0.05);
    CHECK(after.agg_max_f > 0.90);
    CHECK(after.agg_weighted_f > 0.80);
    CHECK(after.agg_s_measure > 0.85);
    CHECK(after.agg_e_measure > 0.90);
    CHECK(after.agg_max_f >= before.agg_max_f);

    fs::remove_all(tmp);
}

#include <cstdlib>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "mvseg/checkpoint.hpp"
#include "mvseg/config.hpp"
#include "mvseg/errors.hpp"
#include "mvseg/metrics.hpp"
#include "mvseg/train.hpp"

namespace {

using namespace mvseg;

int check_device_env() {
    const char* dev = std::getenv("MVSEG_DEVICE");
    if (dev && std::string(dev) != "cpu") {
        std::cerr << "MVSEG_DEVICE=" << dev << " is not supported (cpu only)\n";
        return 1;
    }
    const char* prec = std::getenv("MVSEG_PRECISION");
    if (prec && std::string(prec) != "float64") {
        std::cerr << "MVSEG_PRECISION=" << prec << " is not supported (float64 only)\n";
        return 1;
    }
    return 0;
}

struct LoadedConfig {
    ModelConfig model;
    TrainConfig train;
};

LoadedConfig load_configs(const std::string& config_path) {
    LoadedConfig out;
    if (!config_path.empty()) apply_config(parse_kv_file(config_path), out.model, out.train);
    return out;
}

int cmd_train(const std::string& config_path, const std::string& images,
              const std::string& masks, const std::string& checkpoint_dir,
              const std::string& log_path) {
    LoadedConfig cfg = load_configs(config_path);
    if (!checkpoint_dir.empty()) cfg.train.checkpoint_dir = checkpoint_dir;

    std::ofstream log_file;
    std::ostream* log = &std::cout;
    if (!log_path.empty()) {
        log_file.open(log_path);
        if (!log_file) throw DataError("cannot open log file: " + log_path);
        log = &log_file;
    }
    TrainResult result = train({images, masks}, cfg.model, cfg.train, log);
    std::cout << "final checkpoint: " << result.checkpoint_path << "\n";
    std::cout << "final train MAE: " << result.final_train_mae << "\n";
    return 0;
}

int cmd_predict(const std::string& checkpoint, const std::string& images,
                const std::string& out_dir) {
    predict(checkpoint, images, out_dir, &std::cout);
    return 0;
}

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir, const std::string& out_path,
             const std::string& curves_path, bool resize_pred) {
    metrics::EvalOptions opts;
    opts.resize_pred = resize_pred;
    metrics::MetricReport report = metrics::evaluate_directory(pred_dir, gt_dir, opts);
    {
        std::ofstream out(out_path);
        if (!out) throw DataError("cannot write report: " + out_path);
        out << report.to_json() << "\n";
    }
    if (!curves_path.empty()) {
        std::ofstream out(curves_path);
        if (!out) throw DataError("cannot write curves: " + curves_path);
        out << report.curves_csv();
    }
    std::cout << "images: " << report.per_image.size() << " (skipped empty-gt: "
              << report.skipped.size() << ")\n";
    std::cout << "mae:        " << report.agg_mae << "\n";
    std::cout << "max_f:      " << report.agg_max_f << "\n";
    std::cout << "weighted_f: " << report.agg_weighted_f << "\n";
    std::cout << "s_measure:  " << report.agg_s_measure << "\n";
    std::cout << "e_measure:  " << report.agg_e_measure << "\n";
    return 0;
}

int cmd_export_curves(const std::string& report_path, const std::string& out_path) {
    std::ifstream in(report_path);
    if (!in) throw DataError("cannot open report: " + report_path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed report JSON: " + std::string(e.what()));
    }
    if (!j.contains("curves")) throw DataError("report has no curves section");
    std::ofstream out(out_path);
    if (!out) throw DataError("cannot write curves: " + out_path);
    out << "threshold,precision,recall,f\n";
    out.precision(17);
    const auto& c = j["curves"];
    for (size_t k = 0; k < c["threshold"].size(); ++k)
        out << c["threshold"][k].get<double>() << "," << c["precision"][k].get<double>() << ","
            << c["recall"][k].get<double>() << "," << c["f"][k].get<double>() << "\n";
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

int cmd_audit_params(const std::string& config_path) {
    LoadedConfig cfg = load_configs(config_path);
    SegModel model(cfg.model);

    int64_t formula_total = 0;
    std::cout << "adapter insertion audit (reduction_factor="
              << cfg.model.encoder.reduction_factor << ")\n";
    for (int s = 0; s < 4; ++s) {
        int64_t dim = cfg.model.encoder.stage_dims[static_cast<size_t>(s)];
        int depth = cfg.model.encoder.stage_depths[static_cast<size_t>(s)];
        int64_t per = cfg.model.encoder.adapter_enabled
                          ? adapter_param_count(dim, cfg.model.encoder.reduction_factor)
                          : 0;
        formula_total += per * depth;
        std::cout << "stage " << s << ": dim " << dim << " blocks " << depth
                  << " adapter_params_per_block " << per << "\n";
    }
    int64_t actual = model.adapter_param_count_actual();
    std::cout << "adapter_params_formula=" << formula_total << "\n";
    std::cout << "adapter_params_model=" << actual << "\n";

    int64_t backbone = 0, decoder = 0, fresh = 0;
    for (auto& [name, var] : model.named_params()) {
        if (SegModel::is_backbone_param(name)) backbone += var.numel();
        else if (SegModel::is_decoder_param(name)) decoder += var.numel();
        else fresh += var.numel();
    }
    std::cout << "total_params=" << model.total_param_count() << "\n";
    std::cout << "backbone_params=" << backbone << "\n";
    std::cout << "decoder_params=" << decoder << "\n";
    std::cout << "new_params=" << fresh << "\n";
    int64_t tuned = cfg.train.freeze_backbone ? decoder + fresh : backbone + decoder + fresh;
    std::cout << "tuned_params(freeze_backbone=" << (cfg.train.freeze_backbone ? "true" : "false")
              << ")=" << tuned << "\n";
    if (actual != formula_total) {
        std::cerr << "audit FAILED: model disagrees with the closed form\n";
        return 3;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-view guided detail-enhanced segmentation toolkit"};
    app.require_subcommand(1);

    std::string config_path, images, masks, checkpoint_dir, log_path;
    std::string checkpoint, out_dir, pred_dir, gt_dir, report_out, curves_out, report_in;
    bool resize_pred = false;

    CLI::App* train_cmd = app.add_subcommand("train", "train on a stem-matched image/mask set");
    train_cmd->add_option("--images", images, "image directory")->required();
    train_cmd->add_option("--masks", masks, "mask directory")->required();
    train_cmd->add_option("--config", config_path, "key=value config file");
    train_cmd->add_option("--checkpoint-dir", checkpoint_dir, "checkpoint output directory");
    train_cmd->add_option("--log", log_path, "write the training log to a file");

    CLI::App* predict_cmd = app.add_subcommand("predict", "write prediction maps for a directory");
    predict_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    predict_cmd->add_option("--images", images, "image directory")->required();
    predict_cmd->add_option("--out", out_dir, "output directory")->required();

    CLI::App* eval_cmd = app.add_subcommand("eval", "score predictions against ground truth");
    eval_cmd->add_option("--pred", pred_dir, "prediction directory")->required();
    eval_cmd->add_option("--gt", gt_dir, "ground-truth directory")->required();
    eval_cmd->add_option("--out", report_out, "report JSON path")->required();
    eval_cmd->add_option("--curves", curves_out, "pooled PR/F curves CSV path");
    eval_cmd->add_flag("--resize-pred", resize_pred,
                       "bilinearly resize predictions to the ground-truth size");

    CLI::App* export_cmd = app.add_subcommand("export-curves", "extract curves CSV from a report");
    export_cmd->add_option("--report", report_in, "report JSON path")->required();
    export_cmd->add_option("--out", curves_out, "curves CSV path")->required();

    CLI::App* audit_cmd = app.add_subcommand("audit-params", "parameter accounting audit");
    audit_cmd->add_option("--config", config_path, "key=value config file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (int rc = check_device_env(); rc != 0) return rc;

    try {
        if (train_cmd->parsed())
            return cmd_train(config_path, images, masks, checkpoint_dir, log_path);
        if (predict_cmd->parsed()) return cmd_predict(checkpoint, images, out_dir);
        if (eval_cmd->parsed())
            return cmd_eval(pred_dir, gt_dir, report_out, curves_out, resize_pred);
        if (export_cmd->parsed()) return cmd_export_curves(report_in, curves_out);
        if (audit_cmd->parsed()) return cmd_audit_params(config_path);
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid argument: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

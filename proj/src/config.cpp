#include "mvseg/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "mvseg/errors.hpp"

namespace mvseg {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("bad boolean for " + key + ": '" + v + "'");
}

int64_t parse_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        int64_t r = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return r;
    } catch (...) {
        throw ConfigError("bad integer for " + key + ": '" + v + "'");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return r;
    } catch (...) {
        throw ConfigError("bad number for " + key + ": '" + v + "'");
    }
}

template <typename T, size_t N>
std::array<T, N> parse_list(const std::string& key, const std::string& v) {
    std::array<T, N> out{};
    std::stringstream ss(v);
    std::string item;
    size_t i = 0;
    while (std::getline(ss, item, ',')) {
        if (i >= N) throw ConfigError(key + " expects " + std::to_string(N) + " values");
        out[i++] = static_cast<T>(parse_int(key, trim(item)));
    }
    if (i != N) throw ConfigError(key + " expects " + std::to_string(N) + " values");
    return out;
}

template <typename T, size_t N>
std::string join_list(const std::array<T, N>& a) {
    std::ostringstream os;
    for (size_t i = 0; i < N; ++i) {
        if (i) os << ",";
        os << a[i];
    }
    return os.str();
}

} // namespace

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (lr_new <= 0.0) throw ConfigError("lr_new must be > 0");
    if (lr_pretrained_divisor <= 0.0) throw ConfigError("lr_pretrained_divisor must be > 0");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    if (checkpoint_interval < 1) throw ConfigError("checkpoint_interval must be >= 1");
    if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
    loss.validate();
}

KvMap parse_kv_text(const std::string& text) {
    KvMap out;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        std::string s = line;
        size_t hash = s.find('#');
        if (hash != std::string::npos) s = s.substr(0, hash);
        s = trim(s);
        if (s.empty()) continue;
        size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + " is not key=value: '" +
                              line + "'");
        std::string key = trim(s.substr(0, eq));
        std::string value = trim(s.substr(eq + 1));
        if (key.empty()) throw ConfigError("empty key on config line " + std::to_string(lineno));
        if (out.count(key)) throw ConfigError("duplicate config key: " + key);
        out[key] = value;
    }
    return out;
}

KvMap parse_kv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_kv_text(ss.str());
}

void apply_config(const KvMap& kv, ModelConfig& model, TrainConfig& train) {
    for (const auto& [key, v] : kv) {
        // model keys
        if (key == "view_h") model.encoder.view_h = parse_int(key, v);
        else if (key == "view_w") model.encoder.view_w = parse_int(key, v);
        else if (key == "stage_depths") model.encoder.stage_depths = parse_list<int, 4>(key, v);
        else if (key == "stage_dims") model.encoder.stage_dims = parse_list<int64_t, 4>(key, v);
        else if (key == "heads") model.encoder.heads = parse_list<int, 4>(key, v);
        else if (key == "reduction_factor") model.encoder.reduction_factor = static_cast<int>(parse_int(key, v));
        else if (key == "neck_dim") model.encoder.neck_dim = parse_int(key, v);
        else if (key == "mlp_ratio") model.encoder.mlp_ratio = static_cast<int>(parse_int(key, v));
        else if (key == "adapter_enabled") model.encoder.adapter_enabled = parse_bool(key, v);
        else if (key == "mcem_enabled") model.mcem_enabled = parse_bool(key, v);
        else if (key == "hmim_enabled") model.hmim_enabled = parse_bool(key, v);
        else if (key == "drm_enabled") model.drm_enabled = parse_bool(key, v);
        else if (key == "twoway_depth") model.twoway_depth = static_cast<int>(parse_int(key, v));
        else if (key == "num_output_tokens") model.num_output_tokens = parse_int(key, v);
        else if (key == "mask_feature_dim") model.mask_feature_dim = parse_int(key, v);
        else if (key == "drm_width") model.drm_width = parse_int(key, v);
        else if (key == "drm_aux_depth") model.drm_aux_depth = static_cast<int>(parse_int(key, v));
        else if (key == "supervise_global_view") model.supervise_global_view = parse_bool(key, v);
        else if (key == "model_seed") model.seed = static_cast<uint64_t>(parse_int(key, v));
        // train keys
        else if (key == "epochs") train.epochs = static_cast<int>(parse_int(key, v));
        else if (key == "batch_size") train.batch_size = static_cast<int>(parse_int(key, v));
        else if (key == "lr_new") train.lr_new = parse_double(key, v);
        else if (key == "lr_pretrained_divisor") train.lr_pretrained_divisor = parse_double(key, v);
        else if (key == "freeze_backbone") train.freeze_backbone = parse_bool(key, v);
        else if (key == "seed") train.seed = static_cast<uint64_t>(parse_int(key, v));
        else if (key == "hflip") train.aug.hflip = parse_bool(key, v);
        else if (key == "crop") train.aug.crop = parse_bool(key, v);
        else if (key == "rotation") train.aug.rotation = parse_bool(key, v);
        else if (key == "crop_area_min") train.aug.crop_area_min = parse_double(key, v);
        else if (key == "rotation_max_deg") train.aug.rotation_max_deg = parse_double(key, v);
        else if (key == "checkpoint_dir") train.checkpoint_dir = v;
        else if (key == "weight_decay") train.weight_decay = parse_double(key, v);
        else if (key == "checkpoint_interval") train.checkpoint_interval = static_cast<int>(parse_int(key, v));
        else if (key == "max_steps") train.max_steps = parse_int(key, v);
        else if (key == "log_every") train.log_every = static_cast<int>(parse_int(key, v));
        else if (key == "lambda_aux") train.loss.lambda_aux = parse_double(key, v);
        else if (key == "iou_weight_kernel") train.loss.iou_weight_kernel = static_cast<int>(parse_int(key, v));
        else if (key == "iou_weight_gain") train.loss.iou_weight_gain = parse_double(key, v);
        else throw ConfigError("unknown config key: " + key);
    }
}

std::string serialize_model_config(const ModelConfig& cfg) {
    std::map<std::string, std::string> kv;
    kv["view_h"] = std::to_string(cfg.encoder.view_h);
    kv["view_w"] = std::to_string(cfg.encoder.view_w);
    kv["stage_depths"] = join_list(cfg.encoder.stage_depths);
    kv["stage_dims"] = join_list(cfg.encoder.stage_dims);
    kv["heads"] = join_list(cfg.encoder.heads);
    kv["reduction_factor"] = std::to_string(cfg.encoder.reduction_factor);
    kv["neck_dim"] = std::to_string(cfg.encoder.neck_dim);
    kv["mlp_ratio"] = std::to_string(cfg.encoder.mlp_ratio);
    kv["adapter_enabled"] = cfg.encoder.adapter_enabled ? "true" : "false";
    kv["mcem_enabled"] = cfg.mcem_enabled ? "true" : "false";
    kv["hmim_enabled"] = cfg.hmim_enabled ? "true" : "false";
    kv["drm_enabled"] = cfg.drm_enabled ? "true" : "false";
    kv["twoway_depth"] = std::to_string(cfg.twoway_depth);
    kv["num_output_tokens"] = std::to_string(cfg.num_output_tokens);
    kv["mask_feature_dim"] = std::to_string(cfg.mask_feature_dim);
    kv["drm_width"] = std::to_string(cfg.drm_width);
    kv["drm_aux_depth"] = std::to_string(cfg.drm_aux_depth);
    kv["supervise_global_view"] = cfg.supervise_global_view ? "true" : "false";
    kv["model_seed"] = std::to_string(cfg.seed);
    std::ostringstream os;
    for (const auto& [k, v] : kv) os << k << "=" << v << "\n";
    return os.str();
}

ModelConfig model_config_from_text(const std::string& text) {
    KvMap kv = parse_kv_text(text);
    ModelConfig model;
    TrainConfig train;
    apply_config(kv, model, train);
    return model;
}

} // namespace mvseg

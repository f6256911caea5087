#include "mvseg/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "mvseg/checkpoint.hpp"
#include "mvseg/errors.hpp"
#include "mvseg/image_io.hpp"
#include "mvseg/optimizer.hpp"

namespace mvseg {

namespace fs = std::filesystem;

namespace {

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Tensor stack_batch(const std::vector<Tensor>& items) {
    int64_t b = static_cast<int64_t>(items.size());
    std::vector<int64_t> shape = items[0].shape();
    shape.insert(shape.begin(), b);
    Tensor out(shape);
    int64_t per = items[0].numel();
    for (int64_t i = 0; i < b; ++i)
        std::copy(items[static_cast<size_t>(i)].data(), items[static_cast<size_t>(i)].data() + per,
                  out.data() + i * per);
    return out;
}

} // namespace

uint64_t derive_seed(uint64_t base, uint64_t epoch, uint64_t index) {
    return splitmix64(splitmix64(base ^ (epoch * 0x9e3779b97f4a7c15ULL)) ^ index);
}

TrainResult train(const DatasetSpec& data, const ModelConfig& mcfg, const TrainConfig& tcfg,
                  std::ostream* log) {
    tcfg.validate();
    std::vector<SamplePaths> pairs = list_pairs(data); // errors before any training
    SegModel model(mcfg);

    int64_t work_h = 2 * mcfg.encoder.view_h;
    int64_t work_w = 2 * mcfg.encoder.view_w;

    // Two parameter groups: freshly initialized modules at lr_new,
    // pretrained-designated ones (decoder core, and the backbone when it is
    // not frozen) at lr_new / divisor. Frozen parameters are excluded.
    AdamW::Group fresh{{}, tcfg.lr_new};
    AdamW::Group pretrained{{}, tcfg.lr_new / tcfg.lr_pretrained_divisor};
    for (auto& [name, var] : model.named_params()) {
        if (SegModel::is_backbone_param(name)) {
            if (!tcfg.freeze_backbone) pretrained.params.push_back(var);
        } else if (SegModel::is_decoder_param(name)) {
            pretrained.params.push_back(var);
        } else {
            fresh.params.push_back(var);
        }
    }
    AdamW opt({fresh, pretrained}, 0.9, 0.999, 1e-8, tcfg.weight_decay);

    if (log) {
        *log << "train: images=" << pairs.size() << " epochs=" << tcfg.epochs
             << " batch_size=" << tcfg.batch_size << " lr_new=" << tcfg.lr_new
             << " lr_pretrained_divisor=" << tcfg.lr_pretrained_divisor
             << " lambda_aux=" << tcfg.loss.lambda_aux
             << " freeze_backbone=" << (tcfg.freeze_backbone ? "true" : "false")
             << " weight_decay=" << tcfg.weight_decay << " seed=" << tcfg.seed
             << " working_resolution=" << work_h << "x" << work_w << "\n";
    }

    fs::create_directories(tcfg.checkpoint_dir);

    TrainResult result;
    int64_t global_step = 0;
    bool stop = false;
    for (int epoch = 0; epoch < tcfg.epochs && !stop; ++epoch) {
        std::vector<size_t> order(pairs.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::mt19937_64 shuffle_rng(derive_seed(tcfg.seed, static_cast<uint64_t>(epoch), 0xabcdULL));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double epoch_loss = 0.0;
        double epoch_mae = 0.0;
        int64_t epoch_steps = 0;
        for (size_t pos = 0; pos < order.size() && !stop; pos += static_cast<size_t>(tcfg.batch_size)) {
            size_t end = std::min(order.size(), pos + static_cast<size_t>(tcfg.batch_size));
            std::vector<Tensor> images, masks;
            for (size_t i = pos; i < end; ++i) {
                Sample s = load_sample(pairs[order[i]], work_h, work_w);
                std::mt19937_64 aug_rng(
                    derive_seed(tcfg.seed, static_cast<uint64_t>(epoch), order[i] + 1));
                augment::apply(s.image, s.mask, tcfg.aug, aug_rng);
                images.push_back(s.image);
                masks.push_back(s.mask);
            }
            Tensor raw = stack_batch(images);
            Tensor gt = stack_batch(masks);

            Tensor views = multiview::make_multiview(raw, mcfg.encoder.view_h, mcfg.encoder.view_w);
            Tensor unified = multiview::unified_local_image(views);
            ModelOutputs out =
                model.fwd_views(ag::Var::constant(views), ag::Var::constant(unified));

            Var loss = total_loss_logits(out.mp_logits, out.ms_logits, gt, tcfg.loss);
            if (mcfg.supervise_global_view) {
                Var lg = ops::add(bce_with_logits(out.ms_global_logits, gt),
                                  weighted_iou_loss(out.ms_global, gt, tcfg.loss));
                loss = ops::add(loss, ops::scale(lg, tcfg.loss.lambda_aux));
            }
            double loss_val = loss.value().data()[0];
            if (!std::isfinite(loss_val))
                throw NumericError("non-finite loss at step " + std::to_string(global_step));

            ag::backward(loss);
            opt.step();
            opt.zero_grad();

            double step_mae = 0.0;
            {
                const Tensor& mp = out.mp.value();
                for (int64_t i = 0; i < mp.numel(); ++i)
                    step_mae += std::fabs(mp.data()[i] - gt.data()[i]);
                step_mae /= static_cast<double>(mp.numel());
            }

            result.step_losses.push_back(loss_val);
            epoch_loss += loss_val;
            epoch_mae += step_mae;
            ++epoch_steps;
            ++global_step;
            if (log && tcfg.log_every > 0 && (global_step % tcfg.log_every == 0))
                *log << "step " << global_step << " loss " << loss_val << " mae " << step_mae
                     << "\n";
            if (tcfg.max_steps > 0 && global_step >= tcfg.max_steps) stop = true;
        }
        if (epoch_steps > 0) {
            result.epoch_mean_loss.push_back(epoch_loss / static_cast<double>(epoch_steps));
            result.epoch_train_mae.push_back(epoch_mae / static_cast<double>(epoch_steps));
            if (log)
                *log << "epoch " << epoch + 1 << " mean_loss " << result.epoch_mean_loss.back()
                     << " train_mae " << result.epoch_train_mae.back() << "\n";
        }
        if ((epoch + 1) % tcfg.checkpoint_interval == 0 && !stop) {
            std::string path =
                (fs::path(tcfg.checkpoint_dir) / ("model_epoch" + std::to_string(epoch + 1) + ".ckpt"))
                    .string();
            save_checkpoint(model, path);
            if (log) *log << "checkpoint " << path << "\n";
        }
    }

    // Final train MAE over the whole set without augmentation.
    {
        ag::NoGradGuard ng;
        double acc = 0.0;
        int64_t count = 0;
        for (const SamplePaths& p : pairs) {
            Sample s = load_sample(p, work_h, work_w);
            Tensor raw = s.image.reshaped({1, 3, work_h, work_w});
            ModelOutputs out = model.fwd(raw);
            const Tensor& mp = out.mp.value();
            for (int64_t i = 0; i < mp.numel(); ++i)
                acc += std::fabs(mp.data()[i] - s.mask.data()[i]);
            count += mp.numel();
        }
        result.final_train_mae = acc / static_cast<double>(count);
        if (log) *log << "final train_mae " << result.final_train_mae << "\n";
    }

    result.steps_run = global_step;
    result.checkpoint_path = (fs::path(tcfg.checkpoint_dir) / "model_final.ckpt").string();
    save_checkpoint(model, result.checkpoint_path);
    if (log) *log << "checkpoint " << result.checkpoint_path << "\n";
    return result;
}

void predict(const std::string& checkpoint_path, const std::string& image_dir,
             const std::string& out_dir, std::ostream* log) {
    SegModel model = load_checkpoint(checkpoint_path);
    if (!fs::is_directory(image_dir)) throw DataError("not a directory: " + image_dir);
    fs::create_directories(out_dir);

    std::set<std::string> stems;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(image_dir))
        if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    ag::NoGradGuard ng;
    for (const fs::path& file : files) {
        Tensor image;
        try {
            image = io::load_image(file.string());
        } catch (const DataError&) {
            if (log) *log << "skipping unreadable file: " << file.string() << "\n";
            continue;
        }
        std::string stem = file.stem().string();
        if (stems.count(stem)) throw DataError("duplicate stem in input: " + stem);
        stems.insert(stem);
        Tensor raw = image.reshaped({1, 3, image.dim(1), image.dim(2)});
        ModelOutputs out = model.fwd(raw);
        const Tensor& mp = out.mp.value();
        Tensor map = mp.reshaped({mp.dim(2), mp.dim(3)});
        std::string out_path = (fs::path(out_dir) / (stem + ".png")).string();
        io::save_grayscale(out_path, map);
        if (log) *log << "wrote " << out_path << "\n";
    }
}

} // namespace mvseg

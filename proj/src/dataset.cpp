#include "mvseg/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include "mvseg/augment.hpp"
#include "mvseg/errors.hpp"
#include "mvseg/image_io.hpp"
#include "mvseg/ops.hpp"

namespace mvseg {

namespace fs = std::filesystem;

namespace {

bool is_image_file(const fs::path& p) {
    static const std::set<std::string> exts{".png", ".jpg", ".jpeg", ".bmp", ".pgm", ".ppm",
                                            ".tif", ".tiff"};
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char ch) { return std::tolower(ch); });
    return exts.count(e) > 0;
}

std::map<std::string, fs::path> scan(const std::string& dir) {
    if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir);
    std::map<std::string, fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || !is_image_file(entry.path())) continue;
        std::string stem = entry.path().stem().string();
        if (out.count(stem)) throw DataError("duplicate stem '" + stem + "' in " + dir);
        out[stem] = entry.path();
    }
    return out;
}

} // namespace

std::vector<SamplePaths> list_pairs(const DatasetSpec& spec) {
    auto images = scan(spec.image_dir);
    auto masks = scan(spec.mask_dir);
    std::ostringstream problems;
    for (const auto& [stem, path] : images)
        if (!masks.count(stem)) problems << "  image without mask: " << stem << "\n";
    for (const auto& [stem, path] : masks)
        if (!images.count(stem)) problems << "  mask without image: " << stem << "\n";
    if (!problems.str().empty())
        throw DataError("dataset image/mask mismatch:\n" + problems.str());
    if (images.empty()) throw DataError("no images found in " + spec.image_dir);

    std::vector<SamplePaths> out;
    for (const auto& [stem, path] : images)
        out.push_back({stem, path.string(), masks.at(stem).string()});
    return out;
}

Sample load_sample(const SamplePaths& paths, int64_t work_h, int64_t work_w) {
    Tensor image = io::load_image(paths.image_path); // ⟨3,H,W⟩
    Tensor mask2d = io::load_mask(paths.mask_path);  // ⟨H,W⟩

    Tensor img4 = image.reshaped({1, 3, image.dim(1), image.dim(2)});
    Tensor resized = ops::bilinear_resize_plain(img4, work_h, work_w);
    Sample s;
    s.image = resized.reshaped({3, work_h, work_w});
    Tensor mask3 = mask2d.reshaped({1, mask2d.dim(0), mask2d.dim(1)});
    s.mask = augment::nearest_resize(mask3, work_h, work_w);
    return s;
}

} // namespace mvseg

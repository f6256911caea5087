#include "mvseg/image_io.hpp"

#include <cmath>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "mvseg/errors.hpp"

namespace mvseg::io {

Tensor load_image(const std::string& path) {
    cv::Mat img = cv::imread(path, cv::IMREAD_COLOR);
    if (img.empty()) throw DataError("unreadable image: " + path);
    int64_t h = img.rows, w = img.cols;
    Tensor out({3, h, w});
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            cv::Vec3b bgr = img.at<cv::Vec3b>(static_cast<int>(y), static_cast<int>(x));
            out.data()[0 * h * w + y * w + x] = bgr[2] / 255.0;
            out.data()[1 * h * w + y * w + x] = bgr[1] / 255.0;
            out.data()[2 * h * w + y * w + x] = bgr[0] / 255.0;
        }
    return out;
}

Tensor load_grayscale(const std::string& path) {
    cv::Mat img = cv::imread(path, cv::IMREAD_GRAYSCALE);
    if (img.empty()) throw DataError("unreadable image: " + path);
    int64_t h = img.rows, w = img.cols;
    Tensor out({h, w});
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            out.data()[y * w + x] = img.at<uint8_t>(static_cast<int>(y), static_cast<int>(x)) / 255.0;
    return out;
}

Tensor load_mask(const std::string& path) {
    cv::Mat img = cv::imread(path, cv::IMREAD_GRAYSCALE);
    if (img.empty()) throw DataError("unreadable mask: " + path);
    int64_t h = img.rows, w = img.cols;
    Tensor out({h, w});
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            out.data()[y * w + x] =
                img.at<uint8_t>(static_cast<int>(y), static_cast<int>(x)) >= 128 ? 1.0 : 0.0;
    return out;
}

uint8_t quantize8(double v) {
    if (v <= 0.0) return 0;
    if (v >= 1.0) return 255;
    return static_cast<uint8_t>(std::floor(v * 255.0 + 0.5));
}

void save_grayscale(const std::string& path, const Tensor& map) {
    if (map.ndim() != 2) throw std::invalid_argument("save_grayscale: expected ⟨H,W⟩");
    int64_t h = map.dim(0), w = map.dim(1);
    cv::Mat img(static_cast<int>(h), static_cast<int>(w), CV_8UC1);
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            img.at<uint8_t>(static_cast<int>(y), static_cast<int>(x)) =
                quantize8(map.data()[y * w + x]);
    if (!cv::imwrite(path, img)) throw DataError("failed to write image: " + path);
}

} // namespace mvseg::io

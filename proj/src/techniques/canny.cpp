#include "gate/techniques/canny.hpp"

#include <opencv2/imgproc.hpp>

#include <stdexcept>

namespace gate::techniques {

core::Tensor compute_canny(const core::Image& rgb, double low_threshold, double high_threshold) {
    if (rgb.rank() != 3 || rgb.dim(0) != 3) {
        throw std::invalid_argument("compute_canny expects (3, h, w), got " + rgb.shape_str());
    }
    const int h = static_cast<int>(rgb.dim(1));
    const int w = static_cast<int>(rgb.dim(2));
    core::Tensor lum = core::luminance(rgb);
    cv::Mat gray(h, w, CV_8UC1);
    for (int y = 0; y < h; ++y) {
        unsigned char* row = gray.ptr<unsigned char>(y);
        for (int x = 0; x < w; ++x) {
            row[x] = static_cast<unsigned char>(std::clamp(lum.at(y, x) * 255.0f + 0.5f, 0.0f, 255.0f));
        }
    }
    cv::Mat edges;
    cv::Canny(gray, edges, low_threshold, high_threshold);
    core::Tensor out({1, h, w});
    for (int y = 0; y < h; ++y) {
        const unsigned char* row = edges.ptr<unsigned char>(y);
        for (int x = 0; x < w; ++x) out.at(0, y, x) = row[x] ? 1.0f : 0.0f;
    }
    return out;
}

}  // namespace gate::techniques

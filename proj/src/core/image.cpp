#include "gate/core/image.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <stdexcept>

namespace gate::core {

namespace {

Image from_mat_rgb(const cv::Mat& bgr) {
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    rgb.convertTo(rgb, CV_32FC3, 1.0 / 255.0);
    Image out({3, rgb.rows, rgb.cols});
    for (int y = 0; y < rgb.rows; ++y) {
        const cv::Vec3f* row = rgb.ptr<cv::Vec3f>(y);
        for (int x = 0; x < rgb.cols; ++x) {
            out.at(0, y, x) = row[x][0];
            out.at(1, y, x) = row[x][1];
            out.at(2, y, x) = row[x][2];
        }
    }
    return out;
}

cv::Mat to_mat_bgr(const Image& rgb) {
    if (rgb.rank() != 3 || rgb.dim(0) != 3) {
        throw std::invalid_argument("image must be (3, h, w), got " + rgb.shape_str());
    }
    const int h = static_cast<int>(rgb.dim(1));
    const int w = static_cast<int>(rgb.dim(2));
    cv::Mat mat(h, w, CV_8UC3);
    for (int y = 0; y < h; ++y) {
        cv::Vec3b* row = mat.ptr<cv::Vec3b>(y);
        for (int x = 0; x < w; ++x) {
            auto q = [&](int c) {
                float v = rgb.at(c, y, x) * 255.0f + 0.5f;
                return static_cast<unsigned char>(std::clamp(v, 0.0f, 255.0f));
            };
            row[x] = cv::Vec3b(q(2), q(1), q(0));  // BGR
        }
    }
    return mat;
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
    cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw std::runtime_error("cannot read image: " + path.string());
    return from_mat_rgb(bgr);
}

void save_image(const Image& rgb, const std::filesystem::path& path) {
    if (!cv::imwrite(path.string(), to_mat_bgr(rgb))) {
        throw std::runtime_error("cannot write image: " + path.string());
    }
}

Tensor load_label_map(const std::filesystem::path& path) {
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
    if (m.empty()) throw std::runtime_error("cannot read label map: " + path.string());
    Tensor out({m.rows, m.cols});
    for (int y = 0; y < m.rows; ++y) {
        const unsigned char* row = m.ptr<unsigned char>(y);
        for (int x = 0; x < m.cols; ++x) out.at(y, x) = static_cast<float>(row[x]);
    }
    return out;
}

Image resize_image(const Image& rgb, int64_t out_h, int64_t out_w) {
    return bilinear_resize(rgb, out_h, out_w);
}

Tensor luminance(const Image& rgb) {
    if (rgb.rank() != 3 || rgb.dim(0) != 3) {
        throw std::invalid_argument("luminance expects (3, h, w)");
    }
    const int64_t h = rgb.dim(1), w = rgb.dim(2);
    Tensor out({h, w});
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            out.at(y, x) = 0.299f * rgb.at(0, y, x) + 0.587f * rgb.at(1, y, x) + 0.114f * rgb.at(2, y, x);
        }
    }
    return out;
}

Image prepare_image(const Image& rgb, const ResizePolicy& policy) {
    if (rgb.rank() != 3 || rgb.dim(0) != 3) {
        throw std::invalid_argument("prepare_image expects (3, h, w)");
    }
    int64_t h = rgb.dim(1), w = rgb.dim(2);
    Image img = rgb;
    const int64_t short_side = std::min(h, w);
    if (policy.short_side > 0 && short_side != policy.short_side) {
        double s = static_cast<double>(policy.short_side) / static_cast<double>(short_side);
        int64_t nh = std::max<int64_t>(1, static_cast<int64_t>(std::llround(h * s)));
        int64_t nw = std::max<int64_t>(1, static_cast<int64_t>(std::llround(w * s)));
        img = bilinear_resize(img, nh, nw);
        h = nh;
        w = nw;
    }
    const int64_t m = std::max<int64_t>(1, policy.multiple);
    const int64_t ch = (h / m) * m;
    const int64_t cw = (w / m) * m;
    if (ch <= 0 || cw <= 0) {
        throw std::invalid_argument("image too small for required multiple of " + std::to_string(m));
    }
    if (ch == h && cw == w) return img;
    const int64_t y0 = (h - ch) / 2;
    const int64_t x0 = (w - cw) / 2;
    Image out({3, ch, cw});
    for (int64_t c = 0; c < 3; ++c) {
        for (int64_t y = 0; y < ch; ++y) {
            for (int64_t x = 0; x < cw; ++x) out.at(c, y, x) = img.at(c, y0 + y, x0 + x);
        }
    }
    return out;
}

Image hstack_images(const std::vector<Image>& panels) {
    if (panels.empty()) throw std::invalid_argument("hstack_images: no panels");
    const int64_t h = panels[0].dim(1);
    const int64_t sep = 2;
    int64_t w_total = 0;
    for (const Image& p : panels) {
        if (p.rank() != 3 || p.dim(0) != 3 || p.dim(1) != h) {
            throw std::invalid_argument("hstack_images: panels must be (3, h, w) with equal h");
        }
        w_total += p.dim(2);
    }
    w_total += sep * static_cast<int64_t>(panels.size() - 1);
    Image out = Tensor::full({3, h, w_total}, 1.0f);
    int64_t x_off = 0;
    for (size_t i = 0; i < panels.size(); ++i) {
        const Image& p = panels[i];
        for (int64_t c = 0; c < 3; ++c) {
            for (int64_t y = 0; y < h; ++y) {
                for (int64_t x = 0; x < p.dim(2); ++x) out.at(c, y, x_off + x) = p.at(c, y, x);
            }
        }
        x_off += p.dim(2) + sep;
    }
    return out;
}

}  // namespace gate::core

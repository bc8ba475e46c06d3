#include "averify/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace averify {

double prob_distance(double p_target, double p_observed) {
    if (!(p_target > 0.0 && p_target <= 1.0)) {
        throw std::invalid_argument("target probability must lie in (0, 1], got " +
                                    std::to_string(p_target));
    }
    if (!(p_observed >= 0.0 && p_observed <= 1.0)) {
        throw std::invalid_argument("observed probability must lie in [0, 1], got " +
                                    std::to_string(p_observed));
    }
    return std::abs(p_target - p_observed) / p_target;
}

void SsimParams::validate() const {
    if (window < 3 || window % 2 == 0) {
        throw std::invalid_argument("SSIM window must be odd and >= 3");
    }
    if (!(sigma > 0.0)) throw std::invalid_argument("SSIM sigma must be positive");
    if (!(c1 > 0.0) || !(c2 > 0.0)) {
        throw std::invalid_argument("SSIM stabilizers must be positive");
    }
    if (!(range > 0.0)) throw std::invalid_argument("SSIM dynamic range must be positive");
}

SsimParams SsimParams::for_range(double dynamic_range) {
    if (!(dynamic_range > 0.0)) {
        throw std::invalid_argument("SSIM dynamic range must be positive");
    }
    SsimParams p;
    p.range = dynamic_range;
    p.c1 = (0.01 * dynamic_range) * (0.01 * dynamic_range);
    p.c2 = (0.03 * dynamic_range) * (0.03 * dynamic_range);
    return p;
}

namespace {

std::vector<double> gaussian_kernel(std::size_t window, double sigma) {
    std::vector<double> k(window);
    const double mid = static_cast<double>(window - 1) / 2.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < window; ++i) {
        const double d = static_cast<double>(i) - mid;
        k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += k[i];
    }
    for (double& v : k) v /= sum;
    return k;
}

// Separable valid-mode Gaussian blur of one channel (h x w row-major).
std::vector<double> blur_valid(const std::vector<double>& img, std::size_t h, std::size_t w,
                               const std::vector<double>& kernel) {
    const std::size_t win = kernel.size();
    const std::size_t out_w = w - win + 1;
    const std::size_t out_h = h - win + 1;
    std::vector<double> horiz(h * out_w);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < out_w; ++x) {
            double acc = 0.0;
            for (std::size_t i = 0; i < win; ++i) acc += kernel[i] * img[y * w + x + i];
            horiz[y * out_w + x] = acc;
        }
    }
    std::vector<double> out(out_h * out_w);
    for (std::size_t y = 0; y < out_h; ++y) {
        for (std::size_t x = 0; x < out_w; ++x) {
            double acc = 0.0;
            for (std::size_t i = 0; i < win; ++i) acc += kernel[i] * horiz[(y + i) * out_w + x];
            out[y * out_w + x] = acc;
        }
    }
    return out;
}

}  // namespace

double ssim(const ImageTensor& a, const ImageTensor& b, const SsimParams& params) {
    params.validate();
    const Tensor& ta = a.tensor();
    const Tensor& tb = b.tensor();
    if (ta.shape != tb.shape) {
        throw std::invalid_argument("SSIM images differ in shape: " + shape_to_string(ta.shape) +
                                    " vs " + shape_to_string(tb.shape));
    }
    const std::size_t channels = ta.shape[0], h = ta.shape[1], w = ta.shape[2];
    if (h < params.window || w < params.window) {
        throw std::invalid_argument("image " + shape_to_string(ta.shape) +
                                    " smaller than SSIM window " + std::to_string(params.window));
    }

    const std::vector<double> kernel = gaussian_kernel(params.window, params.sigma);
    const std::size_t plane = h * w;
    double channel_sum = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
        std::vector<double> x(ta.data.begin() + static_cast<std::ptrdiff_t>(c * plane),
                              ta.data.begin() + static_cast<std::ptrdiff_t>((c + 1) * plane));
        std::vector<double> y(tb.data.begin() + static_cast<std::ptrdiff_t>(c * plane),
                              tb.data.begin() + static_cast<std::ptrdiff_t>((c + 1) * plane));
        std::vector<double> xx(plane), yy(plane), xy(plane);
        for (std::size_t i = 0; i < plane; ++i) {
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const auto mu_x = blur_valid(x, h, w, kernel);
        const auto mu_y = blur_valid(y, h, w, kernel);
        const auto m_xx = blur_valid(xx, h, w, kernel);
        const auto m_yy = blur_valid(yy, h, w, kernel);
        const auto m_xy = blur_valid(xy, h, w, kernel);

        double acc = 0.0;
        for (std::size_t i = 0; i < mu_x.size(); ++i) {
            const double var_x = m_xx[i] - mu_x[i] * mu_x[i];
            const double var_y = m_yy[i] - mu_y[i] * mu_y[i];
            const double cov = m_xy[i] - mu_x[i] * mu_y[i];
            const double num = (2.0 * mu_x[i] * mu_y[i] + params.c1) * (2.0 * cov + params.c2);
            const double den =
                (mu_x[i] * mu_x[i] + mu_y[i] * mu_y[i] + params.c1) * (var_x + var_y + params.c2);
            acc += num / den;
        }
        channel_sum += acc / static_cast<double>(mu_x.size());
    }
    return channel_sum / static_cast<double>(channels);
}

}  // namespace averify

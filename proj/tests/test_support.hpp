// Shared helpers for the test binaries: independent naive reference
// implementations (kept deliberately dumb — these are the ground truth the
// fast paths are judged against), finite differences, random inputs, and a
// scratch-directory guard.
#pragma once

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "averify/metrics.hpp"
#include "averify/network.hpp"
#include "averify/ops.hpp"
#include "averify/rng.hpp"
#include "averify/tensor.hpp"

namespace testsupport {

using averify::ImageTensor;
using averify::Network;
using averify::Rng;
using averify::Tensor;

inline Tensor naive_dense(const Tensor& weights, const Tensor& bias, const Tensor& input) {
    const std::size_t out_n = weights.shape[0];
    const std::size_t in_n = weights.shape[1];
    Tensor out({out_n});
    for (std::size_t j = 0; j < out_n; ++j) {
        double acc = bias.data[j];
        for (std::size_t i = 0; i < in_n; ++i) {
            acc += weights.data[j * in_n + i] * input.data[i];
        }
        out.data[j] = acc;
    }
    return out;
}

inline Tensor naive_conv2d(const Tensor& kernels, const Tensor& bias, const Tensor& input,
                           std::size_t stride, std::size_t padding) {
    const std::size_t out_c = kernels.shape[0];
    const std::size_t in_c = kernels.shape[1];
    const std::size_t kh = kernels.shape[2];
    const std::size_t kw = kernels.shape[3];
    const std::size_t h = input.shape[1];
    const std::size_t w = input.shape[2];
    const std::size_t out_h = (h + 2 * padding - kh) / stride + 1;
    const std::size_t out_w = (w + 2 * padding - kw) / stride + 1;
    Tensor out({out_c, out_h, out_w});
    for (std::size_t oc = 0; oc < out_c; ++oc) {
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                double acc = bias.data[oc];
                for (std::size_t ic = 0; ic < in_c; ++ic) {
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const long iy = static_cast<long>(oy * stride + ky) -
                                            static_cast<long>(padding);
                            const long ix = static_cast<long>(ox * stride + kx) -
                                            static_cast<long>(padding);
                            double v = 0.0;
                            if (iy >= 0 && iy < static_cast<long>(h) && ix >= 0 &&
                                ix < static_cast<long>(w)) {
                                v = input.data[(ic * h + static_cast<std::size_t>(iy)) * w +
                                               static_cast<std::size_t>(ix)];
                            }
                            acc += v * kernels.data[((oc * in_c + ic) * kh + ky) * kw + kx];
                        }
                    }
                }
                out.data[(oc * out_h + oy) * out_w + ox] = acc;
            }
        }
    }
    return out;
}

inline Tensor naive_maxpool(const Tensor& input, std::size_t window, std::size_t stride) {
    const std::size_t c = input.shape[0];
    const std::size_t h = input.shape[1];
    const std::size_t w = input.shape[2];
    const std::size_t out_h = (h - window) / stride + 1;
    const std::size_t out_w = (w - window) / stride + 1;
    Tensor out({c, out_h, out_w});
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                double best = -std::numeric_limits<double>::infinity();
                for (std::size_t ky = 0; ky < window; ++ky) {
                    for (std::size_t kx = 0; kx < window; ++kx) {
                        best = std::max(
                            best, input.data[(ch * h + oy * stride + ky) * w + ox * stride + kx]);
                    }
                }
                out.data[(ch * out_h + oy) * out_w + ox] = best;
            }
        }
    }
    return out;
}

/// SSIM straight from the definition: one 2D Gaussian-weighted window at a
/// time, no separable shortcut.
inline double naive_ssim(const ImageTensor& a, const ImageTensor& b,
                         const averify::SsimParams& params = averify::SsimParams{}) {
    const Tensor& ta = a.tensor();
    const Tensor& tb = b.tensor();
    const std::size_t channels = ta.shape[0], h = ta.shape[1], w = ta.shape[2];
    const std::size_t win = params.window;

    std::vector<double> weights(win * win);
    const double mid = static_cast<double>(win - 1) / 2.0;
    double wsum = 0.0;
    for (std::size_t i = 0; i < win; ++i) {
        for (std::size_t j = 0; j < win; ++j) {
            const double dy = static_cast<double>(i) - mid;
            const double dx = static_cast<double>(j) - mid;
            weights[i * win + j] = std::exp(-(dy * dy + dx * dx) / (2.0 * params.sigma * params.sigma));
            wsum += weights[i * win + j];
        }
    }
    for (double& v : weights) v /= wsum;

    double channel_sum = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
        double acc = 0.0;
        std::size_t windows = 0;
        for (std::size_t y = 0; y + win <= h; ++y) {
            for (std::size_t x = 0; x + win <= w; ++x) {
                double mx = 0.0, my = 0.0, mxx = 0.0, myy = 0.0, mxy = 0.0;
                for (std::size_t i = 0; i < win; ++i) {
                    for (std::size_t j = 0; j < win; ++j) {
                        const double wv = weights[i * win + j];
                        const double xv = ta.data[(c * h + y + i) * w + x + j];
                        const double yv = tb.data[(c * h + y + i) * w + x + j];
                        mx += wv * xv;
                        my += wv * yv;
                        mxx += wv * xv * xv;
                        myy += wv * yv * yv;
                        mxy += wv * xv * yv;
                    }
                }
                const double vx = mxx - mx * mx;
                const double vy = myy - my * my;
                const double cov = mxy - mx * my;
                acc += ((2.0 * mx * my + params.c1) * (2.0 * cov + params.c2)) /
                       ((mx * mx + my * my + params.c1) * (vx + vy + params.c2));
                ++windows;
            }
        }
        channel_sum += acc / static_cast<double>(windows);
    }
    return channel_sum / static_cast<double>(channels);
}

/// Central finite difference of the cross-entropy loss at `target_class`
/// with respect to every input component.
inline Tensor fd_input_gradient(const Network& net, const Tensor& x, std::size_t target_class,
                                double h = 1e-5) {
    Tensor grad(x.shape);
    Tensor probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe.data[i] = x.data[i] + h;
        const double up = averify::cross_entropy(averify::softmax(net.logits(probe)), target_class);
        probe.data[i] = x.data[i] - h;
        const double down =
            averify::cross_entropy(averify::softmax(net.logits(probe)), target_class);
        probe.data[i] = x.data[i];
        grad.data[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

inline Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape, double lo = -1.0,
                            double hi = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

inline ImageTensor random_image(Rng& rng, std::size_t c, std::size_t h, std::size_t w) {
    Tensor t({c, h, w});
    for (double& v : t.data) v = rng.uniform01();
    return ImageTensor(std::move(t));
}

/// Scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("averify_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace testsupport

#include "averify/ops.hpp"

#include <cmath>
#include <string>

namespace averify {

Tensor dense_forward(const Tensor& weights, const Tensor& bias, const Tensor& input) {
    if (weights.rank() != 2) throw std::invalid_argument("dense: weights must be [out, in]");
    const std::size_t out_n = weights.shape[0];
    const std::size_t in_n = weights.shape[1];
    if (bias.shape != std::vector<std::size_t>{out_n}) {
        throw std::invalid_argument("dense: bias shape " + shape_to_string(bias.shape) +
                                    " != [" + std::to_string(out_n) + "]");
    }
    if (input.size() != in_n || input.rank() != 1) {
        throw std::invalid_argument("dense: input shape " + shape_to_string(input.shape) +
                                    " != [" + std::to_string(in_n) + "]");
    }

    Tensor out({out_n});
    for (std::size_t j = 0; j < out_n; ++j) {
        double acc = bias.data[j];
        const double* w = &weights.data[j * in_n];
        for (std::size_t i = 0; i < in_n; ++i) acc += w[i] * input.data[i];
        out.data[j] = acc;
    }
    require_finite(out, "dense_forward output");
    return out;
}

Tensor conv2d_forward(const Tensor& kernels, const Tensor& bias, const Tensor& input,
                      std::size_t stride, std::size_t padding) {
    if (kernels.rank() != 4) throw std::invalid_argument("conv2d: kernels must be [outC, inC, kH, kW]");
    if (input.rank() != 3) throw std::invalid_argument("conv2d: input must be [inC, H, W]");
    if (stride == 0) throw std::invalid_argument("conv2d: stride must be positive");

    const std::size_t out_c = kernels.shape[0];
    const std::size_t in_c = kernels.shape[1];
    const std::size_t kh = kernels.shape[2];
    const std::size_t kw = kernels.shape[3];
    if (bias.shape != std::vector<std::size_t>{out_c}) {
        throw std::invalid_argument("conv2d: bias shape mismatch");
    }
    if (input.shape[0] != in_c) {
        throw std::invalid_argument("conv2d: input channels " + std::to_string(input.shape[0]) +
                                    " != kernel inC " + std::to_string(in_c));
    }
    const std::size_t h = input.shape[1];
    const std::size_t w = input.shape[2];
    if (h + 2 * padding < kh || w + 2 * padding < kw) {
        throw std::invalid_argument("conv2d: kernel exceeds padded input");
    }
    if ((h + 2 * padding - kh) % stride != 0 || (w + 2 * padding - kw) % stride != 0) {
        throw std::invalid_argument("conv2d: non-integral output size");
    }
    const std::size_t out_h = (h + 2 * padding - kh) / stride + 1;
    const std::size_t out_w = (w + 2 * padding - kw) / stride + 1;

    Tensor out({out_c, out_h, out_w});
    for (std::size_t oc = 0; oc < out_c; ++oc) {
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                double acc = bias.data[oc];
                for (std::size_t ic = 0; ic < in_c; ++ic) {
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        // Signed in-bounds check covers the padding band.
                        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                                  static_cast<std::ptrdiff_t>(padding);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const std::ptrdiff_t ix =
                                static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                static_cast<std::ptrdiff_t>(padding);
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                            acc += kernels.at4(oc, ic, ky, kx) *
                                   input.at3(ic, static_cast<std::size_t>(iy),
                                             static_cast<std::size_t>(ix));
                        }
                    }
                }
                out.at3(oc, oy, ox) = acc;
            }
        }
    }
    require_finite(out, "conv2d_forward output");
    return out;
}

Tensor relu(const Tensor& t) {
    Tensor out(t.shape);
    for (std::size_t i = 0; i < t.data.size(); ++i) out.data[i] = t.data[i] > 0.0 ? t.data[i] : 0.0;
    require_finite(out, "relu output");
    return out;
}

Tensor maxpool2d(const Tensor& t, std::size_t window, std::size_t stride) {
    if (t.rank() != 3) throw std::invalid_argument("maxpool2d: input must be [C, H, W]");
    if (window == 0 || stride == 0) throw std::invalid_argument("maxpool2d: window and stride must be positive");
    const std::size_t c = t.shape[0], h = t.shape[1], w = t.shape[2];
    if (window > h || window > w) {
        throw std::invalid_argument("maxpool2d: window " + std::to_string(window) +
                                    " larger than input " + shape_to_string(t.shape));
    }
    const std::size_t out_h = (h - window) / stride + 1;
    const std::size_t out_w = (w - window) / stride + 1;

    Tensor out({c, out_h, out_w});
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                double best = t.at3(ch, oy * stride, ox * stride);
                for (std::size_t ky = 0; ky < window; ++ky) {
                    for (std::size_t kx = 0; kx < window; ++kx) {
                        best = std::max(best, t.at3(ch, oy * stride + ky, ox * stride + kx));
                    }
                }
                out.at3(ch, oy, ox) = best;
            }
        }
    }
    require_finite(out, "maxpool2d output");
    return out;
}

Tensor flatten(const Tensor& t) {
    Tensor out({t.size()}, t.data);
    return out;
}

ProbabilityVector softmax(const Tensor& logits) {
    if (logits.rank() != 1 || logits.size() < 2) {
        throw std::invalid_argument("softmax: logits must be rank-1 with k >= 2");
    }
    require_finite(logits, "softmax input");

    double max_z = logits.data[0];
    for (double z : logits.data) max_z = std::max(max_z, z);

    std::vector<double> e(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) {
        e[i] = std::exp(logits.data[i] - max_z);
        sum += e[i];
    }
    for (double& v : e) v /= sum;
    return ProbabilityVector(std::move(e));
}

double cross_entropy(const ProbabilityVector& probs, std::size_t cls) {
    if (cls >= probs.size()) {
        throw std::invalid_argument("cross_entropy: class " + std::to_string(cls) +
                                    " out of range for k = " + std::to_string(probs.size()));
    }
    double p = probs[cls];
    if (p <= 0.0) throw std::domain_error("cross_entropy: zero probability for class");
    return -std::log(p);
}

}  // namespace averify

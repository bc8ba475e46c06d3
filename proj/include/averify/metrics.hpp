#pragma once

#include "averify/tensor.hpp"

namespace averify {

/// Relative error |p_target - p_observed| / p_target. Requires
/// p_target > 0 and both arguments in [0, 1].
double prob_distance(double p_target, double p_observed);

/// Gaussian-window SSIM parameters. Defaults are the reference constants
/// for images in [0, 1]: 11x11 window, sigma 1.5, C1 = (0.01 L)^2,
/// C2 = (0.03 L)^2 with dynamic range L = 1.
struct SsimParams {
    std::size_t window = 11;  // odd, >= 3
    double sigma = 1.5;
    double c1 = 1e-4;
    double c2 = 9e-4;
    double range = 1.0;

    void validate() const;
    static SsimParams for_range(double dynamic_range);
};

/// Mean of the local SSIM map with Gaussian-weighted statistics, valid
/// windows only (no padding). Multi-channel images score as the mean over
/// channels. Images smaller than the window are an error.
double ssim(const ImageTensor& a, const ImageTensor& b, const SsimParams& params = SsimParams{});

}  // namespace averify

#pragma once

#include <Eigen/Dense>

#include "mars/image.hpp"

namespace mars {

// Boolean metric region; default is a centered circle covering the phantom.
struct RoiMask {
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask;
    long count = 0;

    static RoiMask full(int height, int width);
    static RoiMask centered_circle(int height, int width, double radius_frac = 0.48);
};

// RMSE in HU over the ROI: sqrt(sum_{i in ROI} (x_i - ref_i)^2 / N_ROI)
double rmse_hu(const ImageGrid& x, const ImageGrid& ref, const RoiMask& roi);

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 400.0; // HU, per the [800, 1200] display window
};

// Mean local SSIM with a Gaussian window, valid-region filtering.
double ssim(const ImageGrid& x, const ImageGrid& ref, const SsimParams& params = {});

} // namespace mars

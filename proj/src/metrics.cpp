#include "mars/metrics.hpp"

#include <cmath>

#include "mars/errors.hpp"

namespace mars {

RoiMask RoiMask::full(int height, int width) {
    RoiMask roi;
    roi.mask.setConstant(height, width, true);
    roi.count = static_cast<long>(height) * width;
    return roi;
}

RoiMask RoiMask::centered_circle(int height, int width, double radius_frac) {
    if (height < 1 || width < 1) throw ContractError("RoiMask: empty image");
    if (!(radius_frac > 0.0)) throw ContractError("RoiMask: radius fraction must be positive");
    RoiMask roi;
    roi.mask.setConstant(height, width, false);
    const double cy = 0.5 * (height - 1), cx = 0.5 * (width - 1);
    const double r = radius_frac * std::min(height, width);
    for (int i = 0; i < height; ++i)
        for (int j = 0; j < width; ++j)
            if (std::hypot(i - cy, j - cx) <= r) {
                roi.mask(i, j) = true;
                ++roi.count;
            }
    if (roi.count < 1) throw ContractError("RoiMask: empty region");
    return roi;
}

double rmse_hu(const ImageGrid& x, const ImageGrid& ref, const RoiMask& roi) {
    if (x.height != ref.height || x.width != ref.width)
        throw ContractError("rmse_hu: image dimensions differ");
    if (roi.mask.rows() != x.height || roi.mask.cols() != x.width)
        throw ContractError("rmse_hu: ROI does not match image");
    if (roi.count < 1) throw ContractError("rmse_hu: empty ROI");
    double acc = 0.0;
    for (int i = 0; i < x.height; ++i)
        for (int j = 0; j < x.width; ++j)
            if (roi.mask(i, j)) {
                const double d = x.values(i, j) - ref.values(i, j);
                acc += d * d;
            }
    return std::sqrt(acc / static_cast<double>(roi.count));
}

double ssim(const ImageGrid& x, const ImageGrid& ref, const SsimParams& params) {
    if (x.height != ref.height || x.width != ref.width)
        throw ContractError("ssim: image dimensions differ");
    if (params.window < 1 || params.window % 2 == 0)
        throw ContractError("ssim: window must be odd and positive");
    if (!(params.sigma > 0.0) || !(params.dynamic_range > 0.0))
        throw ContractError("ssim: sigma and dynamic range must be positive");
    if (x.height < params.window || x.width < params.window)
        throw ContractError("ssim: image smaller than the window");

    const int win = params.window;
    const int half = win / 2;
    Eigen::MatrixXd g(win, win);
    double norm = 0.0;
    for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
            const double dy = i - half, dx = j - half;
            g(i, j) = std::exp(-(dx * dx + dy * dy) / (2.0 * params.sigma * params.sigma));
            norm += g(i, j);
        }
    g /= norm;

    const double c1 = (params.k1 * params.dynamic_range) * (params.k1 * params.dynamic_range);
    const double c2 = (params.k2 * params.dynamic_range) * (params.k2 * params.dynamic_range);

    double acc = 0.0;
    long count = 0;
    for (int i = 0; i + win <= x.height; ++i) {
        for (int j = 0; j + win <= x.width; ++j) {
            double mu1 = 0.0, mu2 = 0.0, e11 = 0.0, e22 = 0.0, e12 = 0.0;
            for (int wi = 0; wi < win; ++wi) {
                for (int wj = 0; wj < win; ++wj) {
                    const double wgt = g(wi, wj);
                    const double a = x.values(i + wi, j + wj);
                    const double b = ref.values(i + wi, j + wj);
                    mu1 += wgt * a;
                    mu2 += wgt * b;
                    e11 += wgt * (a * a);
                    e22 += wgt * (b * b);
                    e12 += wgt * (a * b); // argument-symmetric rounding
                }
            }
            const double v1 = e11 - mu1 * mu1;
            const double v2 = e22 - mu2 * mu2;
            const double cov = e12 - mu1 * mu2;
            const double num = (2.0 * (mu1 * mu2) + c1) * (2.0 * cov + c2);
            const double den = (mu1 * mu1 + mu2 * mu2 + c1) * (v1 + v2 + c2);
            acc += num / den;
            ++count;
        }
    }
    return acc / static_cast<double>(count);
}

} // namespace mars

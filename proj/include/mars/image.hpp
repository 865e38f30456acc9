#pragma once

#include <Eigen/Dense>
#include <string>

namespace mars {

using ImageArray = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// 2D image in modified HU (air = 0, water = 1000) with isotropic pixel size.
struct ImageGrid {
    int height = 0;
    int width = 0;
    double pixel_size = 1.0; // mm
    ImageArray values;       // height x width

    ImageGrid() = default;
    ImageGrid(int h, int w, double px) : height(h), width(w), pixel_size(px) {
        values = ImageArray::Zero(h, w);
    }

    long pixel_count() const { return static_cast<long>(height) * width; }

    Eigen::Map<const Eigen::VectorXd> as_vector() const {
        return {values.data(), pixel_count()};
    }
    Eigen::Map<Eigen::VectorXd> as_vector() {
        return {values.data(), pixel_count()};
    }
};

ImageGrid image_from_vector(const Eigen::VectorXd& v, int height, int width, double pixel_size);

// default water attenuation, mm^-1
inline constexpr double kMuWater = 0.02;

// mu = (HU/1000) * mu_water, elementwise
ImageGrid hu_to_mu(const ImageGrid& x, double mu_water = kMuWater);
ImageGrid mu_to_hu(const ImageGrid& x, double mu_water = kMuWater);

// MARSIMG v1: text header `MARSIMG 1 <height> <width> <pixel_size_mm>`
// followed by height*width float32 little-endian values, row-major.
void save_image(const std::string& path, const ImageGrid& img);
ImageGrid load_image(const std::string& path);

// 8-bit binary PGM with a display window (values clamped to [lo, hi]).
void save_pgm(const std::string& path, const ImageGrid& img, double window_lo = 800.0,
              double window_hi = 1200.0);

} // namespace mars

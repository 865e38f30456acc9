#include "mars/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mars/errors.hpp"
#include "io_util.hpp"

namespace mars {

ImageGrid image_from_vector(const Eigen::VectorXd& v, int height, int width, double pixel_size) {
    if (v.size() != static_cast<long>(height) * width)
        throw ContractError("image_from_vector: size mismatch");
    ImageGrid img(height, width, pixel_size);
    img.as_vector() = v;
    return img;
}

ImageGrid hu_to_mu(const ImageGrid& x, double mu_water) {
    ImageGrid out = x;
    out.values *= mu_water / 1000.0;
    return out;
}

ImageGrid mu_to_hu(const ImageGrid& x, double mu_water) {
    ImageGrid out = x;
    out.values *= 1000.0 / mu_water;
    return out;
}

void save_image(const std::string& path, const ImageGrid& img) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);
    std::ostringstream header;
    header.precision(17);
    header << "MARSIMG 1 " << img.height << " " << img.width << " " << img.pixel_size << "\n";
    os << header.str();
    for (int i = 0; i < img.height; ++i)
        for (int j = 0; j < img.width; ++j)
            detail::write_f32_le(os, static_cast<float>(img.values(i, j)));
    if (!os) throw DataError("write failed: " + path);
}

ImageGrid load_image(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open: " + path);
    std::istringstream header(detail::read_header_line(is, path));
    std::string magic;
    int version = 0, h = 0, w = 0;
    double px = 0.0;
    header >> magic >> version >> h >> w >> px;
    if (!header || magic != "MARSIMG" || version != 1)
        throw DataError("not a MARSIMG v1 file: " + path);
    if (h < 1 || w < 1 || !(px > 0.0)) throw DataError("bad MARSIMG dimensions: " + path);
    ImageGrid img(h, w, px);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) img.values(i, j) = detail::read_f32_le(is, path);
    if (!img.values.allFinite()) throw DataError("non-finite pixel values: " + path);
    return img;
}

void save_pgm(const std::string& path, const ImageGrid& img, double window_lo, double window_hi) {
    if (!(window_hi > window_lo)) throw ContractError("save_pgm: window_hi must exceed window_lo");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);
    os << "P5\n" << img.width << " " << img.height << "\n255\n";
    const double scale = 255.0 / (window_hi - window_lo);
    for (int i = 0; i < img.height; ++i) {
        for (int j = 0; j < img.width; ++j) {
            double v = (img.values(i, j) - window_lo) * scale;
            int q = static_cast<int>(std::lround(std::clamp(v, 0.0, 255.0)));
            os.put(static_cast<char>(q));
        }
    }
    if (!os) throw DataError("write failed: " + path);
}

} // namespace mars
